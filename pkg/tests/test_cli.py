import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from poseunion.cli import main
from poseunion.schema import COCO17


def schema(name):
    return json.loads(resources.files("poseunion").joinpath("schemas", f"{name}.json").read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, name, *argv):
    code, out, _ = run(capsys, *argv, "--json")
    doc = json.loads(out)
    jsonschema.validate(doc, schema(name))
    return code, doc, out


@pytest.fixture
def coco_file(tmp_path):
    rng = np.random.default_rng(0)
    anns = []
    for i in range(6):
        kp = np.column_stack([rng.uniform(0, 100, 17), rng.uniform(0, 200, 17), np.full(17, 2)]).ravel()
        anns.append({"id": i + 1, "image_id": i, "bbox": [0, 0, 100, 200], "area": 20000.0, "iscrowd": 0,
                     "num_keypoints": 17, "keypoints": kp.tolist(), "category_id": 1})
    anns.append({"id": 99, "image_id": 0, "bbox": [0, 0, 1, 1], "iscrowd": 1, "keypoints": [0] * 51})
    p = tmp_path / "coco.json"
    p.write_text(json.dumps({"annotations": anns, "categories": [{"id": 1, "keypoints": list(COCO17.keypoints)}]}))
    return p


def test_no_args_is_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == 1 and "usage" in err


def test_bad_flag_is_usage_error(capsys):
    assert run(capsys, "gradcheck", "--cases", "many")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_schema_union_json(capsys):
    code, doc, _ = run_json(capsys, "schema_result", "schema", "union", "--a", "coco17", "--b", "mpii16")
    assert code == 0 and doc["size"] == 21
    code, doc, _ = run_json(capsys, "schema_result", "schema", "overlap", "--a", "coco17", "--b", "mpii16")
    assert doc["size"] == 12
    code, doc, _ = run_json(capsys, "schema_result", "schema", "diff", "--a", "mpii16", "--b", "coco17")
    assert sorted(doc["keypoints"]) == ["head_top", "pelvis", "thorax", "upper_neck"]


def test_unknown_schema_is_input_error(capsys):
    assert run(capsys, "schema", "union", "--a", "coco17", "--b", "nope")[0] == 2


def test_convert_then_eval(capsys, tmp_path, coco_file):
    out = tmp_path / "u.json"
    code, doc, _ = run_json(capsys, "convert_result", "convert", "--schema", "coco17", "--in", str(coco_file),
                            "--out", str(out), "--synthesize-thorax")
    assert code == 0 and doc["converted"] == 6 and doc["skipped_crowd"] == 1 and doc["thorax_synthesized"] == 6
    jsonschema.validate(json.loads(out.read_text()), schema("unified_file"))

    code, doc, _ = run_json(capsys, "eval_report", "eval", "--gt", str(out), "--pred", str(out), "--metric", "ap")
    assert code == 0 and doc["means"]["AP"] == 1.0
    csv = tmp_path / "e.csv"
    code, doc, _ = run_json(capsys, "eval_report", "eval", "--gt", str(out), "--pred", str(out), "--metric", "pck",
                            "--subset", "coco", "--csv", str(csv))
    assert doc["means"]["PCK"] == 1.0 and csv.read_text().startswith("metric,score")


def test_malformed_input_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"annotations": [')
    code, _, err = run(capsys, "convert", "--schema", "coco17", "--in", str(bad), "--out", str(tmp_path / "o.json"))
    assert code == 2 and "byte offset" in err
    assert run(capsys, "eval", "--gt", str(tmp_path / "missing.json"), "--pred", str(bad))[0] == 2


def test_gradcheck_ok_and_fault(capsys):
    code, doc, _ = run_json(capsys, "gradcheck_result", "gradcheck", "--cases", "20")
    assert code == 0 and doc["passed"]
    code, doc, _ = run_json(capsys, "gradcheck_result", "gradcheck", "--cases", "5", "--inject-fault", "backward")
    assert code == 3 and not doc["passed"]


def test_json_output_is_byte_identical(capsys):
    a = run(capsys, "gradcheck", "--cases", "10", "--json")[1]
    b = run(capsys, "gradcheck", "--cases", "10", "--json")[1]
    assert a == b


SMALL = {"n_a": 40, "n_b": 40, "n_test": 12, "epochs": 2, "hidden": 8, "batch_size": 20, "warmup_epochs": 1}


def test_train_and_report(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    out = tmp_path / "run"
    code, doc, first = run_json(capsys, "train_result", "train", "--config", str(cfg), "--out", str(out))
    assert code == 0 and doc["rows"][0]["name"] == "Unified+KD"
    runlog = json.loads((out / "runlog.json").read_text())
    jsonschema.validate(runlog, schema("runlog"))
    assert (out / "model.npz").exists() and (out / "table.txt").read_text().startswith("Model")
    report_json = (out / "report.json").read_bytes()

    code, _, second = run_json(capsys, "train_result", "train", "--config", str(cfg), "--out", str(out))
    assert second == first and (out / "report.json").read_bytes() == report_json

    code, text, _ = run(capsys, "report", "--in", str(out / "runlog.json"))
    assert code == 0 and text.splitlines()[0].startswith("epoch")
    code, text, _ = run(capsys, "report", "--in", str(out / "report.json"), "--format", "csv")
    assert text.startswith("Model,PCK")


def test_train_bad_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochz": 3}))
    assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 2


def test_divergence_exit_code(capsys, tmp_path, monkeypatch):
    import poseunion.cli as cli
    from poseunion.harness import TrainingDiverged

    def boom(*a, **k):
        raise TrainingDiverged("non-finite gradient", 7, [1])

    monkeypatch.setattr(cli, "train", boom)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 3


def test_ablate(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({**SMALL, "epochs": 1}))
    code, doc, _ = run_json(capsys, "ablate_result", "ablate", "--config", str(cfg), "--out", str(tmp_path / "ab"),
                            "--alphas", "0.3", "0.5", "--seeds", "0", "--distill", "on",
                            "--betas", '[{"mpii16": 0.25, "coco17": 0.45}]')
    assert code == 0 and len(doc["rows"]) == 2 and len(doc["cells"]) == 2
    assert run(capsys, "ablate", "--out", str(tmp_path / "x"), "--betas", '{"a": 1}')[0] == 1
