import json

import numpy as np
import pytest

from poseunion.harness import (
    ConfigError,
    ExperimentConfig,
    SyntheticPoseGenerator,
    build_data,
    evaluate_experiment,
    generate_dataset,
    run_ablation_matrix,
    supervised_slots,
    train,
    truth_predictor,
)
from poseunion.schema import COCO17, MPII16, build_union

SMALL = dict(n_a=64, n_b=48, n_test=20, epochs=2, hidden=16, batch_size=32, warmup_epochs=1, eval_every=1)


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


def test_generator_is_frozen_and_in_frame():
    u = build_union([COCO17, MPII16])
    g1, g2 = SyntheticPoseGenerator(u), SyntheticPoseGenerator(u)
    z = np.random.default_rng(0).uniform(-1, 1, (50, 32))
    assert np.array_equal(g1.pose(z), g2.pose(z))
    p = g1.pose(z)
    assert p.shape == (50, 21, 2) and p.min() >= 0.01 and p.max() <= 0.99


def test_dataset_masks_follow_schema():
    u = build_union([COCO17, MPII16])
    ds = generate_dataset(SyntheticPoseGenerator(u), 10, MPII16, u, seed=3)
    assert ds.mask.sum(axis=1).tolist() == [16] * 10
    assert not ds.labels[~ds.mask].any()
    empty = generate_dataset(SyntheticPoseGenerator(u), 0, COCO17, u, seed=3)
    assert len(empty) == 0 and empty.instances() == []


def test_config_roundtrip_and_validation(tmp_path):
    cfg = small(seed=5)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(p) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        small(n_a=0, n_b=0)
    with pytest.raises(ConfigError):
        small(loss={"alpha": 0.3, "betas": {"mpii16": 0.25}})
    assert small(distill=False).effective_weights().alpha == 1.0


def test_run_is_deterministic():
    cfg = small(seed=2)
    m1, r1 = train(cfg)
    m2, r2 = train(cfg)
    assert json.dumps(r1.to_dict(), sort_keys=True) == json.dumps(r2.to_dict(), sort_keys=True)
    for k in m1.params():
        assert np.array_equal(m1.params()[k], m2.params()[k])
    assert "wall_clock_s" not in r1.to_dict()


def test_each_epoch_visits_every_sample_once():
    cfg = small()
    seen = {}
    train(cfg, on_step=lambda e, p, b: seen.setdefault(e["epoch"], []).extend(b["ids"].tolist()))
    data = build_data(cfg)
    all_ids = sorted(np.concatenate([data.train_a.image_ids, data.train_b.image_ids]).tolist())
    for ids in seen.values():
        assert sorted(ids) == all_ids


def test_single_dataset_run():
    _, log = train(small(n_b=0, distill=False))
    assert log.steps and all(s["distill"] == {} for s in log.steps)


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.7, 1.0])
def test_logged_terms_recombine(alpha):
    _, log = train(small(loss={"alpha": alpha}))
    betas = {"mpii16": 0.25, "coco17": 0.45}
    for s in log.steps:
        assert s["ck_term"] == pytest.approx(alpha * s["ck"], rel=1e-12, abs=1e-15)
        want = (1 - alpha) * sum(betas[t] * v for t, v in s["distill"].items())
        assert s["distill_term"] == pytest.approx(want, rel=1e-12, abs=1e-15)
        assert s["total"] == pytest.approx(s["ck_term"] + s["distill_term"], rel=1e-12)


def test_truth_predictor_is_perfect():
    cfg = small(generator={"latent_dim": 32, "map_seed": 0, "warp_amplitude": 0.03,
                           "label_noise": 0.0, "local_scale": 0.06})
    s = evaluate_experiment(truth_predictor, build_data(cfg))["summary"]
    for k in ("PCK", "PCK0.1", "AP", "AP50", "AP75", "AR", "union_pck_min", "Avg"):
        assert s[k] == 1.0, k


def test_supervised_slot_counts():
    u = build_data(small()).union
    assert supervised_slots(small(n_b=0, distill=False), u) == 16
    assert supervised_slots(small(n_a=0, distill=False), u) == 17
    assert supervised_slots(small(), u) == 21


def test_ablation_matrix_shape():
    res = run_ablation_matrix(small(epochs=1), distill=(True, False), alphas=[0.3, 0.6], seeds=[0, 1])
    assert len(res["cells"]) == 8 and len(res["rows"]) == 4
    assert all(r["runs"] == 2 and r["failed"] == 0 for r in res["rows"])
    assert {(r["distill"], r["alpha"]) for r in res["rows"]} == {(d, a) for d in (True, False) for a in (0.3, 0.6)}


def test_ablation_records_failed_cells(monkeypatch):
    import poseunion.harness as h

    real = h.run_experiment

    def flaky(cfg, name="run"):
        if cfg.seed == 1:
            raise h.TrainingDiverged("boom", 3, [1, 2])
        return real(cfg, name)

    monkeypatch.setattr(h, "run_experiment", flaky)
    res = run_ablation_matrix(small(epochs=1), distill=(False,), seeds=[0, 1])
    row = res["rows"][0]
    assert row["runs"] == 2 and row["failed"] == 1
    assert "TrainingDiverged" in res["cells"][1]["error"]
    assert row["Avg_std"] == 0.0
