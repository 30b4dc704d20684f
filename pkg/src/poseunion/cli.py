"""``poseunion`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 input/format error, 3 validation
failure (gradient check over tolerance, diverged training).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from poseunion import annotation_io as aio
from poseunion import metrics, report
from poseunion.gradcheck import KERNELS, run_gradcheck
from poseunion.harness import (
    ConfigError,
    ExperimentConfig,
    build_data,
    evaluate_experiment,
    run_ablation_matrix,
    run_comparison,
    supervised_slots,
    train,
)
from poseunion.model import DivergenceError, config_digest, save_checkpoint
from poseunion.schema import SchemaError, SkeletonSchema, build_union, get_schema, mapping_into, overlap, unique_to

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_VALIDATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    def __init__(self, msg, payload=None):
        super().__init__(msg)
        self.payload = payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _emit(args, payload: dict, text: str) -> None:
    print(_dump(payload) if args.json else text)


def _write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)


# -- subcommands --------------------------------------------------------------


def cmd_schema(args) -> int:
    schemas = [get_schema(args.a), get_schema(args.b), *(get_schema(r) for r in args.also)]
    inputs = [s.id for s in schemas]
    if args.op == "union":
        u = build_union(schemas)
        payload = {
            "op": "union", "inputs": inputs, "keypoints": list(u.keypoints), "size": len(u),
            "provenance": {k: sorted(p) for k, p in zip(u.keypoints, u.provenance)},
        }
        rows = [[k, ",".join(sorted(p))] for k, p in zip(u.keypoints, u.provenance)]
        text = report.align(["keypoint", "sources"], rows) + f"\nsize: {len(u)}"
    else:
        if args.also:
            raise UsageError(f"schema {args.op} takes exactly two schemas")
        a, b = schemas
        kps = overlap(a, b) if args.op == "overlap" else unique_to(a, b)
        payload = {"op": args.op, "inputs": inputs, "keypoints": kps, "size": len(kps)}
        text = "\n".join(kps + [f"size: {len(kps)}"])
    _emit(args, payload, text)
    return EXIT_OK


def cmd_convert(args) -> int:
    src = get_schema(args.schema)
    union = build_union([get_schema(s) for s in args.union.split(",")])
    desc, raws = aio.parse_keypoint_json(Path(args.inp).read_bytes(), src)
    mapping = mapping_into(src, union, drop_missing=True)
    insts, stats = aio.convert_instances(raws, mapping, union, thorax=args.synthesize_thorax)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        aio.write_unified(insts, union, fh)
    payload = {
        "source": src.id, "union": list(union.keypoints), "instance_count": desc.instance_count,
        "skipped_empty": desc.skipped_empty, "skipped_crowd": desc.skipped_crowd,
        "file_digest": desc.file_digest, "out": str(out), **stats,
    }
    text = report.align(
        ["field", "value"],
        [[k, ", ".join(v) if isinstance(v := payload[k], list) else str(v)] for k in ("source", "instance_count", "converted", "thorax_synthesized",
                                         "skipped_empty", "skipped_crowd", "dropped_keypoints", "out")],
    )
    _emit(args, payload, text)
    return EXIT_OK


def cmd_eval(args) -> int:
    names, gts = aio.read_unified(Path(args.gt).read_bytes())
    pnames, preds = aio.read_unified(Path(args.pred).read_bytes())
    if names != pnames:
        raise aio.AnnotationFormatError("prediction and ground-truth files use different schemas")
    union = build_union([get_schema_names(names)])
    subset = metrics.subset_slots(union, args.subset)
    if args.metric == "ap":
        params = metrics.OksParams.from_file(args.sigmas, names) if args.sigmas else metrics.OksParams.default(names)
        for p in preds:
            if p.score is None:
                p.score = 1.0
        rep = metrics.average_precision(preds, gts, params, subset=subset)
        groups = None
    else:
        if len(preds) != len(gts) or any(p.image_id != g.image_id for p, g in zip(preds, gts)):
            raise aio.AnnotationFormatError("PCK needs predictions aligned one-to-one with ground truths")
        if args.metric == "pckh":
            cfg = metrics.PckConfig(args.threshold or 0.5, "head_segment", args.head_scale)
        else:
            cfg = metrics.PckConfig(args.threshold or 0.1, args.normalizer)
        rep = metrics.pck(preds, gts, cfg, names, subset)
        groups = metrics.group_scores(rep.per_keypoint)
    payload = {"metric": args.metric, "subset": args.subset, **rep.to_dict()}
    if groups is not None:
        payload["groups"] = groups
    if args.csv:
        rows = [{"name": k, "score": v} for k, v in {**rep.per_keypoint, **rep.means}.items()]
        _write(Path(args.csv), report.comparison_csv(rows, (("name", "metric"), ("score", "score"))))
    _emit(args, payload, report.eval_report_table(rep.to_dict()))
    return EXIT_OK


def get_schema_names(names):
    return SkeletonSchema("file", tuple(names))


def cmd_gradcheck(args) -> int:
    res = run_gradcheck(args.cases, args.tol, args.seed, args.inject_fault)
    rows = [[k, str(v["cases"]), f"{v['max_rel_err']:.3e}", "ok" if v["passed"] else "FAIL"]
            for k, v in res["kernels"].items()]
    _emit(args, res, report.align(["kernel", "cases", "max rel err", "status"], rows) + f"\ntol: {args.tol:g}")
    if not res["passed"]:
        raise ValidationFailure("gradient check exceeded tolerance")
    return EXIT_OK


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        changes["epochs"] = args.epochs
    return cfg.replace(**changes) if changes else cfg


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    outputs = {}
    if args.compare:
        res = run_comparison(cfg)
        rows = res["rows"]
        for name, run in res["runs"].items():
            p = out / "runlogs" / f"{name}.json"
            _write(p, _dump(run["runlog"].to_dict()))
            outputs[f"runlog[{name}]"] = str(p)
    else:
        data = build_data(cfg)
        model, runlog = train(cfg, data)
        ev = evaluate_experiment(model, data)
        name = "Unified+KD" if cfg.distill else "Unified"
        rows = [{"name": name, **ev["summary"], "Kpts": supervised_slots(cfg, data.union)}]
        _write(out / "runlog.json", _dump(runlog.to_dict()))
        _write(out / "eval.json", _dump(ev))
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "model.npz", model, len(runlog.steps), runlog.config_digest)
        outputs.update(runlog=str(out / "runlog.json"), eval=str(out / "eval.json"), model=str(out / "model.npz"))
    doc = {"config_digest": _digest(cfg), "rows": rows}
    _write(out / "report.json", _dump(doc))
    _write(out / "report.csv", report.comparison_csv(rows))
    _write(out / "table.txt", report.comparison_table(rows) + "\n")
    outputs.update(report=str(out / "report.json"), csv=str(out / "report.csv"), table=str(out / "table.txt"))
    _emit(args, {**doc, "outputs": outputs}, report.comparison_table(rows))
    return EXIT_OK


def _digest(cfg: ExperimentConfig) -> str:
    return config_digest(cfg.to_dict())


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    distill = {"on": (True,), "off": (False,), "both": (True, False)}[args.distill]
    betas = json.loads(args.betas) if args.betas else None
    if betas is not None and not isinstance(betas, list):
        raise UsageError("--betas expects a JSON list of {teacher: beta} objects")
    res = run_ablation_matrix(cfg, distill, args.alphas, betas, args.seeds, args.workers)
    out = Path(args.out)
    _write(out / "ablation.json", _dump(res))
    cols = ["label", "runs", "failed", "PCK_mean", "AP_mean", "Avg_mean", "Avg_std", "union_pck_min_mean",
            "ck_term_mean", "distill_term_mean"]
    rows = [[str(r[c]) if not isinstance(r[c], float) else f"{r[c]:.4f}" for c in cols] for r in res["rows"]]
    table = report.align(cols, rows)
    _write(out / "ablation.txt", table + "\n")
    _emit(args, {"rows": res["rows"], "cells": [{k: v for k, v in c.items() if k != "runlog"} for c in res["cells"]]},
          table)
    return EXIT_OK


def cmd_report(args) -> int:
    doc = json.loads(Path(args.inp).read_text())
    if "steps" in doc and "epochs" in doc:
        text = report.runlog_table(doc) if args.format == "text" else report.runlog_csv(doc)
    elif "rows" in doc:
        text = report.comparison_table(doc["rows"]) if args.format == "text" else report.comparison_csv(doc["rows"])
    elif "per_keypoint" in doc:
        text = report.eval_report_table(doc)
    else:
        raise aio.AnnotationFormatError(f"{args.inp}: not a run log, report or eval report")
    print(_dump(doc) if args.format == "json" or args.json else text, end="" if text.endswith("\n") else "\n")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="poseunion", description="Unified-skeleton pose toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("schema", parents=[common], help="union / overlap / diff of skeletons")
    s.add_argument("op", choices=("union", "overlap", "diff"))
    s.add_argument("--a", required=True, help="schema id or JSON file")
    s.add_argument("--b", required=True)
    s.add_argument("--also", action="append", default=[], help="extra schemas for union")
    s.set_defaults(func=cmd_schema)

    c = sub.add_parser("convert", parents=[common], help="COCO-dialect keypoints -> unified format")
    c.add_argument("--schema", required=True)
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--union", default="coco17,mpii16", help="comma-separated schemas forming the union")
    c.add_argument("--synthesize-thorax", action="store_true")
    c.set_defaults(func=cmd_convert)

    e = sub.add_parser("eval", parents=[common], help="AP / PCK / PCKh on unified files")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--metric", choices=("ap", "pck", "pckh"), default="ap")
    e.add_argument("--subset", choices=("all", "coco", "mpii", "shared"), default="all")
    e.add_argument("--sigmas", help="OKS sigma file (list or {name: sigma})")
    e.add_argument("--threshold", type=float)
    e.add_argument("--normalizer", choices=("bbox_diag", "torso", "head_segment"), default="bbox_diag")
    e.add_argument("--head-scale", type=float, default=0.6)
    e.add_argument("--csv", help="also write a CSV table here")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    g.add_argument("--cases", type=int, default=1000)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--inject-fault", choices=KERNELS, help="sign-flip one analytic gradient (self-test)")
    g.set_defaults(func=cmd_gradcheck)

    t = sub.add_parser("train", parents=[common], help="run the synthetic experiment")
    t.add_argument("--config", help="experiment config JSON")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--compare", action="store_true", help="baselines + unified comparison table")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", parents=[common], help="distill / alpha / beta ablation matrix")
    a.add_argument("--config")
    a.add_argument("--epochs", type=int)
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=int, nargs="+", default=[0])
    a.add_argument("--alphas", type=float, nargs="+")
    a.add_argument("--betas", help='JSON list, e.g. \'[{"mpii16": 0.25, "coco17": 0.45}]\'')
    a.add_argument("--distill", choices=("on", "off", "both"), default="both")
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", parents=[common], help="render runlog/report JSON")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--format", choices=("text", "csv", "json"), default="text")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, aio.AnnotationFormatError, SchemaError, ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
