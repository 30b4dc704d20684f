"""Synthetic two-dataset experiment.

Two partially labeled datasets share one latent-to-pose map over the union
skeleton: dataset A carries MPII-style labels (16 slots), dataset B COCO-style
labels (17 slots). A student trained on both, with or without distillation
from per-dataset teacher oracles, is evaluated against the hidden full truth
so keypoints never labeled in a sample's own dataset can be scored.

Poses live in a top-down crop frame: ``[0, 1]^2`` is the person box, the head
sits near the top and the feet near the bottom.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from poseunion.annotation_io import UnifiedInstance
from poseunion.losses import LossConfig, LossWeights, StudentPrediction, soft_argmax_decode, total_loss
from poseunion.metrics import OksParams, PckConfig, average_precision, pck, table_average
from poseunion.model import (
    DivergenceError,
    StudentModel,
    TeacherOracle,
    TrainState,
    WarmupCosine,
    backward,
    config_digest,
    forward,
    gaussian_bins,
    init_student,
    sgd_step,
    teacher_centers,
    teacher_dists,
)
from poseunion.schema import SkeletonSchema, UnionSchema, build_union, get_schema, mapping_into

log = logging.getLogger(__name__)

# crop-frame stick figure, y pointing down
TEMPLATE = {
    "nose": (0.50, 0.17), "left_eye": (0.53, 0.14), "right_eye": (0.47, 0.14),
    "left_ear": (0.565, 0.16), "right_ear": (0.435, 0.16),
    "head_top": (0.50, 0.06), "upper_neck": (0.50, 0.25), "thorax": (0.50, 0.29),
    "left_shoulder": (0.62, 0.30), "right_shoulder": (0.38, 0.30),
    "left_elbow": (0.68, 0.45), "right_elbow": (0.32, 0.45),
    "left_wrist": (0.72, 0.58), "right_wrist": (0.28, 0.58),
    "pelvis": (0.50, 0.56), "left_hip": (0.58, 0.57), "right_hip": (0.42, 0.57),
    "left_knee": (0.60, 0.75), "right_knee": (0.40, 0.75),
    "left_ankle": (0.61, 0.93), "right_ankle": (0.39, 0.93),
}
UNIT_BOX = (0.0, 0.0, 1.0, 1.0)


class ConfigError(ValueError):
    pass


# -- synthetic data -----------------------------------------------------------


@dataclass
class GeneratorConfig:
    latent_dim: int = 32
    map_seed: int = 0
    warp_amplitude: float = 0.03
    label_noise: float = 0.005
    local_scale: float = 0.06


class SyntheticPoseGenerator:
    """Frozen map from a latent ``z ~ U[-1, 1]^L`` to a union-skeleton pose.

    pose = template + A z + warp_amplitude * sin(W z + phase), clipped to
    ``[0.01, 0.99]``. The first three latents drive horizontal shift,
    vertical shift and scale about the crop center; the rest drive per-keypoint
    deformation.
    """

    def __init__(self, union: UnionSchema, cfg: GeneratorConfig | None = None):
        self.cfg = cfg = cfg or GeneratorConfig()
        if cfg.latent_dim < 4:
            raise ConfigError("latent_dim must be at least 4")
        self.union = union
        rng = np.random.default_rng(cfg.map_seed)
        k, dim = len(union), cfg.latent_dim
        tmpl = []
        for name in union.keypoints:
            tmpl.append(TEMPLATE[name] if name in TEMPLATE else tuple(rng.uniform(0.3, 0.7, 2)))
        self.template = np.array(tmpl)
        a = np.zeros((k, 2, dim))
        a[:, 0, 0] = 0.05
        a[:, 1, 1] = 0.03
        a[:, :, 2] = 0.1 * (self.template - 0.5)
        a[:, :, 3:] = rng.normal(0.0, 1.0, (k, 2, dim - 3)) * cfg.local_scale * math.sqrt(3.0 / (dim - 3))
        self.linear = a
        self.freq = rng.normal(0.0, 1.0, (k, 2, dim)) * 1.5 * math.sqrt(3.0 / dim)
        self.phase = rng.uniform(0.0, 2 * math.pi, (k, 2))

    @property
    def latent_dim(self) -> int:
        return self.cfg.latent_dim

    def pose(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        lin = np.einsum("kcl,nl->nkc", self.linear, z)
        warp = self.cfg.warp_amplitude * np.sin(np.einsum("kcl,nl->nkc", self.freq, z) + self.phase)
        return np.clip(self.template + lin + warp, 0.01, 0.99)


@dataclass
class SyntheticDataset:
    schema_id: str
    latents: np.ndarray  # (n, L)
    truth: np.ndarray  # (n, K, 2), hidden full truth
    labels: np.ndarray  # (n, K, 2), noisy public labels, 0 where unlabeled
    mask: np.ndarray  # (n, K)
    image_ids: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.latents)

    def instances(self) -> list[UnifiedInstance]:
        return [
            UnifiedInstance(int(i), UNIT_BOX, 1.0, c, m, np.where(m, 2, 0))
            for i, c, m in zip(self.image_ids, self.labels, self.mask)
        ]

    def truth_instances(self) -> list[UnifiedInstance]:
        full = np.ones(self.truth.shape[1], dtype=bool)
        return [UnifiedInstance(int(i), UNIT_BOX, 1.0, c, full, np.full(len(full), 2)) for i, c in zip(self.image_ids, self.truth)]


def generate_dataset(
    gen: SyntheticPoseGenerator,
    n: int,
    labeled_schema: SkeletonSchema,
    union: UnionSchema,
    seed: int,
    id_offset: int = 0,
) -> SyntheticDataset:
    slots = list(mapping_into(labeled_schema, union).index_map)
    k = len(union)
    rng = np.random.default_rng([seed, 7919])
    z = rng.uniform(-1.0, 1.0, (n, gen.latent_dim))
    truth = gen.pose(z) if n else np.zeros((0, k, 2))
    mask = np.zeros((n, k), dtype=bool)
    mask[:, slots] = True
    noisy = truth + rng.normal(0.0, gen.cfg.label_noise, truth.shape)
    labels = np.where(mask[..., None], noisy, 0.0)
    return SyntheticDataset(labeled_schema.id, z, truth, labels, mask, np.arange(n) + id_offset)


# -- configuration ------------------------------------------------------------


@dataclass
class TeacherConfig:
    schema: str
    concentration: float = 1.5
    noise: float = 0.0


def _default_teachers():
    return [TeacherConfig("mpii16"), TeacherConfig("coco17")]


@dataclass
class ExperimentConfig:
    """One training run. The union is ``build_union([schema_b, schema_a])``."""

    schema_a: str = "mpii16"
    schema_b: str = "coco17"
    n_a: int = 1000
    n_b: int = 1000
    n_test: int = 300
    loss: LossConfig = field(default_factory=LossConfig)
    teachers: list[TeacherConfig] = field(default_factory=_default_teachers)
    distill: bool = True
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.5
    momentum: float = 0.9
    warmup_epochs: int = 2
    start_lr: float = 1e-5
    cosine_fraction: float = 0.5
    hidden: int = 256
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    eval_every: int = 10

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig.from_dict(self.loss)
        if isinstance(self.generator, dict):
            self.generator = GeneratorConfig(**self.generator)
        self.teachers = [TeacherConfig(**t) if isinstance(t, dict) else t for t in self.teachers]
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if min(self.n_a, self.n_b, self.n_test) < 0 or self.n_a + self.n_b == 0:
            raise ConfigError("need a non-empty training set")
        for ref in (self.schema_a, self.schema_b, *(t.schema for t in self.teachers)):
            get_schema(ref)
        if self.distill:
            missing = [t.schema for t in self.teachers if t.schema not in self.loss.betas]
            if missing:
                raise ConfigError(f"no beta configured for teachers {missing}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for k, v in changes.items():
            if k == "loss" and isinstance(v, dict):
                d["loss"] = {**d["loss"], **v}
            else:
                d[k] = v
        return ExperimentConfig.from_dict(d)

    def effective_weights(self) -> LossWeights:
        # without teachers the objective collapses to the keypoint term
        if not self.distill:
            return LossWeights(1.0, dict(self.loss.betas))
        return self.loss.weights


@dataclass
class ExperimentData:
    union: UnionSchema
    train_a: SyntheticDataset
    train_b: SyntheticDataset
    test_a: SyntheticDataset
    test_b: SyntheticDataset
    generator: SyntheticPoseGenerator


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    a, b = get_schema(cfg.schema_a), get_schema(cfg.schema_b)
    union = build_union([b, a])
    gen = SyntheticPoseGenerator(union, cfg.generator)
    base = 1_000_000
    return ExperimentData(
        union,
        generate_dataset(gen, cfg.n_a, a, union, seed=cfg.seed * 4 + 0, id_offset=0),
        generate_dataset(gen, cfg.n_b, b, union, seed=cfg.seed * 4 + 1, id_offset=base),
        generate_dataset(gen, cfg.n_test, a, union, seed=cfg.seed * 4 + 2, id_offset=2 * base),
        generate_dataset(gen, cfg.n_test, b, union, seed=cfg.seed * 4 + 3, id_offset=3 * base),
        gen,
    )


def build_teachers(cfg: ExperimentConfig, union: UnionSchema) -> list[TeacherOracle]:
    if not cfg.distill:
        return []
    return [
        TeacherOracle(
            t.schema, tuple(mapping_into(get_schema(t.schema), union).index_map),
            t.concentration, t.noise, seed=cfg.seed * 1009 + i,
        )
        for i, t in enumerate(cfg.teachers)
    ]


# -- training -----------------------------------------------------------------


@dataclass
class RunLog:
    config: dict
    config_digest: str
    epochs: list[dict] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "config": self.config,
            "config_digest": self.config_digest,
            "epochs": self.epochs,
            "steps": self.steps,
            "evals": self.evals,
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d


class TrainingDiverged(DivergenceError):
    def __init__(self, msg, step: int, batch_ids: list[int]):
        super().__init__(msg)
        self.step = step
        self.batch_ids = batch_ids


def _predict_coords(model: StudentModel, latents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = forward(model, latents)
    conf = pred.dists.max(axis=-1).mean(axis=(-2, -1))
    return pred.coords, conf


def train(
    cfg: ExperimentConfig,
    data: ExperimentData | None = None,
    on_step: Callable[[dict, StudentPrediction, dict], None] | None = None,
) -> tuple[StudentModel, RunLog]:
    """Mixed-dataset training on the weighted objective.

    ``on_step(entry, prediction, batch)`` is called after every logged step
    with the batch arrays, for external replay checks.
    """
    t0 = time.perf_counter()
    data = data or build_data(cfg)
    union = data.union
    k, bins = len(union), cfg.loss.bins
    weights = cfg.effective_weights()
    teachers = build_teachers(cfg, union)

    parts = [d for d in (data.train_a, data.train_b) if len(d)]
    z = np.concatenate([d.latents for d in parts])
    labels = np.concatenate([d.labels for d in parts])
    mask = np.concatenate([d.mask for d in parts])
    ids = np.concatenate([d.image_ids for d in parts])
    truth = np.concatenate([d.truth for d in parts])
    # teacher outputs are deterministic per (seed, image, slot): build centers once
    centers = {t.teacher_id: teacher_centers(t, ids, truth) for t in teachers}

    model = init_student(data.generator.latent_dim, cfg.hidden, k, bins, seed=cfg.seed)
    state = TrainState.fresh(model.params())
    n = len(z)
    spe = math.ceil(n / cfg.batch_size)
    total_steps = spe * cfg.epochs
    sched = WarmupCosine(
        cfg.lr, total_steps, warmup_steps=spe * cfg.warmup_epochs, start_lr=cfg.start_lr,
        cosine_start=int(round(total_steps * (1.0 - cfg.cosine_fraction))),
    )
    runlog = RunLog(cfg.to_dict(), config_digest(cfg.to_dict()))
    a = weights.alpha
    for epoch in range(cfg.epochs):
        perm = np.random.default_rng([cfg.seed, 104729, epoch]).permutation(n)
        sums = {"ck": 0.0, "total": 0.0, "distill": {t.teacher_id: 0.0 for t in teachers}}
        for s in range(spe):
            idx = perm[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            model = model.replace(**state.params)
            pred, hidden = forward(model, z[idx], return_hidden=True)
            tps = [teacher_dists(t, centers[t.teacher_id][idx], bins) for t in teachers]
            tl = total_loss(
                pred, labels[idx], mask[idx], tps, weights,
                direction=cfg.loss.kl_direction, temperature=cfg.loss.temperature,
            )
            total = float(tl.value.mean())
            if not math.isfinite(total):
                raise TrainingDiverged(f"non-finite loss at step {state.step}", state.step, ids[idx].tolist())
            grad = tl.logits_gradient(pred) / len(idx)
            try:
                state = sgd_step(state, backward(model, z[idx], grad, hidden), sched, cfg.momentum)
            except DivergenceError as exc:
                raise TrainingDiverged(str(exc), state.step, ids[idx].tolist()) from exc
            ck = float(tl.ck.mean())
            ld = {tid: float(v.mean()) for tid, v in tl.distill.items()}
            entry = {
                "step": state.step - 1,
                "epoch": epoch,
                "lr": state.lr,
                "ck": ck,
                "distill": ld,
                "ck_term": a * ck,
                "distill_term": (1.0 - a) * sum(weights.betas[t] * v for t, v in ld.items()),
                "total": total,
            }
            runlog.steps.append(entry)
            if on_step is not None:
                on_step(entry, pred, {"labels": labels[idx], "mask": mask[idx], "teachers": tps, "ids": ids[idx]})
            sums["ck"] += ck * len(idx)
            sums["total"] += total * len(idx)
            for tid, v in ld.items():
                sums["distill"][tid] += v * len(idx)
        ep = {
            "epoch": epoch,
            "ck": sums["ck"] / n,
            "distill": {t: v / n for t, v in sums["distill"].items()},
            "total": sums["total"] / n,
            "lr": state.lr,
        }
        ep["ck_term"] = a * ep["ck"]
        ep["distill_term"] = (1.0 - a) * sum(weights.betas[t] * v for t, v in ep["distill"].items())
        runlog.epochs.append(ep)
        if cfg.eval_every and ((epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs):
            snap = quick_eval(model.replace(**state.params), data)
            runlog.evals.append({"epoch": epoch, **snap})
            log.info("epoch %d total %.5f ck %.5f union-pck %.3f", epoch, ep["total"], ep["ck"], snap["truth_pck_min"])
    model = model.replace(**state.params)
    runlog.wall_clock_s = time.perf_counter() - t0
    return model, runlog


# -- evaluation ---------------------------------------------------------------

Predictor = Callable[[SyntheticDataset], tuple[np.ndarray, np.ndarray]]


def model_predictor(model: StudentModel) -> Predictor:
    return lambda ds: _predict_coords(model, ds.latents)


def truth_predictor(ds: SyntheticDataset) -> tuple[np.ndarray, np.ndarray]:
    """Perfect predictor: looks up the hidden truth."""
    return ds.truth.copy(), np.ones(len(ds))


def _pred_instances(ds: SyntheticDataset, coords: np.ndarray, conf: np.ndarray) -> list[UnifiedInstance]:
    k = coords.shape[1]
    full = np.ones(k, dtype=bool)
    return [
        UnifiedInstance(int(i), UNIT_BOX, 1.0, c, full, np.full(k, 2), float(s))
        for i, c, s in zip(ds.image_ids, coords, conf)
    ]


def truth_pck(ds: SyntheticDataset, coords: np.ndarray, union: UnionSchema, threshold: float = 0.1):
    return pck(
        _pred_instances(ds, coords, np.ones(len(ds))), ds.truth_instances(),
        PckConfig(threshold, "bbox_diag"), union.keypoints,
    )


def quick_eval(model: StudentModel, data: ExperimentData) -> dict:
    out = {}
    mins = []
    for name, ds in (("a", data.test_a), ("b", data.test_b)):
        if not len(ds):
            continue
        coords, _ = _predict_coords(model, ds.latents)
        rep = truth_pck(ds, coords, data.union)
        out[f"truth_pck_{name}"] = rep.means["PCK"]
        mins.append(min(rep.per_keypoint.values()))
    out["truth_pck_min"] = min(mins) if mins else None
    return out


def evaluate_experiment(
    model: StudentModel | Predictor,
    data: ExperimentData,
    sigmas: OksParams | None = None,
) -> dict:
    """Dataset-A PCKh, dataset-B AP and full-union PCK@0.1 against hidden truth."""
    predict = model_predictor(model) if isinstance(model, StudentModel) else model
    union = data.union
    sigmas = sigmas or OksParams.default(union.keypoints)
    a_schema, b_schema = get_schema(data.train_a.schema_id), get_schema(data.train_b.schema_id)
    a_slots = set(mapping_into(a_schema, union).index_map)
    b_slots = set(mapping_into(b_schema, union).index_map)
    reports: dict = {}

    ca, conf_a = predict(data.test_a)
    cb, conf_b = predict(data.test_b)
    pa = _pred_instances(data.test_a, ca, conf_a)
    pb = _pred_instances(data.test_b, cb, conf_b)
    reports["a_pckh"] = pck(pa, data.test_a.instances(), PckConfig(0.5), union.keypoints)
    reports["a_pckh01"] = pck(pa, data.test_a.instances(), PckConfig(0.1), union.keypoints)
    reports["b_ap"] = average_precision(pb, data.test_b.instances(), sigmas)
    reports["truth_a"] = truth_pck(data.test_a, ca, union)
    reports["truth_b"] = truth_pck(data.test_b, cb, union)

    names = union.keypoints
    a_only_in_b = [names[s] for s in sorted(b_slots - a_slots)]
    b_only_in_a = [names[s] for s in sorted(a_slots - b_slots)]
    ta, tb = reports["truth_a"].per_keypoint, reports["truth_b"].per_keypoint
    summary = {
        "PCK": reports["a_pckh"].means["PCK"],
        "PCK0.1": reports["a_pckh01"].means["PCK"],
        **{k: reports["b_ap"].means[k] for k in ("AP", "AP50", "AP75", "AR", "AR50", "AR75")},
        "union_pck_min": min(min(ta.values()), min(tb.values())),
        # slots missing from each test sample's own labels
        "unlabeled_pck_a": float(np.mean([ta[k] for k in a_only_in_b])) if a_only_in_b else None,
        "unlabeled_pck_b": float(np.mean([tb[k] for k in b_only_in_a])) if b_only_in_a else None,
    }
    summary["Avg"] = table_average(summary["PCK"], summary["AP"])
    return {"summary": summary, "reports": {k: v.to_dict() for k, v in reports.items()}}


def supervised_slots(cfg: ExperimentConfig, union: UnionSchema) -> int:
    slots: set[int] = set()
    if cfg.n_a:
        slots |= set(mapping_into(get_schema(cfg.schema_a), union).index_map)
    if cfg.n_b:
        slots |= set(mapping_into(get_schema(cfg.schema_b), union).index_map)
    if cfg.distill:
        for t in cfg.teachers:
            slots |= set(mapping_into(get_schema(t.schema), union).index_map)
    return len(slots)


def run_experiment(cfg: ExperimentConfig, name: str = "run") -> dict:
    data = build_data(cfg)
    model, runlog = train(cfg, data)
    ev = evaluate_experiment(model, data)
    row = {"name": name, **ev["summary"], "Kpts": supervised_slots(cfg, data.union)}
    return {"row": row, "eval": ev, "runlog": runlog, "model": model}


COMPARISON_VARIANTS = {
    "A-only": {"n_b": 0, "distill": False},
    "B-only": {"n_a": 0, "distill": False},
    "Unified": {"distill": False},
    "Unified+KD": {"distill": True},
}


def run_comparison(base: ExperimentConfig, variants: Sequence[str] = tuple(COMPARISON_VARIANTS)) -> dict:
    """Single-dataset baselines against the unified student, one row each."""
    rows, runs = [], {}
    for name in variants:
        res = run_experiment(base.replace(**COMPARISON_VARIANTS[name]), name)
        rows.append(res["row"])
        runs[name] = res
    return {"rows": rows, "runs": runs}


# -- ablation -----------------------------------------------------------------

ABLATION_METRICS = ("PCK", "PCK0.1", "AP", "AR", "Avg", "union_pck_min")


def _run_cell(args):
    cfg_dict, cell = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        res = run_experiment(cfg, cell["label"])
    except Exception as exc:  # a failed cell must not stop the matrix
        return {**cell, "error": f"{type(exc).__name__}: {exc}"}
    last = res["runlog"].epochs[-1]
    return {
        **cell,
        "metrics": {k: res["row"].get(k) for k in ABLATION_METRICS},
        "final_epoch": last,
        "runlog": res["runlog"].to_dict(),
    }


def run_ablation_matrix(
    base: ExperimentConfig,
    distill: Sequence[bool] = (True, False),
    alphas: Sequence[float] | None = None,
    betas: Sequence[dict] | None = None,
    seeds: Sequence[int] = (0,),
    max_workers: int = 1,
) -> dict:
    """One run per (distill, alpha, betas) cell and seed; rows aggregate seeds."""
    alphas = list(alphas) if alphas else [base.loss.alpha]
    betas = list(betas) if betas else [dict(base.loss.betas)]
    if not (distill and alphas and betas and seeds):
        raise ConfigError("ablation grids must be non-empty")
    jobs = []
    for d in distill:
        for a in alphas:
            for bi, b in enumerate(betas):
                label = f"distill={'on' if d else 'off'} alpha={a:g} betas#{bi}"
                for s in seeds:
                    cfg = base.replace(distill=d, seed=s, loss={"alpha": a, "betas": dict(b)})
                    jobs.append((cfg.to_dict(), {"label": label, "distill": d, "alpha": a, "betas": dict(b), "seed": s}))
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers) as ex:
            cells = list(ex.map(_run_cell, jobs))
    else:
        cells = [_run_cell(j) for j in jobs]

    rows = []
    for label in dict.fromkeys(c["label"] for c in cells):
        group = [c for c in cells if c["label"] == label]
        ok = [c for c in group if "error" not in c]
        row = {
            "label": label, "distill": group[0]["distill"], "alpha": group[0]["alpha"],
            "betas": group[0]["betas"], "runs": len(group), "failed": len(group) - len(ok),
        }
        for m in ABLATION_METRICS:
            vals = [c["metrics"][m] for c in ok if c["metrics"][m] is not None]
            row[f"{m}_mean"] = float(np.mean(vals)) if vals else None
            row[f"{m}_std"] = float(np.std(vals)) if vals else None
        for term in ("ck_term", "distill_term"):
            vals = [c["final_epoch"][term] for c in ok]
            row[f"{term}_mean"] = float(np.mean(vals)) if vals else None
        rows.append(row)
    return {"rows": rows, "cells": cells}


def teacher_softargmax(t: TeacherOracle, ds: SyntheticDataset, bins: int) -> np.ndarray:
    """Soft-argmax coordinates ``(n, C, 2)`` of a teacher oracle on a dataset."""
    centers = teacher_centers(t, ds.image_ids, ds.truth)
    coords, _ = soft_argmax_decode(gaussian_bins(centers, bins, t.concentration))
    return coords
