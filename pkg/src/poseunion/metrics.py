"""PCK / PCKh and OKS-based AP/AR for unified-skeleton predictions.

AP follows the COCO keypoint protocol (greedy per-image matching by
confidence, 101-point interpolated precision, OKS thresholds 0.50:0.05:0.95)
with two deterministic tie rules: equal scores are ordered by prediction
index, and among equal-OKS candidates the lower ground-truth index wins.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from poseunion.annotation_io import UnifiedInstance
from poseunion.schema import COCO17, MPII16, UnionSchema

# pycocotools per-keypoint constants
COCO_SIGMAS = {
    "nose": 0.026, "left_eye": 0.025, "right_eye": 0.025, "left_ear": 0.035, "right_ear": 0.035,
    "left_shoulder": 0.079, "right_shoulder": 0.079, "left_elbow": 0.072, "right_elbow": 0.072,
    "left_wrist": 0.062, "right_wrist": 0.062, "left_hip": 0.107, "right_hip": 0.107,
    "left_knee": 0.087, "right_knee": 0.087, "left_ankle": 0.089, "right_ankle": 0.089,
}
# keypoints without a COCO constant borrow a neighbour's
SIGMA_FALLBACK = {
    "pelvis": "left_hip", "thorax": "left_shoulder", "upper_neck": "left_shoulder", "head_top": "left_ear",
}

OKS_THRESHOLDS = np.round(np.linspace(0.5, 0.95, 10), 2)
RECALL_THRESHOLDS = np.linspace(0.0, 1.0, 101)
AREA_RANGES = {"all": (0.0, math.inf), "M": (32.0**2, 96.0**2), "L": (96.0**2, math.inf)}
NORMALIZERS = ("head_segment", "bbox_diag", "torso")

MPII_GROUPS = {
    "Head": ("head_top", "upper_neck"),
    "Shoulder": ("left_shoulder", "right_shoulder"),
    "Elbow": ("left_elbow", "right_elbow"),
    "Wrist": ("left_wrist", "right_wrist"),
    "Hip": ("left_hip", "right_hip"),
    "Knee": ("left_knee", "right_knee"),
    "Ankle": ("left_ankle", "right_ankle"),
}


@dataclass
class OksParams:
    """Per-slot OKS constants.

    The similarity of a keypoint at distance ``d`` is
    ``exp(-d**2 / (2 * area * sigma**2))``; the defaults are twice the
    pycocotools sigmas, which reproduces the standard COCO kernel.
    """

    sigmas: np.ndarray

    def __post_init__(self):
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if np.any(self.sigmas <= 0):
            raise ValueError("OKS sigmas must be positive")

    @classmethod
    def default(cls, names: Sequence[str]) -> "OksParams":
        out = []
        for n in names:
            key = n if n in COCO_SIGMAS else SIGMA_FALLBACK.get(n)
            if key is None:
                raise KeyError(f"no default OKS sigma for keypoint {n!r}")
            out.append(2.0 * COCO_SIGMAS[key])
        return cls(np.array(out))

    @classmethod
    def from_file(cls, path, names: Sequence[str]) -> "OksParams":
        """JSON list (one per slot) or ``{name: sigma}`` overriding the defaults."""
        with open(path) as fh:
            doc = json.load(fh)
        if isinstance(doc, list):
            if len(doc) != len(names):
                raise ValueError(f"sigma list has {len(doc)} entries, expected {len(names)}")
            return cls(np.array(doc, dtype=np.float64))
        base = cls.default(names).sigmas.copy()
        for k, v in doc.items():
            base[list(names).index(k)] = float(v)
        return cls(base)


@dataclass
class PckConfig:
    threshold: float = 0.5
    normalizer: str = "head_segment"
    head_scale: float = 0.6

    def __post_init__(self):
        if self.threshold <= 0 or self.head_scale <= 0:
            raise ValueError("threshold and head_scale must be positive")
        if self.normalizer not in NORMALIZERS:
            raise ValueError(f"normalizer must be one of {NORMALIZERS}")


@dataclass
class EvalReport:
    per_keypoint: dict[str, float] = field(default_factory=dict)
    means: dict[str, float | None] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"per_keypoint": dict(self.per_keypoint), "means": dict(self.means), "counts": dict(self.counts)}


def subset_slots(union: UnionSchema, name: str) -> list[int]:
    coco, mpii = set(COCO17.keypoints), set(MPII16.keypoints)
    pick = {
        "all": lambda k: True,
        "coco": lambda k: k in coco,
        "mpii": lambda k: k in mpii,
        "shared": lambda k: k in coco and k in mpii,
    }
    if name not in pick:
        raise ValueError(f"unknown subset {name!r}")
    return [i for i, k in enumerate(union.keypoints) if pick[name](k)]


def _subset_mask(n: int, subset: Iterable[int] | None) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    if subset is None:
        m[:] = True
    else:
        m[list(subset)] = True
    return m


def oks_matrix(
    pred_coords: np.ndarray,
    gt_coords: np.ndarray,
    gt_mask: np.ndarray,
    areas: np.ndarray,
    sigmas: np.ndarray,
    subset: Iterable[int] | None = None,
) -> np.ndarray:
    """OKS for every (prediction, gt) pair; NaN columns for gts with nothing labeled."""
    pred_coords = np.asarray(pred_coords, dtype=np.float64).reshape(-1, len(sigmas), 2)
    gt_coords = np.asarray(gt_coords, dtype=np.float64).reshape(-1, len(sigmas), 2)
    use = np.asarray(gt_mask, dtype=bool) & _subset_mask(len(sigmas), subset)
    n_lab = use.sum(axis=1)
    d2 = ((pred_coords[:, None] - gt_coords[None]) ** 2).sum(-1)
    denom = 2.0 * np.asarray(areas, dtype=np.float64)[None, :, None] * sigmas**2
    e = np.where(use[None], np.exp(-d2 / denom), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = e.sum(-1) / n_lab[None]
    out[:, n_lab == 0] = np.nan
    return out


def oks(pred: UnifiedInstance, gt: UnifiedInstance, params: OksParams, subset: Iterable[int] | None = None):
    """OKS of one prediction against one gt, or ``None`` if nothing labeled in the subset."""
    if gt.area <= 0:
        raise ValueError("gt area must be positive")
    v = oks_matrix(pred.coords, gt.coords, gt.mask[None], np.array([gt.area]), params.sigmas, subset)[0, 0]
    return None if np.isnan(v) else float(v)


def _match_image(ious, gt_ignore, thresholds):
    """Greedy matching for one image; dts and gts are already in evaluation order."""
    n_t, n_d, n_g = len(thresholds), ious.shape[0], ious.shape[1]
    dt_match = -np.ones((n_t, n_d), dtype=np.int64)
    dt_ign = np.zeros((n_t, n_d), dtype=bool)
    for ti, t in enumerate(thresholds):
        taken = np.zeros(n_g, dtype=bool)
        for d in range(n_d):
            best, m = min(t, 1 - 1e-10), -1
            for g in range(n_g):
                if taken[g]:
                    continue
                if m > -1 and not gt_ignore[m] and gt_ignore[g]:
                    break
                v = ious[d, g]
                if np.isnan(v) or v < best or (m > -1 and v == best):
                    continue
                best, m = v, g
            if m >= 0:
                taken[m] = True
                dt_match[ti, d] = m
                dt_ign[ti, d] = gt_ignore[m]
    return dt_match, dt_ign


def _accumulate(scores, ids, matched, ignored, n_pos):
    """Interpolated AP and final recall per threshold from pooled detections."""
    n_t = matched.shape[0]
    if n_pos == 0:
        return None, None
    order = np.lexsort((ids, -scores))
    matched, ignored = matched[:, order], ignored[:, order]
    ap = np.zeros(n_t)
    ar = np.zeros(n_t)
    for t in range(n_t):
        tp = np.cumsum(matched[t] & ~ignored[t]).astype(np.float64)
        fp = np.cumsum(~matched[t] & ~ignored[t]).astype(np.float64)
        nd = len(tp)
        if nd == 0:
            continue
        rc = tp / n_pos
        tot = tp + fp
        pr = np.divide(tp, tot, out=np.zeros_like(tp), where=tot > 0)
        pr = np.maximum.accumulate(pr[::-1])[::-1]
        idx = np.searchsorted(rc, RECALL_THRESHOLDS, side="left")
        q = np.where(idx < nd, pr[np.minimum(idx, nd - 1)], 0.0)
        ap[t] = q.mean()
        ar[t] = rc[-1]
    return ap, ar


def average_precision(
    preds: Sequence[UnifiedInstance],
    gts: Sequence[UnifiedInstance],
    params: OksParams,
    thresholds: Sequence[float] = tuple(OKS_THRESHOLDS),
    subset: Iterable[int] | None = None,
    max_dets: int = 20,
) -> EvalReport:
    """COCO-style keypoint AP/AR. Predictions need a ``score``."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    subset = None if subset is None else list(subset)
    sub = _subset_mask(len(params.sigmas), subset)
    by_img_gt: dict[int, list[int]] = {}
    by_img_dt: dict[int, list[int]] = {}
    for i, g in enumerate(gts):
        by_img_gt.setdefault(g.image_id, []).append(i)
    for i, p in enumerate(preds):
        if p.score is None:
            raise ValueError(f"prediction {i} has no score")
        by_img_dt.setdefault(p.image_id, []).append(i)

    # per-image OKS, dts in score order, gts in index order
    per_image = {}
    for img in sorted(set(by_img_gt) | set(by_img_dt)):
        gi = by_img_gt.get(img, [])
        di = sorted(by_img_dt.get(img, []), key=lambda i: (-preds[i].score, i))[:max_dets]
        if gi and di:
            ious = oks_matrix(
                np.array([preds[i].coords for i in di]), np.array([gts[i].coords for i in gi]),
                np.array([gts[i].mask for i in gi]), np.array([gts[i].area for i in gi]), params.sigmas, subset,
            )
        else:
            ious = np.zeros((len(di), len(gi)))
        per_image[img] = (gi, di, ious)

    results = {}
    for rname, (lo, hi) in AREA_RANGES.items():
        scores, ids, mt, ig = [], [], [], []
        n_pos = 0
        for img, (gi, di, ious) in per_image.items():
            g_ign = np.array(
                [not np.any(gts[i].mask & sub) or not (lo <= gts[i].area <= hi) for i in gi], dtype=bool
            )
            gorder = np.argsort(g_ign, kind="stable")
            n_pos += int(np.count_nonzero(~g_ign))
            dm, dig = _match_image(ious[:, gorder], g_ign[gorder], thresholds)
            out_of_range = np.array([not (lo <= preds[i].area <= hi) for i in di], dtype=bool)
            dig = dig | ((dm < 0) & out_of_range[None, :])
            scores.extend(preds[i].score for i in di)
            ids.extend(di)
            mt.append(dm >= 0)
            ig.append(dig)
        if mt:
            matched = np.concatenate(mt, axis=1)
            ignored = np.concatenate(ig, axis=1)
        else:
            matched = ignored = np.zeros((len(thresholds), 0), dtype=bool)
        results[rname] = _accumulate(np.array(scores, dtype=np.float64), np.array(ids), matched, ignored, n_pos)

    def pick(arr, t=None):
        if arr is None:
            return None
        if t is None:
            return float(arr.mean())
        hit = np.flatnonzero(np.isclose(thresholds, t))
        return float(arr[hit[0]]) if hit.size else None

    ap, ar = results["all"]
    means = {
        "AP": pick(ap), "AP50": pick(ap, 0.5), "AP75": pick(ap, 0.75),
        "AP_M": pick(results["M"][0]), "AP_L": pick(results["L"][0]),
        "AR": pick(ar), "AR50": pick(ar, 0.5), "AR75": pick(ar, 0.75),
        "AR_M": pick(results["M"][1]), "AR_L": pick(results["L"][1]),
    }
    n_gt = sum(1 for g in gts if np.any(g.mask & sub))
    counts = {
        "images": len(per_image), "gt_instances": n_gt, "predictions": len(preds),
        "keypoints": int(sum(np.count_nonzero(g.mask & sub) for g in gts)),
    }
    return EvalReport({}, means, counts)


def _normalizer(gt: UnifiedInstance, cfg: PckConfig, names: Sequence[str]) -> float | None:
    if cfg.normalizer == "bbox_diag":
        return math.hypot(gt.bbox[2], gt.bbox[3])
    pair = ("head_top", "upper_neck") if cfg.normalizer == "head_segment" else ("left_shoulder", "right_hip")
    try:
        a, b = names.index(pair[0]), names.index(pair[1])
    except ValueError:
        return None
    if not (gt.mask[a] and gt.mask[b]):
        return None
    d = float(np.linalg.norm(gt.coords[a] - gt.coords[b]))
    if cfg.normalizer == "head_segment":
        d *= cfg.head_scale
    return d if d > 0 else None


def pck(
    preds: Sequence[UnifiedInstance],
    gts: Sequence[UnifiedInstance],
    cfg: PckConfig,
    names: Sequence[str],
    subset: Iterable[int] | None = None,
) -> EvalReport:
    """Fraction of labeled keypoints within ``threshold * normalizer`` (inclusive).

    ``preds[i]`` is scored against ``gts[i]``.
    """
    if len(preds) != len(gts):
        raise ValueError("pck pairs predictions with ground truths one-to-one")
    names = list(names)
    n = len(names)
    sub = _subset_mask(n, subset)
    hits = np.zeros(n, dtype=np.int64)
    total = np.zeros(n, dtype=np.int64)
    skipped = 0
    for p, g in zip(preds, gts):
        norm = _normalizer(g, cfg, names)
        if norm is None:
            skipped += 1
            continue
        use = g.mask & sub
        d = np.linalg.norm(p.coords - g.coords, axis=1)
        total += use
        hits += use & (d <= cfg.threshold * norm)
    per = {names[k]: float(hits[k] / total[k]) for k in range(n) if total[k] > 0}
    mean = float(np.mean(list(per.values()))) if per else None
    counts = {"instances": len(gts) - skipped, "skipped": skipped, "keypoints": int(total.sum())}
    return EvalReport(per, {"PCK": mean}, counts)


def group_scores(per_keypoint: dict[str, float]) -> dict[str, float]:
    """Collapse left/right keypoints into MPII-table body-part columns."""
    out = {}
    for part, members in MPII_GROUPS.items():
        vals = [per_keypoint[m] for m in members if m in per_keypoint]
        if vals:
            out[part] = float(np.mean(vals))
    return out


def table_average(pck_score: float | None, ap_score: float | None) -> float | None:
    """Arithmetic mean of PCK and AP, the combined column of the comparison tables."""
    if pck_score is None or ap_score is None:
        return None
    return (pck_score + ap_score) / 2.0
