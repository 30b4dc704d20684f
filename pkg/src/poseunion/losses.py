"""Conditional keypoint loss, multi-teacher KL distillation and their weighted sum.

Predictions are SimCC-style: for every keypoint, two categorical distributions
over ``B`` bins (x axis, y axis). Arrays carry arbitrary leading batch
dimensions; the trailing layout is ``(K, 2, B)`` for logits/distributions and
``(K, 2)`` for coordinates. Every loss returns per-instance values summed over
keypoints together with its analytic gradient; batch reduction is left to the
caller.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

KL_DIRECTIONS = ("teacher_target", "student_target")


class LossConfigError(ValueError):
    pass


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def bin_centers(bins: int) -> np.ndarray:
    return (np.arange(bins) + 0.5) / bins


def soft_argmax_decode(dists: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expected bin-center coordinate along the last axis.

    Returns ``(coords, jacobian)`` where ``jacobian[..., b]`` is the derivative
    of the coordinate w.r.t. the logit that produced bin ``b``.
    """
    c = bin_centers(dists.shape[-1])
    coords = dists @ c
    jac = dists * (c - coords[..., None])
    return coords, jac


@dataclass
class StudentPrediction:
    logits: np.ndarray  # (..., K, 2, B)
    dists: np.ndarray
    coords: np.ndarray  # (..., K, 2), normalized [0, 1]

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "StudentPrediction":
        logits = np.asarray(logits, dtype=np.float64)
        dists = softmax(logits)
        coords, _ = soft_argmax_decode(dists)
        return cls(logits, dists, coords)

    @property
    def num_keypoints(self) -> int:
        return self.logits.shape[-3]

    @property
    def bins(self) -> int:
        return self.logits.shape[-1]


@dataclass
class TeacherPrediction:
    teacher_id: str
    covered: np.ndarray  # (C,) union slots
    dists: np.ndarray  # (..., C, 2, B)

    def __post_init__(self):
        self.covered = np.asarray(self.covered, dtype=np.int64)
        if self.dists.shape[-3] != len(self.covered):
            raise ValueError("teacher dists must have one entry per covered slot")


@dataclass
class LossWeights:
    alpha: float
    betas: dict[str, float]

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise LossConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        for k, b in self.betas.items():
            if b < 0:
                raise LossConfigError(f"beta for {k!r} must be non-negative, got {b}")


@dataclass
class LossConfig:
    alpha: float = 0.30
    betas: dict[str, float] = field(default_factory=lambda: {"mpii16": 0.25, "coco17": 0.45})
    bins: int = 64
    kl_direction: str = "teacher_target"
    temperature: float = 1.0

    def __post_init__(self):
        if self.kl_direction not in KL_DIRECTIONS:
            raise LossConfigError(f"kl_direction must be one of {KL_DIRECTIONS}")
        if self.temperature <= 0:
            raise LossConfigError("temperature must be positive")
        if self.bins < 2:
            raise LossConfigError("need at least 2 bins")
        LossWeights(self.alpha, self.betas)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha, dict(self.betas))

    @classmethod
    def from_dict(cls, d: Mapping) -> "LossConfig":
        unknown = set(d) - {"alpha", "betas", "bins", "kl_direction", "temperature"}
        if unknown:
            raise LossConfigError(f"unknown loss config keys: {sorted(unknown)}")
        return cls(**{k: (dict(v) if k == "betas" else v) for k, v in d.items()})

    @classmethod
    def from_json(cls, path) -> "LossConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "betas": dict(self.betas),
            "bins": self.bins,
            "kl_direction": self.kl_direction,
            "temperature": self.temperature,
        }


def conditional_keypoint_loss(
    coords: np.ndarray, gt_coords: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Squared L2 error summed over the labeled keypoints only.

    Unlabeled slots contribute nothing and receive an exactly-zero gradient.
    """
    coords = np.asarray(coords, dtype=np.float64)
    gt_coords = np.asarray(gt_coords, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if coords.shape != gt_coords.shape or coords.shape[:-1] != mask.shape:
        raise ValueError(f"shape mismatch: pred {coords.shape}, gt {gt_coords.shape}, mask {mask.shape}")
    diff = np.where(mask[..., None], coords - gt_coords, 0.0)
    return (diff * diff).sum(axis=(-2, -1)), 2.0 * diff


def _tempered(t: np.ndarray, temperature: float) -> np.ndarray:
    if temperature == 1.0:
        return t
    with np.errstate(divide="ignore"):
        return softmax(np.log(t) / temperature)


def kl_distill_loss(
    logits: np.ndarray,
    teacher: TeacherPrediction,
    *,
    direction: str = "teacher_target",
    temperature: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """KL divergence between student and teacher over the teacher's slots.

    ``teacher_target`` computes KL(t || p), whose logit gradient is ``p - t``;
    ``student_target`` computes KL(p || t). Both are scaled by ``temperature**2``.
    Returns ``(value, grad_logits)`` with ``grad_logits`` shaped like ``logits``
    and exactly zero on uncovered slots.
    """
    logits = np.asarray(logits, dtype=np.float64)
    cov = teacher.covered
    if cov.size and (cov.min() < 0 or cov.max() >= logits.shape[-3]):
        raise ValueError("teacher covers slots outside the prediction")
    sub = logits[..., cov, :, :] / temperature
    logp = log_softmax(sub)
    p = np.exp(logp)
    t = _tempered(np.asarray(teacher.dists, dtype=np.float64), temperature)
    if t.shape != sub.shape:
        raise ValueError(f"teacher dists {t.shape} do not match student slice {sub.shape}")
    pos = t > 0
    if direction == "teacher_target":
        logt = np.log(np.where(pos, t, 1.0))
        per_bin = np.where(pos, t * (logt - logp), 0.0)
        g = p - t
    elif direction == "student_target":
        if not np.all(pos):
            raise ValueError("KL(p || t) is infinite where the teacher assigns zero mass")
        f = logp - np.log(t)
        per_bin = p * f
        g = p * (f - per_bin.sum(axis=-1, keepdims=True))
    else:
        raise LossConfigError(f"unknown kl_direction {direction!r}")
    scale = temperature * temperature
    value = scale * per_bin.sum(axis=(-3, -2, -1))
    grad = np.zeros_like(logits)
    grad[..., cov, :, :] = temperature * g
    return value, grad


def coords_grad_to_logits(dists: np.ndarray, grad_coords: np.ndarray) -> np.ndarray:
    """Pull a coordinate gradient back through the soft-argmax decode."""
    _, jac = soft_argmax_decode(dists)
    return jac * grad_coords[..., None]


@dataclass
class TotalLoss:
    value: np.ndarray
    grad_coords: np.ndarray
    grad_logits: np.ndarray
    ck: np.ndarray
    distill: dict[str, np.ndarray]

    def logits_gradient(self, pred: StudentPrediction) -> np.ndarray:
        """Full gradient w.r.t. the student logits (coordinate path + KL path)."""
        return self.grad_logits + coords_grad_to_logits(pred.dists, self.grad_coords)


def total_loss(
    pred: StudentPrediction,
    gt_coords: np.ndarray,
    mask: np.ndarray,
    teachers: Sequence[TeacherPrediction],
    weights: LossWeights,
    *,
    direction: str = "teacher_target",
    temperature: float = 1.0,
) -> TotalLoss:
    """``alpha * L_CK + (1 - alpha) * sum_j beta_j * L_D(T_j)``."""
    for t in teachers:
        if t.teacher_id not in weights.betas:
            raise LossConfigError(f"no beta configured for teacher {t.teacher_id!r}")
    a = weights.alpha
    ck, g_ck = conditional_keypoint_loss(pred.coords, gt_coords, mask)
    value = a * ck
    grad_logits = np.zeros_like(pred.logits)
    distill: dict[str, np.ndarray] = {}
    distill_sum = np.zeros_like(ck)
    for t in teachers:
        ld, g_ld = kl_distill_loss(pred.logits, t, direction=direction, temperature=temperature)
        distill[t.teacher_id] = ld
        b = weights.betas[t.teacher_id]
        distill_sum = distill_sum + b * ld
        grad_logits += ((1.0 - a) * b) * g_ld
    value = value + (1.0 - a) * distill_sum
    return TotalLoss(value, a * g_ck, grad_logits, ck, distill)
