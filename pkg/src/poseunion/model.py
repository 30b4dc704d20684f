"""Desk-scale student network, teacher oracles and the optimizer loop pieces.

The student is a one-hidden-layer tanh MLP whose output is reshaped into
per-keypoint x/y logits; backpropagation is written out by hand. Teachers are
emulated by ground-truth-anchored discretized Gaussians over the same bins.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from poseunion.losses import StudentPrediction, TeacherPrediction, softmax

CHECKPOINT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2")


class DivergenceError(FloatingPointError):
    """Raised when a gradient or loss stops being finite."""


@dataclass
class StudentModel:
    W1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden, K * 2 * B)
    b2: np.ndarray  # (K * 2 * B,)
    n_keypoints: int
    bins: int

    def __post_init__(self):
        if self.W2.shape[1] != self.n_keypoints * 2 * self.bins:
            raise ValueError("output layer must have K * 2 * B units")
        if self.W1.shape[1] != self.W2.shape[0] or self.b1.shape != (self.W1.shape[1],):
            raise ValueError("hidden layer shapes are inconsistent")
        if self.b2.shape != (self.W2.shape[1],):
            raise ValueError("output bias shape is inconsistent")

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def replace(self, **arrays) -> "StudentModel":
        p = self.params()
        p.update(arrays)
        return StudentModel(**p, n_keypoints=self.n_keypoints, bins=self.bins)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.params().values())


def init_student(d_in: int, hidden: int, n_keypoints: int, bins: int, seed: int) -> StudentModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for every layer."""
    rng = np.random.default_rng(seed)
    out = n_keypoints * 2 * bins
    r1 = 1.0 / math.sqrt(d_in)
    r2 = 1.0 / math.sqrt(hidden)
    return StudentModel(
        W1=rng.uniform(-r1, r1, (d_in, hidden)),
        b1=rng.uniform(-r1, r1, hidden),
        W2=rng.uniform(-r2, r2, (hidden, out)),
        b2=rng.uniform(-r2, r2, out),
        n_keypoints=n_keypoints,
        bins=bins,
    )


def zero_student(d_in: int, hidden: int, n_keypoints: int, bins: int) -> StudentModel:
    out = n_keypoints * 2 * bins
    return StudentModel(
        np.zeros((d_in, hidden)), np.zeros(hidden), np.zeros((hidden, out)), np.zeros(out), n_keypoints, bins
    )


def _hidden(m: StudentModel, z: np.ndarray) -> np.ndarray:
    return np.tanh(z @ m.W1 + m.b1)


def forward(m: StudentModel, z: np.ndarray, *, return_hidden: bool = False):
    """Student prediction for one input vector ``(d_in,)`` or a batch ``(N, d_in)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != m.d_in or z.ndim > 2:
        raise ValueError(f"expected input of length {m.d_in}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite values")
    h = _hidden(m, z)
    logits = (h @ m.W2 + m.b2).reshape(z.shape[:-1] + (m.n_keypoints, 2, m.bins))
    pred = StudentPrediction.from_logits(logits)
    return (pred, h) if return_hidden else pred


def backward(
    m: StudentModel, z: np.ndarray, upstream: np.ndarray, hidden: np.ndarray | None = None
) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum(upstream * logits)``.

    Batched inputs sum their contributions; divide ``upstream`` by the batch
    size beforehand for a batch mean.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    z2 = z[None] if single else z
    expected = z2.shape[:1] + (m.n_keypoints, 2, m.bins)
    up = np.asarray(upstream, dtype=np.float64)
    if single:
        up = up[None]
    if up.shape != expected:
        raise ValueError(f"upstream gradient shape {up.shape}, expected {expected}")
    h = _hidden(m, z2) if hidden is None else (hidden[None] if single else hidden)
    u = up.reshape(len(z2), -1)
    dW2 = h.T @ u
    db2 = u.sum(axis=0)
    da = (u @ m.W2.T) * (1.0 - h * h)
    dW1 = z2.T @ da
    db1 = da.sum(axis=0)
    return {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


# -- teachers ---------------------------------------------------------------


@dataclass(frozen=True)
class TeacherOracle:
    """Stand-in for a pretrained subset-expert network.

    ``concentration`` is the Gaussian width in bin units and ``noise`` the
    per-keypoint center jitter std in normalized coordinates. Both are
    emulation knobs, not properties of any real teacher.
    """

    teacher_id: str
    covered: tuple[int, ...]
    concentration: float = 1.5
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.covered:
            raise ValueError("teacher must cover at least one slot")
        if self.concentration <= 0 or self.noise < 0:
            raise ValueError("concentration must be > 0 and noise >= 0")


def gaussian_bins(centers: np.ndarray, bins: int, concentration: float) -> np.ndarray:
    """Discretized, renormalized Gaussian over bins for each center coordinate.

    ``centers`` has any shape; the result appends a bin axis.
    """
    mu = np.asarray(centers, dtype=np.float64)[..., None] * bins - 0.5
    b = np.arange(bins, dtype=np.float64)
    return softmax(-((b - mu) ** 2) / (2.0 * concentration * concentration))


def teacher_centers(t: TeacherOracle, image_ids, coords: np.ndarray) -> np.ndarray:
    """Jittered target centers ``(N, C, 2)`` for normalized coords ``(N, K, 2)``.

    The jitter of slot ``k`` depends only on ``(seed, image_id, k)``.
    """
    coords = np.asarray(coords, dtype=np.float64)
    cov = np.asarray(t.covered)
    centers = coords[:, cov, :].copy()
    if t.noise > 0:
        for i, img in enumerate(image_ids):
            rng = np.random.default_rng([t.seed, int(img)])
            jit = rng.normal(0.0, t.noise, size=coords.shape[1:])
            centers[i] += jit[cov]
    return centers


def teacher_dists(t: TeacherOracle, centers: np.ndarray, bins: int) -> TeacherPrediction:
    return TeacherPrediction(t.teacher_id, np.asarray(t.covered), gaussian_bins(centers, bins, t.concentration))


def teacher_predict(t: TeacherOracle, gt, bins: int = 64) -> TeacherPrediction:
    """Teacher output for one ground-truth instance (bbox-normalized)."""
    norm = gt.normalized_coords()
    centers = teacher_centers(t, [gt.image_id], norm[None])[0]
    return teacher_dists(t, centers, bins)


# -- optimizer --------------------------------------------------------------


class ConstantLR:
    def __init__(self, lr: float):
        self.lr = lr

    def __call__(self, step: int) -> float:
        return self.lr


class WarmupCosine:
    """Linear warmup from ``start_lr``, flat, then cosine decay to ``min_lr``.

    The cosine phase covers steps ``[cosine_start, total_steps)``.
    """

    def __init__(
        self,
        base_lr: float,
        total_steps: int,
        warmup_steps: int = 0,
        start_lr: float = 1e-5,
        cosine_start: int | None = None,
        min_lr: float = 0.0,
    ):
        self.base_lr = base_lr
        self.total_steps = max(int(total_steps), 1)
        self.warmup_steps = int(warmup_steps)
        self.start_lr = start_lr
        self.cosine_start = self.total_steps // 2 if cosine_start is None else int(cosine_start)
        self.min_lr = min_lr

    def __call__(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.start_lr + (self.base_lr - self.start_lr) * step / self.warmup_steps
        if step < self.cosine_start:
            return self.base_lr
        span = max(self.total_steps - self.cosine_start, 1)
        frac = min((step - self.cosine_start) / span, 1.0)
        return self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + math.cos(math.pi * frac))


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray]
    step: int = 0
    lr: float = 0.0

    @classmethod
    def fresh(cls, params: dict[str, np.ndarray]) -> "TrainState":
        return cls(dict(params), {k: np.zeros_like(v) for k, v in params.items()}, 0, 0.0)


def sgd_step(state: TrainState, grads: dict[str, np.ndarray], schedule, momentum: float = 0.9) -> TrainState:
    """``v = mu * v - lr * g``; ``p += v``."""
    for name, g in grads.items():
        if g.shape != state.params[name].shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, expected {state.params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name} at step {state.step}")
    lr = float(schedule(state.step))
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr} at step {state.step}")
    vel = {k: momentum * state.velocity[k] - lr * grads[k] for k in state.params}
    params = {k: state.params[k] + vel[k] for k in state.params}
    return TrainState(params, vel, state.step + 1, lr)


# -- checkpoints ------------------------------------------------------------


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path: str | Path, m: StudentModel, step: int = 0, digest: str = "") -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_keypoints": m.n_keypoints,
        "bins": m.bins,
        "step": int(step),
        "config_digest": digest,
        "shapes": {k: list(v.shape) for k, v in m.params().items()},
    }
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta)), **{k: v.astype(np.float64) for k, v in m.params().items()})
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[StudentModel, dict]:
    with np.load(path, allow_pickle=False) as f:
        meta = json.loads(str(f["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {k: f[k] for k in PARAM_NAMES}
    for k, shape in meta["shapes"].items():
        if list(arrays[k].shape) != shape:
            raise ValueError(f"checkpoint array {k} has shape {arrays[k].shape}, header says {shape}")
    return StudentModel(**arrays, n_keypoints=meta["n_keypoints"], bins=meta["bins"]), meta
