"""Central finite-difference checks for every analytic gradient in the package.

Each check draws random cases, perturbs every input coordinate by ``+-h`` and
compares against the analytic gradient. The perturbations are stacked into a
leading batch axis so one vectorized call evaluates all of them.

Error measure per case: ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``
(zero when both gradients vanish).
"""
from __future__ import annotations

import numpy as np

from poseunion.losses import (
    LossWeights,
    StudentPrediction,
    TeacherPrediction,
    bin_centers,
    conditional_keypoint_loss,
    kl_distill_loss,
    soft_argmax_decode,
    softmax,
    total_loss,
)
from poseunion.model import backward, init_student

KERNELS = ("ck", "kl", "softargmax", "total", "backward")
STEP = 1e-6


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def fd_gradient(f, x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Numerical gradient of ``f`` at ``x``; ``f`` maps ``(P, *x.shape)`` to ``(P,)``."""
    n = x.size
    eye = np.eye(n).reshape((n,) + x.shape) * h
    vals = f(np.concatenate([x[None] + eye, x[None] - eye]))
    return ((vals[:n] - vals[n:]) / (2 * h)).reshape(x.shape)


def _random_teacher(rng, k, bins, tid="t"):
    cov = np.flatnonzero(rng.random(k) < 0.6)
    if cov.size == 0:
        cov = np.array([int(rng.integers(k))])
    dists = rng.dirichlet(np.full(bins, 0.7), size=(len(cov), 2))
    return TeacherPrediction(tid, cov, dists)


def _bcast(t: TeacherPrediction, p: int) -> TeacherPrediction:
    return TeacherPrediction(t.teacher_id, t.covered, np.broadcast_to(t.dists, (p,) + t.dists.shape))


def check_ck(rng, flip=False):
    k = 21
    coords = rng.random((k, 2))
    gt = rng.random((k, 2))
    mask = rng.random(k) < 0.7
    _, g = conditional_keypoint_loss(coords, gt, mask)
    g = -g if flip else g
    num = fd_gradient(
        lambda c: conditional_keypoint_loss(c, np.broadcast_to(gt, c.shape), np.broadcast_to(mask, c.shape[:-1]))[0],
        coords,
    )
    return rel_err(g, num)


def check_kl(rng, flip=False):
    k, bins = 21, int(rng.integers(2, 9))
    logits = rng.normal(0.0, 2.0, (k, 2, bins))
    t = _random_teacher(rng, k, bins)
    direction = "teacher_target" if rng.random() < 0.5 else "student_target"
    temp = float(rng.choice([1.0, rng.uniform(0.5, 2.0)]))
    _, g = kl_distill_loss(logits, t, direction=direction, temperature=temp)
    g = -g if flip else g

    def f(l):
        return kl_distill_loss(l, _bcast(t, len(l)), direction=direction, temperature=temp)[0]

    return rel_err(g, fd_gradient(f, logits))


def check_softargmax(rng, flip=False):
    bins = int(rng.integers(2, 65))
    logits = rng.normal(0.0, 2.0, bins)
    _, jac = soft_argmax_decode(softmax(logits))
    jac = -jac if flip else jac
    c = bin_centers(bins)
    return rel_err(jac, fd_gradient(lambda l: softmax(l) @ c, logits))


def check_total(rng, flip=False):
    k, bins = 21, int(rng.integers(2, 7))
    logits = rng.normal(0.0, 2.0, (k, 2, bins))
    gt = rng.random((k, 2))
    mask = rng.random(k) < 0.7
    teachers = [_random_teacher(rng, k, bins, "mpii"), _random_teacher(rng, k, bins, "coco")]
    w = LossWeights(float(rng.random()), {"mpii": float(rng.random()), "coco": float(rng.random())})
    pred = StudentPrediction.from_logits(logits)
    g = total_loss(pred, gt, mask, teachers, w).logits_gradient(pred)
    g = -g if flip else g

    def f(l):
        p = len(l)
        return total_loss(
            StudentPrediction.from_logits(l), np.broadcast_to(gt, (p,) + gt.shape),
            np.broadcast_to(mask, (p, k)), [_bcast(t, p) for t in teachers], w,
        ).value

    return rel_err(g, fd_gradient(f, logits))


def _stacked_logits(z, W1, b1, W2, b2):
    # straight-line forward over a stack of parameter sets
    h = np.tanh(np.einsum("nd,pdh->pnh", z, W1) + b1[:, None, :])
    return np.einsum("pnh,pho->pno", h, W2) + b2[:, None, :]


def check_backward(rng, flip=False):
    d_in, hidden, k, bins, n = int(rng.integers(1, 5)), int(rng.integers(1, 6)), 21, 2, int(rng.integers(1, 4))
    m = init_student(d_in, hidden, k, bins, seed=int(rng.integers(2**31)))
    m = m.replace(**{name: a + rng.normal(0.0, 0.3, a.shape) for name, a in m.params().items()})
    z = rng.normal(0.0, 1.0, (n, d_in))
    up = rng.normal(0.0, 1.0, (n, k, 2, bins))
    grads = backward(m, z, up)
    names = list(m.params())
    flat = np.concatenate([m.params()[nm].ravel() for nm in names])
    shapes = [m.params()[nm].shape for nm in names]
    sizes = [int(np.prod(s)) for s in shapes]

    def f(theta):
        p = len(theta)
        parts, o = [], 0
        for s, sz in zip(shapes, sizes):
            parts.append(theta[:, o:o + sz].reshape((p,) + s))
            o += sz
        logits = _stacked_logits(z, *parts)
        return (logits * up.reshape(1, n, -1)).sum(axis=(1, 2))

    num = fd_gradient(f, flat)
    ana = np.concatenate([grads[nm].ravel() for nm in names])
    ana = -ana if flip else ana
    return rel_err(ana, num)


CHECKS = {
    "ck": check_ck,
    "kl": check_kl,
    "softargmax": check_softargmax,
    "total": check_total,
    "backward": check_backward,
}


def run_gradcheck(cases: int = 1000, tol: float = 1e-5, seed: int = 0, inject_fault: str | None = None) -> dict:
    """Run every kernel check; ``inject_fault`` sign-flips one analytic gradient."""
    if inject_fault is not None and inject_fault not in CHECKS:
        raise ValueError(f"unknown kernel {inject_fault!r}")
    results = {}
    for i, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, i])
        errs = [fn(rng, flip=(name == inject_fault)) for _ in range(cases)]
        worst = max(errs) if errs else 0.0
        results[name] = {"cases": cases, "max_rel_err": worst, "passed": bool(worst <= tol)}
    return {
        "tol": tol,
        "step": STEP,
        "seed": seed,
        "kernels": results,
        "passed": all(r["passed"] for r in results.values()),
    }
