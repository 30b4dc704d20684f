import math

import numpy as np
import pytest

from poseunion.annotation_io import UnifiedInstance
from poseunion.losses import TeacherPrediction, conditional_keypoint_loss, soft_argmax_decode, total_loss, LossWeights
from poseunion.model import (
    ConstantLR,
    DivergenceError,
    TeacherOracle,
    TrainState,
    WarmupCosine,
    backward,
    forward,
    gaussian_bins,
    init_student,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    teacher_centers,
    teacher_predict,
    zero_student,
)


def test_forward_analytic_two_bins():
    m = zero_student(3, 4, 1, 2)
    m = m.replace(b2=np.array([math.log(3), 0.0, math.log(3), 0.0]))
    pred = forward(m, np.ones(3))
    # p = (3/4, 1/4) over centers (1/4, 3/4)
    assert np.allclose(pred.dists, [[[0.75, 0.25], [0.75, 0.25]]])
    assert pred.coords == pytest.approx(np.array([[0.375, 0.375]]), abs=1e-15)


def test_forward_matches_loop_oracle(rng):
    m = init_student(3, 5, 2, 4, seed=1)
    z = rng.normal(size=3)
    h = [math.tanh(sum(z[i] * m.W1[i, j] for i in range(3)) + m.b1[j]) for j in range(5)]
    logits = [sum(h[j] * m.W2[j, o] for j in range(5)) + m.b2[o] for o in range(16)]
    pred = forward(m, z)
    assert np.allclose(pred.logits.ravel(), logits, rtol=1e-13, atol=1e-14)
    batch = forward(m, np.stack([z, z]))
    assert np.allclose(batch.logits[0], pred.logits, rtol=1e-14, atol=1e-15)


def test_forward_rejects_bad_input():
    m = zero_student(3, 2, 1, 2)
    with pytest.raises(ValueError):
        forward(m, np.ones(4))
    with pytest.raises(ValueError):
        forward(m, np.array([1.0, np.nan, 0.0]))


def test_backward_batch_is_sum(rng):
    m = init_student(4, 6, 3, 5, seed=2)
    z = rng.normal(size=(3, 4))
    up = rng.normal(size=(3, 3, 2, 5))
    full = backward(m, z, up)
    parts = [backward(m, z[i], up[i]) for i in range(3)]
    for k in full:
        assert np.allclose(full[k], sum(p[k] for p in parts), rtol=1e-12, atol=1e-14)


def test_momentum_sgd_quadratic_bowl():
    p0 = {"w": np.array([3.0, -2.0, 0.5])}
    st = TrainState.fresh(p0)
    for _ in range(500):
        st = sgd_step(st, {"w": st.params["w"]}, ConstantLR(0.1), momentum=0.9)
    assert np.abs(st.params["w"]).max() < 1e-8
    assert st.step == 500


def test_sgd_first_step_exact():
    st = TrainState.fresh({"w": np.array([1.0])})
    st = sgd_step(st, {"w": np.array([2.0])}, ConstantLR(0.5), 0.9)
    assert st.params["w"][0] == 0.0 and st.velocity["w"][0] == -1.0
    st = sgd_step(st, {"w": np.array([2.0])}, ConstantLR(0.5), 0.9)
    assert st.velocity["w"][0] == pytest.approx(-1.9)


def test_sgd_divergence_guard():
    st = TrainState.fresh({"w": np.zeros(2)})
    with pytest.raises(DivergenceError):
        sgd_step(st, {"w": np.array([np.inf, 0.0])}, ConstantLR(0.1))


def test_warmup_cosine_shape():
    s = WarmupCosine(1.0, total_steps=100, warmup_steps=10, start_lr=0.0, cosine_start=50)
    assert s(0) == 0.0 and s(5) == 0.5 and s(10) == 1.0 and s(49) == 1.0
    assert s(75) == pytest.approx(0.5)
    assert s(100) == pytest.approx(0.0, abs=1e-15)
    vals = [s(i) for i in range(50, 101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_gaussian_bins_center(rng):
    for c in rng.uniform(0.1, 0.9, 20):
        d = gaussian_bins(np.array(c), 64, 1.5)
        assert d.sum() == pytest.approx(1.0)
        x, _ = soft_argmax_decode(d)
        assert abs(x - c) < 1e-6


def test_teacher_sharpens_to_point_mass():
    d = gaussian_bins(np.array(20.5 / 64), 64, 1e-3)
    assert d.argmax() == 20 and d[20] == pytest.approx(1.0)


def test_teacher_determinism_and_coverage():
    t = TeacherOracle("coco17", (0, 3, 5), noise=0.02, seed=9)
    g = UnifiedInstance(41, (0.0, 0.0, 10.0, 20.0), 200.0, np.full((21, 2), 5.0), np.ones(21, bool), np.full(21, 2))
    a, b = teacher_predict(t, g), teacher_predict(t, g)
    assert isinstance(a, TeacherPrediction) and a.dists.shape == (3, 2, 64)
    assert np.array_equal(a.dists, b.dists)
    c1 = teacher_centers(t, [41, 42], np.full((2, 21, 2), 0.5))
    c2 = teacher_centers(t, [42], np.full((1, 21, 2), 0.5))
    assert np.array_equal(c1[1], c2[0])  # jitter depends only on (seed, image, slot)
    with pytest.raises(ValueError):
        TeacherOracle("x", ())


def test_checkpoint_roundtrip(tmp_path):
    m = init_student(5, 7, 3, 8, seed=4)
    save_checkpoint(tmp_path / "m.npz", m, step=12, digest="abc")
    back, meta = load_checkpoint(tmp_path / "m.npz")
    assert meta["step"] == 12 and meta["config_digest"] == "abc"
    for k, v in m.params().items():
        assert np.array_equal(back.params()[k], v)
    z = np.linspace(-1, 1, 5)
    assert np.array_equal(forward(back, z).logits, forward(m, z).logits)


def test_gradient_step_reduces_loss(rng):
    m = init_student(4, 16, 3, 8, seed=0)
    z = rng.uniform(-1, 1, (32, 4))
    gt = 0.5 + 0.3 * np.tanh(z @ rng.normal(size=(4, 6))).reshape(32, 3, 2)
    mask = np.ones((32, 3), bool)
    w = LossWeights(1.0, {})
    st = TrainState.fresh(m.params())
    losses = []
    for _ in range(200):
        m = m.replace(**st.params)
        pred = forward(m, z)
        tl = total_loss(pred, gt, mask, [], w)
        losses.append(tl.value.mean())
        st = sgd_step(st, backward(m, z, tl.logits_gradient(pred) / len(z)), ConstantLR(0.2), 0.9)
    assert losses[-1] < 0.5 * losses[0]
    assert conditional_keypoint_loss(pred.coords, gt, mask)[0].shape == (32,)
