import numpy as np
import pytest

from poseunion.gradcheck import KERNELS, fd_gradient, rel_err, run_gradcheck


def test_rel_err_definition():
    assert rel_err(np.zeros(3), np.zeros(3)) == 0.0
    assert rel_err(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == 0.5
    assert rel_err(np.array([1.0]), np.array([-1.0])) == 2.0


def test_fd_on_cubic():
    x = np.array([0.3, -1.2, 2.0])
    g = fd_gradient(lambda xs: (xs**3).sum(axis=1), x)
    assert np.allclose(g, 3 * x**2, rtol=1e-8)


def test_all_kernels_pass_small():
    res = run_gradcheck(cases=50, seed=3)
    assert res["passed"] and set(res["kernels"]) == set(KERNELS)


@pytest.mark.parametrize("kernel", KERNELS)
def test_injected_fault_is_caught(kernel):
    res = run_gradcheck(cases=5, inject_fault=kernel)
    assert not res["passed"]
    assert not res["kernels"][kernel]["passed"]
    assert all(v["passed"] for k, v in res["kernels"].items() if k != kernel)
