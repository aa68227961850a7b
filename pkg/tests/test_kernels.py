import numpy as np
import pytest

from idmauc import _fallback, kernels
from idmauc.simulate import TRUTH
from idmauc.transprob import quad_p01

compiled = pytest.importorskip("idmauc._kernels")

PARAMS = [(0.05, 0.5, 0.05, 0.5, 0.56, 0.5), (0.01, 1.3, 0.02, 0.8, 0.2, 1.1),
          (0.1, 0.3, 0.02, 1.0, 0.05, 0.7), (0.02, 1.0, 0.03, 1.0, 0.03, 1.0)]


def grids():
    rng = np.random.default_rng(0)
    s = rng.uniform(0, 100, 300)
    t = s + rng.exponential(20, 300)
    s[:20] = 0.0
    t[:5] = s[:5]
    return s, t


def test_backend_selected():
    assert kernels.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("params", PARAMS)
def test_weibull_p01_backends_agree(params):
    s, t = grids()
    a = compiled.weibull_p01(s, t, *params)
    b = _fallback.weibull_p01(s, t, *params)
    assert np.max(np.abs(a - b)) < 1e-11
    assert np.all(a[:5] == 0)


@pytest.mark.parametrize("params", PARAMS[:2])
def test_weibull_gradients_agree(params):
    s, t = grids()
    a, da = compiled.weibull_p01(s, t, *params, grad=True)
    b, db = _fallback.weibull_p01(s, t, *params, grad=True)
    assert da.shape == (s.size, 6)
    assert np.max(np.abs(da - db)) < 1e-10


def test_weibull_gradient_finite_difference():
    s = np.array([0.0, 3.0, 12.0])
    t = np.array([12.0, 40.0, 72.0])
    th = np.log(PARAMS[0])
    _, d = compiled.weibull_p01(s, t, *np.exp(th), grad=True)
    h = 1e-5
    for j in range(6):
        e = np.zeros(6)
        e[j] = h
        num = (compiled.weibull_p01(s, t, *np.exp(th + e)) - compiled.weibull_p01(s, t, *np.exp(th - e))) / (2 * h)
        assert np.allclose(d[:, j], num, rtol=1e-6, atol=1e-12)


def test_kernel_matches_generic_quadrature():
    m = TRUTH.model()
    for s, t in ((0, 1e-3), (0, 12), (5, 6), (60, 120)):
        v = compiled.weibull_p01(np.array([s], float), np.array([t], float), *PARAMS[0])[0]
        assert v == pytest.approx(quad_p01(m, s, t), abs=1e-10)


def test_aj_forward_backends_agree():
    rng = np.random.default_rng(1)
    d01, d02, d12 = (rng.uniform(0, 0.05, 500) for _ in range(3))
    a = compiled.aj_forward(d01, d02, d12, 1.0, 0.0)
    b = _fallback.aj_forward(d01, d02, d12, 1.0, 0.0)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-14, atol=1e-16)
    a = compiled.aj_forward(d01[:0], d02[:0], d12[:0], 1.0, 0.0)
    assert len(a[0]) == 0


def test_pure_python_switch(monkeypatch):
    import importlib
    monkeypatch.setenv("IDMAUC_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.weibull_p01 is _fallback.weibull_p01
    finally:
        monkeypatch.delenv("IDMAUC_PURE_PYTHON")
        importlib.reload(kernels)
