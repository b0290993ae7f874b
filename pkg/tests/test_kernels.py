import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernstein_lab import calculus as C
from bernstein_lab import kernels as K
from bernstein_lab import models as M
from bernstein_lab.errors import PreconditionError, UnsupportedModelError

from conftest import cached_model


def theta_kernel(t, d, images=20):
    """Circle heat kernel by Poisson summation of the whole-line Gaussian."""
    m = np.arange(-images, images + 1)
    d = np.asarray(d, dtype=float)[..., None]
    return np.sum(np.exp(-((d + 2 * math.pi * m) ** 2) / (4 * t)), axis=-1) / math.sqrt(4 * math.pi * t)


def test_theta_oracle_matches_continuum_eigen_sum():
    # the oracle itself: (1/2pi) sum_k e^{-k^2 t} cos(k d)
    d = np.linspace(0, math.pi, 9)
    k = np.arange(1, 400)
    for t in (0.05, 0.5, 2.0):
        ref = (1 + 2 * np.sum(np.exp(-k * k * t)[None, :] * np.cos(np.outer(d, k)), 1)) / (2 * math.pi)
        assert np.allclose(theta_kernel(t, d), ref, rtol=1e-12)


def test_circle_kernel_converges_to_theta_function_at_second_order():
    errs = []
    for n in (128, 256):
        m, E = cached_model("circle", n)
        tb = K.heat_kernel_table(E, m, 0.1)
        d = m.geometry.distance(m.grid.nodes[:, None], m.grid.nodes[None, :])
        errs.append(float(np.max(np.abs(tb.values - theta_kernel(0.1, d)))))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.parametrize("key", [("circle", 64), ("dirichlet_x2", 64), ("divergence", 64, 3)],
                         ids=lambda k: k[0])
def test_heat_kernel_table_properties(key):
    m, E = cached_model(*key)
    a = K.heat_kernel_table(E, m, 0.01)
    b = K.heat_kernel_table(E, m, 0.02)
    assert a.symmetry_defect() == 0.0
    assert np.all(a.values >= -1e-12 * np.max(a.values))
    rs = a.row_sums()
    if m.name == "circle":
        assert np.allclose(rs, 1.0, atol=1e-12)
    else:
        assert np.all(rs <= 1 + 1e-12)
    assert np.max(np.abs(a.compose(a).values - b.values)) < 1e-9 * np.max(b.values)
    f = np.cos(m.grid.nodes)
    assert np.allclose(a.apply(f), m.value_operator(C.heat_operator(E, 0.01).real) @ f, atol=1e-12)


def test_heat_kernel_table_rejects_nonpositive_time():
    m, E = cached_model("circle", 64)
    with pytest.raises(PreconditionError):
        K.heat_kernel_table(E, m, 0.0)


def test_mehler_against_eigen_sum_double_precision():
    x = np.linspace(-2, 2, 9)
    for t in (0.3, 1.0):
        mh = K.mehler_kernel(t, x[:, None], x[None, :])
        es = K.hermite_eigen_sum(t, x, x, 150)
        assert np.allclose(mh, es, rtol=1e-11)


def test_mehler_diagonal_and_symmetry():
    grid = M.uniform_whole_line_grid(6.0, 121)
    tb = K.mehler_table(grid, 0.2)
    assert tb.symmetry_defect() < 1e-15
    assert not tb.potential_free
    # sub-Markov: e^{-tL} 1 < 1 for W = x^2
    assert np.all(tb.row_sums() < 1)
    diag = K.mehler_diagonal(grid)(0.2)
    assert np.allclose(diag, np.diag(tb.values))


def test_mehler_short_time_limit_is_gaussian():
    t = 1e-3
    x = np.array([0.0, 0.01, 0.05])
    gauss = np.exp(-x * x / (4 * t)) / math.sqrt(4 * math.pi * t)
    assert np.allclose(K.mehler_kernel(t, 0.0, x), gauss, rtol=2e-3)


def test_mehler_oracle_extended_precision_small_values():
    # far off-diagonal the kernel is tiny; mpmath keeps the eigen-sum accurate
    x = np.array([-3.0, 3.0])
    mh = K.mehler_kernel(0.25, x[:, None], x[None, :])
    es = K.hermite_eigen_sum(0.25, x, x, 200, dps=40)
    assert np.max(np.abs(mh - es) / mh) < 1e-10


def test_gaussian_fit_bounds_every_pair():
    m, E = cached_model("circle", 128)
    tb = K.heat_kernel_table(E, m, 0.05)
    fit = K.gaussian_bound_fit(tb, m.geometry, 1 / 8)
    x = m.grid.nodes
    d = m.geometry.distance(x[:, None], x[None, :])
    V = m.geometry.volume(x, math.sqrt(0.05))
    bound = fit.C / V[:, None] * np.exp(-d * d / (8 * 0.05))
    assert np.all(tb.values <= bound * (1 + 1e-12) + 1e-12 * tb.values.max())
    with pytest.raises(PreconditionError):
        K.gaussian_bound_fit(tb, m.geometry, 0.0)


def test_gaussian_fit_sweep_spread_circle():
    m, E = cached_model("circle", 256)
    sw = K.gaussian_fit_sweep([K.heat_kernel_table(E, m, t) for t in C.dyadic(-7, 0)],
                              m.geometry)
    assert sw.spread <= 2
    assert sw.ts.tolist() == C.dyadic(-7, 0).tolist()


def test_liyau_holds_on_circle_and_fails_at_dirichlet_boundary():
    m, E = cached_model("circle", 128)
    rep = K.liyau_lower_fit(K.heat_kernel_table(E, m, 0.1), m.geometry)
    assert rep.holds and rep.c_low > 0
    d, Ed = cached_model("dirichlet", 63, math.pi, None)
    rep = K.liyau_lower_fit(K.heat_kernel_table(Ed, d, 0.1), d.geometry)
    assert not rep.holds
    # the failures sit on the boundary, where the Dirichlet kernel vanishes
    ends = (d.grid.left, d.grid.right)
    assert all(min(abs(a - e) for e in ends) < 1e-12 or min(abs(b - e) for e in ends) < 1e-12
               for a, b in rep.failures)


def test_liyau_unsupported_with_potential():
    m, E = cached_model("dirichlet_x2", 64)
    with pytest.raises(UnsupportedModelError):
        K.liyau_lower_fit(K.heat_kernel_table(E, m, 0.1), m.geometry)


def test_on_diagonal_fit_recovers_dimension():
    m, E = cached_model("circle", 512)
    fit = K.on_diagonal_fit(K.eigen_diagonal(E, m), C.dyadic(-10, -2))
    assert fit.m == pytest.approx(1.0, abs=0.05)
    grid = M.uniform_whole_line_grid(8.0, 321)
    fit = K.on_diagonal_fit(K.mehler_diagonal(grid), C.dyadic(-10, -2))
    assert fit.m == pytest.approx(1.0, abs=0.05)
    with pytest.raises(PreconditionError):
        K.on_diagonal_fit(K.mehler_diagonal(grid), [0.1, 0.2, 0.4])
    with pytest.raises(PreconditionError):
        K.on_diagonal_fit(K.mehler_diagonal(grid), [0.1, 0.2, 0.4, 2.0])


def test_eigen_diagonal_matches_table():
    m, E = cached_model("oscillator", 20)
    tb = K.heat_kernel_table(E, m, 0.3)
    assert np.allclose(K.eigen_diagonal(E, m)(0.3), np.diag(tb.values))


def test_grigoryan_integral_uniform_on_circle():
    m, E = cached_model("circle", 256)
    ts = C.dyadic(-7, 0)
    r = K.grigoryan_sweep(m, E, ts, 1 / 16)
    assert np.all(r > 0)
    assert r.max() / r.min() <= 2
    v = K.grigoryan_integral(m, E, 0.1, 1 / 16, 10)
    assert v.y == pytest.approx(m.grid.nodes[10])
    with pytest.raises(PreconditionError):
        K.grigoryan_integral(m, E, 0.1, 0.0, 10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 1.0))
def test_gaussian_mass_whole_line_closed_form(h, c):
    # sum_i w_i e^{-c (x_i - y)^2/h} / (2 sqrt h) -> sqrt(pi/c)/2 away from the ends
    grid = M.uniform_whole_line_grid(40.0, 4001)
    val = K.gaussian_mass_check(M.Geometry("whole_line"), grid, h, c)
    assert val == pytest.approx(math.sqrt(math.pi / c) / 2, rel=1e-6)


def test_regularity_scan_closed_form():
    m, E = cached_model("dirichlet_x2", 64)
    s = K.regularity_scan(m, E, 2, C.dyadic(-8, 2))
    assert np.max(np.abs(s.extra["square"] - s.extra["closed_form"])) < 1e-10


def test_grigoryan_large_c0_diverges_and_threshold_is_reported():
    m, E = cached_model("circle", 256)
    ts = C.dyadic(-7, 0)
    r = K.grigoryan_sweep(m, E, ts, 1.0)
    # the ratio blows up as t -> 0 once c0 exceeds the Gaussian rate
    assert r[0] > 1e6 * r[-1]
    assert np.all(np.diff(r) < 0)
    thr = K.grigoryan_threshold(m, E, ts, [1.0, 1 / 16, 1 / 4, 1 / 2])
    assert thr.c0s.tolist() == [1 / 16, 1 / 4, 1 / 2, 1.0]
    assert 1 / 16 <= thr.threshold < 1 / 2
    assert thr.spreads[-1] > 1e6
