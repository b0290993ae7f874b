import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_hermite, factorial

from bernstein_lab import models as M
from bernstein_lab.errors import PreconditionError, TruncationLeakError

from conftest import cached_model

MODEL_KEYS = [("circle", 64), ("dirichlet_x2", 64), ("divergence", 64, 3), ("oscillator", 20),
              ("dirichlet", 40, 2.0, 1.5)]


@pytest.mark.parametrize("key", MODEL_KEYS, ids=lambda k: k[0])
def test_form_identity_entrywise(key):
    m, _ = cached_model(*key)
    assert m.form_defect() <= 1e-12 * float(np.max(np.abs(m.L)))


@pytest.mark.parametrize("key", MODEL_KEYS, ids=lambda k: k[0])
def test_eigensystem_is_orthonormal_and_nonnegative(key):
    m, E = cached_model(*key)
    assert E.orthonormality_defect() < 1e-10
    assert np.all(E.lambdas_sq >= 0)
    assert np.all(np.diff(E.lambdas_sq) >= -1e-9 * E.lambdas_sq[-1])
    # L phi = lambda^2 phi in the state space
    R = m.L @ E.vectors - E.vectors * E.lambdas_sq
    assert np.max(np.abs(R)) <= 1e-9 * max(1.0, E.lambdas_sq[-1])


@pytest.mark.parametrize("kind,args", [("circle", (48,)), ("dirichlet_x2", (40,)),
                                       ("divergence", (40, 1))])
def test_native_and_lapack_backends_agree(kind, args):
    m, _ = cached_model(kind, *args)
    a = M.eigensystem(m, backend="native")
    b = M.eigensystem(m, backend="lapack")
    assert np.allclose(a.lambdas_sq, b.lambdas_sq, rtol=1e-10, atol=1e-9)
    # spectral projectors agree even where eigenvalues are degenerate
    Pa = (a.vectors * np.exp(-0.01 * a.lambdas_sq)) @ (a.vectors.T * a.weights)
    Pb = (b.vectors * np.exp(-0.01 * b.lambdas_sq)) @ (b.vectors.T * b.weights)
    assert np.allclose(Pa, Pb, atol=1e-10)


def test_unknown_backend():
    m, _ = cached_model("circle", 64)
    with pytest.raises(PreconditionError):
        M.eigensystem(m, backend="magic")


def test_circle_spectrum_closed_form():
    n = 64
    m, E = cached_model("circle", n)
    h = 2 * math.pi / n
    k = np.arange(n)
    ref = np.sort((4 / h**2) * np.sin(np.pi * k / n) ** 2)
    assert np.allclose(E.lambdas_sq, ref, rtol=1e-12, atol=1e-10)


def test_dirichlet_converges_to_continuum_at_second_order():
    # -u'' on [0, pi]: lambda_k^2 = k^2; the discrete error is ~ k^4 h^2 / 12
    errs = []
    for n in (63, 127):
        _, E = cached_model("dirichlet", n, math.pi, None)
        errs.append(abs(E.lambdas_sq[2] - 9.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_dirichlet_constant_potential_shifts_spectrum():
    m0 = M.dirichlet_interval_model(30, 2.0)
    m1 = M.dirichlet_interval_model(30, 2.0, 3.5)
    E0, E1 = M.eigensystem(m0), M.eigensystem(m1)
    assert np.allclose(E1.lambdas_sq, E0.lambdas_sq + 3.5, rtol=1e-12)
    assert m0.potential_free and not m1.potential_free


def test_divergence_constant_coefficient_scales_laplacian():
    a = M.eigensystem(M.divergence_form_model(30, 1.0, 2.5))
    b = M.eigensystem(M.dirichlet_interval_model(30, 1.0))
    assert np.allclose(a.lambdas_sq, 2.5 * b.lambdas_sq, rtol=1e-12)


def test_divergence_ellipticity_violation_names_the_edge():
    c = M.piecewise_coefficient([1.0, -1.0], 1.0)
    with pytest.raises(PreconditionError, match="edge"):
        M.divergence_form_model(20, 1.0, c)
    with pytest.raises(PreconditionError):
        M.divergence_form_model(20, 1.0, 5.0, eta=0.5, Lambda=4.0)


def test_grid_measures():
    g = M.dirichlet_interval_model(40, 2.0, left=1.5).grid
    # interior weights plus the two boundary half-weights recover the length
    assert g.measure == pytest.approx(2.0, rel=1e-12)
    assert g.right == pytest.approx(3.5)
    c, _ = cached_model("circle", 64)
    assert c.grid.weights.sum() == pytest.approx(2 * math.pi)


def test_band_index_mapping():
    m, E = cached_model("circle", 64)
    assert m.band(3) == (0, 6)
    assert m.tail_band(3, 5) == (5, 10)
    # the top of band N has frequency N, the tail starts at frequency N
    assert E.lambdas_sq[6] == pytest.approx(E.lambdas_sq[5])
    d, _ = cached_model("dirichlet_x2", 64)
    assert d.band(3) == (0, 3)
    with pytest.raises(PreconditionError):
        m.band(40)
    with pytest.raises(PreconditionError):
        m.tail_band(10, 40)


def test_geometry_volume_and_doubling():
    g = M.Geometry("periodic", 0.0, 2 * math.pi)
    assert g.distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert g.volume(1.0, 10.0) == pytest.approx(2 * math.pi)
    iv = M.Geometry("interval", 0.0, 1.0)
    assert iv.volume(0.0, 0.25) == pytest.approx(0.25)
    assert iv.volume(0.5, 0.25) == pytest.approx(0.5)
    assert np.all(iv.doubling_ratio(np.linspace(0, 1, 11), 0.1) <= 4 + 1e-12)
    wl = M.Geometry("whole_line")
    assert wl.doubling_ratio(3.0, 0.7) == pytest.approx(2.0)


def test_hermite_functions_against_scipy():
    x = np.linspace(-4, 4, 33)
    H = M.hermite_functions(x, 10)
    for k in range(11):
        ref = eval_hermite(k, x) * np.exp(-x * x / 2) / math.sqrt(2.0**k * factorial(k) *
                                                                math.sqrt(math.pi))
        assert np.allclose(H[:, k], ref, atol=1e-12)


def test_hermite_functions_large_degree_do_not_overflow():
    H = M.hermite_functions(np.array([0.0, 20.0, 40.0]), 400)
    assert np.all(np.isfinite(H))
    x = np.linspace(-40, 40, 8001)
    H = M.hermite_functions(x, 300)
    norms = np.trapezoid(H * H, x, axis=0)
    assert np.allclose(norms, 1.0, atol=1e-9)


def test_ladder_matrices_factor_the_oscillator():
    A, X = M.ladder_matrices(12)
    assert np.allclose(A.T @ A + X.T @ X, np.diag(2 * np.arange(13) + 1.0), atol=1e-13)


def test_oscillator_truncation_leak():
    with pytest.raises(TruncationLeakError):
        M.harmonic_oscillator_model(30, M.uniform_whole_line_grid(5.0, 201))
    with pytest.raises(PreconditionError):
        M.harmonic_oscillator_model(2)


def test_oscillator_grid_quadrature_is_exact_for_the_modes():
    m, _ = cached_model("oscillator", 20)
    H = m.value_eval
    G = H.T @ (m.grid.weights[:, None] * H)
    assert np.allclose(G, np.eye(G.shape[0]), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MODEL_KEYS), st.integers(0, 2**31))
def test_quadratic_form_identity_random_states(key, seed):
    m, E = cached_model(*key)
    u = np.random.default_rng(seed).standard_normal(m.size)
    Du, Su = m.D @ u, m.S @ u
    lhs = np.sum(m.grad_weights * Du**2) + np.sum(m.pot_weights * Su**2)
    rhs = float(u @ (m.state_weights * (m.L @ u)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_random_coefficient_is_reproducible():
    a = M.random_piecewise_coefficient(8, 1.0, 4.0, 1.0, seed=11)
    b = M.random_piecewise_coefficient(8, 1.0, 4.0, 1.0, seed=11)
    x = np.linspace(0, 1, 50)
    assert np.array_equal(a(x), b(x))
    assert np.all((a(x) >= 1.0) & (a(x) <= 4.0))
