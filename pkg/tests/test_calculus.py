import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bernstein_lab import calculus as C
from bernstein_lab import numerics
from bernstein_lab.errors import PreconditionError, QuadratureAccuracyError

from conftest import cached_model


@pytest.fixture(scope="module")
def bump_spec():
    return C.bump()


def test_bump_profile_shape():
    x = np.array([0.0, 1.5, 3.0, 2.99, -1.0])
    v = C.bump_profile(x, 1.5, 1.5)
    assert v[1] == 1.0
    assert v[0] == 0.0 and v[2] == 0.0 and v[4] == 0.0
    assert 0 < v[3] < 1e-20


def test_smooth_step_against_quadrature():
    def b(s):
        return C.bump_profile(np.array([s]), 0.75, 0.25)[0]

    mass = quad(b, 0.5, 1.0)[0]
    for x in (0.55, 0.6, 0.75, 0.9, 0.99):
        ref = quad(b, 0.5, x)[0] / mass
        assert C.smooth_step(np.array([x]), 0.5, 1.0)[0] == pytest.approx(ref, abs=1e-12)
    assert C.smooth_step(np.array([0.2, 1.3]), 0.5, 1.0).tolist() == [0.0, 1.0]


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 5), st.floats(-3, 5))
def test_smooth_step_monotone(a, b):
    lo, hi = sorted((a, b))
    s = C.smooth_step(np.array([lo, hi]), 0.5, 1.0)
    assert 0 <= s[0] <= s[1] <= 1


def test_smooth_cutoff_profile():
    spec = C.smooth_cutoff()
    assert spec.psi(np.array([0.0, 0.5, 1.0])).tolist() == [1.0, 1.0, 1.0]
    assert spec.psi(np.array([2.0, 5.0])).tolist() == [0.0, 0.0]
    assert spec.psi(np.array([-1.5]))[0] == spec.psi(np.array([1.5]))[0]
    assert spec.sup_abs() == 1.0


def test_power_decay_and_tail_step():
    p = C.power_decay(1.0)
    assert p.psi(np.array([1.0]))[0] == pytest.approx(math.exp(-1))
    assert p.sup_abs() == pytest.approx(math.exp(-1), rel=1e-6)
    t = C.tail_step()
    assert t.zero_below == 0.5 and t.constant_from == 1.0
    assert not t.has_table and not p.has_table
    with pytest.raises(PreconditionError):
        C.tail_step(1.0, 0.5)
    with pytest.raises(PreconditionError):
        C.power_decay(-1)
    with pytest.raises(PreconditionError):
        C.make_multiplier("gauss")


def test_fourier_table_against_quadrature(bump_spec):
    b = bump_spec

    def integrand(x, xi, part):
        v = b.psi_e(np.array([x]))[0]
        return v * (math.cos(xi * x) if part == "re" else -math.sin(xi * x))

    for xi in (0.0, 3.7, 17.25, 50.0):
        re = quad(integrand, 0, 3, args=(xi, "re"), limit=400)[0] / math.sqrt(2 * math.pi)
        im = quad(integrand, 0, 3, args=(xi, "im"), limit=400)[0] / math.sqrt(2 * math.pi)
        j = int(np.argmin(np.abs(b.xi - xi)))
        assert b.xi[j] == pytest.approx(xi)
        assert abs(b.fourier[j] - (re + 1j * im)) < 1e-9


def test_fourier_table_decay_constants_nondecreasing(bump_spec):
    dc = bump_spec.decay_constants
    assert np.all(np.isfinite(dc))
    assert np.all(np.diff(dc) >= 0)


def test_spectral_route_matches_heat_semigroup():
    m, E = cached_model("dirichlet_x2", 64)
    for t in (0.01, 0.3):
        H = C.heat_operator(E, t).real
        assert np.allclose(H, scipy.linalg.expm(-t * m.L), atol=1e-12)
        spec = C.power_decay(0.0)  # e^{-x}
        assert np.allclose(C.spectral_multiplier(E, spec, t), H, atol=1e-12)


def test_complex_time_validation():
    assert C.ComplexTime(1 + 1j).z == 1 + 1j
    with pytest.raises(PreconditionError):
        C.ComplexTime(-1 + 0.5j)
    with pytest.raises(PreconditionError):
        C.spectral_multiplier(None, C.power_decay(), 0.0)


@pytest.mark.parametrize("h", [2.0**-8, 2.0**-3, 1.0, 4.0])
def test_fourier_heat_route_matches_spectral_route(h, bump_spec):
    m, E = cached_model("circle", 128)
    w = m.grid.weights
    fh = C.multiplier_via_fourier_heat(E, bump_spec, h)
    gap = numerics.two_norm(C.spectral_multiplier(E, bump_spec, h) - fh.matrix, w, w)
    assert gap <= 1e-6
    assert fh.imag_residue <= 1e-6


def test_fourier_heat_smooth_cutoff_route():
    m, E = cached_model("circle", 128)
    spec = C.smooth_cutoff()
    fh = C.multiplier_via_fourier_heat(E, spec, 0.05)
    assert np.max(np.abs(fh.symbol - spec.psi(0.05 * E.lambdas_sq))) < 1e-6


def test_fourier_heat_quadrature_error_on_short_cutoff(bump_spec):
    _, E = cached_model("circle", 128)
    with pytest.raises(QuadratureAccuracyError) as exc:
        C.multiplier_via_fourier_heat(E, bump_spec, 0.5, Xi=2.0, dxi=0.05)
    assert exc.value.tail_estimate > 1.0
    with pytest.raises(QuadratureAccuracyError):
        C.multiplier_via_fourier_heat(E, bump_spec, 0.5, Xi=100.0, dxi=0.05)


def test_fourier_heat_rejects_families_without_table():
    _, E = cached_model("circle", 128)
    with pytest.raises(PreconditionError):
        C.multiplier_via_fourier_heat(E, C.tail_step(), 0.5)
    with pytest.raises(PreconditionError):
        C.fourier_heat_symbol(C.bump(), np.array([1.0]), dxi=0.03)


def test_riesz_transform_is_an_isometry_on_the_range():
    m, E = cached_model("circle", 64)
    R = C.riesz_transform(E, m, restrict_to_range=True)
    w = m.grid.weights
    assert numerics.two_norm(R, w, m.edge_weights) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(PreconditionError):
        C.riesz_transform(E, m, which="hessian")


def test_gradient_norm_scan_closed_form_dirichlet():
    m, E = cached_model("dirichlet_x2", 64)
    ts = C.dyadic(-6, 2)
    s = C.gradient_norm_scan(m, E, lambda t: (lambda x: np.exp(-t * x)), ts, 2, math.sqrt)
    assert np.max(np.abs(s.extra["square"] - s.extra["closed_form"])) < 1e-10
    assert np.all(s.extra["closed_form"] <= (2 * math.e) ** -0.5 + 1e-14)
    # the sum form dominates the stacked form
    assert np.all(s.upper >= s.extra["square"] * (1 - 1e-12))
    assert s.sup >= s.sup_lower
    assert s.argmax in ts


def test_multiplier_uniformity_q2_is_sup_of_symbol():
    m, E = cached_model("circle", 64)
    spec = C.bump()
    hs = C.dyadic(-6, 1)
    s = C.multiplier_uniformity(m, E, spec, 2, hs)
    ref = [np.max(np.abs(spec.psi(h * E.lambdas_sq))) for h in hs]
    assert np.allclose(s.upper, ref, atol=1e-13)


def test_holomorphic_scan():
    m, E = cached_model("circle", 64)
    ts = C.dyadic(-6, 1)
    s2 = C.holomorphic_norm_scan(m, E, math.pi / 3, 2, ts)
    assert np.all(s2.upper <= 1 + 1e-12)
    s1 = C.holomorphic_norm_scan(m, E, math.pi / 3, 1, ts)
    assert s1.extra["exponent"] == pytest.approx(1.0)
    assert s1.extra["C"] == pytest.approx(s1.sup / 2.0)
    with pytest.raises(PreconditionError):
        C.holomorphic_norm_scan(m, E, math.pi / 2, 1, ts)


def test_pot_norm_zero_when_potential_free():
    m, E = cached_model("circle", 64)
    assert C.pot_norm(m, np.zeros((64, 64)), 1).upper == 0.0


def test_dyadic():
    assert C.dyadic(-2, 1).tolist() == [0.25, 0.5, 1.0, 2.0]


def test_heat_operator_identity_and_semigroup_law():
    m, E = cached_model("circle", 64)
    assert np.allclose(C.heat_operator(E, 0), np.eye(64), atol=1e-13)
    z1, z2 = 0.1 * (1 - 1j), 0.05 + 0.2j
    lhs = C.heat_operator(E, z1) @ C.heat_operator(E, z2)
    assert np.max(np.abs(lhs - C.heat_operator(E, z1 + z2))) < 1e-10


def test_complex_heat_in_coefficient_space():
    # e^{-t(1-i)L} = e^{-tL} e^{itL}; both factors diagonal in the eigenbasis
    m, E = cached_model("dirichlet_x2", 40)
    t = 0.07
    Phi = E.vectors
    rot = (Phi * np.exp(1j * t * E.lambdas_sq)) @ (Phi.T * E.weights)
    ref = scipy.linalg.expm(-t * m.L) @ rot
    assert np.max(np.abs(C.heat_operator(E, t * (1 - 1j)) - ref)) < 1e-10


def test_circle_heat_semigroup_is_conservative():
    m, E = cached_model("circle", 64)
    for t in (0.01, 0.5):
        G = C.heat_operator(E, t).real
        assert C.value_norm(m, G, 1).upper == pytest.approx(1.0, rel=1e-12)


def test_zero_profile_gives_zero_operator():
    _, E = cached_model("circle", 64)
    fh = C.multiplier_via_fourier_heat(E, C.zero_profile(), 0.3)
    assert np.max(np.abs(fh.matrix)) == 0.0
