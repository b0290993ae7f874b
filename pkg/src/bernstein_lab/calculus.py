"""Functional calculus of the model operators.

Two independent routes to ``psi(hL)``: spectral truncation, and the
Fourier-heat integral

    psi(hL) = (2 pi)^{-1/2} int F(xi) exp(-(2 - i xi) h L) dxi,
    F = Fourier transform of psi_e(x) = psi(x) e^{2x}.

Also complex-time semigroups, Riesz transforms and h-uniformity scans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import numerics
from .errors import PreconditionError, QuadratureAccuracyError
from .models import ModelOperator
from .numerics import EigenSystem, NormBounds

DEFAULT_XI = 200.0
DEFAULT_DXI = 0.05
TABLE_SPACING = 0.0125
OVERSAMPLING = 16
QUAD_TOL = 1e-6
HOLOMORPHIC_EPS = 0.5

_GL_X, _GL_W = np.polynomial.legendre.leggauss(96)


def bump_profile(x, a: float, r: float):
    """``exp(1 - 1/(1 - u^2))`` with ``u = (x - a)/r``; peak 1 at ``x = a``."""
    u = (np.asarray(x, dtype=float) - a) / r
    out = np.zeros(np.shape(u))
    inside = np.abs(u) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


def _bump_cdf_unit(s):
    # int_{-1}^{s} bump(u) du by Gauss-Legendre on [-1, s]
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    half = 0.5 * (s + 1.0)
    u = -1.0 + half[..., None] * (_GL_X + 1.0)
    return half * np.sum(_GL_W * bump_profile(u, 0.0, 1.0), axis=-1)


_BUMP_MASS = float(_bump_cdf_unit(np.array([1.0]))[0])


def smooth_step(x, lo: float, hi: float):
    """Integral of a bump supported on ``[lo, hi]``, normalized: 0 below ``lo``, 1 above ``hi``."""
    x = np.asarray(x, dtype=float)
    u = (2.0 * x - (lo + hi)) / (hi - lo)
    out = _bump_cdf_unit(u.ravel()) / _BUMP_MASS
    out = out.reshape(x.shape)
    out[u <= -1] = 0.0
    out[u >= 1] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class MultiplierSpec:
    """A smooth profile ``psi`` on ``[0, inf)`` with its weighted Fourier table.

    ``support`` is the compact support of ``psi_e`` on the real line (``None``
    for eventually-constant or non-compact families, which then have no table).
    """

    family: str
    params: tuple
    psi_fn: Callable = field(repr=False)
    support: tuple | None = None
    zero_below: float = 0.0  # psi vanishes on [0, zero_below)
    constant_from: float | None = None  # psi constant on [constant_from, inf)
    xi: np.ndarray | None = field(default=None, repr=False)
    fourier: np.ndarray | None = field(default=None, repr=False)
    decay_constants: np.ndarray | None = field(default=None, repr=False)

    def psi(self, x):
        return self.psi_fn(np.asarray(x, dtype=float))

    def psi_e(self, x):
        x = np.asarray(x, dtype=float)
        return self.psi(x) * np.exp(2.0 * x)

    @property
    def has_table(self) -> bool:
        return self.fourier is not None

    @property
    def table_spacing(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def table_cutoff(self) -> float:
        return float(self.xi[-1])

    def sup_abs(self, upper: float = 64.0, npts: int = 200001) -> float:
        """``max |psi|`` on ``[0, upper]`` (profiles here are flat or decaying beyond)."""
        xs = np.linspace(0.0, upper, npts)
        return float(np.max(np.abs(self.psi(xs))))


def fourier_table(psi_e: Callable, lo: float, hi: float, Xi: float = DEFAULT_XI,
                  spacing: float = TABLE_SPACING, oversampling: int = OVERSAMPLING):
    """``F(xi_j) = (2 pi)^{-1/2} int psi_e(x) e^{-i xi_j x} dx`` for ``xi_j = j spacing``, ``|xi_j| <= Xi``.

    Trapezoid rule (spectrally accurate for a smooth compactly supported
    integrand) evaluated for all ``xi_j`` at once by a zero-padded FFT.
    """
    J = int(round(Xi / spacing))
    if abs(J * spacing - Xi) > 1e-9 * Xi:
        raise PreconditionError(f"table cutoff {Xi} is not a multiple of the spacing {spacing}")
    dx_target = math.pi / (oversampling * Xi)
    nfft = int(math.ceil(2 * math.pi / (spacing * dx_target)))
    dx = 2 * math.pi / (spacing * nfft)
    x = lo + dx * np.arange(int(math.floor((hi - lo) / dx)) + 1)
    if x.size > nfft or nfft < 2 * J + 1:
        raise PreconditionError("Fourier table grid too coarse for the requested cutoff")
    pe = np.zeros(nfft)
    pe[: x.size] = psi_e(x)
    S = np.fft.fft(pe)
    j = np.arange(-J, J + 1)
    xi = spacing * j
    F = S[j % nfft] * np.exp(-1j * xi * lo) * dx / math.sqrt(2 * math.pi)
    return xi, F


def _decay_constants(xi, F, mmax: int = 8):
    C = np.array([np.max(np.abs(F) * (1.0 + np.abs(xi)) ** m) for m in range(mmax + 1)])
    if not np.all(np.isfinite(C)):
        raise QuadratureAccuracyError("Fourier table of psi_e is not finite",
                                      tail_estimate=math.inf)
    return C


def _with_table(family, params, fn, lo, hi, Xi, **kw) -> MultiplierSpec:
    spec = MultiplierSpec(family, params, fn, support=(lo, hi), **kw)
    xi, F = fourier_table(spec.psi_e, lo, hi, Xi)
    return MultiplierSpec(family, params, fn, support=(lo, hi), xi=xi, fourier=F,
                          decay_constants=_decay_constants(xi, F), **kw)


def bump(a: float = 1.5, r: float = 1.5, Xi: float = DEFAULT_XI) -> MultiplierSpec:
    """Bump supported on ``[a - r, a + r]``."""
    if r <= 0:
        raise PreconditionError("bump radius must be positive")
    return _with_table("bump", (a, r), lambda x: bump_profile(x, a, r), a - r, a + r, Xi,
                       zero_below=max(0.0, a - r))


def smooth_cutoff(Xi: float = DEFAULT_XI) -> MultiplierSpec:
    """1 on ``[0, 1]``, 0 on ``[2, inf)``; extended evenly to negative ``x``."""
    def fn(x):
        return 1.0 - smooth_step(np.abs(x), 1.0, 2.0)
    return _with_table("smooth_cutoff", (), fn, -2.0, 2.0, Xi)


def tail_step(lo: float = 0.5, hi: float = 1.0) -> MultiplierSpec:
    """0 on ``[0, lo]``, 1 on ``[hi, inf)``: the normalized integral of a bump on ``[lo, hi]``."""
    if not 0 < lo < hi:
        raise PreconditionError("tail_step needs 0 < lo < hi")
    return MultiplierSpec("tail_step", (lo, hi), lambda x: smooth_step(x, lo, hi),
                          zero_below=lo, constant_from=hi)


def power_decay(beta: float = 1.0) -> MultiplierSpec:
    """``x^beta e^{-x}`` on ``[0, inf)``."""
    if beta < 0:
        raise PreconditionError("power_decay needs beta >= 0")

    def fn(x):
        xp = np.maximum(x, 0.0)
        return np.where(x >= 0, xp**beta * np.exp(-xp), 0.0)
    return MultiplierSpec("power_decay", (beta,), fn)


def zero_profile() -> MultiplierSpec:
    return _with_table("zero", (), lambda x: np.zeros(np.shape(x)), 0.0, 1.0, DEFAULT_XI,
                       zero_below=math.inf)


def make_multiplier(family: str, *params) -> MultiplierSpec:
    builders = {"bump": bump, "smooth_cutoff": smooth_cutoff, "tail_step": tail_step,
                "power_decay": power_decay, "zero": zero_profile}
    if family not in builders:
        raise PreconditionError(f"unknown multiplier family {family!r}")
    return builders[family](*params)


@dataclass(frozen=True)
class ComplexTime:
    z: complex

    def __post_init__(self):
        z = complex(self.z)
        if z != 0 and z.real <= 0:
            raise PreconditionError(f"complex time needs Re z > 0, got {z}")
        object.__setattr__(self, "z", z)


# ---------------------------------------------------------------------------
# routes to psi(hL)


def spectral_multiplier(E: EigenSystem, spec: MultiplierSpec, h: float) -> np.ndarray:
    if h <= 0:
        raise PreconditionError("h must be positive")
    return numerics.matrix_function(E, lambda s: spec.psi(h * s))


def heat_operator(E: EigenSystem, z) -> np.ndarray:
    """``exp(-z L)`` through the eigendecomposition."""
    z = ComplexTime(z).z if not isinstance(z, ComplexTime) else z.z
    return numerics.matrix_function(E, lambda s: np.exp(-z * s))


@dataclass(frozen=True, eq=False)
class FourierHeatResult:
    matrix: np.ndarray
    symbol: np.ndarray  # quadrature value of psi(h lambda_k^2)
    imag_residue: float
    tail_estimate: float
    Xi: float
    dxi: float


def fourier_heat_symbol(spec: MultiplierSpec, s: np.ndarray, Xi: float = DEFAULT_XI,
                        dxi: float = DEFAULT_DXI) -> tuple[np.ndarray, float]:
    """Trapezoid value of the Fourier-heat integral at spectral points ``s = h lambda^2``."""
    if not spec.has_table:
        raise PreconditionError(
            f"{spec.family} has no compactly supported psi_e; use the spectral route")
    if Xi > spec.table_cutoff * (1 + 1e-12):
        raise PreconditionError(f"Fourier table covers |xi| <= {spec.table_cutoff}, asked {Xi}")
    stride = dxi / spec.table_spacing
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise PreconditionError(
            f"dxi = {dxi} is not a multiple of the table spacing {spec.table_spacing}")
    stride = int(round(stride))
    J = int(round(Xi / spec.table_spacing))
    mid = spec.xi.size // 2
    sel = slice(mid - J, mid + J + 1, stride)
    xi, F = spec.xi[sel], spec.fourier[sel]
    if abs(xi[-1] - Xi) > 1e-9 * Xi:
        raise PreconditionError(f"dxi = {dxi} does not divide the cutoff {Xi}")
    wq = np.full(xi.size, dxi)
    wq[0] = wq[-1] = dxi / 2
    s = np.asarray(s, dtype=float)
    g = np.empty(s.size, dtype=complex)
    for start in range(0, s.size, 256):
        ss = s[start:start + 256]
        g[start:start + 256] = np.exp(-np.outer(ss, 2.0 - 1j * xi)) @ (wq * F)
    g /= math.sqrt(2 * math.pi)
    return g, float(max(abs(F[0]), abs(F[-1])))


def multiplier_via_fourier_heat(E: EigenSystem, spec: MultiplierSpec, h: float,
                                Xi: float = DEFAULT_XI, dxi: float = DEFAULT_DXI,
                                tol: float = QUAD_TOL) -> FourierHeatResult:
    """``psi(hL)`` from the Fourier-heat integral.

    Every ``exp(-(2 - i xi) h L)`` shares the eigenbasis of ``L``, so the xi
    quadrature is summed on the spectrum first and assembled once.
    """
    if h <= 0:
        raise PreconditionError("h must be positive")
    g, tail = fourier_heat_symbol(spec, h * np.maximum(E.lambdas_sq, 0.0), Xi, dxi)
    resid = float(np.max(np.abs(g.imag))) if g.size else 0.0
    # for real psi the symmetric sum is real, so the imaginary part alone
    # never sees truncation; |F(+-Xi)| bounds the integrand left at the cutoff
    if max(resid, tail) > tol:
        raise QuadratureAccuracyError(
            f"quadrature residue exceeds {tol:g}: imaginary part {resid:.3e}, "
            f"|F(Xi)| = {tail:.3e}; enlarge Xi or refine dxi", tail_estimate=tail, residue=resid)
    M = numerics._assemble(E, g.real)
    return FourierHeatResult(M, g.real, resid, tail, Xi, dxi)


def gradient_of_multiplier(m: ModelOperator, M: np.ndarray):
    """The two factors ``(grad M, sqrt(W) M)`` as grid operators."""
    return m.grad_operator(M), m.pot_operator(M)


def riesz_transform(E: EigenSystem, m: ModelOperator, which: str = "gradient",
                    restrict_to_range: bool = False) -> np.ndarray:
    """``grad L^{-1/2}`` or ``sqrt(W) L^{-1/2}`` as a grid operator."""
    if which not in ("gradient", "sqrtW"):
        raise PreconditionError(f"unknown Riesz transform {which!r}")
    M = numerics.matrix_function(E, lambda s: s ** -0.5, restrict_to_range=restrict_to_range)
    return m.grad_operator(M) if which == "gradient" else m.pot_operator(M)


# ---------------------------------------------------------------------------
# norm scans


def value_norm(m: ModelOperator, G: np.ndarray, p, q=None, **kw) -> NormBounds:
    """``||G||_{p->q}`` for a grid operator with values as output."""
    w = m.grid.weights
    return numerics.opnorm_p_to_q(G, w, p, p if q is None else q, w_out=w, **kw)


def grad_norm(m: ModelOperator, G: np.ndarray, p, **kw) -> NormBounds:
    return numerics.opnorm_p_to_q(G, m.grid.weights, p, p, w_out=m.edge_weights, **kw)


def pot_norm(m: ModelOperator, G: np.ndarray, p, **kw) -> NormBounds:
    if m.potential_free:
        return NormBounds(0.0, 0.0, "zero", "zero")
    return numerics.opnorm_p_to_q(G, m.grid.weights, p, p, w_out=m.grid.weights, **kw)


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Per-parameter NormBounds with the supremum over the sweep."""

    params: np.ndarray
    bounds: list
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b.lower for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b.upper for b in self.bounds])

    @property
    def sup(self) -> float:
        return float(np.max(self.upper))

    @property
    def sup_lower(self) -> float:
        return float(np.max(self.lower))

    @property
    def argmax(self) -> float:
        return float(self.params[int(np.argmax(self.upper))])


def gradient_norm_scan(m: ModelOperator, E: EigenSystem, symbol: Callable, params: Sequence[float],
                       p, scale: Callable, label: str = "", **norm_kw) -> ScanResult:
    """``scale(a) (||grad g_a(L)||_{p->p} + ||sqrt(W) g_a(L)||_{p->p})`` with ``g_a = symbol(a)``.

    For ``p = 2`` the extras hold the stacked form ``scale(a) ||(grad, sqrt W) g_a(L)||_{2->2}``
    (``"square"``) and its spectral value ``scale(a) max_k lambda_k |g_a(lambda_k^2)|``
    (``"closed_form"``); the form identity makes the two agree.
    """
    p = numerics.parse_exponent(p)
    params = np.asarray(params, dtype=float)
    lam = np.sqrt(np.maximum(E.lambdas_sq, 0.0))
    bounds, square, closed = [], [], []
    for a in params:
        g = symbol(a)
        G, S = gradient_of_multiplier(m, numerics.matrix_function(E, g))
        sc = scale(a)
        bounds.append((grad_norm(m, G, p, **norm_kw) + pot_norm(m, S, p, **norm_kw)).scaled(sc))
        if p == 2:
            A = np.vstack([G, S])
            w_out = np.concatenate([m.edge_weights, m.grid.weights])
            square.append(sc * numerics.two_norm(A, m.grid.weights, w_out))
            closed.append(sc * float(np.max(lam * np.abs(numerics.spectral_values(E, g)))))
    res = ScanResult(params, bounds, label, {"p": p})
    if p == 2:
        res.extra["square"] = np.array(square)
        res.extra["closed_form"] = np.array(closed)
    return res


def dyadic(lo_exp: int, hi_exp: int) -> np.ndarray:
    return 2.0 ** np.arange(lo_exp, hi_exp + 1)


def holomorphic_norm_scan(m: ModelOperator, E: EigenSystem, theta: float, q, ts: Sequence[float],
                          eps: float = HOLOMORPHIC_EPS) -> ScanResult:
    """``||exp(-zL)||_{q->q}`` along ``z = t e^{i theta}`` with the fitted constant.

    The constant is ``max_t norm / (1/cos theta)^{|1/2 - 1/q| + eps}`` in one dimension.
    """
    if not abs(theta) < math.pi / 2:
        raise PreconditionError("ray angle must satisfy |theta| < pi/2")
    q = numerics.parse_exponent(q)
    ts = np.asarray(ts, dtype=float)
    bounds = []
    for t in ts:
        G = m.value_operator(heat_operator(E, t * np.exp(1j * theta)))
        bounds.append(value_norm(m, G, q))
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    expo = abs(0.5 - inv_q) + eps
    factor = (1.0 / math.cos(theta)) ** expo
    res = ScanResult(ts, bounds, "holomorphic", {"theta": theta, "q": q, "exponent": expo})
    res.extra["C"] = res.sup / factor
    return res


def multiplier_uniformity(m: ModelOperator, E: EigenSystem, spec: MultiplierSpec, q,
                          hs: Sequence[float]) -> ScanResult:
    """``sup_h ||psi(hL)||_{q->q}`` over the sweep."""
    q = numerics.parse_exponent(q)
    hs = np.asarray(hs, dtype=float)
    bounds = [value_norm(m, m.value_operator(spectral_multiplier(E, spec, h)), q) for h in hs]
    return ScanResult(hs, bounds, "multiplier", {"q": q, "family": spec.family})
