"""Heat kernels and audits of pointwise kernel estimates.

Tables come from the eigen-expansion ``p_t(x, y) = sum_k exp(-t lambda_k^2) phi_k(x) phi_k(y)``
or, for the harmonic oscillator, from Mehler's closed form.  Fits that multiply
tiny kernel values by ``exp(+c d^2/t)`` drop entries below a relative floor,
since there the value is rounding noise and the growing factor would amplify it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .calculus import ScanResult, gradient_norm_scan
from .errors import PreconditionError, UnsupportedModelError
from .models import Geometry, Grid1D, ModelOperator, hermite_functions
from .numerics import EigenSystem

KERNEL_FLOOR = 1e-12
GRAD_FLOOR = 1e-11
LIYAU_RMAX = 16.0
DEFAULT_C = 1.0 / 8.0


@dataclass(frozen=True, eq=False)
class KernelTable:
    t: float
    values: np.ndarray
    grid: Grid1D
    potential_free: bool = False

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``int p_t(x, y) f(y) dmu(y)`` on the grid."""
        return self.values @ (self.grid.weights * f)

    def row_sums(self) -> np.ndarray:
        return self.values @ self.grid.weights

    def compose(self, other: "KernelTable") -> "KernelTable":
        return KernelTable(self.t + other.t, (self.values * self.grid.weights) @ other.values,
                           self.grid, self.potential_free)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))


def heat_kernel_table(E: EigenSystem, m: ModelOperator, t: float) -> KernelTable:
    if t <= 0:
        raise PreconditionError("heat kernel table needs t > 0")
    decay = np.exp(-t * E.lambdas_sq)
    Phi = E.vectors if m.value_eval is None else m.value_eval @ E.vectors
    P = (Phi * decay) @ Phi.T
    return KernelTable(float(t), 0.5 * (P + P.T), m.grid, m.potential_free)


def mehler_kernel(t: float, x, y, dim: int = 1):
    """Heat kernel of ``-Delta + |x|^2``; for ``dim > 1`` the last axis holds coordinates."""
    if t <= 0:
        raise PreconditionError("Mehler kernel needs t > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    th = math.tanh(t)
    s = (x + y) ** 2
    d = (x - y) ** 2
    if dim > 1:
        if x.shape[-1] != dim or y.shape[-1] != dim:
            raise PreconditionError(f"points must have {dim} coordinates on the last axis")
        s = s.sum(axis=-1)
        d = d.sum(axis=-1)
    return (2 * math.pi * math.sinh(2 * t)) ** (-dim / 2) * np.exp(-th * s / 4 - d / (4 * th))


def mehler_table(grid: Grid1D, t: float) -> KernelTable:
    x = grid.nodes
    return KernelTable(float(t), mehler_kernel(t, x[:, None], x[None, :]), grid, False)


def hermite_eigen_sum(t: float, x, y, K: int = 200, dps: int | None = None) -> np.ndarray:
    """``sum_{k<=K} exp(-(2k+1)t) h_k(x) h_k(y)`` on the product ``x x y``.

    In double precision the sum loses all relative accuracy once the kernel
    drops below ~1e-16 of its O(1) terms; ``dps`` switches to mpmath with
    that many digits.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if dps is None:
        c = np.exp(-(2 * np.arange(K + 1) + 1) * t)
        return (hermite_functions(x, K) * c) @ hermite_functions(y, K).T
    import mpmath

    with mpmath.workdps(dps):
        r2 = [mpmath.sqrt(mpmath.mpf(2) / (k + 1)) for k in range(K)]
        rk = [mpmath.sqrt(mpmath.mpf(k) / (k + 1)) for k in range(K)]
        c0 = mpmath.pi ** mpmath.mpf(-0.25)

        def funcs(v):
            v = mpmath.mpf(float(v))
            h = [c0 * mpmath.exp(-v * v / 2)]
            prev = mpmath.mpf(0)
            for k in range(K):
                h.append(r2[k] * v * h[-1] - rk[k] * prev)
                prev = h[-2]
            return h

        tt = mpmath.mpf(float(t))
        c = [mpmath.exp(-(2 * k + 1) * tt) for k in range(K + 1)]
        Hx = [[ck * hk for ck, hk in zip(c, funcs(v))] for v in x]
        Hy = [funcs(v) for v in y]
        out = np.array([[float(mpmath.fdot(a, b)) for b in Hy] for a in Hx])
    return out


# ---------------------------------------------------------------------------
# Gaussian upper and lower fits


@dataclass(frozen=True)
class GaussianFit:
    c: float
    C: float
    worst_pair: tuple  # (x, y, t)


def _pairs(table: KernelTable, geometry: Geometry):
    x = table.nodes
    d = geometry.distance(x[:, None], x[None, :])
    V = geometry.volume(x, math.sqrt(table.t))
    return x, d, V


def gaussian_bound_fit(table: KernelTable, geometry: Geometry, c: float = DEFAULT_C,
                       floor: float = KERNEL_FLOOR) -> GaussianFit:
    """Smallest ``C`` with ``p_t(x, y) <= C/V(x, sqrt t) exp(-c d^2/t)`` on the sampled pairs."""
    if c <= 0:
        raise PreconditionError("decay rate c must be positive")
    x, d, V = _pairs(table, geometry)
    P = table.values
    mask = P >= floor * np.max(P)
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.where(mask, P * V[:, None] * np.exp(c * d * d / table.t), -np.inf)
    i, j = np.unravel_index(int(np.argmax(R)), R.shape)
    return GaussianFit(float(c), float(max(R[i, j], 0.0)), (float(x[i]), float(x[j]), table.t))


@dataclass(frozen=True)
class GaussianSweep:
    ts: np.ndarray
    fits: list

    @property
    def constants(self) -> np.ndarray:
        return np.array([f.C for f in self.fits])

    @property
    def spread(self) -> float:
        """``max C / min C`` across the sweep; 1 means perfectly uniform."""
        C = self.constants
        return float(np.max(C) / np.min(C)) if np.min(C) > 0 else math.inf


def gaussian_fit_sweep(tables: Sequence[KernelTable], geometry: Geometry,
                       c: float = DEFAULT_C) -> GaussianSweep:
    fits = [gaussian_bound_fit(tb, geometry, c) for tb in tables]
    return GaussianSweep(np.array([tb.t for tb in tables]), fits)


@dataclass(frozen=True, eq=False)
class LiYauReport:
    t: float
    c_low: float
    worst_pair: tuple
    failures: np.ndarray  # (k, 2) node-coordinate pairs where the bound fails

    @property
    def holds(self) -> bool:
        return self.c_low > 0 and self.failures.size == 0


def liyau_lower_fit(table: KernelTable, geometry: Geometry, C_trial: float = 1.0,
                    rmax: float = LIYAU_RMAX, tol: float = 1e-14) -> LiYauReport:
    """Largest ``c`` with ``c/V(y, sqrt t) exp(-C_trial d^2/t) <= p_t(x, y)`` on sampled pairs.

    Pairs are those with ``d^2/t <= rmax``.  On Dirichlet grids the two
    boundary points, where the kernel vanishes, are sampled as well.
    """
    if not table.potential_free:
        raise UnsupportedModelError("the two-sided Li-Yau estimate is audited only for W = 0")
    g = table.grid
    x = g.nodes
    P = table.values
    if g.boundary == "dirichlet":
        x = np.concatenate([[g.left], x, [g.right]])
        P = np.pad(P, 1)
    d = geometry.distance(x[:, None], x[None, :])
    V = geometry.volume(x, math.sqrt(table.t))
    r = d * d / table.t
    mask = r <= rmax
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.where(mask, P * V[None, :] * np.exp(C_trial * r), np.inf)
    i, j = np.unravel_index(int(np.argmin(R)), R.shape)
    c_low = float(max(R[i, j], 0.0))
    fail = np.argwhere(mask & (R <= tol * np.max(np.where(mask, R, 0.0))))
    failures = np.column_stack([x[fail[:, 0]], x[fail[:, 1]]]) if fail.size else np.empty((0, 2))
    return LiYauReport(table.t, c_low, (float(x[i]), float(x[j]), table.t), failures)


# ---------------------------------------------------------------------------
# on-diagonal decay


@dataclass(frozen=True)
class OnDiagonalFit:
    C: float
    m: float
    ts: np.ndarray
    diag_max: np.ndarray


def on_diagonal_fit(diag: Callable[[float], np.ndarray], ts: Sequence[float]) -> OnDiagonalFit:
    """Fit ``max_x p_t(x, x) <= C t^{-m/2}``; ``diag(t)`` returns the sampled diagonal."""
    ts = np.asarray(ts, dtype=float)
    if ts.size < 4:
        raise PreconditionError("on-diagonal regression needs at least 4 time points")
    if np.any(ts <= 0) or np.any(ts > 1):
        raise PreconditionError("on-diagonal sweep must lie in (0, 1]")
    dm = np.array([float(np.max(diag(t))) for t in ts])
    slope = np.polyfit(np.log(ts), np.log(dm), 1)[0]
    m = -2.0 * slope
    C = float(np.max(dm * ts ** (m / 2)))
    return OnDiagonalFit(C, float(m), ts, dm)


def eigen_diagonal(E: EigenSystem, m: ModelOperator) -> Callable[[float], np.ndarray]:
    Phi = E.vectors if m.value_eval is None else m.value_eval @ E.vectors
    sq = Phi * Phi
    return lambda t: sq @ np.exp(-t * E.lambdas_sq)


def mehler_diagonal(grid: Grid1D) -> Callable[[float], np.ndarray]:
    return lambda t: mehler_kernel(t, grid.nodes, grid.nodes)


# ---------------------------------------------------------------------------
# weighted gradient integral and Gaussian mass


@dataclass(frozen=True)
class GrigoryanValue:
    t: float
    c0: float
    y: float
    value: float
    ratio: float  # value * t * V(y, sqrt t)


def grigoryan_integral(m: ModelOperator, E: EigenSystem, t: float, c0: float, y: int,
                       floor: float = GRAD_FLOOR) -> GrigoryanValue:
    """``sum_e we |grad_x p_t(x_e, y)|^2 exp(c0 d(x_e, y)^2/t)`` for the node ``y``."""
    if c0 <= 0 or t <= 0:
        raise PreconditionError("need c0 > 0 and t > 0")
    Phi_y = (E.vectors if m.value_eval is None else m.value_eval @ E.vectors)[y]
    coeff = E.vectors @ (np.exp(-t * E.lambdas_sq) * Phi_y)
    g = m.grad_values(coeff)
    yy = m.grid.nodes[y]
    d = m.geometry.distance(m.edge_points, yy)
    keep = np.abs(g) >= floor * np.max(np.abs(g))
    # log space: for large c0 the weight exp(c0 d^2/t) overflows long before the sum does
    logs = np.log(m.edge_weights[keep] * g[keep] ** 2) + c0 * d[keep] ** 2 / t
    with np.errstate(over="ignore"):
        val = float(np.exp(logsumexp(logs)))
    V = float(m.geometry.volume(yy, math.sqrt(t)))
    return GrigoryanValue(float(t), float(c0), float(yy), val, val * t * V)


def grigoryan_sweep(m: ModelOperator, E: EigenSystem, ts: Sequence[float], c0: float,
                    ys: Sequence[int] | None = None) -> np.ndarray:
    """Ratio ``max_y value * t V(y, sqrt t)`` per ``t``."""
    if ys is None:
        ys = [m.grid.n // 2]
    return np.array([max(grigoryan_integral(m, E, t, c0, y).ratio for y in ys) for t in ts])


@dataclass(frozen=True, eq=False)
class GrigoryanThreshold:
    c0s: np.ndarray
    spreads: np.ndarray  # max/min ratio over the t sweep, per c0
    threshold: float  # largest c0 with spread <= limit (nan if none)


def grigoryan_threshold(m: ModelOperator, E: EigenSystem, ts: Sequence[float],
                        c0s: Sequence[float], ys: Sequence[int] | None = None,
                        limit: float = 2.0) -> GrigoryanThreshold:
    """Empirical admissible ``c0`` window: spread of the sweep ratio for each ``c0``."""
    c0s = np.sort(np.asarray(c0s, dtype=float))
    spreads = []
    for c0 in c0s:
        r = grigoryan_sweep(m, E, ts, c0, ys)
        spreads.append(float(r.max() / r.min()) if r.min() > 0 else math.inf)
    spreads = np.array(spreads)
    ok = np.flatnonzero(spreads <= limit)
    return GrigoryanThreshold(c0s, spreads, float(c0s[ok[-1]]) if ok.size else math.nan)


def gaussian_mass_check(geometry: Geometry, grid: Grid1D, h: float, c: float) -> float:
    """``max_y sum_i w_i exp(-c d(x_i, y)^2/h) / V(y, sqrt h)``."""
    if c <= 0 or h <= 0:
        raise PreconditionError("need c > 0 and h > 0")
    x = grid.nodes
    d = geometry.distance(x[:, None], x[None, :])
    mass = np.exp(-c * d * d / h) @ grid.weights
    return float(np.max(mass / geometry.volume(x, math.sqrt(h))))


# ---------------------------------------------------------------------------
# regularity


def regularity_scan(m: ModelOperator, E: EigenSystem, p, ts: Sequence[float],
                    **norm_kw) -> ScanResult:
    """``sqrt(t) (||grad e^{-tL}||_{p->p} + ||sqrt(W) e^{-tL}||_{p->p})`` per ``t``.

    At ``p = 2`` the extras carry the stacked form, equal by the form identity
    to ``sqrt(t) max_k lambda_k exp(-t lambda_k^2)``.
    """
    return gradient_norm_scan(m, E, lambda t: (lambda s: np.exp(-t * s)), ts, p,
                              math.sqrt, "regularity", **norm_kw)
