"""Discretized 1D operators ``L = -d/dx(c d/dx) + W`` with an exact factorization.

Every model carries a gradient factor ``D`` and a potential factor ``S`` such that
the discrete quadratic form identity

    sum_e we |(D u)_e|^2 + sum_i w_i |(S u)_i|^2 = sum_i w_i u_i (L u)_i

holds to rounding.  Grid models (circle, Dirichlet interval, divergence form)
work directly with grid values; the harmonic oscillator works with Hermite
coefficients and evaluates on a grid only when an L^p norm is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics
from .errors import PreconditionError, TruncationLeakError
from .numerics import EigenSystem, SymTridiag

EXACT_EIG_TOL = 1e-8
TAIL_LEAK_TOL = 1e-8
NATIVE_TRIDIAG_MAX_N = 96
NATIVE_DENSE_MAX_N = 48


@dataclass(frozen=True)
class Grid1D:
    nodes: np.ndarray
    weights: np.ndarray
    boundary: str  # "periodic" | "dirichlet" | "whole_line"
    length: float
    left: float = 0.0
    # Dirichlet: trapezoid weight carried by each boundary node, where functions vanish
    boundary_weight: float = 0.0

    def __post_init__(self):
        if self.boundary not in ("periodic", "dirichlet", "whole_line"):
            raise PreconditionError(f"unknown boundary type {self.boundary!r}")
        if np.any(np.diff(self.nodes) <= 0):
            raise PreconditionError("grid nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise PreconditionError("quadrature weights must be positive")

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights) + 2.0 * self.boundary_weight)

    @property
    def right(self) -> float:
        return self.left + self.length


def uniform_whole_line_grid(x_max: float, n: int) -> Grid1D:
    x = np.linspace(-x_max, x_max, n)
    dx = x[1] - x[0]
    w = np.full(n, dx)
    w[0] = w[-1] = dx / 2
    return Grid1D(x, w, "whole_line", 2.0 * x_max, -x_max)


@dataclass(frozen=True)
class Geometry:
    kind: str  # "periodic" | "interval" | "whole_line"
    left: float = 0.0
    length: float = math.inf

    def distance(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.kind == "periodic":
            d = np.mod(d, self.length)
            d = np.minimum(d, self.length - d)
        return d

    def volume(self, x, r):
        x = np.asarray(x, dtype=float)
        r = np.asarray(r, dtype=float)
        if self.kind == "periodic":
            return np.minimum(2.0 * r, self.length) * np.ones_like(x)
        if self.kind == "interval":
            a, b = self.left, self.left + self.length
            return np.clip(np.minimum(x + r, b) - np.maximum(x - r, a), 0.0, None)
        return 2.0 * r * np.ones_like(x)

    def doubling_ratio(self, x, r):
        return self.volume(x, 2.0 * r) / self.volume(x, r)


@dataclass(frozen=True, eq=False)
class ModelOperator:
    """State-space operator with its gradient and potential factors.

    ``L``, ``D``, ``S`` act on state vectors (grid values, or Hermite
    coefficients for the oscillator).  The ``*_eval`` matrices map the outputs
    to grid samples, ``analysis`` maps grid samples to state vectors; ``None``
    stands for the identity.
    """

    name: str
    L: np.ndarray
    D: np.ndarray
    S: np.ndarray
    W: np.ndarray
    grid: Grid1D
    geometry: Geometry
    state_weights: np.ndarray
    grad_weights: np.ndarray  # weights of the D-output space
    edge_points: np.ndarray
    edge_weights: np.ndarray  # grid weights of the gradient samples
    value_eval: np.ndarray | None = None
    grad_eval: np.ndarray | None = None
    pot_eval: np.ndarray | None = None
    analysis: np.ndarray | None = None
    tridiag: SymTridiag | None = None
    exact_eigs: tuple | None = None
    potential_free: bool = False
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.L.shape[0]

    @property
    def pot_weights(self) -> np.ndarray:
        # S output lives on the nodes for grid models and on the coefficient
        # space (unit weights) for the oscillator
        return self.state_weights if self.pot_eval is None else np.ones(self.S.shape[0])

    # grid-level views -----------------------------------------------------

    def _to_grid(self, M, ev):
        out = M if ev is None else ev @ M
        return out if self.analysis is None else out @ self.analysis

    def value_operator(self, M: np.ndarray) -> np.ndarray:
        """Grid matrix of the state operator ``M`` (grid samples in and out)."""
        return self._to_grid(M, self.value_eval)

    def grad_operator(self, M: np.ndarray) -> np.ndarray:
        """Grid matrix of ``D M``: grid samples in, gradient samples out."""
        return self._to_grid(self.D @ M, self.grad_eval)

    def pot_operator(self, M: np.ndarray) -> np.ndarray:
        """Grid matrix of ``sqrt(W) M``."""
        return self._to_grid(self.S @ M, self.pot_eval)

    def grid_values(self, u: np.ndarray) -> np.ndarray:
        return u if self.value_eval is None else self.value_eval @ u

    def grad_values(self, u: np.ndarray) -> np.ndarray:
        g = self.D @ u
        return g if self.grad_eval is None else self.grad_eval @ g

    def pot_values(self, u: np.ndarray) -> np.ndarray:
        s = self.S @ u
        return s if self.pot_eval is None else self.pot_eval @ s

    def band(self, N: int) -> tuple[int, int]:
        """Eigen-index range of the degree-``N`` band (frequencies ``|k| <= N`` on the circle)."""
        top = 2 * N if self.geometry.kind == "periodic" else N
        if N < 0 or top >= self.size:
            raise PreconditionError(f"band top {top} outside the {self.size}-mode model")
        return 0, top

    def tail_band(self, N: int, K: int) -> tuple[int, int]:
        """Eigen-index range of degrees ``N..K`` (``N <= |k| <= K`` on the circle)."""
        if self.geometry.kind == "periodic":
            lo, hi = max(0, 2 * N - 1), 2 * K
        else:
            lo, hi = N, K
        if not 0 <= lo <= hi < self.size:
            raise PreconditionError(f"tail band [{lo}, {hi}] outside the {self.size}-mode model")
        return lo, hi

    def form_defect(self) -> float:
        """Entrywise defect of ``L = D^T We D + S^T Ws S`` in the state inner product."""
        sw = self.state_weights
        rhs = (self.D.T * self.grad_weights) @ self.D + (self.S.T * self.pot_weights) @ self.S
        lhs = sw[:, None] * self.L
        return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# builders


def _forward_difference_periodic(n, h):
    D = np.zeros((n, n))
    idx = np.arange(n)
    D[idx, idx] = -1.0 / h
    D[idx, (idx + 1) % n] += 1.0 / h
    return D


def _forward_difference_dirichlet(n, h):
    D = np.zeros((n + 1, n))
    e = np.arange(n)
    D[e, e] = 1.0 / h
    D[e + 1, e] = -1.0 / h
    return D


def circle_model(n: int, circumference: float = 2 * math.pi) -> ModelOperator:
    if n < 8:
        raise PreconditionError(f"circle model needs n >= 8, got {n}")
    h = circumference / n
    x = h * np.arange(n)
    w = np.full(n, h)
    grid = Grid1D(x, w, "periodic", circumference, 0.0)
    D = _forward_difference_periodic(n, h)
    L = D.T @ D
    k = np.arange(n // 2 + 1)
    vals, vecs = [], []
    for kk in k:
        lam = (4.0 / h**2) * math.sin(math.pi * kk / n) ** 2
        if kk == 0:
            vecs.append(np.full(n, 1.0 / math.sqrt(circumference)))
            vals.append(lam)
            continue
        if 2 * kk == n:
            vecs.append(np.cos(kk * 2 * math.pi * x / circumference) / math.sqrt(circumference))
            vals.append(lam)
            continue
        scale = math.sqrt(2.0 / circumference)
        vecs.append(scale * np.cos(kk * 2 * math.pi * x / circumference))
        vecs.append(scale * np.sin(kk * 2 * math.pi * x / circumference))
        vals += [lam, lam]
    exact = (np.array(vals), np.column_stack(vecs))
    return ModelOperator(
        name="circle", L=L, D=D, S=np.zeros((n, n)), W=np.zeros(n), grid=grid,
        geometry=Geometry("periodic", 0.0, circumference), state_weights=w,
        grad_weights=np.full(n, h), edge_points=x + h / 2, edge_weights=np.full(n, h),
        exact_eigs=exact, potential_free=True,
        params={"n": n, "circumference": circumference})


def _sample_potential(W, x):
    if W is None:
        return np.zeros_like(x)
    if callable(W):
        vals = np.asarray(W(x), dtype=float) * np.ones_like(x)
    else:
        vals = np.full_like(x, float(W))
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = int(bad[0])
        raise PreconditionError(f"potential is not finite at node {i} (x = {x[i]:.6g})")
    neg = np.flatnonzero(vals < 0)
    if neg.size:
        i = int(neg[0])
        raise PreconditionError(
            f"potential must be nonnegative: W({x[i]:.6g}) = {vals[i]:.6g} at node {i}")
    return vals


def _interval_grid(n, length, left):
    h = length / (n + 1)
    x = left + h * np.arange(1, n + 1)
    return Grid1D(x, np.full(n, h), "dirichlet", length, left, boundary_weight=h / 2), h


def dirichlet_interval_model(n: int, length: float, W=None, left: float = 0.0) -> ModelOperator:
    """``-u'' + W u`` on ``[left, left + length]`` with ``u = 0`` at both ends.

    ``W`` may be ``None``, a constant, or a vectorized callable of ``x``.
    """
    if n < 2:
        raise PreconditionError("Dirichlet model needs at least 2 interior nodes")
    grid, h = _interval_grid(n, length, left)
    Wv = _sample_potential(W, grid.nodes)
    D = _forward_difference_dirichlet(n, h)
    S = np.diag(np.sqrt(Wv))
    L = D.T @ D + np.diag(Wv)
    tri = SymTridiag(np.diag(L).copy(), np.diag(L, 1).copy())
    exact = None
    if np.all(Wv == Wv[0]):
        k = np.arange(1, n + 1)
        vals = (4.0 / h**2) * np.sin(k * math.pi / (2 * (n + 1))) ** 2 + Wv[0]
        vecs = math.sqrt(2.0 / length) * np.sin(np.outer(grid.nodes - left, k) * math.pi / length)
        exact = (vals, vecs)
    return ModelOperator(
        name="dirichlet", L=L, D=D, S=S, W=Wv, grid=grid,
        geometry=Geometry("interval", left, length), state_weights=grid.weights,
        grad_weights=np.full(n + 1, h), edge_points=left + h * (np.arange(n + 1) + 0.5),
        edge_weights=np.full(n + 1, h), tridiag=tri, exact_eigs=exact,
        potential_free=bool(np.all(Wv == 0)),
        params={"n": n, "length": length, "left": left})


def divergence_form_model(n: int, length: float, c: Callable | float,
                          eta: float | None = None, Lambda: float | None = None,
                          left: float = 0.0) -> ModelOperator:
    """``-(c u')'`` with Dirichlet ends; ``c`` is sampled at edge midpoints."""
    grid, h = _interval_grid(n, length, left)
    mids = left + h * (np.arange(n + 1) + 0.5)
    cv = np.asarray(c(mids), dtype=float) * np.ones(n + 1) if callable(c) else np.full(n + 1, float(c))
    lo = 0.0 if eta is None else eta
    for e, val in enumerate(cv):
        if not np.isfinite(val) or val <= lo or (eta is not None and val < eta) \
                or (Lambda is not None and val > Lambda):
            raise PreconditionError(
                f"ellipticity violated on edge {e} (x = {mids[e]:.6g}): c = {val:.6g}, "
                f"required {eta if eta is not None else 0} < c <= "
                f"{Lambda if Lambda is not None else 'inf'}")
    D = np.sqrt(cv)[:, None] * _forward_difference_dirichlet(n, h)
    L = D.T @ D
    tri = SymTridiag(np.diag(L).copy(), np.diag(L, 1).copy())
    exact = None
    if np.all(cv == cv[0]):
        k = np.arange(1, n + 1)
        vals = cv[0] * (4.0 / h**2) * np.sin(k * math.pi / (2 * (n + 1))) ** 2
        vecs = math.sqrt(2.0 / length) * np.sin(np.outer(grid.nodes - left, k) * math.pi / length)
        exact = (vals, vecs)
    return ModelOperator(
        name="divergence", L=L, D=D, S=np.zeros((n, n)), W=np.zeros(n), grid=grid,
        geometry=Geometry("interval", left, length), state_weights=grid.weights,
        grad_weights=np.full(n + 1, h), edge_points=mids, edge_weights=np.full(n + 1, h),
        tridiag=tri, exact_eigs=exact, potential_free=True,
        params={"n": n, "length": length, "left": left, "coefficient": cv})


def piecewise_coefficient(values, length: float, left: float = 0.0) -> Callable:
    """Coefficient constant on ``len(values)`` equal cells of the interval."""
    values = np.asarray(values, dtype=float)

    def c(x):
        idx = np.floor((np.asarray(x) - left) / length * values.size).astype(int)
        return values[np.clip(idx, 0, values.size - 1)]

    return c


def random_piecewise_coefficient(cells: int, lo: float, hi: float, length: float,
                                 seed: int = 0, left: float = 0.0) -> Callable:
    rng = np.random.default_rng(seed)
    return piecewise_coefficient(rng.uniform(lo, hi, cells), length, left)


# ---------------------------------------------------------------------------
# harmonic oscillator in Hermite coefficients


def hermite_functions(x, kmax: int) -> np.ndarray:
    """Normalized Hermite functions ``h_0..h_kmax`` at ``x``, shape ``(len(x), kmax+1)``.

    Three-term recurrence on rescaled values; the Gaussian factor is applied
    at the end through a per-point log scale so nothing underflows early.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.size, kmax + 1))
    logscale = -0.5 * x * x
    prev = np.zeros_like(x)
    cur = np.full_like(x, math.pi ** -0.25)
    out[:, 0] = cur * np.exp(logscale)
    for k in range(kmax):
        nxt = math.sqrt(2.0 / (k + 1)) * x * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > 1e150
        if np.any(big):
            f = np.where(big, 1e-150, 1.0)
            cur = cur * f
            prev = prev * f
            logscale = logscale + np.where(big, math.log(1e150), 0.0)
        out[:, k + 1] = cur * np.exp(logscale)
    return out


def ladder_matrices(K: int):
    """Rectangular ``(K+2) x (K+1)`` matrices of ``d/dx`` and ``x`` on ``h_0..h_K``."""
    A = np.zeros((K + 2, K + 1))
    X = np.zeros((K + 2, K + 1))
    for k in range(K + 1):
        if k >= 1:
            A[k - 1, k] = math.sqrt(k / 2.0)
            X[k - 1, k] = math.sqrt(k / 2.0)
        A[k + 1, k] = -math.sqrt((k + 1) / 2.0)
        X[k + 1, k] = math.sqrt((k + 1) / 2.0)
    return A, X


def hermite_tail_mass(k: int, x_max: float, extent: float = 40.0, npts: int = 40001) -> float:
    """``int_{|x| > x_max} h_k(x)^2 dx`` by trapezoid quadrature."""
    x = np.linspace(x_max, x_max + extent, npts)
    hk = hermite_functions(x, k)[:, k]
    return float(2.0 * np.trapezoid(hk * hk, x))


def harmonic_oscillator_model(K: int, grid: Grid1D | None = None) -> ModelOperator:
    """``-u'' + x^2 u`` on the Hermite modes ``h_0..h_K``; ``grid`` is for evaluation only."""
    if K < 4:
        raise PreconditionError(f"Hermite truncation needs K >= 4, got {K}")
    need = math.sqrt(2 * K + 1) + 4.0
    if grid is None:
        x_max = math.sqrt(2 * K + 1) + 6.0
        dx = 0.5 * math.pi / math.sqrt(4 * K + 6)
        grid = uniform_whole_line_grid(x_max, 2 * int(math.ceil(x_max / dx)) + 1)
    x_lo, x_hi = -grid.nodes[0], grid.nodes[-1]
    cover = min(x_lo, x_hi)
    if cover < need:
        raise TruncationLeakError(
            f"grid covers |x| <= {cover:.4g} but K = {K} needs {need:.4g}", tail_mass=None)
    tail = hermite_tail_mass(K, cover)
    if tail > TAIL_LEAK_TOL:
        raise TruncationLeakError(
            f"tail mass of h_{K} beyond the grid is {tail:.3e} > {TAIL_LEAK_TOL:g}", tail_mass=tail)
    Hx = hermite_functions(grid.nodes, K + 1)
    H, H_ext = Hx[:, : K + 1], Hx
    A, X = ladder_matrices(K)
    k = np.arange(K + 1)
    L = np.diag(2.0 * k + 1.0)
    ones = np.ones(K + 1)
    return ModelOperator(
        name="oscillator", L=L, D=A, S=X, W=grid.nodes**2, grid=grid,
        geometry=Geometry("whole_line"), state_weights=ones, grad_weights=np.ones(K + 2),
        edge_points=grid.nodes, edge_weights=grid.weights,
        value_eval=H, grad_eval=H_ext, pot_eval=H_ext, analysis=H.T * grid.weights,
        exact_eigs=(2.0 * k + 1.0, np.eye(K + 1)), potential_free=False,
        params={"K": K, "x_max": cover, "n_grid": grid.n})


# ---------------------------------------------------------------------------
# eigensystems


def eigensystem(m: ModelOperator, backend: str = "auto") -> EigenSystem:
    """Ascending eigenpairs, orthonormal in the model's state inner product.

    ``backend`` is ``"native"`` (implicit QL / cyclic Jacobi), ``"lapack"``, or
    ``"auto"`` (native for small models).
    """
    if m.name == "oscillator":
        vals, vecs = m.exact_eigs
        return EigenSystem(vals.copy(), vecs.copy(), m.state_weights.copy())
    w = m.state_weights
    sq = np.sqrt(w)
    n = m.size
    if backend == "auto":
        lim = NATIVE_TRIDIAG_MAX_N if m.tridiag is not None else NATIVE_DENSE_MAX_N
        backend = "native" if n <= lim else "lapack"
    uniform = np.all(w == w[0])
    if backend == "native" and m.tridiag is not None and uniform:
        vals, V = numerics.eig_sym_tridiag(m.tridiag)
    else:
        B = sq[:, None] * m.L / sq[None, :]
        B = 0.5 * (B + B.T)
        if backend == "native":
            vals, V = numerics.eig_sym_dense(B)
        elif backend == "lapack":
            vals, V = numerics.eig_sym_lapack(B)
        else:
            raise PreconditionError(f"unknown eigensolver backend {backend!r}")
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < -1e-10 * scale:
        raise PreconditionError(f"operator is not nonnegative: lambda_0^2 = {vals[0]:.3e}")
    vals = np.where(np.abs(vals) <= 1e-12 * scale, 0.0, vals)
    vals = np.maximum(vals, 0.0)
    Phi = V / sq[:, None]
    if m.exact_eigs is not None:
        ex = np.sort(m.exact_eigs[0])
        err = np.abs(vals - ex) / np.maximum(1.0, np.abs(ex))
        if np.max(err) > EXACT_EIG_TOL:
            k = int(np.argmax(err))
            raise PreconditionError(
                f"eigenvalue {k} disagrees with the closed form: {vals[k]!r} vs {ex[k]!r}")
    return EigenSystem(vals, Phi, w.copy())
