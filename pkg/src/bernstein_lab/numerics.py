"""Symmetric eigensolvers, spectral matrix functions and weighted L^p -> L^q norms.

All norms are discrete quadrature norms: ``||f||_p = (sum_i w_i |f_i|^p)^(1/p)``
and ``||f||_inf = max_i |f_i|``.  Operator norms are taken between two such
spaces, so a matrix ``A`` acting on grid values is measured with the input
weights ``w_in`` and the output weights ``w_out``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .errors import NonConvergenceError, PreconditionError, SingularSpectrumError

# Iteration caps and tolerances.  Every routine accepts keyword overrides.
QL_MAX_ITER = 30  # per eigenvalue
JACOBI_MAX_SWEEPS = 60
JACOBI_TOL = 1e-15
SYMMETRY_TOL = 1e-10
POWER_MAX_ITER = 5000
POWER_TOL = 1e-13
KERNEL_TOL = 1e-10  # relative size below which lambda^2 counts as zero
OPNORM_RANDOM_VECTORS = 64
OPNORM_REFINE_ITERS = 200
OPNORM_SEED = 20240917
GRAM_MIN_SIZE = 256


@dataclass(frozen=True)
class SymTridiag:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        e = np.asarray(self.offdiag, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise PreconditionError("tridiagonal matrix needs n >= 1 diagonal entries")
        if e.shape != (d.size - 1,):
            raise PreconditionError(
                f"offdiag must have length {d.size - 1}, got {e.shape}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise PreconditionError("tridiagonal entries must be finite")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self) -> int:
        return self.diag.size

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)


@dataclass(frozen=True)
class EigenSystem:
    """Ascending ``lambdas_sq`` with columns of ``vectors`` orthonormal for ``weights``."""

    lambdas_sq: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray

    @property
    def lambdas(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.lambdas_sq, 0.0))

    @property
    def size(self) -> int:
        return self.lambdas_sq.size

    def kernel_mask(self, tol: float = KERNEL_TOL) -> np.ndarray:
        scale = max(1.0, float(np.max(np.abs(self.lambdas_sq))))
        return self.lambdas_sq <= tol * scale

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``(u, phi_k)`` in the weighted inner product."""
        return self.vectors.T @ (self.weights * u)

    def orthonormality_defect(self) -> float:
        G = self.vectors.T @ (self.weights[:, None] * self.vectors)
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))


@dataclass(frozen=True)
class NormBounds:
    lower: float
    upper: float
    method_lower: str
    method_upper: str

    def __post_init__(self):
        if self.lower < 0 or self.upper < 0:
            raise ValueError("norm bounds must be nonnegative")
        if self.lower > self.upper * (1 + 1e-12) + 1e-300:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def exact(self) -> bool:
        return self.method_lower == self.method_upper

    @property
    def value(self) -> float:
        """Best single estimate: the exact value when known, else the lower bound."""
        return self.upper if self.exact else self.lower

    def scaled(self, factor: float) -> "NormBounds":
        return NormBounds(self.lower * factor, self.upper * factor,
                          self.method_lower, self.method_upper)

    def __add__(self, other: "NormBounds") -> "NormBounds":
        ml = self.method_lower if self.method_lower == other.method_lower else "mixed"
        mu = self.method_upper if self.method_upper == other.method_upper else "mixed"
        return NormBounds(self.lower + other.lower, self.upper + other.upper, ml, mu)


# ---------------------------------------------------------------------------
# eigensolvers


def _normalize_signs(V: np.ndarray) -> np.ndarray:
    # deterministic orientation: largest-magnitude entry of each column positive
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def eig_sym_tridiag(T: SymTridiag, max_iter: int = QL_MAX_ITER):
    """Implicit-shift QL iteration with Wilkinson-type shifts.

    Returns ``(eigenvalues ascending, eigenvectors as columns)``.
    """
    n = T.n
    d = T.diag.copy()
    e = np.zeros(n)
    e[: n - 1] = T.offdiag
    Z = np.eye(n)
    # iterate on T / ||T|| so tiny or subnormal matrices behave like unit-scale ones
    anorm = float(np.max(np.abs(d), initial=0.0)) + 2.0 * float(np.max(np.abs(e), initial=0.0))
    if anorm == 0.0:
        return d, Z
    d /= anorm
    e /= anorm
    eps = np.finfo(float).eps
    # absolute floor so couplings between zero diagonals still deflate
    floor = eps * eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd or abs(e[m]) <= floor:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise NonConvergenceError(
                    f"QL iteration did not converge for eigenvalue index {l} "
                    f"after {max_iter} iterations", index=l)
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = Z[:, i + 1].copy()
                Z[:, i + 1] = s * Z[:, i] + c * zi1
                Z[:, i] = c * Z[:, i] - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    return d[order] * anorm, _normalize_signs(Z[:, order])


def eig_sym_dense(A: np.ndarray, max_sweeps: int = JACOBI_MAX_SWEEPS,
                  tol: float = JACOBI_TOL, symmetry_tol: float = SYMMETRY_TOL):
    """Cyclic Jacobi rotations for a dense symmetric matrix."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    defect = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if defect > symmetry_tol * max(scale, np.finfo(float).tiny):
        raise PreconditionError(
            f"matrix is not symmetric: max |A - A^T| = {defect:.3e} "
            f"(allowed {symmetry_tol:.0e} * {scale:.3e})")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    fro = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0 or abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NonConvergenceError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps", index=-1)
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], _normalize_signs(V[:, order])


def eig_sym_lapack(A: np.ndarray):
    """LAPACK ``syevd`` path used for desk-scale dense models (n in the thousands)."""
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return w, _normalize_signs(V)


# ---------------------------------------------------------------------------
# functional calculus


def spectral_values(E: EigenSystem, g: Callable, restrict_to_range: bool = False,
                    kernel_tol: float = KERNEL_TOL) -> np.ndarray:
    lam = np.maximum(E.lambdas_sq, 0.0)
    vals = np.zeros(lam.shape, dtype=complex)
    mask = E.kernel_mask(kernel_tol) if restrict_to_range else np.zeros(lam.shape, bool)
    keep = ~mask
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals[keep] = np.asarray(g(lam[keep]), dtype=complex) * np.ones(int(keep.sum()))
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        k = int(bad[0])
        raise SingularSpectrumError(
            f"function is not finite at lambda_{k}^2 = {lam[k]:.3e}; "
            "request range restriction to drop the kernel", index=k)
    if np.all(vals.imag == 0):
        return vals.real
    return vals


def matrix_function(E: EigenSystem, g: Callable, restrict_to_range: bool = False,
                    kernel_tol: float = KERNEL_TOL) -> np.ndarray:
    """Matrix of ``g(L)`` acting on state vectors: ``Phi diag(g) Phi^T diag(w)``."""
    vals = spectral_values(E, g, restrict_to_range, kernel_tol)
    return _assemble(E, vals)


def _assemble(E: EigenSystem, vals: np.ndarray) -> np.ndarray:
    Phi = E.vectors
    return (Phi * vals) @ (Phi.T * E.weights)


# ---------------------------------------------------------------------------
# weighted norms and operator norms


def parse_exponent(p) -> float:
    if isinstance(p, str):
        s = p.strip().lower()
        if s in ("inf", "infinity", "oo"):
            return math.inf
        p = float(s)
    p = float(p)
    if math.isnan(p):
        raise PreconditionError("exponent must be a number in [1, inf]")
    if p < 1:
        raise PreconditionError(f"exponent must be >= 1, got {p}")
    return p


def lp_norm(v: np.ndarray, w: np.ndarray, p: float) -> float:
    a = np.abs(v)
    if p == math.inf:
        return float(np.max(a)) if a.size else 0.0
    if p == 1:
        return float(np.sum(w * a))
    m = np.max(a) if a.size else 0.0
    if m == 0:
        return 0.0
    return float(m * np.sum(w * (a / m) ** p) ** (1.0 / p))


def conjugate(p: float) -> float:
    if p == 1:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def _col_norms(A, w_in, w_out, q):
    a = np.abs(A)
    if q == math.inf:
        c = a.max(axis=0)
    elif q == 1:
        c = (w_out[:, None] * a).sum(axis=0)
    elif q == 2:
        c = np.sqrt((w_out[:, None] * a * a).sum(axis=0))
    else:
        m = a.max(axis=0)
        m[m == 0] = 1.0
        c = m * ((w_out[:, None] * (a / m) ** q).sum(axis=0)) ** (1.0 / q)
    return c / w_in


def _row_norms(A, w_in, p):
    # ||A||_{p -> inf} = max_i || A_i. / w ||_{p', w}
    a = np.abs(A) / w_in[None, :]
    pp = conjugate(p)
    if pp == math.inf:
        return a.max(axis=1)
    if pp == 1:
        return (a * w_in[None, :]).sum(axis=1)
    if pp == 2:
        return np.sqrt((a * a * w_in[None, :]).sum(axis=1))
    m = a.max(axis=1)
    m[m == 0] = 1.0
    return m * ((w_in[None, :] * (a / m[:, None]) ** pp).sum(axis=1)) ** (1.0 / pp)


def _scaled(A, w_in, w_out):
    return np.sqrt(w_out)[:, None] * A / np.sqrt(w_in)[None, :]


def power_two_norm(A, w_in, w_out, max_iter: int = POWER_MAX_ITER,
                   tol: float = POWER_TOL, seed: int = OPNORM_SEED) -> float:
    """Largest singular value by power iteration on ``A^T W A``."""
    B = _scaled(A, w_in, w_out)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(B.shape[1])
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        y = B.conj().T @ (B @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
        est = math.sqrt(nrm)
        if abs(est - prev) <= tol * est:
            return float(np.linalg.norm(B @ x))
        prev = est
    raise NonConvergenceError(
        f"power iteration did not reach relative change {tol:g} in {max_iter} steps",
        index=max_iter)


def two_norm(A, w_in, w_out, method: str = "auto") -> float:
    """Weighted 2->2 norm: ``"svd"``, ``"gram"`` (top eigenvalue of the Gram matrix), or ``"power"``."""
    if method == "power":
        return power_two_norm(A, w_in, w_out)
    B = _scaled(A, w_in, w_out)
    if B.size == 0:
        return 0.0
    if method == "auto":
        method = "svd" if min(B.shape) <= GRAM_MIN_SIZE else "gram"
    if method == "gram":
        G = B.conj().T @ B if B.shape[0] >= B.shape[1] else B @ B.conj().T
        k = G.shape[0] - 1
        top = scipy.linalg.eigh(G, eigvals_only=True, subset_by_index=[k, k])[0]
        return float(math.sqrt(max(top, 0.0)))
    if method != "svd":
        raise PreconditionError(f"unknown two-norm method {method!r}")
    return float(np.linalg.norm(B, 2))


def exact_opnorm(A, w_in, w_out, p: float, q: float, two_method: str = "auto"):
    """Exact norm and its method tag, or ``None`` when no closed form applies."""
    if p == 1:
        return float(np.max(_col_norms(A, w_in, w_out, q))), f"extreme-columns(1->{_fmt(q)})"
    if q == math.inf:
        return float(np.max(_row_norms(A, w_in, p))), f"row-duality({_fmt(p)}->inf)"
    if p == 2 and q == 2:
        return two_norm(A, w_in, w_out, two_method), "largest-singular-value"
    return None


def _fmt(p: float) -> str:
    return "inf" if p == math.inf else f"{p:g}"


def _interpolation_upper(A, w_in, w_out, p, q):
    """Riesz-Thorin bound from exactly computable corner norms, plus Hoelder embedding."""
    a, b = 1.0 / p, 1.0 / q
    pts, logs = [], []
    grid = [j / 8 for j in range(9)]
    for bb in grid:  # p = 1 edge
        qq = math.inf if bb == 0 else 1.0 / bb
        pts.append((1.0, bb))
        logs.append(_safe_log(exact_opnorm(A, w_in, w_out, 1.0, qq)[0]))
    for aa in grid[1:-1] + [0.0]:  # q = inf edge
        pp = math.inf if aa == 0 else 1.0 / aa
        pts.append((aa, 0.0))
        logs.append(_safe_log(exact_opnorm(A, w_in, w_out, pp, math.inf)[0]))
    pts.append((0.5, 0.5))
    logs.append(_safe_log(two_norm(A, w_in, w_out)))
    pts = np.array(pts)
    logs = np.array(logs)

    def solve(ta, tb):
        res = linprog(logs, A_eq=np.vstack([pts.T, np.ones(len(pts))]),
                      b_eq=[ta, tb, 1.0], bounds=[(0, None)] * len(pts), method="highs")
        return float(np.exp(res.fun)) if res.status == 0 else math.inf

    if b <= a + 1e-15:
        return solve(a, b), "riesz-thorin"
    # q < p: ||g||_q <= mu_out^(1/q - 1/p) ||g||_p, then interpolate on the diagonal
    mu = float(np.sum(w_out))
    return mu ** (b - a) * solve(a, a), "hoelder+riesz-thorin"


def _safe_log(x):
    return math.log(x) if x > 0 else -745.0


def opnorm_p_to_q(A: np.ndarray, w_in: np.ndarray, p, q, w_out: np.ndarray | None = None,
                  n_random: int = OPNORM_RANDOM_VECTORS, refine: bool = True,
                  seed: int = OPNORM_SEED, two_method: str = "auto") -> NormBounds:
    """Bounds on ``sup ||A f||_q / ||f||_p`` for the weighted discrete norms."""
    p, q = parse_exponent(p), parse_exponent(q)
    A = np.asarray(A)
    w_in = np.asarray(w_in, dtype=float)
    w_out = w_in if w_out is None else np.asarray(w_out, dtype=float)
    if A.shape != (w_out.size, w_in.size):
        raise PreconditionError(
            f"matrix shape {A.shape} incompatible with weights ({w_out.size}, {w_in.size})")
    ex = exact_opnorm(A, w_in, w_out, p, q, two_method)
    if ex is not None:
        return NormBounds(ex[0], ex[0], ex[1], ex[1])
    upper, tag = _interpolation_upper(A, w_in, w_out, p, q)
    lower, _ = _lower_by_search(A, w_in, w_out, p, q, n_random, refine, seed)
    lower = min(lower, upper)
    return NormBounds(lower, upper, "random+ascent", tag)


def _lower_by_search(A, w_in, w_out, p, q, n_random, refine, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((w_in.size, n_random))
    Y = A @ X
    ratios = [lp_norm(Y[:, j], w_out, q) / lp_norm(X[:, j], w_in, p) for j in range(n_random)]
    j = int(np.argmax(ratios))
    best, x = ratios[j], X[:, j]
    if refine and not np.iscomplexobj(A):
        res = sphere_ascent([(A, w_out, q)], (np.eye(w_in.size), w_in, p), [x],
                            max_iters=OPNORM_REFINE_ITERS)
        if res.value > best:
            best, x = res.value, res.x
    return best, x


# ---------------------------------------------------------------------------
# projected ascent on the unit sphere for ratios of norms


@dataclass
class AscentResult:
    value: float
    x: np.ndarray
    iterations: int
    stalls: int
    trace: list = field(default_factory=list)


def smooth_norm_and_grad(A: np.ndarray, w: np.ndarray, p: float, x: np.ndarray,
                         smoothing: float):
    """Smoothed ``||A x||_p`` and its gradient in ``x``.

    ``p = inf`` uses a log-sum-exp maximum with temperature ``smoothing * max|Ax|``;
    finite ``p`` replaces ``|v|`` by ``sqrt(v^2 + eps^2)`` with ``eps = smoothing * rms(v)``.
    """
    v = A @ x
    a = np.abs(v)
    if p == math.inf:
        m = float(a.max())
        if m == 0:
            return 0.0, np.zeros_like(x)
        tau = smoothing * m
        z = np.exp((a - m) / tau)
        Z = z.sum()
        val = m + tau * math.log(Z)
        g = (z / Z) * np.sign(v)
        return val, A.T @ g
    eps = smoothing * (math.sqrt(float(np.mean(v * v))) + 1e-300)
    s = np.sqrt(v * v + eps * eps)
    if p == 2:
        val = math.sqrt(float(np.sum(w * v * v)))
        if val == 0:
            return 0.0, np.zeros_like(x)
        return val, A.T @ (w * v) / val
    sm = s.max()
    tot = float(np.sum(w * (s / sm) ** p))
    val = sm * tot ** (1.0 / p)
    g = w * (s / val) ** (p - 1) * (v / s)
    return val, A.T @ g


def _terms(spec):
    single = isinstance(spec, tuple) and len(spec) == 3 and isinstance(spec[0], np.ndarray)
    return [spec] if single else list(spec)


def _ratio_exact(nums, den, x):
    top = sum(lp_norm(A @ x, w, p) for A, w, p in _terms(nums))
    bot = sum(lp_norm(A @ x, w, p) for A, w, p in _terms(den))
    return top / bot if bot > 0 else 0.0


def _sum_smooth(terms, x, smoothing):
    val, grad = 0.0, np.zeros_like(x)
    for A, w, p in terms:
        v, g = smooth_norm_and_grad(A, w, p, x, smoothing)
        val += v
        grad += g
    return val, grad


def _ratio_smooth(nums, den, x, smoothing):
    top, gtop = _sum_smooth(_terms(nums), x, smoothing)
    bot, gbot = _sum_smooth(_terms(den), x, smoothing)
    if bot == 0:
        return 0.0, np.zeros_like(x)
    f = top / bot
    return f, (gtop - f * gbot) / bot


def sphere_ascent(nums: Sequence[tuple], den: tuple, starts: Sequence[np.ndarray],
                  max_iters: int = 500, tol: float = 1e-9, shrink: float = 0.5,
                  smoothing: Sequence[float] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)) -> AscentResult:
    """Maximize ``sum_j ||N_j x||_{p_j} / sum_k ||D_k x||_{p_k}`` over the unit sphere.

    ``nums`` and ``den`` are ``(A, w, p)`` triples or lists of them.

    Projected gradient ascent with backtracking, run from every start; the
    smoothing of non-differentiable norms is annealed down to its last value.
    The returned value is the exact (unsmoothed) ratio at the stored ``x``.
    """
    best = AscentResult(-1.0, None, 0, 0)
    trace = []
    nonsmooth = any(p == math.inf or p < 2 for _, _, p in _terms(nums) + _terms(den))
    stages = list(smoothing) if nonsmooth else [smoothing[-1]]
    per_stage = max(1, max_iters // len(stages))
    for x0 in starts:
        x = np.asarray(x0, dtype=float)
        x = x / np.linalg.norm(x)
        best_x, best_f = x, _ratio_exact(nums, den, x)
        iters = stalls = 0
        for sm in stages:
            step = 1.0
            f, g = _ratio_smooth(nums, den, x, sm)
            for _ in range(per_stage):
                iters += 1
                gt = g - np.dot(g, x) * x
                gn = float(np.linalg.norm(gt))
                if gn <= tol * max(abs(f), 1e-300):
                    break
                improved = False
                s = step
                while s * gn > 1e-14:
                    xn = x + (s / gn) * gt
                    xn /= np.linalg.norm(xn)
                    fn, gn_new = _ratio_smooth(nums, den, xn, sm)
                    if fn > f + 1e-4 * s * gn:
                        improved = True
                        break
                    s *= shrink
                if not improved:
                    stalls += 1
                    break
                rel = (fn - f) / max(abs(f), 1e-300)
                x, f, g = xn, fn, gn_new
                step = min(2.0 * s, 1.0)
                fe = _ratio_exact(nums, den, x)
                if fe > best_f:
                    best_f, best_x = fe, x
                if rel < tol:
                    break
        trace.append((float(best_f), iters, stalls))
        if best_f > best.value:
            best = AscentResult(best_f, best_x, iters, stalls)
    best.trace = trace
    best.stalls = sum(t[2] for t in trace)
    return best
