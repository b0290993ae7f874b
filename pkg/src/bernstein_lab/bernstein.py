"""Bernstein-type ratios on spectral bands and their extremal search.

Forward ratios live on a low band ``[0, N]``, reverse ratios on a tail
``[N, K]``.  Maxima are searched over unit coefficient vectors by projected
ascent (a lower bound) and paired with an operator-norm upper bound.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics
from .calculus import (MultiplierSpec, ScanResult, gradient_norm_scan, spectral_multiplier,
                       value_norm)
from .errors import NumericalError, PreconditionError
from .models import ModelOperator
from .numerics import EigenSystem, NormBounds, lp_norm

ZERO_TOL = 1e-300


@dataclass(frozen=True)
class SpectralBand:
    k_lo: int
    k_hi: int

    def __post_init__(self):
        if not 0 <= self.k_lo <= self.k_hi:
            raise PreconditionError(f"invalid band [{self.k_lo}, {self.k_hi}]")

    @property
    def size(self) -> int:
        return self.k_hi - self.k_lo + 1

    def check(self, E: EigenSystem) -> "SpectralBand":
        if self.k_hi >= E.size:
            raise PreconditionError(f"band top {self.k_hi} exceeds the {E.size} eigenpairs")
        return self


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 32
    max_iters: int = 500
    shrink: float = 0.5
    tol: float = 1e-9
    seed: int = 0
    smoothing: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise PreconditionError("optimizer needs at least one restart")
        if not 0 < self.shrink < 1:
            raise PreconditionError("backtracking shrink factor must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class RatioReport:
    ratio: NormBounds
    alpha: np.ndarray
    band: SpectralBand
    N_index: int
    lambda_N: float
    p: float
    q: float | None = None
    trace: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.ratio.lower


@dataclass(frozen=True, eq=False)
class Synthesis:
    state: np.ndarray
    grid: np.ndarray


def _as_band(band, E: EigenSystem) -> SpectralBand:
    if not isinstance(band, SpectralBand):
        band = SpectralBand(*band)
    return band.check(E)


def synthesize(E: EigenSystem, alpha, band, m: ModelOperator | None = None) -> Synthesis:
    """``u = sum_{k in band} alpha_k phi_k`` as a state vector and as grid samples."""
    band = _as_band(band, E)
    alpha = np.asarray(alpha)
    if alpha.shape != (band.size,):
        raise PreconditionError(f"alpha has length {alpha.size}, band holds {band.size} modes")
    u = E.vectors[:, band.k_lo:band.k_hi + 1] @ alpha
    grid = u if m is None else m.grid_values(u)
    return Synthesis(u, grid)


def project(E: EigenSystem, u: np.ndarray, band) -> np.ndarray:
    """Band coefficients of a state vector (complex input allowed)."""
    band = _as_band(band, E)
    return E.vectors[:, band.k_lo:band.k_hi + 1].T @ (E.weights * u)


def _lambda(E: EigenSystem, k: int) -> float:
    lam = math.sqrt(max(float(E.lambdas_sq[k]), 0.0))
    if lam <= 0:
        raise PreconditionError(f"degenerate band: lambda_{k} = 0")
    return lam


def _numerator(m, u, p, form):
    g = lp_norm(m.grad_values(u), m.edge_weights, p)
    s = 0.0 if m.potential_free else lp_norm(m.pot_values(u), m.grid.weights, p)
    if form == "square":
        return math.hypot(g, s)
    if form != "sum":
        raise PreconditionError(f"unknown norm combination {form!r}")
    return g + s


def bernstein_ratio(m: ModelOperator, E: EigenSystem, alpha, band, p,
                    form: str = "sum") -> float:
    """``(||grad u||_p + ||sqrt(W) u||_p) / (lambda_N ||u||_p)`` with ``N`` the band top."""
    p = numerics.parse_exponent(p)
    band = _as_band(band, E)
    lam = _lambda(E, band.k_hi)
    syn = synthesize(E, alpha, band, m)
    den = lp_norm(syn.grid, m.grid.weights, p)
    if den <= ZERO_TOL:
        raise NumericalError("synthesized function is numerically zero")
    return _numerator(m, syn.state, p, form) / (lam * den)


def reverse_bernstein_ratio(m: ModelOperator, E: EigenSystem, alpha, band, q,
                            form: str = "sum") -> float:
    """``lambda_N ||u||_q / (||grad u||_q + ||sqrt(W) u||_q)`` with ``N`` the tail start."""
    q = numerics.parse_exponent(q)
    band = _as_band(band, E)
    lam = _lambda(E, band.k_lo)
    syn = synthesize(E, alpha, band, m)
    den = _numerator(m, syn.state, q, form)
    if den <= ZERO_TOL:
        raise NumericalError("synthesized function is numerically zero")
    return lam * lp_norm(syn.grid, m.grid.weights, q) / den


# ---------------------------------------------------------------------------
# band maps, starts, and the search driver


def _band_maps(m: ModelOperator, E: EigenSystem, band: SpectralBand):
    Phi = E.vectors[:, band.k_lo:band.k_hi + 1]
    V = m.grid_values(Phi)
    G = m.grad_values(Phi)
    S = None if m.potential_free else m.pot_values(Phi)
    return V, G, S


def _projector(E: EigenSystem, band: SpectralBand) -> np.ndarray:
    Phi = E.vectors[:, band.k_lo:band.k_hi + 1]
    return Phi @ (Phi.T * E.weights)


def _starts(V: np.ndarray, anchor: int, cfg: OptimizerConfig) -> list:
    """Seeded random vectors plus structured candidates.

    The structured ones are the anchor eigenvector and the band reproducing
    kernel at the node where the anchor mode peaks, untapered and with
    linear and quadratic spectral tapers.
    """
    size = V.shape[1]
    e = np.zeros(size)
    e[anchor] = 1.0
    i0 = int(np.argmax(np.abs(V[:, anchor])))
    kern = V[i0].copy()
    ramp = 1.0 - np.arange(size) / size
    if anchor == 0:
        ramp = ramp[::-1]
    structured = [e, kern, kern * ramp, kern * ramp**2]
    structured = [s for s in structured if np.linalg.norm(s) > 0][: cfg.restarts]
    rng = np.random.default_rng(cfg.seed)
    rand = [rng.standard_normal(size) for _ in range(cfg.restarts - len(structured))]
    return structured + rand


def _search(nums, den, starts, cfg: OptimizerConfig) -> numerics.AscentResult:
    kw = dict(max_iters=cfg.max_iters, tol=cfg.tol, shrink=cfg.shrink, smoothing=cfg.smoothing)
    if cfg.threads <= 1 or len(starts) == 1:
        return numerics.sphere_ascent(nums, den, starts, **kw)
    with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
        runs = list(ex.map(lambda s: numerics.sphere_ascent(nums, den, [s], **kw), starts))
    best = runs[0]
    for r in runs[1:]:
        if r.value > best.value:
            best = r
    best.trace = [t for r in runs for t in r.trace]
    best.stalls = sum(r.stalls for r in runs)
    return best


def _trace_summary(res: numerics.AscentResult) -> dict:
    vals = np.array([t[0] for t in res.trace])
    return {"restarts": len(res.trace), "iterations": int(sum(t[1] for t in res.trace)),
            "stalls": int(res.stalls), "spread": float(vals.max() - vals.min()) if vals.size else 0.0}


def _norm_terms(m, G, S, p):
    terms = [(G, m.edge_weights, p)]
    if S is not None:
        terms.append((S, m.grid.weights, p))
    return terms


def _forward_upper(m, E, band, p, q) -> NormBounds:
    P = _projector(E, band)
    w = m.grid.weights
    b = numerics.opnorm_p_to_q(m.grad_operator(P), w, p, q, w_out=m.edge_weights)
    if not m.potential_free:
        b = b + numerics.opnorm_p_to_q(m.pot_operator(P), w, p, q, w_out=w)
    return b


def max_bernstein_ratio(m: ModelOperator, E: EigenSystem, N: int, p,
                        cfg: OptimizerConfig = OptimizerConfig(), form: str = "sum") -> RatioReport:
    """Largest forward ratio over the degree-``N`` band.

    ``ratio.lower`` is attained by ``alpha``; ``ratio.upper`` is
    ``||(grad, sqrt W) P_N||_{p->p} / lambda_N`` with ``P_N`` the band projector.
    """
    return lp_lq_bernstein(m, E, N, p, p, m_dim=1, cfg=cfg, form=form)


def lp_lq_bernstein(m: ModelOperator, E: EigenSystem, N: int, p, q, m_dim: float = 1.0,
                    cfg: OptimizerConfig = OptimizerConfig(), form: str = "sum") -> RatioReport:
    """``(||grad u||_q + ||sqrt(W) u||_q) / (lambda_N^{1 + m|1/p - 1/q|} ||u||_p)`` maximized."""
    p = numerics.parse_exponent(p)
    q = numerics.parse_exponent(q)
    if N < 1:
        raise PreconditionError("band degree N must be >= 1")
    band = _as_band(m.band(N), E)
    lam = _lambda(E, band.k_hi)
    ip = 0.0 if math.isinf(p) else 1.0 / p
    iq = 0.0 if math.isinf(q) else 1.0 / q
    expo = 1.0 + m_dim * abs(ip - iq)
    norm = lam**expo
    regime = "p<=q<=2" if p <= q <= 2 else ("p<=q" if p <= q else "p>q")
    V, G, S = _band_maps(m, E, band)
    anchor = band.size - 1
    if p == q == 2 and form == "square":
        alpha = np.zeros(band.size)
        alpha[anchor] = 1.0
        val = bernstein_ratio(m, E, alpha, band, 2, form="square")
        bounds = NormBounds(val, max(val, 1.0), "eigenvector", "spectral")
        return RatioReport(bounds, alpha, band, band.k_hi, lam, p, q,
                           {"restarts": 0, "iterations": 0, "stalls": 0, "spread": 0.0},
                           {"exponent": expo, "regime": regime, "form": form})
    if form != "sum":
        raise PreconditionError("the square-sum form is exact only for p = q = 2")
    w = m.grid.weights
    res = _search(_norm_terms(m, G, S, q), (V, w, p), _starts(V, anchor, cfg), cfg)
    alpha = res.x / np.linalg.norm(res.x)
    lower = res.value / norm
    upper = _forward_upper(m, E, band, p, q)
    bounds = NormBounds(lower, max(upper.upper / norm, lower), "projected-ascent",
                        "band-projector:" + upper.method_upper)
    return RatioReport(bounds, alpha, band, band.k_hi, lam, p, q, _trace_summary(res),
                       {"exponent": expo, "regime": regime, "form": form,
                        "unnormalized": res.value})


@dataclass(frozen=True, eq=False)
class ExponentSweep:
    Ns: np.ndarray
    lambdas: np.ndarray
    maxima: np.ndarray  # unnormalized maximized quantity
    slope: float
    reports: list


def lp_lq_exponent_sweep(m: ModelOperator, E: EigenSystem, Ns: Sequence[int], p, q,
                         cfg: OptimizerConfig = OptimizerConfig()) -> ExponentSweep:
    """Log-log slope of ``max (||grad u||_q + ||sqrt(W) u||_q)/||u||_p`` against ``lambda_N``."""
    reports = [lp_lq_bernstein(m, E, N, p, q, cfg=cfg) for N in Ns]
    lam = np.array([r.lambda_N for r in reports])
    mx = np.array([r.extra["unnormalized"] for r in reports])
    slope = float(np.polyfit(np.log(lam), np.log(mx), 1)[0])
    return ExponentSweep(np.asarray(Ns), lam, mx, slope, reports)


def _reverse_upper(m, E, band, q) -> NormBounds:
    """``||P L^{-1} grad^*||`` and ``||P L^{-1} sqrt(W)^*||`` as grid operators; the larger bounds the ratio."""
    Phi = E.vectors[:, band.k_lo:band.k_hi + 1]
    inv = Phi / E.lambdas_sq[band.k_lo:band.k_hi + 1]
    w = m.grid.weights

    def lift(F, ev):
        A = F if m.value_eval is None else m.value_eval @ F
        return A if ev is None else A @ (ev.T * w)

    RD = lift((inv @ Phi.T) @ (m.D.T * m.grad_weights), m.grad_eval)
    b = numerics.opnorm_p_to_q(RD, m.edge_weights, q, q, w_out=w)
    if not m.potential_free:
        RS = lift((inv @ Phi.T) @ (m.S.T * m.pot_weights), m.pot_eval)
        bs = numerics.opnorm_p_to_q(RS, w, q, q, w_out=w)
        if bs.upper > b.upper:
            b = bs
    return b


def max_reverse_ratio(m: ModelOperator, E: EigenSystem, N: int, K: int, q,
                      cfg: OptimizerConfig = OptimizerConfig(), form: str = "sum",
                      k_study: bool = False) -> RatioReport:
    """Largest reverse ratio over the tail ``[N, K]``.

    With ``k_study`` the search is repeated for ``K`` in ``{2N, 4N, 8N}``
    (where they fit) and the maxima are stored in ``extra["k_study"]``.
    """
    q = numerics.parse_exponent(q)
    band = _as_band(m.tail_band(N, K), E)
    lam = _lambda(E, band.k_lo)
    V, G, S = _band_maps(m, E, band)
    if q == 2 and form == "square":
        alpha = np.zeros(band.size)
        alpha[0] = 1.0
        val = reverse_bernstein_ratio(m, E, alpha, band, 2, form="square")
        rep = RatioReport(NormBounds(val, max(val, 1.0), "eigenvector", "spectral"), alpha,
                          band, band.k_lo, lam, q, None,
                          {"restarts": 0, "iterations": 0, "stalls": 0, "spread": 0.0},
                          {"form": form})
    else:
        if form != "sum":
            raise PreconditionError("the square-sum form is exact only for q = 2")
        w = m.grid.weights
        res = _search([(V, w, q)], _norm_terms(m, G, S, q), _starts(V, 0, cfg), cfg)
        alpha = res.x / np.linalg.norm(res.x)
        lower = lam * res.value
        up = _reverse_upper(m, E, band, q)
        rep = RatioReport(NormBounds(lower, max(lam * up.upper, lower), "projected-ascent",
                                     "inverse-factor:" + up.method_upper),
                          alpha, band, band.k_lo, lam, q, None, _trace_summary(res), {"form": form})
    if k_study:
        study = {}
        for Kk in (2 * N, 4 * N, 8 * N):
            try:
                study[Kk] = max_reverse_ratio(m, E, N, Kk, q, cfg, form).value
            except PreconditionError:
                continue
        rep.extra["k_study"] = study
        vals = np.array(list(study.values()))
        rep.extra["k_variation"] = float(vals.max() / vals.min()) if vals.size else math.nan
    return rep


# ---------------------------------------------------------------------------
# semi-classical scans


def semiclassical_scan(m: ModelOperator, E: EigenSystem, spec: MultiplierSpec, p,
                       hs: Sequence[float], **norm_kw) -> ScanResult:
    """``sqrt(h) (||grad psi(hL)||_{p->p} + ||sqrt(W) psi(hL)||_{p->p})`` per ``h``."""
    return gradient_norm_scan(m, E, lambda h: (lambda s: spec.psi(h * s)), hs, p, math.sqrt,
                              "semiclassical", **norm_kw)


def _reverse_admissible(spec: MultiplierSpec) -> bool:
    if spec.zero_below > 0:
        return True
    # x^beta e^{-x} with beta >= 1/2 keeps Psi(s)/sqrt(s) bounded at 0
    return spec.family == "power_decay" and spec.params[0] >= 0.5


def semiclassical_reverse_scan(m: ModelOperator, E: EigenSystem, spec: MultiplierSpec, q,
                               hs: Sequence[float], samples: int = 64, seed: int = 0,
                               **norm_kw) -> ScanResult:
    """``h^{-1/2} ||Psi(hL) L^{-1/2}||_{q->q}`` per ``h`` (kernel of ``L`` removed).

    ``extra["direct"]`` holds the sampled check
    ``max_u ||Psi(hL) u||_q / (sqrt(h) (||grad u||_q + ||sqrt(W) u||_q))`` over random ``u``.
    """
    if not _reverse_admissible(spec):
        raise PreconditionError(f"{spec.family} does not vanish near 0; Psi(s)/sqrt(s) is unbounded")
    q = numerics.parse_exponent(q)
    hs = np.asarray(hs, dtype=float)
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((m.size, samples))
    den = np.array([_numerator(m, U[:, j], q, "sum") for j in range(samples)])
    rng_mask = ~E.kernel_mask()
    lam = E.lambdas_sq[rng_mask]
    bounds, direct, closed = [], [], []
    for h in hs:
        g = (lambda s, h=h: spec.psi(h * s) / np.sqrt(s))
        M = numerics.matrix_function(E, g, restrict_to_range=True)
        bounds.append(value_norm(m, m.value_operator(M), q, **norm_kw).scaled(1.0 / math.sqrt(h)))
        Pu = m.grid_values(spectral_multiplier(E, spec, h) @ U)
        top = np.array([lp_norm(Pu[:, j], m.grid.weights, q) for j in range(samples)])
        direct.append(float(np.max(top / (math.sqrt(h) * den))))
        if q == 2:
            s = h * lam
            closed.append(float(np.max(np.abs(spec.psi(s)) / np.sqrt(s))) if s.size else 0.0)
    res = ScanResult(hs, bounds, "semiclassical-reverse", {"q": q, "direct": np.array(direct)})
    if q == 2:
        res.extra["closed_form"] = np.array(closed)
    return res


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    sup1: float
    sup2: float
    ratio: float
    scan1: ScanResult
    scan2: ScanResult
    last_octave: tuple  # (value/median) for each scan at the smallest h

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.sup1) and np.isfinite(self.sup2) and self.sup2 > 0)

    @property
    def stable(self) -> bool:
        return all(r < 2.0 for r in self.last_octave)


def _last_octave(scan: ScanResult) -> float:
    vals = scan.upper
    med = float(np.median(vals))
    last = float(vals[int(np.argmin(scan.params))])
    if med == 0:
        return 0.0 if last == 0 else math.inf
    return last / med


def psi_equivalence_audit(m: ModelOperator, E: EigenSystem, psi1: MultiplierSpec,
                          psi2: MultiplierSpec, p, hs: Sequence[float], kind: str = "forward",
                          **kw) -> EquivalenceReport:
    """Suprema of the same scan for two profiles; both finite witnesses profile independence.

    ``kind`` selects ``semiclassical_scan`` (``"forward"``) or
    ``semiclassical_reverse_scan`` (``"reverse"``).
    """
    scan = {"forward": semiclassical_scan, "reverse": semiclassical_reverse_scan}.get(kind)
    if scan is None:
        raise PreconditionError(f"unknown audit kind {kind!r}")
    for s in (psi1, psi2):
        if s.family == "zero":
            raise PreconditionError("equivalence audit needs nontrivial profiles")
    s1 = scan(m, E, psi1, p, hs, **kw)
    s2 = scan(m, E, psi2, p, hs, **kw)
    ratio = s1.sup / s2.sup if s2.sup > 0 else math.inf
    return EquivalenceReport(s1.sup, s2.sup, ratio, s1, s2, (_last_octave(s1), _last_octave(s2)))
