"""The l1 influence operator Gamma, its semigroup exp(t Gamma), kernels
gamma_t(y, x), and the propagation/spreading inequalities they satisfy.

exp(t Gamma) is evaluated by a truncated Taylor series whose order is fixed
in advance from the factorial tail bound, so every flow carries a certified
series remainder.  Windows are finite: when the supports of all retained
Taylor terms fit inside the window the truncation is exact (zero boundary
leakage); otherwise a conservative Duhamel-based leakage bound is attached,
built from the proven spatial-decay estimate.  The inequality checkers
always run on support-complete windows, which is what makes their margins
certificates rather than plausibility checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (
    DecayFunction,
    Region,
    Site,
    as_site,
    blow_up,
    dist,
    l1,
    site_dist,
    tail_sum,
)
from .observables import LocalObservable
from .rates import InfluenceMatrix
from .errors import BudgetError

FLOW_BUDGET = 50.0  # max allowed t * M_gamma


@dataclass(frozen=True)
class L1Vector:
    """Finitely supported nonnegative function on sites."""

    entries: dict[Site, float]

    def __post_init__(self):
        bad = {s: v for s, v in self.entries.items() if v < 0}
        if bad:
            raise ValueError(f"negative entries: {bad}")
        object.__setattr__(
            self, "entries", {s: v for s, v in self.entries.items() if v != 0.0})

    @classmethod
    def of(cls, pairs) -> "L1Vector":
        return cls({as_site(s): float(v) for s, v in dict(pairs).items()})

    @classmethod
    def indicator(cls, site) -> "L1Vector":
        return cls({as_site(site): 1.0})

    def support(self) -> Region:
        if not self.entries:
            raise ValueError("zero vector has empty support")
        return Region.of(self.entries)

    def norm_l1(self) -> float:
        return float(sum(self.entries.values()))

    def norm_inf(self) -> float:
        return float(max(self.entries.values(), default=0.0))

    def __getitem__(self, site) -> float:
        return self.entries.get(as_site(site), 0.0)


@dataclass(frozen=True)
class FlowResult:
    vector: L1Vector
    taylor_terms: int
    series_remainder: float
    boundary_leakage: float


@dataclass(frozen=True)
class DecayContext:
    """rho and its certified constants, required to bound boundary leakage."""

    rho: DecayFunction
    c_rho: float
    c_gamma: float


def taylor_order(x: float, tol: float) -> tuple[int, float]:
    """Smallest N with sum_{n>N} x^n / n! <= tol, plus the achieved bound."""
    if x <= 0.0:
        return 0, 0.0
    term = 1.0  # x^n / n!
    n = 0
    while True:
        nxt = term * x / (n + 1)
        if x < n + 2:
            bound = nxt / (1.0 - x / (n + 2))
            if bound <= tol:
                return n, bound
        n += 1
        term = nxt
        if n > 20000:
            raise RuntimeError("Taylor order search did not converge")


def gamma_range(gm: InfluenceMatrix) -> int:
    """Largest l1 displacement carrying a nonzero influence entry."""
    rng = 0
    rows, cols = np.nonzero(gm.gamma)
    for i, k in zip(rows, cols):
        rng = max(rng, l1(gm.sites[i], gm.sites[k]))
    return rng


def _to_dense(gm: InfluenceMatrix, beta: L1Vector) -> np.ndarray:
    idx = {s: i for i, s in enumerate(gm.sites)}
    v = np.zeros(len(gm.sites))
    for s, val in beta.entries.items():
        if s not in idx:
            raise ValueError(f"support site {s} outside the matrix window")
        v[idx[s]] = val
    return v


def _from_dense(gm: InfluenceMatrix, v: np.ndarray) -> L1Vector:
    return L1Vector({s: float(x) for s, x in zip(gm.sites, v) if x != 0.0})


def apply_gamma(gm: InfluenceMatrix, beta: L1Vector) -> L1Vector:
    """Gamma beta (x) = sum_y gamma(y, x) beta(y); positivity preserved."""
    v = _to_dense(gm, beta)
    return _from_dense(gm, gm.gamma.T @ v)


def exp_gamma(gm: InfluenceMatrix, beta: L1Vector, t: float, tol: float,
              decay: DecayContext | None = None) -> FlowResult:
    """exp(t Gamma) beta by a truncated Taylor series with certified error.

    The order N satisfies sum_{n>N} (t M_gamma)^n / n! * ||beta||_1 <= tol.
    If all N retained term supports stay inside the window the result is the
    exact partial sum (leakage 0).  Otherwise a DecayContext must be given
    and the leakage is bounded by Duhamel's formula: the restricted flow is
    dominated by the full one, whose mass near the edge is controlled by the
    spatial-decay estimate, and the re-injected deficit grows at most like
    the operator-norm exponential.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    m_gamma = gm.row_sum_max()
    if t * m_gamma > FLOW_BUDGET:
        raise BudgetError(
            f"flow budget exceeded: t * M_gamma = {t * m_gamma:.3g} > {FLOW_BUDGET}")
    norm1 = beta.norm_l1()
    if norm1 == 0.0:
        return FlowResult(L1Vector({}), 0, 0.0, 0.0)
    n_terms, tail = taylor_order(t * m_gamma, tol / norm1)
    v = _to_dense(gm, beta)
    acc = v.copy()
    term = v.copy()
    gt = sp.csr_matrix(gm.gamma.T)
    for n in range(1, n_terms + 1):
        term = (t / n) * (gt @ term)
        acc += term

    leakage = 0.0
    if n_terms > 0:
        reach = n_terms * gamma_range(gm)
        support = beta.support()
        window = Region.of(gm.sites)
        if not blow_up(support, reach).sites <= window.sites:
            if decay is None:
                raise ValueError(
                    "flow may spill past the window; pass a DecayContext "
                    "to bound the leakage or enlarge the window")
            ring = Region.of(blow_up(window, 1).sites - window.sites)
            d_edge = dist(support, ring)
            rng = gamma_range(gm)
            phi = tail_sum(decay.rho, max(d_edge - rng - 1, 0), window.dim)
            c = decay.c_gamma * decay.c_rho
            leakage = (t * m_gamma * math.exp(t * max(m_gamma, c))
                       * beta.norm_inf() / decay.c_rho * phi.upper)
    return FlowResult(vector=_from_dense(gm, acc), taylor_terms=n_terms,
                      series_remainder=tail * norm1, boundary_leakage=leakage)


def kernel(gm: InfluenceMatrix, y, t: float, tol: float,
           decay: DecayContext | None = None) -> L1Vector:
    """The kernel row gamma_t(y, .) = exp(t Gamma) applied to the indicator
    at y; includes the n = 0 identity term, so gamma_0(y, x) = [x == y]."""
    return exp_gamma(gm, L1Vector.indicator(y), t, tol, decay=decay).vector


def _kernel_row(gm_csr: sp.csr_matrix, i: int, t: float, n_terms: int) -> np.ndarray:
    """Row i of the order-N Taylor partial sum of exp(t Gamma-matrix)."""
    n = gm_csr.shape[0]
    v = np.zeros(n)
    v[i] = 1.0
    acc = v.copy()
    term = v.copy()
    gt = gm_csr.T.tocsr()
    for k in range(1, n_terms + 1):
        term = (t / k) * (gt @ term)
        acc += term
    return acc


@dataclass(frozen=True)
class FlowCheckReport:
    """Per-site margins for one of the flow inequalities."""

    t: float
    sites: tuple[Site, ...]
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float

    @property
    def margins(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())

    @property
    def passed(self) -> bool:
        return bool((self.lhs <= self.rhs + self.tolerance).all())

    def require(self):
        if not self.passed:
            worst = int(np.argmin(self.margins))
            raise AssertionError(
                f"flow inequality violated at {self.sites[worst]}: "
                f"lhs={self.lhs[worst]} rhs={self.rhs[worst]}")


def propagation_order(t: float, c_gamma: float, c_rho: float,
                      tol: float = 1e-10) -> int:
    """Taylor order that makes the weighted tail
    C_rho^{-1} sum_{n>N} (t C_gamma C_rho)^n / n! <= tol."""
    n, _ = taylor_order(t * c_gamma * c_rho, tol * c_rho)
    return n


def required_window(interior: Region, rng: int, n_terms: int) -> Region:
    """Window on which an order-N flow reported on ``interior`` is exact."""
    return blow_up(interior, rng * n_terms)


def check_propagation(gm: InfluenceMatrix, rho: DecayFunction, c_rho: float,
                      c_gamma: float, t: float, interior: Region,
                      tol: float = 1e-10) -> FlowCheckReport:
    """Certify sup_x sum_y gamma_t(x, y) / rho(d(x, y)) <= e^{C_gamma C_rho t} / C_rho
    at every site of ``interior``.

    The Taylor order is chosen so the *weighted* series tail (the only
    uncomputed part) is below ``tol``; the window must contain the full
    supports of all retained terms, which ``required_window`` provides.
    Margins are therefore rigorous up to ``tol``.
    """
    rng = gamma_range(gm)
    c = c_gamma * c_rho
    n_terms = propagation_order(t, c_gamma, c_rho, tol)
    window = Region.of(gm.sites)
    needed = required_window(interior, rng, n_terms)
    if not needed.sites <= window.sites:
        raise ValueError(
            f"window too small for an exact order-{n_terms} flow; "
            f"need blow_up(interior, {rng * n_terms})")
    sites = gm.sites
    gm_csr = sp.csr_matrix(gm.gamma)
    keep = [i for i, s in enumerate(sites) if s in interior]
    lhs = np.empty(len(keep))
    for out_i, i in enumerate(keep):
        x = sites[i]
        row = _kernel_row(gm_csr, i, t, n_terms)
        w = np.array([1.0 / rho(l1(x, s)) for s in sites])
        lhs[out_i] = float(row @ w)
    rhs = np.full(len(keep), math.exp(c * t) / c_rho)
    return FlowCheckReport(t=t, sites=tuple(sites[i] for i in keep),
                           lhs=lhs, rhs=rhs, tolerance=tol)


def spread_bound_check(gm: InfluenceMatrix, rho: DecayFunction, c_rho: float,
                       c_gamma: float, beta: L1Vector, t: float,
                       tol: float = 1e-12) -> FlowCheckReport:
    """Certify the pointwise spatial-decay bound
    exp(t Gamma) beta (x) <= ||beta||_inf e^{C_gamma C_rho t} rho(dist(x, supp beta)) / C_rho
    over the whole window, which must be support-complete for the flow."""
    m_gamma = gm.row_sum_max()
    n_terms, tail = taylor_order(t * m_gamma, tol / max(beta.norm_l1(), 1.0))
    rng = gamma_range(gm)
    window = Region.of(gm.sites)
    support = beta.support()
    needed = required_window(support, rng, n_terms)
    if not needed.sites <= window.sites:
        raise ValueError(
            f"window too small for an exact order-{n_terms} flow; "
            f"need blow_up(support, {rng * n_terms})")
    flow = exp_gamma(gm, beta, t, tol)
    assert flow.boundary_leakage == 0.0
    sites = gm.sites
    lhs = np.array([flow.vector[s] for s in sites])
    pref = beta.norm_inf() * math.exp(c_gamma * c_rho * t) / c_rho
    rhs = np.array([pref * rho(site_dist(s, support)) for s in sites])
    return FlowCheckReport(t=t, sites=sites, lhs=lhs, rhs=rhs,
                           tolerance=tol + flow.series_remainder)


def delta_vector(f: LocalObservable) -> L1Vector:
    """delta_x(f) for every site, by exhaustive maximisation over pairs of
    support configurations differing only at x."""
    cube = f.cube()
    out: dict[Site, float] = {}
    for axis, site in enumerate(f.sites):
        gap = float((cube.max(axis=axis) - cube.min(axis=axis)).max())
        if gap != 0.0:
            out[site] = gap
    return L1Vector(out)


def triple_norm(f: LocalObservable) -> float:
    """|||f||| = sum_x delta_x(f)."""
    return delta_vector(f).norm_l1()
