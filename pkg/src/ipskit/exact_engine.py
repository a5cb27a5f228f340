"""Exact finite-state CTMC computations for restricted spin dynamics.

State spaces are full product spaces over a finite universe of sites; a
restriction freezes the complement of the active region by removing its
update moves, never by shrinking the state space, so distributions obtained
under different restrictions stay directly comparable.

Transient distributions come from uniformization (a Poisson mixture of
powers of I + Q/Lambda) with a certified truncation tail, which keeps the
computation sparse and the error budget explicit.  A dense matrix
exponential is kept alongside as an oracle for small spaces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from .geometry import Region, Site, as_site, blow_up, l1
from .observables import LocalObservable
from .rates import BoundaryRule, Configuration, IndependentFlip, LongRangeGlauberIsing, RateFamily
from .schedules import Schedule, segments
from .errors import BudgetError

log = logging.getLogger(__name__)

STATE_BUDGET = 1 << 20
DENSE_ORACLE_BUDGET = 1 << 10
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """Enumerated product space over a sorted tuple of sites.

    Enumeration is lexicographic in sorted site order with the first site as
    the most significant base-q digit: state index
    i = sum_k spin(site_k) * q^(n-1-k).
    """

    sites: tuple[Site, ...]
    q: int = 2

    def __post_init__(self):
        if tuple(sorted(self.sites)) != self.sites:
            raise ValueError("sites must be sorted")
        if self.q ** len(self.sites) > STATE_BUDGET:
            raise BudgetError(
                f"state space {self.q}^{len(self.sites)} exceeds the "
                f"budget of {STATE_BUDGET} states")

    @classmethod
    def over(cls, region: Region, q: int = 2) -> "StateSpace":
        return cls(sites=region.sorted_sites(), q=q)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def n_states(self) -> int:
        return self.q ** len(self.sites)

    @property
    def region(self) -> Region:
        return Region.of(self.sites)

    def site_index(self, site) -> int:
        return self.sites.index(as_site(site))

    def index_of(self, values: dict[Site, int]) -> int:
        idx = 0
        for s in self.sites:
            idx = idx * self.q + values[s]
        return idx

    def digit(self, indices: np.ndarray, k: int) -> np.ndarray:
        """Spin values of site k for an array of state indices."""
        power = self.q ** (self.n_sites - 1 - k)
        return (indices // power) % self.q

    @cached_property
    def spins(self) -> np.ndarray:
        """n_states x n_sites matrix of spin values (0..q-1, int8)."""
        idx = np.arange(self.n_states)
        out = np.empty((self.n_states, self.n_sites), dtype=np.int8)
        for k in range(self.n_sites):
            out[:, k] = self.digit(idx, k)
        return out

    def sub_index(self, sub: Region) -> np.ndarray:
        """Map full state index -> index in the sub-region's own state space."""
        if not sub.sites <= self.region.sites:
            raise ValueError("sub-region not contained in the state space")
        sub_sites = sub.sorted_sites()
        idx = np.arange(self.n_states)
        out = np.zeros(self.n_states, dtype=np.int64)
        for s in sub_sites:
            out = out * self.q + self.digit(idx, self.site_index(s))
        return out

    def configuration_index(self, config: Configuration) -> int:
        return self.index_of({s: config.spin(s) for s in self.sites})


@dataclass
class GeneratorMatrix:
    """Sparse CTMC generator with zero row sums and its uniformization rate."""

    space: StateSpace
    q_matrix: sp.csr_matrix
    max_total_rate: float

    def __post_init__(self):
        resid = np.abs(np.asarray(self.q_matrix.sum(axis=1)).ravel()).max() if self.q_matrix.nnz else 0.0
        scale = max(self.max_total_rate, 1.0)
        if resid > ROW_SUM_TOL * scale:
            raise ValueError(f"generator row sums deviate from zero by {resid}")

    @cached_property
    def q_transpose(self) -> sp.csr_matrix:
        return self.q_matrix.T.tocsr()

    @property
    def dimension(self) -> int:
        return self.space.n_states

    def scaled(self, factor: float) -> "GeneratorMatrix":
        if factor < 0:
            raise ValueError("nonnegative scaling only")
        return GeneratorMatrix(self.space, self.q_matrix * factor,
                               self.max_total_rate * factor)

    def exit_rates(self) -> np.ndarray:
        return -self.q_matrix.diagonal()


@dataclass(frozen=True)
class Distribution:
    space: StateSpace
    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.shape != (self.space.n_states,):
            raise ValueError("weight vector has the wrong length")
        if (w < -1e-14).any():
            raise ValueError("negative probability weight")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()}, not 1")

    @classmethod
    def point_mass(cls, space: StateSpace, index: int) -> "Distribution":
        w = np.zeros(space.n_states)
        w[index] = 1.0
        return cls(space, w)

    @classmethod
    def from_configuration(cls, space: StateSpace, config: Configuration
                           ) -> "Distribution":
        return cls.point_mass(space, space.configuration_index(config))

    @classmethod
    def uniform(cls, space: StateSpace) -> "Distribution":
        return cls(space, np.full(space.n_states, 1.0 / space.n_states))


class SingleSiteAssembler:
    """Vectorised per-site flip moves over a fixed universe state space.

    Restricted generators for any active subset are sums of per-site blocks,
    which makes piecewise-constant schedules cheap: freezing a site deletes
    its block and nothing else.
    """

    def __init__(self, family: RateFamily, space: StateSpace,
                 boundary: BoundaryRule):
        self.family = family
        self.space = space
        self.boundary = boundary
        self._blocks: dict[Site, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._generators: dict[frozenset, GeneratorMatrix] = {}

    def _glauber_block(self, site: Site) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fam: LongRangeGlauberIsing = self.family
        space = self.space
        k = space.site_index(site)
        n = space.n_sites
        sigma = space.spins.astype(np.float64) * 2.0 - 1.0
        couplings = np.zeros(n)
        for j, other in enumerate(space.sites):
            if j != k:
                couplings[j] = fam.coupling(l1(site, other))
        frozen_field = 0.0
        ball = blow_up(Region.of([site]), fam.r_j)
        inside = set(space.sites)
        for z in ball:
            if z != site and z not in inside:
                frozen_field += fam.coupling(l1(site, z)) * self.boundary.sigma(z)
        h = sigma @ couplings + frozen_field
        rates = expit(-2.0 * sigma[:, k] * h)
        rows = np.arange(space.n_states)
        targets = rows ^ (1 << (n - 1 - k))
        return rows, targets, rates

    def _flip_block(self, site: Site) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fam: IndependentFlip = self.family
        space = self.space
        q = space.q
        k = space.site_index(site)
        power = q ** (space.n_sites - 1 - k)
        idx = np.arange(space.n_states)
        cur = space.digit(idx, k)
        pieces = []
        for v in range(q):
            mask = cur != v
            pieces.append((idx[mask], idx[mask] + (v - cur[mask]) * power))
        rows = np.concatenate([p[0] for p in pieces])
        targets = np.concatenate([p[1] for p in pieces])
        rates = np.full(rows.shape, fam.flip_rate / (q - 1))
        return rows, targets, rates

    def block(self, site) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = as_site(site)
        if s not in self._blocks:
            if isinstance(self.family, LongRangeGlauberIsing):
                self._blocks[s] = self._glauber_block(s)
            elif isinstance(self.family, IndependentFlip):
                self._blocks[s] = self._flip_block(s)
            else:
                raise TypeError(f"unsupported family {self.family!r}")
        return self._blocks[s]

    def generator(self, active: Region) -> GeneratorMatrix:
        if not active.sites <= self.space.region.sites:
            raise ValueError("active region must lie inside the universe")
        key = frozenset(active.sites)
        cached = self._generators.get(key)
        if cached is not None:
            return cached
        gen = self._assemble(active)
        self._generators[key] = gen
        return gen

    def _assemble(self, active: Region) -> GeneratorMatrix:
        n = self.space.n_states
        sites = active.sorted_sites()
        if not sites:
            return GeneratorMatrix(self.space, sp.csr_matrix((n, n)), 0.0)
        blocks = [self.block(s) for s in sites]
        uniform = all(len(b[0]) == n and (b[0] == np.arange(n)).all()
                      for b in blocks)
        if uniform:
            # one move per (state, site): build CSR directly, no COO sort
            m = len(blocks)
            cols = np.empty((n, m + 1), dtype=np.int64)
            vals = np.empty((n, m + 1))
            for j, (_, targets, rates) in enumerate(blocks):
                cols[:, j] = targets
                vals[:, j] = rates
            exit_rate = vals[:, :m].sum(axis=1)
            cols[:, m] = np.arange(n)
            vals[:, m] = -exit_rate
            indptr = np.arange(n + 1, dtype=np.int64) * (m + 1)
            q = sp.csr_matrix((vals.ravel(), cols.ravel(), indptr), shape=(n, n))
            return GeneratorMatrix(self.space, q, float(exit_rate.max()))
        rows = np.concatenate([b[0] for b in blocks])
        cols = np.concatenate([b[1] for b in blocks])
        vals = np.concatenate([b[2] for b in blocks])
        exit_rate = np.zeros(n)
        np.add.at(exit_rate, rows, vals)
        coo = sp.coo_matrix(
            (np.concatenate([vals, -exit_rate]),
             (np.concatenate([rows, np.arange(n)]),
              np.concatenate([cols, np.arange(n)]))),
            shape=(n, n))
        return GeneratorMatrix(self.space, coo.tocsr(), float(exit_rate.max()))


def build_generator(family: RateFamily, active: Region, boundary: BoundaryRule,
                    universe: Region | None = None) -> GeneratorMatrix:
    """Generator of the dynamics where only sites of ``active`` update.

    The state space covers ``universe`` (default: the active region itself);
    spins of universe sites outside ``active`` persist unchanged, and spins
    outside the universe are frozen to the boundary rule.
    """
    uni = universe if universe is not None else active
    space = StateSpace.over(uni, q=family.q)
    return SingleSiteAssembler(family, space, boundary).generator(active)


def _poisson_weights(lam_t: float, tol: float) -> np.ndarray:
    """Poisson(lam_t) pmf values 0..N with right tail below tol."""
    if lam_t == 0.0:
        return np.array([1.0])
    # log-space recurrence avoids underflow for large lam_t
    logs = [-lam_t]
    total = math.exp(logs[0])
    k = 0
    log_lam = math.log(lam_t)
    while total < 1.0 - tol:
        k += 1
        logs.append(logs[-1] + log_lam - math.log(k))
        total += math.exp(logs[-1])
        if k > 100 * (lam_t + 10):
            raise RuntimeError("Poisson truncation search ran away")
    return np.exp(np.array(logs))


def evolve(gen: GeneratorMatrix, mu0: Distribution | np.ndarray, t: float,
           tol: float = 1e-12) -> Distribution:
    """mu0 e^{tQ} by uniformization, truncated when the Poisson tail is below
    tol and renormalised (the renormalisation is logged, not hidden)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w0 = mu0.weights if isinstance(mu0, Distribution) else np.asarray(mu0, dtype=float)
    lam = gen.max_total_rate
    if t == 0.0 or lam == 0.0:
        return Distribution(gen.space, w0.copy())
    weights = _poisson_weights(lam * t, tol)
    qt = gen.q_transpose
    v = w0.copy()
    acc = weights[0] * v
    for pk in weights[1:]:
        v = v + (qt @ v) / lam
        acc += pk * v
    total = float(acc.sum())
    if abs(total - 1.0) > tol * 10:
        log.info("uniformization renormalised by %.3e", total - 1.0)
    acc = np.maximum(acc, 0.0)
    return Distribution(gen.space, acc / acc.sum())


def dense_expm_evolve(gen: GeneratorMatrix, mu0: Distribution, t: float
                      ) -> Distribution:
    """Dense matrix-exponential oracle for small spaces."""
    if gen.dimension > DENSE_ORACLE_BUDGET:
        raise BudgetError(
            f"dense oracle limited to {DENSE_ORACLE_BUDGET} states")
    p = expm(gen.q_matrix.toarray() * t)
    w = mu0.weights @ p
    w = np.maximum(w, 0.0)
    return Distribution(gen.space, w / w.sum())


def evolve_time_dependent(family: RateFamily, lam: Region, schedule: Schedule,
                          boundary: BoundaryRule, mu0: Distribution, t: float,
                          tol: float = 1e-12,
                          assembler: SingleSiteAssembler | None = None
                          ) -> Distribution:
    """Evolve under the time-dependent restriction h(s), exactly.

    The active region is piecewise constant between the integer crossings of
    h, so the flow is a finite product of uniformized segments on the common
    state space of mu0; there is no time-discretisation error.  Passing a
    shared assembler reuses per-site move blocks and generators across runs.
    """
    space = mu0.space
    if assembler is None:
        assembler = SingleSiteAssembler(family, space, boundary)
    elif assembler.space is not space and assembler.space.sites != space.sites:
        raise ValueError("assembler universe does not match mu0")
    segs = segments(schedule, t, lam, space.region)
    current = mu0
    per_seg_tol = tol / max(len(segs), 1)
    for seg in segs:
        gen = assembler.generator(seg.active)
        current = evolve(gen, current, seg.s1 - seg.s0, per_seg_tol)
    return current


def embed_distribution(mu: Distribution, space: StateSpace,
                       fill: dict[Site, int]) -> Distribution:
    """Embed a distribution into a larger state space, assigning the
    deterministic spins ``fill`` to the sites the source does not cover."""
    src = mu.space
    if src.q != space.q:
        raise ValueError("q mismatch")
    if not set(src.sites) <= set(space.sites):
        raise ValueError("source sites must be contained in the target space")
    q = space.q
    const = 0
    src_terms: list[tuple[int, int]] = []  # (source site index, power)
    for s in space.sites:
        power = q ** (space.n_sites - 1 - space.site_index(s))
        if s in src.sites:
            src_terms.append((src.site_index(s), power))
        else:
            const += fill[s] * power
    idx = np.arange(src.n_states)
    full = np.full(src.n_states, const, dtype=np.int64)
    for k, power in src_terms:
        full += src.digit(idx, k) * power
    w = np.zeros(space.n_states)
    np.add.at(w, full, mu.weights)
    return Distribution(space, w)


def marginal(mu: Distribution, sub: Region) -> Distribution:
    """Exact marginal on a sub-region, as a distribution over its own space."""
    sub_space = StateSpace.over(sub, q=mu.space.q)
    idx = mu.space.sub_index(sub)
    w = np.bincount(idx, weights=mu.weights, minlength=sub_space.n_states)
    return Distribution(sub_space, w)


def tv_distance(mu: Distribution, nu: Distribution, sub: Region | None = None
                ) -> float:
    """d_TV over a sub-region: the l1 distance of the marginals, equal to the
    supremum of |mu(f) - nu(f)| over f with ||f||_inf <= 1 measurable there."""
    if sub is not None:
        mu, nu = marginal(mu, sub), marginal(nu, sub)
    if mu.space.sites != nu.space.sites or mu.space.q != nu.space.q:
        raise ValueError("distributions live on different spaces")
    return float(np.abs(mu.weights - nu.weights).sum())


def half_l1(mu: Distribution, nu: Distribution, sub: Region | None = None
            ) -> float:
    """The probabilists' total variation (half the l1 distance), the
    normalisation under which Pinsker's inequality reads d <= sqrt(H/2)."""
    return 0.5 * tv_distance(mu, nu, sub)


STATIONARY_DENSE_BUDGET = 1 << 12


def stationary_distribution(gen: GeneratorMatrix) -> Distribution:
    """Stationary law of an irreducible generator via the transpose null
    space, with the residual ||mu Q||_inf checked below 1e-10."""
    n = gen.dimension
    if n > STATIONARY_DENSE_BUDGET:
        raise BudgetError(
            f"stationary solve limited to {STATIONARY_DENSE_BUDGET} states")
    pattern = (gen.q_matrix - sp.diags(gen.q_matrix.diagonal())).astype(bool)
    n_comp, labels = connected_components(pattern, directed=True,
                                          connection="strong")
    if n_comp > 1:
        closed = _closed_classes(pattern, labels, n_comp)
        raise ValueError(
            f"reducible chain: {n_comp} strong components, "
            f"closed classes {closed}")
    a = np.vstack([gen.q_matrix.toarray().T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    w, *_ = np.linalg.lstsq(a, b, rcond=None)
    w = np.maximum(w, 0.0)
    w /= w.sum()
    residual = float(np.abs(gen.q_transpose @ w).max())
    if residual > 1e-10:
        raise ValueError(f"stationary residual {residual} above 1e-10")
    return Distribution(gen.space, w)


def _closed_classes(pattern: sp.csr_matrix, labels: np.ndarray,
                    n_comp: int) -> list[int]:
    rows, cols = pattern.nonzero()
    leaky = set(labels[rows[labels[rows] != labels[cols]]])
    return sorted(set(range(n_comp)) - leaky)


def expectation(mu: Distribution, f: LocalObservable) -> float:
    idx = mu.space.sub_index(f.support)
    return float(mu.weights @ f.table[idx])


def correlation(gen: GeneratorMatrix, eta0: Configuration | int,
                f: LocalObservable, g: LocalObservable, t: float,
                tol: float = 1e-12) -> float:
    """E_eta0[f g](t) - E_eta0[f](t) E_eta0[g](t), exactly."""
    space = gen.space
    if isinstance(eta0, Configuration):
        start = Distribution.from_configuration(space, eta0)
    else:
        start = Distribution.point_mass(space, eta0)
    mu_t = evolve(gen, start, t, tol)
    efg = expectation(mu_t, _product(f, g))
    return efg - expectation(mu_t, f) * expectation(mu_t, g)


def _product(f: LocalObservable, g: LocalObservable) -> LocalObservable:
    from .observables import product_observable

    return product_observable(f, g)
