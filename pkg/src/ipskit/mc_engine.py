"""Kinetic Monte Carlo (direct Gillespie) simulation with a binary-indexed
total-rate tree, time-dependent active regions, likelihood-ratio replays,
and cell estimators with binomial errors.

Randomness
----------
All streams come from numpy's Philox counter-based generator.  Replica i of
a run with base seed s is keyed by ``splitmix64(s, i)``, the i-th output of
the splitmix64 sequence started at s (computed in O(1) as
``mix(s + (i + 1) * 0x9E3779B97F4A7C15)``).  Identical inputs and seed give
byte-identical trajectories; distinct replicas are independent streams.
Estimates are aggregated in replica-index order, so results do not depend on
the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Region, Site, as_site, blow_up, l1
from .rates import (
    BoundaryRule,
    Configuration,
    IndependentFlip,
    LongRangeGlauberIsing,
    RateFamily,
)
from .schedules import Schedule, segments
from .errors import BudgetError

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, index: int = 0) -> int:
    """The (index+1)-th output of the splitmix64 stream seeded at ``seed``."""
    z = (seed + (index + 1) * _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=splitmix64(seed, index)))


class FenwickTree:
    """Prefix-sum tree over nonnegative rates: O(log n) update and sampling."""

    def __init__(self, values: np.ndarray):
        n = len(values)
        self.n = n
        self.tree = np.zeros(n + 1)
        self.values = np.array(values, dtype=float)
        for i, v in enumerate(values):
            self._add(i, v)

    def _add(self, i: int, delta: float):
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def set(self, i: int, value: float):
        self._add(i, value - self.values[i])
        self.values[i] = value

    def total(self) -> float:
        return self._prefix(self.n)

    def _prefix(self, i: int) -> float:
        s = 0.0
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return float(s)

    def find(self, target: float) -> int:
        """Smallest index i with prefix sum over values[0..i] > target."""
        idx = 0
        bit = 1 << (self.n.bit_length())
        rest = target
        while bit:
            nxt = idx + bit
            if nxt <= self.n and self.tree[nxt] <= rest:
                rest -= self.tree[nxt]
                idx = nxt
            bit >>= 1
        return min(idx, self.n - 1)


@dataclass
class Trajectory:
    """A simulated path of a single-site spin dynamics.

    ``events`` holds (time, site, new spin value); ``rate_integral`` is the
    exact integral of the total exit rate along the path, recorded so
    likelihood ratios of speed-ups can be replayed without re-simulation.
    """

    sites: tuple[Site, ...]
    initial: np.ndarray
    events: list[tuple[float, Site, int]]
    t_final: float
    rate_integral: float = 0.0

    @property
    def n_events(self) -> int:
        return len(self.events)

    def final_spins(self) -> np.ndarray:
        out = self.initial.copy()
        index = {s: i for i, s in enumerate(self.sites)}
        for _, site, value in self.events:
            out[index[site]] = value
        return out


class _LocalRates:
    """Per-site flip rates with incremental field maintenance (q = 2 Ising)
    or constant rates (independent flips)."""

    def __init__(self, family: RateFamily, sites: tuple[Site, ...],
                 boundary: BoundaryRule, universe: set[Site]):
        self.family = family
        self.sites = sites
        self.index = {s: i for i, s in enumerate(sites)}
        self.boundary = boundary
        self.universe = universe
        if isinstance(family, LongRangeGlauberIsing):
            self.neighbors: list[list[tuple[int, float]]] = []
            self.frozen_field = np.zeros(len(sites))
            for i, s in enumerate(sites):
                ball = blow_up(Region.of([s]), family.r_j)
                nbrs = []
                frozen = 0.0
                for z in ball:
                    if z == s:
                        continue
                    j = family.coupling(l1(s, z))
                    if z in self.index:
                        nbrs.append((self.index[z], j))
                    else:
                        frozen += j * boundary.sigma(z)
                self.neighbors.append(nbrs)
                self.frozen_field[i] = frozen

    def fields(self, spins: np.ndarray) -> np.ndarray:
        sigma = 2.0 * spins - 1.0
        h = self.frozen_field.copy()
        for i, nbrs in enumerate(self.neighbors):
            for k, j in nbrs:
                h[i] += j * sigma[k]
        return h

    def all_rates(self, spins: np.ndarray, h: np.ndarray | None = None
                  ) -> np.ndarray:
        if isinstance(self.family, IndependentFlip):
            return np.full(len(self.sites), self.family.flip_rate)
        sigma = 2.0 * spins - 1.0
        hh = self.fields(spins) if h is None else h
        return 1.0 / (1.0 + np.exp(2.0 * sigma * hh))

    def rate_of(self, i: int, spins: np.ndarray, h: np.ndarray) -> float:
        if isinstance(self.family, IndependentFlip):
            return self.family.flip_rate
        sigma = 2.0 * spins[i] - 1.0
        return 1.0 / (1.0 + math.exp(2.0 * sigma * h[i]))


class GillespieSimulator:
    """Direct-method simulator for single-site families on a finite site set."""

    def __init__(self, family: RateFamily, active: Region,
                 boundary: BoundaryRule, universe: Region | None = None):
        if family.q != 2 and isinstance(family, LongRangeGlauberIsing):
            raise ValueError("Ising simulation requires q = 2")
        self.family = family
        uni = universe if universe is not None else active
        self.sites = uni.sorted_sites()
        self.active0 = frozenset(active.sites)
        self.boundary = boundary
        self.local = _LocalRates(family, self.sites, boundary, set(self.sites))

    def initial_spins(self, eta0: Configuration) -> np.ndarray:
        return np.array([eta0.spin(s) for s in self.sites], dtype=np.int8)

    def run(self, eta0: Configuration, t: float, rng: np.random.Generator,
            schedule: Schedule | None = None, lam: Region | None = None
            ) -> Trajectory:
        spins = self.initial_spins(eta0)
        if isinstance(self.family, LongRangeGlauberIsing):
            h = self.local.fields(spins)
        else:
            h = np.zeros(len(self.sites))
        if schedule is None:
            segs = [(0.0, t, self.active0)]
        else:
            if lam is None:
                raise ValueError("a schedule needs the base region lam")
            uni = Region.of(self.sites)
            segs = [(s.s0, s.s1, frozenset(s.active.sites))
                    for s in segments(schedule, t, lam, uni)]
        events: list[tuple[float, Site, int]] = []
        rate_integral = 0.0
        n = len(self.sites)
        for s0, s1, active in segs:
            is_active = np.zeros(n, dtype=bool)
            for s in active:
                is_active[self.local.index[s]] = True
            rates = np.zeros(n)
            for i in np.flatnonzero(is_active):
                rates[i] = self.local.rate_of(i, spins, h)
            tree = FenwickTree(rates)
            now = s0
            while True:
                total = tree.total()
                if total <= 0.0:
                    break
                wait = rng.exponential(1.0 / total)
                if now + wait >= s1:
                    rate_integral += total * (s1 - now)
                    break
                rate_integral += total * wait
                now += wait
                i = tree.find(rng.uniform(0.0, total))
                old = spins[i]
                if self.family.q == 2:
                    new = 1 - old
                else:
                    choices = [v for v in range(self.family.q) if v != old]
                    new = choices[rng.integers(len(choices))]
                spins[i] = new
                events.append((now, self.sites[i], int(new)))
                if isinstance(self.family, LongRangeGlauberIsing):
                    sigma_new = 2.0 * new - 1.0
                    for k, j in self.local.neighbors[i]:
                        h[k] += 2.0 * j * sigma_new
                    tree.set(i, self.local.rate_of(i, spins, h))
                    for k, _ in self.local.neighbors[i]:
                        if is_active[k]:
                            tree.set(k, self.local.rate_of(k, spins, h))
                # independent flips keep constant rates: nothing to update
        return Trajectory(sites=self.sites, initial=self.initial_spins(eta0),
                          events=events, t_final=t,
                          rate_integral=rate_integral)

    def recomputed_fields(self, spins: np.ndarray) -> np.ndarray:
        """From-scratch fields, for cross-checking the incremental cache."""
        return self.local.fields(spins)


def simulate(family: RateFamily, active: Region, boundary: BoundaryRule,
             eta0: Configuration, t: float, seed: int) -> Trajectory:
    """One Gillespie path; same seed, same trajectory, byte for byte."""
    sim = GillespieSimulator(family, active, boundary)
    return sim.run(eta0, t, make_rng(seed))


def simulate_time_dependent(family: RateFamily, lam: Region,
                            schedule: Schedule, boundary: BoundaryRule,
                            eta0: Configuration, t: float, seed: int,
                            universe: Region) -> Trajectory:
    """Gillespie path with the active region following h(s) exactly; newly
    frozen sites keep their current spins, newly active ones rejoin the
    total-rate bookkeeping at the segment boundary."""
    sim = GillespieSimulator(family, universe, boundary, universe=universe)
    return sim.run(eta0, t, make_rng(seed), schedule=schedule, lam=lam)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    replicas: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0 or self.replicas < 1:
            raise ValueError("invalid estimate")


def _run_replica_block(args) -> np.ndarray:
    (family, active, boundary, eta0, t, sub_sites, q,
     base_seed, lo, hi, schedule, lam, universe) = args
    sim = GillespieSimulator(family, active, boundary, universe=universe)
    sub_pos = [sim.sites.index(s) for s in sub_sites]
    counts = np.zeros(q ** len(sub_sites), dtype=np.int64)
    for i in range(lo, hi):
        traj = sim.run(eta0, t, make_rng(base_seed, i),
                       schedule=schedule, lam=lam)
        spins = traj.final_spins()
        cell = 0
        for p in sub_pos:
            cell = cell * q + int(spins[p])
        counts[cell] += 1
    return counts


def estimate_marginal(family: RateFamily, active: Region,
                      boundary: BoundaryRule, eta0: Configuration, t: float,
                      sub: Region, replicas: int, base_seed: int,
                      threads: int = 1, schedule: Schedule | None = None,
                      lam: Region | None = None,
                      universe: Region | None = None
                      ) -> dict[tuple[int, ...], Estimate]:
    """Empirical marginal cells on Omega_sub with binomial standard errors."""
    q = family.q
    sub_sites = sub.sorted_sites()
    n_cells = q ** len(sub_sites)
    if n_cells > 256:
        raise BudgetError("marginal estimation limited to 256 cells")
    blocks = _split_blocks(replicas, threads)
    args = [(family, active, boundary, eta0, t, sub_sites, q,
             base_seed, lo, hi, schedule, lam, universe) for lo, hi in blocks]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(_run_replica_block, args))
    else:
        partials = [_run_replica_block(a) for a in args]
    counts = np.zeros(n_cells, dtype=np.int64)
    for p in partials:  # replica-index order
        counts += p
    out = {}
    for cell in range(n_cells):
        freq = counts[cell] / replicas
        se = math.sqrt(freq * (1.0 - freq) / replicas)
        key = _cell_key(cell, q, len(sub_sites))
        out[key] = Estimate(value=float(freq), std_error=se,
                            replicas=replicas, seed=base_seed)
    return out


def _cell_key(cell: int, q: int, n: int) -> tuple[int, ...]:
    digits = []
    for _ in range(n):
        digits.append(cell % q)
        cell //= q
    return tuple(reversed(digits))


def _split_blocks(replicas: int, threads: int) -> list[tuple[int, int]]:
    if threads <= 1:
        return [(0, replicas)]
    size = math.ceil(replicas / threads)
    return [(lo, min(lo + size, replicas))
            for lo in range(0, replicas, size) if lo < replicas]


# ---------------------------------------------------------------------------
# Finite-chain paths and the likelihood-ratio (Girsanov) replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainTrajectory:
    """A cadlag path of a finite-state CTMC: jump times and targets."""

    x0: int
    jumps: tuple[tuple[float, int], ...]
    t_final: float

    def state_at(self, s: float) -> int:
        x = self.x0
        for time, target in self.jumps:
            if time <= s:
                x = target
            else:
                break
        return x


def simulate_chain(q_matrix: np.ndarray, x0: int, t: float,
                   rng: np.random.Generator) -> ChainTrajectory:
    """Direct Gillespie on an explicit generator matrix."""
    q = np.asarray(q_matrix, dtype=float)
    n = q.shape[0]
    x = x0
    now = 0.0
    jumps = []
    while True:
        rates = q[x].copy()
        rates[x] = 0.0
        total = rates.sum()
        if total <= 0.0:
            break
        wait = rng.exponential(1.0 / total)
        if now + wait >= t:
            break
        now += wait
        x = int(rng.choice(n, p=rates / total))
        jumps.append((now, x))
    return ChainTrajectory(x0=x0, jumps=tuple(jumps), t_final=t)


@dataclass(frozen=True)
class TimedGenerator:
    """Piecewise-constant time-dependent generator on [0, t]."""

    breaks: tuple[float, ...]  # ascending, starting at 0.0
    matrices: tuple[np.ndarray, ...]  # one per interval

    @classmethod
    def constant(cls, q_matrix: np.ndarray, t: float) -> "TimedGenerator":
        return cls(breaks=(0.0, t), matrices=(np.asarray(q_matrix, float),))

    def at(self, s: float) -> np.ndarray:
        for i in range(len(self.matrices)):
            if s < self.breaks[i + 1]:
                return self.matrices[i]
        return self.matrices[-1]

    def cut_points(self) -> list[float]:
        return list(self.breaks)


def girsanov_log_weight(traj: ChainTrajectory, num: TimedGenerator,
                        den: TimedGenerator) -> float:
    """log dQ/dQ' along the path, where Q has rates ``num`` and Q' ``den``:

        -int_0^t sum_{y != X(s)} (num - den)(X(s), y) ds
        + sum_jumps log( num(X(s-), X(s)) / den(X(s-), X(s)) ).

    Rates are piecewise constant in time, so the compensator integral is
    exact.  A jump with zero ``den`` rate but positive ``num`` rate violates
    absolute continuity and raises; zero ``num`` rate gives -inf.
    """
    cuts = sorted(set(num.cut_points()) | set(den.cut_points())
                  | {time for time, _ in traj.jumps} | {0.0, traj.t_final})
    cuts = [c for c in cuts if 0.0 <= c <= traj.t_final]
    compensator = 0.0
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        if s1 <= s0:
            continue
        mid = 0.5 * (s0 + s1)
        x = traj.state_at(mid)
        qn, qd = num.at(mid), den.at(mid)
        delta = (qn[x].sum() - qn[x, x]) - (qd[x].sum() - qd[x, x])
        compensator += delta * (s1 - s0)
    log_jumps = 0.0
    prev = traj.x0
    for time, target in traj.jumps:
        qn, qd = num.at(time), den.at(time)
        rn, rd = qn[prev, target], qd[prev, target]
        if rd == 0.0:
            raise ValueError(
                f"support violation: jump {prev}->{target} has zero "
                "denominator rate")
        if rn == 0.0:
            return -math.inf
        log_jumps += math.log(rn / rd)
        prev = target
    return -compensator + log_jumps


def speedup_log_weight(traj: ChainTrajectory, base: np.ndarray,
                       lam: float) -> float:
    """log dP^lambda/dP for a constant speed-up of a homogeneous chain:
    (#jumps) log lambda - (lambda - 1) int_0^t R(X(s)) ds."""
    q = np.asarray(base, dtype=float)
    exit_rates = -np.diag(q)
    integral = 0.0
    prev_t, x = 0.0, traj.x0
    for time, target in traj.jumps:
        integral += exit_rates[x] * (time - prev_t)
        prev_t, x = time, target
    integral += exit_rates[x] * (traj.t_final - prev_t)
    return len(traj.jumps) * math.log(lam) - (lam - 1.0) * integral
