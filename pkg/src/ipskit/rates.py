"""Transition-rate families, oscillations, the influence matrix gamma(y, x),
and the dynamical constants C_1, M_gamma, C_gamma.

Two single-site families ship: independent spin flips (no interaction) and
long-range Ising heat-bath flips with couplings J(r) = beta * rho_J(r)
truncated at radius R_J.  The truncation is part of the model definition:
every inequality in the toolkit is checked against the truncated family, so
all constants below are exact (remainder 0) rather than approximations.

Conventions fixed here and relied on everywhere else:

* Spin values are stored as {0, ..., q-1}; the Ising family (q = 2) maps a
  stored spin s to the physical sign sigma = 2s - 1.
* The energy of flipping site x changes by 2 sigma_x h_x where
  h_x = sum_{0 < d(x,y) <= R_J} J(d(x,y)) sigma_y, i.e. the Hamiltonian is
  normalized to unordered pairs with symmetric couplings.  The flip rate is
  1 / (1 + exp(2 sigma_x h_x)).
* The per-region sup norm used for C_1 is sup_eta sum_xi c(eta, xi), the
  supremum of the total exit rate of the region, and the oscillation
  delta_x c is sup over configuration pairs differing only at x of
  sum_xi |c(eta, xi) - c(eta', xi)|.  Both suprema run over the full
  dependency set of the rate (all sites within R_J), independent of any
  finite window, which makes gamma translation invariant and symmetric for
  symmetric couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import BudgetError
from .geometry import (
    DecayFunction,
    Region,
    Site,
    as_site,
    blow_up,
    l1,
)

OSCILLATION_SITE_BUDGET = 24  # max dependency-set size for exact brute force


@dataclass(frozen=True)
class BoundaryRule:
    """Deterministic frozen spins outside the active window."""

    kind: str  # "all_plus" | "all_minus" | "alternating"

    def spin(self, site, q: int = 2) -> int:
        s = as_site(site)
        if self.kind == "all_plus":
            return q - 1
        if self.kind == "all_minus":
            return 0
        if self.kind == "alternating":
            return (q - 1) * (sum(s) & 1)
        raise ValueError(f"unknown boundary rule {self.kind!r}")

    def sigma(self, site) -> int:
        """Boundary spin as a sign, q = 2 only."""
        return 2 * self.spin(site, 2) - 1


ALL_PLUS = BoundaryRule("all_plus")
ALL_MINUS = BoundaryRule("all_minus")
ALTERNATING = BoundaryRule("alternating")


def pattern_values(window: Region, pattern: str, q: int = 2) -> dict[Site, int]:
    rule = BoundaryRule(pattern)
    return {s: rule.spin(s, q) for s in window}


@dataclass(frozen=True)
class Configuration:
    """Spins on a finite window plus a frozen rule for everything outside."""

    window: Region
    values: dict[Site, int]
    boundary: BoundaryRule
    q: int = 2

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("q must be >= 2")
        missing = self.window.sites - set(self.values)
        if missing:
            raise ValueError(f"window sites without a value: {sorted(missing)[:4]}")
        bad = [v for v in self.values.values() if not 0 <= v < self.q]
        if bad:
            raise ValueError(f"spin values outside 0..{self.q - 1}: {bad[:4]}")

    def spin(self, site) -> int:
        s = as_site(site)
        if s in self.values:
            return self.values[s]
        return self.boundary.spin(s, self.q)

    def sigma(self, site) -> int:
        return 2 * self.spin(site) - 1

    def flipped(self, site) -> "Configuration":
        s = as_site(site)
        if s not in self.window:
            raise ValueError(f"site {s} not in window")
        new = dict(self.values)
        new[s] = (self.q - 1) - new[s]
        return Configuration(self.window, new, self.boundary, self.q)


def configuration(window: Region, pattern: str, boundary: BoundaryRule,
                  q: int = 2) -> Configuration:
    return Configuration(window, pattern_values(window, pattern, q), boundary, q)


@dataclass(frozen=True)
class IndependentFlip:
    """Each site independently jumps to each of the other q-1 values at rate
    flip_rate / (q - 1); total exit rate flip_rate, no interaction."""

    flip_rate: float = 1.0
    q: int = 2
    L: float = 1.0

    name = "independent_flip"

    def __post_init__(self):
        if self.flip_rate <= 0:
            raise ValueError("flip_rate must be positive")

    @property
    def dependency_radius(self) -> int:
        return 0

    def site_rates(self, eta: Configuration, x) -> np.ndarray:
        """Rates of moving site x to each value 0..q-1 (0 for the current one)."""
        out = np.full(self.q, self.flip_rate / (self.q - 1))
        out[eta.spin(x)] = 0.0
        return out


@dataclass(frozen=True)
class LongRangeGlauberIsing:
    """Heat-bath single-spin-flip dynamics with couplings beta * rho_J(r),
    truncated at l1 radius R_J (the truncated model is the model)."""

    beta: float
    rho_j: DecayFunction
    r_j: int
    q: int = 2
    L: float = 1.0

    name = "glauber"

    def __post_init__(self):
        if self.q != 2:
            raise ValueError("unsupported: the Ising family requires q = 2")
        if self.r_j < 1:
            raise ValueError("R_J must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")

    @property
    def dependency_radius(self) -> int:
        return self.r_j

    def coupling(self, r: int) -> float:
        if 1 <= r <= self.r_j:
            return self.beta * self.rho_j(r)
        return 0.0

    def field(self, eta: Configuration, x) -> float:
        """h_x = sum over 0 < d(x,y) <= R_J of J(d) sigma_y."""
        xs = as_site(x)
        ball = blow_up(Region.of([xs]), self.r_j)
        return sum(
            self.coupling(l1(xs, y)) * eta.sigma(y) for y in ball if y != xs
        )

    def flip_rate_at(self, eta: Configuration, x) -> float:
        h = self.field(eta, x)
        return float(expit(-2.0 * eta.sigma(x) * h))

    def site_rates(self, eta: Configuration, x) -> np.ndarray:
        out = np.zeros(2)
        out[1 - eta.spin(x)] = self.flip_rate_at(eta, x)
        return out

    def dependency_couplings(self, dim: int, exclude_dist: int | None = None
                             ) -> list[float]:
        """Coupling magnitudes of all dependency sites of a bulk site, with
        one site at the given distance removed (the oscillating coordinate)."""
        origin = (0,) * dim
        ball = blow_up(Region.of([origin]), self.r_j)
        vals = [self.coupling(l1(origin, z)) for z in ball if z != origin]
        if exclude_dist is not None:
            vals.remove(self.coupling(exclude_dist))
        return vals


RateFamily = IndependentFlip | LongRangeGlauberIsing


def glauber_rate(family: LongRangeGlauberIsing, eta: Configuration, x) -> float:
    """Rate of flipping the spin at x: 1 / (1 + exp(2 sigma_x h_x))."""
    if not isinstance(family, LongRangeGlauberIsing):
        raise TypeError("glauber_rate needs the Ising heat-bath family")
    if as_site(x) not in eta.window:
        raise ValueError(f"site {x} not in the window")
    return family.flip_rate_at(eta, x)


def _min_abs_signed_sum(values: list[float]) -> float:
    """min over sign choices of |sum_i +-v_i|, exact, meet in the middle."""
    if not values:
        return 0.0
    half = len(values) // 2
    left, right = values[:half], values[half:]

    def sums(vs):
        acc = np.zeros(1)
        for v in vs:
            acc = np.concatenate([acc - v, acc + v])
        return acc

    a = np.sort(sums(left))
    b = sums(right)
    idx = np.searchsorted(a, -b)
    best = math.inf
    for i, bi in zip(idx, b):
        for j in (i - 1, i):
            if 0 <= j < len(a):
                best = min(best, abs(a[j] + bi))
    return best


def _sigmoid_gap(h: float, j: float) -> float:
    """sup-difference of the flip rate when the external field shifts by 2j,
    evaluated at the achievable field closest to zero."""
    return float(expit(2.0 * (h + j)) - expit(2.0 * (h - j)))


def oscillation(family: RateFamily, delta_site, x, mode: str = "exact") -> float:
    """delta_x of the update rate at ``delta_site`` for an external site x.

    Exact mode maximises sum_xi |c(eta^{x,i}, xi) - c(eta^{x,j}, xi)| over all
    assignments of the dependency set and spin pairs (i, j) at x; analytic
    mode returns the Lipschitz bound |J(d(x, delta_site))| for the Ising
    family (sigmoid slope <= 1/4, argument shift <= 4|J|).
    """
    y = as_site(delta_site)
    xs = as_site(x)
    if xs == y:
        raise ValueError("oscillation is taken in an external coordinate")
    if isinstance(family, IndependentFlip):
        return 0.0
    dim = len(y)
    d = l1(xs, y)
    j = family.coupling(d)
    if mode == "analytic":
        return j
    if mode != "exact":
        raise ValueError(f"unknown oscillation mode {mode!r}")
    if j == 0.0:
        return 0.0
    ball_size = len(blow_up(Region.of([y]), family.r_j))
    if ball_size > OSCILLATION_SITE_BUDGET:
        raise BudgetError(
            f"dependency set has {ball_size} sites (> {OSCILLATION_SITE_BUDGET}); "
            "use analytic mode")
    others = family.dependency_couplings(dim, exclude_dist=d)
    # The achievable-field set is symmetric and the sigmoid gap decreases in
    # |h|, so the supremum sits at the achievable field of least magnitude.
    h_star = _min_abs_signed_sum(others)
    return _sigmoid_gap(h_star, j)


@dataclass(frozen=True)
class InfluenceMatrix:
    """gamma(y, x) over the sites of a finite window; zero diagonal.

    Row index y is the updated site, column index x the influencing
    coordinate.  ``mode`` records whether entries are exact brute-force
    oscillations or the analytic coupling bound.
    """

    sites: tuple[Site, ...]
    gamma: np.ndarray
    mode: str

    def __post_init__(self):
        n = len(self.sites)
        if self.gamma.shape != (n, n):
            raise ValueError("gamma shape mismatch")

    def index(self, site) -> int:
        return self.sites.index(as_site(site))

    def entry(self, y, x) -> float:
        return float(self.gamma[self.index(y), self.index(x)])

    def row_sum_max(self) -> float:
        """max_y sum_x gamma(y, x) — the l1 operator norm of Gamma."""
        return float(self.gamma.sum(axis=1).max()) if len(self.sites) else 0.0


def displacement_profile(family: RateFamily, dim: int, mode: str = "exact"
                         ) -> dict[int, float]:
    """gamma as a function of l1 displacement r (translation invariant)."""
    if isinstance(family, IndependentFlip):
        return {}
    out: dict[int, float] = {}
    origin = (0,) * dim
    for r in range(1, family.r_j + 1):
        probe = (r,) + (0,) * (dim - 1)
        out[r] = oscillation(family, origin, probe, mode=mode)
    return out


def influence_matrix(family: RateFamily, window: Region,
                     mode: str = "exact") -> InfluenceMatrix:
    """Assemble gamma(y, x) for y, x in the window from oscillations."""
    sites = window.sorted_sites()
    n = len(sites)
    g = np.zeros((n, n))
    profile = displacement_profile(family, window.dim, mode=mode)
    for i, y in enumerate(sites):
        for k, x in enumerate(sites):
            if i == k:
                continue
            g[i, k] = profile.get(l1(y, x), 0.0)
    return InfluenceMatrix(sites=sites, gamma=g, mode=mode)


@dataclass(frozen=True)
class DynamicalConstants:
    """C_1, M_gamma and C_gamma for a rate family, with the truncation radius
    they were computed at.  Shipped families have finite range, so the tail
    remainders are exactly zero."""

    c1: float
    m_gamma: float
    c_gamma: float
    truncation_radius: int
    remainder: float = 0.0
    mode: str = "exact"

    def __post_init__(self):
        for name in ("c1", "m_gamma", "c_gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")


def constants(family: RateFamily, rho: DecayFunction, dim: int = 1,
              mode: str = "analytic") -> DynamicalConstants:
    """Compute the dynamical constants of a family against the weight rho.

    C_1      = sup_x sum_{regions containing x} sup_eta (total exit rate)
    M_gamma  = sup_x sum_{y != x} gamma(x, y)
    C_gamma  = sup_x sum_y gamma(x, y) / rho(d(x, y))

    Sums run over the full lattice; finite interaction range makes them
    exact.  For the Ising family C_1 is the supremum of the heat-bath rate,
    attained with every dependency spin aligned against the flip.
    """
    if isinstance(family, IndependentFlip):
        return DynamicalConstants(
            c1=family.flip_rate, m_gamma=0.0, c_gamma=0.0,
            truncation_radius=0, mode=mode)
    profile = displacement_profile(family, dim, mode=mode)
    h_max = family.beta * sum(
        family.rho_j(r) * shell for r, shell in
        ((r, _shell(dim, r)) for r in range(1, family.r_j + 1))
    )
    c1 = float(expit(2.0 * h_max))
    m_gamma = sum(_shell(dim, r) * v for r, v in profile.items())
    c_gamma = 0.0
    for r, v in profile.items():
        w = rho(r)
        if w <= 0.0:
            raise ValueError("(R3) fails for this rho: zero weight in range")
        c_gamma += _shell(dim, r) * v / w
    return DynamicalConstants(
        c1=c1, m_gamma=float(m_gamma), c_gamma=float(c_gamma),
        truncation_radius=family.r_j, mode=mode)


def _shell(dim: int, r: int) -> int:
    return 2 if dim == 1 else 4 * r
