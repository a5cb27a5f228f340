"""Lattice geometry on Z^d (d = 1 or 2) with the l1 metric.

Sites, finite regions, blow-ups, decay weights rho(r), and the purely
geometric constants (C_rho, ||rho||, C_{S,L}) and tail sums that enter every
dynamical error bound.  Everything here is exact: region membership uses
integer arithmetic, exponential tail sums use closed-form geometric series,
and power-law tails carry an explicit integral-comparison remainder.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator
from .errors import BudgetError

Site = tuple[int, ...]

SUPPORTED_DIMS = (1, 2)


def as_site(x) -> Site:
    """Coerce an int or coordinate iterable to a site tuple."""
    if isinstance(x, int):
        return (x,)
    return tuple(int(c) for c in x)


def l1(a: Site, b: Site) -> int:
    return sum(abs(u - v) for u, v in zip(a, b))


@dataclass(frozen=True)
class Region:
    """A finite set of lattice sites sharing one dimension."""

    sites: frozenset[Site]
    dim: int

    @classmethod
    def of(cls, sites: Iterable, dim: int | None = None) -> "Region":
        normalized = frozenset(as_site(s) for s in sites)
        if normalized:
            dims = {len(s) for s in normalized}
            if len(dims) != 1:
                raise ValueError(f"sites of mixed dimension: {sorted(dims)}")
            d = dims.pop()
            if dim is not None and dim != d:
                raise ValueError(f"declared dim {dim} != site dim {d}")
            dim = d
        if dim is None:
            raise ValueError("empty region needs an explicit dim")
        if dim not in SUPPORTED_DIMS:
            raise ValueError(f"unsupported dimension {dim}")
        return cls(normalized, dim)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self) -> Iterator[Site]:
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return as_site(site) in self.sites

    def sorted_sites(self) -> tuple[Site, ...]:
        return tuple(sorted(self.sites))

    def diameter(self) -> int:
        pts = list(self.sites)
        if not pts:
            raise ValueError("empty region")
        return max(l1(a, b) for a in pts for b in pts)


def interval(lo: int, hi: int) -> Region:
    """Sites lo..hi inclusive on Z."""
    return Region.of(((x,) for x in range(lo, hi + 1)), dim=1)


def centered_window(radius: int, dim: int = 1) -> Region:
    """l^infinity box of the given radius around the origin (interval in d=1)."""
    if dim == 1:
        return interval(-radius, radius)
    rng = range(-radius, radius + 1)
    return Region.of(((x, y) for x in rng for y in rng), dim=2)


def dist(a: Region, b: Region) -> int:
    """Minimal l1 distance between two nonempty regions of equal dimension."""
    if not a.sites or not b.sites:
        raise ValueError("empty region")
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return min(l1(u, v) for u in a.sites for v in b.sites)


def site_dist(u, region: Region) -> int:
    if not region.sites:
        raise ValueError("empty region")
    s = as_site(u)
    return min(l1(s, v) for v in region.sites)


def blow_up(lam: Region, h: float) -> Region:
    """All sites within l1 distance h of ``lam``.

    Membership is decided by the exact integer comparison dist <= floor(h),
    which is equivalent to dist <= h for real h >= 0 and avoids float
    boundary flicker.
    """
    if h < 0:
        raise ValueError("blow-up radius must be >= 0")
    if not lam.sites:
        raise ValueError("empty region")
    m = math.floor(h)
    out: set[Site] = set()
    if lam.dim == 1:
        xs = [s[0] for s in lam.sites]
        for x in range(min(xs) - m, max(xs) + m + 1):
            if min(abs(x - y) for y in xs) <= m:
                out.add((x,))
    else:
        xs = [s[0] for s in lam.sites]
        ys = [s[1] for s in lam.sites]
        for x in range(min(xs) - m, max(xs) + m + 1):
            for y in range(min(ys) - m, max(ys) + m + 1):
                if min(abs(x - u) + abs(y - v) for u, v in lam.sites) <= m:
                    out.add((x, y))
    return Region.of(out, dim=lam.dim)


@dataclass(frozen=True)
class DecayFunction:
    """Non-increasing strictly positive weight rho(r) for r >= 0.

    kind "exponential": rho(r) = exp(-alpha r)
    kind "power_law":   rho(r) = (1 + r)^(-alpha)
    """

    kind: str
    alpha: float

    EXPONENTIAL = "exponential"
    POWER_LAW = "power_law"

    def __post_init__(self):
        if self.kind not in (self.EXPONENTIAL, self.POWER_LAW):
            raise ValueError(f"unknown decay kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def __call__(self, r: float) -> float:
        if r < 0:
            raise ValueError("rho is defined for r >= 0")
        if self.kind == self.EXPONENTIAL:
            return math.exp(-self.alpha * r)
        return (1.0 + r) ** (-self.alpha)

    def summable(self, dim: int) -> bool:
        """Whether sum_y rho(d(x, y)) converges on Z^dim (the (R4) condition)."""
        if self.kind == self.EXPONENTIAL:
            return True
        return self.alpha > dim


@dataclass(frozen=True)
class TailSum:
    """A tail value together with a rigorous upper bound on what was dropped."""

    value: float
    remainder: float

    @property
    def upper(self) -> float:
        return self.value + self.remainder


def shell_count(dim: int, r: int) -> int:
    """Number of sites of Z^dim at l1 distance exactly r >= 1 from a fixed site."""
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension {dim}")
    if r < 1:
        raise ValueError("r must be >= 1")
    return 2 if dim == 1 else 4 * r

# Cutoff for power-law partial sums; the integral remainder covers the rest.
_POWER_LAW_PARTIAL_TERMS = 4096


def tail_sum(rho: DecayFunction, r: float, dim: int) -> TailSum:
    """Phi(r) = sup_x sum_{d(y,x) > r} rho(d(y,x)) on Z^dim.

    Exponential weights are summed in closed form (remainder 0).  Power-law
    weights return a finite partial sum plus the integral-comparison
    remainder  sum_{k>R} shell(k) (1+k)^(-alpha) <= int_R^inf shell(x) (1+x)^(-alpha) dx,
    so value + remainder is a rigorous upper bound.
    """
    if dim not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension {dim}")
    if r < 0:
        raise ValueError("r must be >= 0")
    if not rho.summable(dim):
        raise ValueError(f"(R4) fails: power-law alpha={rho.alpha} <= dim={dim}")
    m = math.floor(r)  # tail starts at integer distance m + 1
    n = m + 1
    a = rho.alpha
    if rho.kind == DecayFunction.EXPONENTIAL:
        x = math.exp(-a)
        if dim == 1:
            value = 2.0 * x**n / (1.0 - x)
        else:
            # sum_{k>=n} 4 k x^k = 4 x^n (n - (n-1) x) / (1-x)^2
            value = 4.0 * x**n * (n - (n - 1) * x) / (1.0 - x) ** 2
        return TailSum(value, 0.0)
    # power law
    ks = range(n, n + _POWER_LAW_PARTIAL_TERMS)
    value = sum(shell_count(dim, k) * (1.0 + k) ** (-a) for k in ks)
    big_r = n + _POWER_LAW_PARTIAL_TERMS - 1
    u = 1.0 + big_r
    if dim == 1:
        remainder = 2.0 * u ** (1.0 - a) / (a - 1.0)
    else:
        # 4 int_R^inf x (1+x)^(-a) dx = 4 [ u^(2-a)/(a-2) - u^(1-a)/(a-1) ]
        remainder = 4.0 * (u ** (2.0 - a) / (a - 2.0) - u ** (1.0 - a) / (a - 1.0))
    return TailSum(value, remainder)


def rho_norm(rho: DecayFunction, dim: int) -> TailSum:
    """||rho|| = sup_x sum_y rho(d(x,y)), including the on-site term rho(0)."""
    tail = tail_sum(rho, 0.0, dim)
    return TailSum(rho(0.0) + tail.value, tail.remainder)


def region_tail_sum(rho: DecayFunction, lam: Region, radius: float) -> TailSum:
    """sum over x with dist(x, lam) > radius of rho(dist(x, lam)).

    Exact lattice summation of the near part for a general finite region,
    plus the single-site tail beyond the bounding ball (each shell of the
    far tail contributes at most |lam| * shell_count sites).
    """
    if not lam.sites:
        raise ValueError("empty region")
    m = math.floor(radius)
    # For a single site the shell structure is exact: switch to tail_sum.
    if len(lam) == 1:
        return tail_sum(rho, radius, lam.dim)
    # Exact enumeration out to a comfortable horizon, then a crude but
    # rigorous per-shell cap of |lam| sites times the single-site shell.
    horizon = m + 64
    total = 0.0
    enumerated = blow_up(lam, horizon)
    for u in enumerated:
        d = site_dist(u, lam)
        if d > m:
            total += rho(d)
    far = tail_sum(rho, horizon, lam.dim)
    return TailSum(total, len(lam) * far.upper)


@dataclass(frozen=True)
class CRhoCertificate:
    """C_rho together with the numerical evidence backing the analytic value."""

    c_rho: float
    triples_checked: int
    max_ratio: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.c_rho * (1.0 + 1e-12)


def certify_c_rho(rho: DecayFunction, grid_radius: float = 50.0,
                  samples: int = 20000, seed: int = 0) -> CRhoCertificate:
    """Return C_rho = 1 plus a grid certificate for the triangle inequality
    rho(a) rho(b) <= C_rho rho(c) whenever c <= a + b.

    The analytic value holds for both shipped families: exponentials satisfy
    it with equality at c = a + b, and (1+a)(1+b) >= 1 + a + b >= 1 + c gives
    it for power laws of any positive exponent.  The certificate samples
    random admissible triples and records the worst observed ratio.
    """
    import numpy as np

    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, grid_radius, samples)
    b = rng.uniform(0.0, grid_radius, samples)
    c = rng.uniform(0.0, 1.0, samples) * (a + b)
    worst = 0.0
    for ai, bi, ci in zip(a, b, c):
        ratio = rho(ai) * rho(bi) / rho(ci)
        if ratio > worst:
            worst = ratio
    cert = CRhoCertificate(c_rho=1.0, triples_checked=samples, max_ratio=worst)
    if not cert.passed:
        raise AssertionError(
            f"internal inconsistency: observed ratio {worst} exceeds C_rho=1")
    return cert


def c_SL(dim: int, L: float, region_shape: str = "single_site",
         budget: int = 1 << 22) -> int:
    """sup_x #{update regions containing x with diameter < L}.

    "single_site" families have exactly one region per site.  For
    "all_diam_lt_L" the count is obtained by exhaustive enumeration of the
    subsets containing the origin inside the l1 ball of radius ceil(L) - 1
    (any admissible region lies in that ball), which is feasible only for
    small L.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if region_shape == "single_site":
        return 1
    if region_shape != "all_diam_lt_L":
        raise ValueError(f"unknown region shape {region_shape!r}")
    rad = math.ceil(L) - 1
    origin = (0,) * dim
    ball = [s for s in blow_up(Region.of([origin]), rad)]
    others = [s for s in ball if s != origin]
    if 2 ** len(others) > budget:
        raise BudgetError(
            f"enumeration budget exceeded: 2^{len(others)} subsets > {budget}")
    count = 0
    for k in range(len(others) + 1):
        for combo in itertools.combinations(others, k):
            pts = (origin,) + combo
            diam = max(l1(a, b) for a in pts for b in pts)
            if diam < L:
                count += 1
    return count


@dataclass(frozen=True)
class GeometryConstants:
    """Certified geometric constants for one decay weight on Z^dim."""

    dim: int
    c_rho: float
    rho_norm: TailSum
    c_sl: int

    def __post_init__(self):
        if self.c_rho < 1.0:
            raise ValueError("C_rho >= 1 for the shipped decay families")


def geometry_constants(rho: DecayFunction, dim: int, L: float,
                       region_shape: str = "single_site") -> GeometryConstants:
    cert = certify_c_rho(rho)
    return GeometryConstants(
        dim=dim,
        c_rho=cert.c_rho,
        rho_norm=rho_norm(rho, dim),
        c_sl=c_SL(dim, L, region_shape),
    )
