"""Time-dependent restriction radii h(s) and their exact breakpoints.

A schedule is affine, h(s) = a s + b on [0, t].  The active region at time s
is the h(s)-blow-up of a base region intersected with the computational
universe, and since region membership compares integer distances against
floor(h), the active set changes only when h crosses an integer.  Segment
boundaries are computed exactly, so piecewise-constant-generator evolution
carries no time-discretisation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Region, blow_up


@dataclass(frozen=True)
class Schedule:
    """h(s) = a s + b."""

    a: float
    b: float

    def __call__(self, s: float) -> float:
        return self.a * s + self.b

    @classmethod
    def constant(cls, h: float) -> "Schedule":
        return cls(0.0, h)

    @classmethod
    def backward_linear(cls, slope: float, t: float, offset: float) -> "Schedule":
        """h(s) = slope * (t - s) + offset, non-increasing."""
        return cls(-slope, slope * t + offset)

    @classmethod
    def forward_linear(cls, slope: float, offset: float) -> "Schedule":
        """h(s) = slope * s + offset, non-decreasing."""
        return cls(slope, offset)

    def integer_crossings(self, t: float) -> list[float]:
        """Times in (0, t) where h(s) crosses an integer value."""
        if self.a == 0.0:
            return []
        h0, h1 = self(0.0), self(t)
        lo, hi = min(h0, h1), max(h0, h1)
        out = []
        for m in range(math.ceil(lo), math.floor(hi) + 1):
            s = (m - self.b) / self.a
            if 0.0 < s < t:
                out.append(s)
        return sorted(out)


@dataclass(frozen=True)
class Segment:
    s0: float
    s1: float
    active: Region


def active_region(lam: Region, universe: Region, h: float) -> Region:
    grown = blow_up(lam, max(h, 0.0))
    return Region.of(grown.sites & universe.sites, dim=universe.dim)


def segments(schedule: Schedule, t: float, lam: Region,
             universe: Region) -> list[Segment]:
    """Exact piecewise-constant decomposition of the active region on [0, t].

    Each segment's region is evaluated at its midpoint; endpoints where h is
    exactly an integer carry no Lebesgue weight.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    cuts = [0.0] + schedule.integer_crossings(t) + [t]
    out: list[Segment] = []
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        if s1 <= s0:
            continue
        mid = 0.5 * (s0 + s1)
        active = active_region(lam, universe, schedule(mid))
        if out and out[-1].active.sites == active.sites:
            out[-1] = Segment(out[-1].s0, s1, active)
        else:
            out.append(Segment(s0, s1, active))
    return out
