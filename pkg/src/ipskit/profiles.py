"""Piecewise-affine rate profiles and the speed-up profiles they induce.

Profiles are restricted to families with closed-form integrals so that
every cost, shift, and constraint below is exact:

* ``RateProfile``: f(s) = a s + b per piece, strictly positive.
* ``SpeedUpProfile``: lambda(s) = 1 + c / (a s + b) per piece; a constant
  speed-up is the piece a = 0, b = 1, c = lambda - 1.

The induced time change T(s) = int_0^s lambda and the quadratic cost
int cap(s) (lambda(s) - 1)^2 ds are evaluated in closed form as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Piece:
    s0: float
    s1: float
    a: float
    b: float

    def value(self, s: float) -> float:
        return self.a * s + self.b

    def integral(self) -> float:
        return 0.5 * self.a * (self.s1**2 - self.s0**2) + self.b * (self.s1 - self.s0)

    def integral_reciprocal(self) -> float:
        if self.a == 0.0:
            return (self.s1 - self.s0) / self.b
        return math.log(self.value(self.s1) / self.value(self.s0)) / self.a


@dataclass(frozen=True)
class RateProfile:
    """Strictly positive piecewise-affine function on [0, t]."""

    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("empty profile")
        prev = 0.0
        for p in self.pieces:
            if not math.isclose(p.s0, prev, abs_tol=1e-12):
                raise ValueError("pieces must tile [0, t] contiguously")
            if p.s1 <= p.s0:
                raise ValueError("degenerate piece")
            if p.value(p.s0) <= 0.0 or p.value(p.s1) <= 0.0:
                raise ValueError("profile must be strictly positive")
            prev = p.s1

    @classmethod
    def constant(cls, c: float, t: float) -> "RateProfile":
        return cls((Piece(0.0, t, 0.0, c),))

    @classmethod
    def affine(cls, a: float, b: float, t: float) -> "RateProfile":
        return cls((Piece(0.0, t, a, b),))

    @classmethod
    def piecewise_constant(cls, breaks, values) -> "RateProfile":
        if len(breaks) != len(values) + 1:
            raise ValueError("need one more break than values")
        return cls(tuple(Piece(s0, s1, 0.0, v)
                         for s0, s1, v in zip(breaks[:-1], breaks[1:], values)))

    @property
    def t_end(self) -> float:
        return self.pieces[-1].s1

    def value(self, s: float) -> float:
        for p in self.pieces:
            if s < p.s1:
                return p.value(s)
        return self.pieces[-1].value(s)

    def integral(self) -> float:
        return sum(p.integral() for p in self.pieces)

    def integral_reciprocal(self) -> float:
        return sum(p.integral_reciprocal() for p in self.pieces)

    def breakpoints(self) -> list[float]:
        return [p.s0 for p in self.pieces] + [self.t_end]


@dataclass(frozen=True)
class SpeedPiece:
    s0: float
    s1: float
    a: float
    b: float
    c: float  # lambda(s) = 1 + c / (a s + b)

    def value(self, s: float) -> float:
        return 1.0 + self.c / (self.a * s + self.b)

    def shift(self) -> float:
        """int (lambda - 1) over the piece."""
        if self.a == 0.0:
            return self.c * (self.s1 - self.s0) / self.b
        return (self.c / self.a) * math.log(
            (self.a * self.s1 + self.b) / (self.a * self.s0 + self.b))

    def shift_until(self, s: float) -> float:
        if self.a == 0.0:
            return self.c * (s - self.s0) / self.b
        return (self.c / self.a) * math.log(
            (self.a * s + self.b) / (self.a * self.s0 + self.b))


@dataclass(frozen=True)
class SpeedUpProfile:
    pieces: tuple[SpeedPiece, ...]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("empty profile")
        prev = 0.0
        for p in self.pieces:
            if not math.isclose(p.s0, prev, abs_tol=1e-12):
                raise ValueError("pieces must tile [0, t] contiguously")
            if p.s1 <= p.s0:
                raise ValueError("degenerate piece")
            if p.value(p.s0) <= 0.0 or p.value(p.s1) <= 0.0:
                raise ValueError("lambda must stay positive")
            prev = p.s1

    @classmethod
    def constant(cls, lam: float, t: float) -> "SpeedUpProfile":
        return cls((SpeedPiece(0.0, t, 0.0, 1.0, lam - 1.0),))

    @classmethod
    def piecewise_constant(cls, breaks, values) -> "SpeedUpProfile":
        if len(breaks) != len(values) + 1:
            raise ValueError("need one more break than values")
        return cls(tuple(SpeedPiece(s0, s1, 0.0, 1.0, v - 1.0)
                         for s0, s1, v in zip(breaks[:-1], breaks[1:], values)))

    @property
    def t_end(self) -> float:
        return self.pieces[-1].s1

    def value(self, s: float) -> float:
        for p in self.pieces:
            if s < p.s1:
                return p.value(s)
        return self.pieces[-1].value(s)

    def shift(self) -> float:
        """Total time shift int_0^t (lambda - 1)."""
        return sum(p.shift() for p in self.pieces)

    def time_change(self, s: float) -> float:
        """T(s) = int_0^s lambda(r) dr, exact."""
        total = s
        for p in self.pieces:
            if s <= p.s0:
                break
            total += p.shift() if s >= p.s1 else p.shift_until(s)
        return total

    def breakpoints(self) -> list[float]:
        return [p.s0 for p in self.pieces] + [self.t_end]


def quadratic_cost(cap: RateProfile, lam: SpeedUpProfile) -> float:
    """int_0^t cap(s) (lambda(s) - 1)^2 ds in closed form.

    cap is affine per piece, (lambda - 1)^2 = c^2 / (a s + b)^2 per piece;
    the antiderivative of (p s + q) / (a s + b)^2 is
    (1/a^2) [ p log(a s + b) + (p b - q a) / (a s + b) ]  for a != 0.
    """
    if not math.isclose(cap.t_end, lam.t_end, abs_tol=1e-12):
        raise ValueError("profiles must cover the same horizon")
    cuts = sorted(set(cap.breakpoints()) | set(lam.breakpoints()))
    total = 0.0
    for s0, s1 in zip(cuts[:-1], cuts[1:]):
        if s1 <= s0:
            continue
        mid = 0.5 * (s0 + s1)
        cpiece = next(p for p in cap.pieces if p.s0 <= mid < p.s1)
        lpiece = next(p for p in lam.pieces if p.s0 <= mid < p.s1)
        p_, q_ = cpiece.a, cpiece.b
        a, b, c = lpiece.a, lpiece.b, lpiece.c
        if a == 0.0:
            factor = (c / b) ** 2
            total += factor * (0.5 * p_ * (s1**2 - s0**2) + q_ * (s1 - s0))
        else:
            def anti(s):
                u = a * s + b
                return (p_ * math.log(u) + (p_ * b - q_ * a) / u) / a**2
            total += c**2 * (anti(s1) - anti(s0))
    return total
