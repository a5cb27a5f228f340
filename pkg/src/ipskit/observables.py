"""Local observables as explicit tables over the configurations of their
support.  Site order inside a table is the sorted site order, and the flat
index is big-endian in that order (first site = most significant digit),
matching the state enumeration used by the exact engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Region, Site, as_site

OBSERVABLE_SITE_BUDGET = 16


@dataclass(frozen=True)
class LocalObservable:
    sites: tuple[Site, ...]
    table: np.ndarray  # flat, length q**len(sites)
    q: int = 2

    def __post_init__(self):
        if len(self.sites) > OBSERVABLE_SITE_BUDGET:
            raise ValueError(
                f"support has {len(self.sites)} sites "
                f"(> {OBSERVABLE_SITE_BUDGET})")
        if tuple(sorted(self.sites)) != self.sites:
            raise ValueError("sites must be sorted")
        if self.table.shape != (self.q ** len(self.sites),):
            raise ValueError("table length must be q**len(sites)")

    @property
    def support(self) -> Region:
        return Region.of(self.sites)

    def value(self, assignment: dict[Site, int]) -> float:
        idx = 0
        for s in self.sites:
            idx = idx * self.q + assignment[s]
        return float(self.table[idx])

    def cube(self) -> np.ndarray:
        return self.table.reshape((self.q,) * len(self.sites))


def spin_observable(site, q: int = 2) -> LocalObservable:
    """The +-1 spin at one site (q = 2)."""
    if q != 2:
        raise ValueError("spin observable is defined for q = 2")
    return LocalObservable(sites=(as_site(site),),
                           table=np.array([-1.0, 1.0]), q=2)


def product_observable(a: LocalObservable, b: LocalObservable) -> LocalObservable:
    """Pointwise product; supports may overlap."""
    if a.q != b.q:
        raise ValueError("q mismatch")
    sites = tuple(sorted(set(a.sites) | set(b.sites)))
    q = a.q
    n = len(sites)
    table = np.empty(q ** n)
    for idx in range(q ** n):
        digits = _digits(idx, q, n)
        assign = {s: d for s, d in zip(sites, digits)}
        table[idx] = a.value(assign) * b.value(assign)
    return LocalObservable(sites=sites, table=table, q=q)


def _digits(idx: int, q: int, n: int) -> list[int]:
    out = [0] * n
    for k in range(n - 1, -1, -1):
        out[k] = idx % q
        idx //= q
    return out
