"""Multivariate monomial bases with a fixed, portable ordering.

Ordering: ascending total degree; within a degree, exponent tuples sorted
lexicographically descending (first variable's exponent highest first).
Coefficient files tag this as "grlex-desc-first".
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np

ORDERING_TAG = "grlex-desc-first"


def _exponents_of_degree(d: int, m: int):
    """Exponent tuples of total degree m in d variables, grlex-desc-first order."""
    if m == 0:
        return [(0,) * d]
    tuples = set()
    for combo in combinations_with_replacement(range(d), m):
        e = [0] * d
        for i in combo:
            e[i] += 1
        tuples.add(tuple(e))
    return sorted(tuples, reverse=True)


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials in d variables with total degree in [degree_min, degree_max]."""

    d: int
    degree_min: int
    degree_max: int
    exponent_table: tuple

    def __init__(self, d: int, degree_min: int, degree_max: int, exponent_table=None):
        if d < 1 or degree_min < 0 or degree_max < degree_min:
            raise ValueError("invalid basis parameters")
        if exponent_table is None:
            exponent_table = [
                e for m in range(degree_min, degree_max + 1)
                for e in _exponents_of_degree(d, m)
            ]
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "degree_min", degree_min)
        object.__setattr__(self, "degree_max", degree_max)
        object.__setattr__(self, "exponent_table", tuple(tuple(e) for e in exponent_table))

    def __len__(self) -> int:
        return len(self.exponent_table)

    @property
    def size(self) -> int:
        return len(self.exponent_table)

    def expected_size(self) -> int:
        return sum(comb(m + self.d - 1, self.d - 1)
                   for m in range(self.degree_min, self.degree_max + 1))


def monomials(basis: MonomialBasis, q) -> np.ndarray:
    """Evaluate every exponent tuple at q (shape (d,) or (n, d)), in table order."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    pts = q[np.newaxis, :] if single else q
    if pts.shape[1] != basis.d:
        raise ValueError(f"points have dimension {pts.shape[1]}, basis expects {basis.d}")
    cols = np.empty((pts.shape[0], len(basis)))
    for k, expo in enumerate(basis.exponent_table):
        col = np.ones(pts.shape[0])
        for j, e in enumerate(expo):
            if e:
                col = col * pts[:, j] ** e
        cols[:, k] = col
    return cols[0] if single else cols


def monomial_jacobian(basis: MonomialBasis, q) -> np.ndarray:
    """Matrix of partial derivatives, shape (len(basis), d), at a single point q."""
    q = np.asarray(q, dtype=float)
    out = np.zeros((len(basis), basis.d))
    for k, expo in enumerate(basis.exponent_table):
        for j, e in enumerate(expo):
            if e == 0:
                continue
            val = float(e)
            for i, ei in enumerate(expo):
                p = ei - 1 if i == j else ei
                if p:
                    val *= q[i] ** p
            out[k, j] = val
    return out


def extended_graph_basis(d: int, degree_max: int) -> MonomialBasis:
    """Basis over (eta, mu) for parameter-extended charts.

    Keeps every monomial of total degree 1..degree_max except the pure-eta
    linear ones (the tangent plane itself); pure-mu and mixed linear terms
    stay, carrying the anchor drift and tangent tilt.
    """
    full = MonomialBasis(d + 1, 1, degree_max)
    keep = [e for e in full.exponent_table if not (e[-1] == 0 and sum(e) < 2)]
    return MonomialBasis(d + 1, 1, degree_max, exponent_table=keep)
