"""Truncated multivariate polynomial maps used by the invariance recursion.

A polynomial map R^d -> C^K is a dict {exponent tuple: (K,) coefficient
array}; a scalar polynomial uses plain complex coefficients.  Everything is
truncated at a caller-chosen total degree, which keeps the order-by-order
solves exact.
"""

from __future__ import annotations

import numpy as np


def pm_add(a: dict, b: dict) -> dict:
    out = dict(a)
    for e, c in b.items():
        out[e] = out[e] + c if e in out else c
    return out


def pm_scale(a: dict, s) -> dict:
    return {e: s * c for e, c in a.items()}


def pm_mul(a: dict, b: dict, max_deg: int) -> dict:
    """Product of two scalar polynomials, truncated at total degree max_deg."""
    out = {}
    for ea, ca in a.items():
        da = sum(ea)
        for eb, cb in b.items():
            if da + sum(eb) > max_deg:
                continue
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return out


def pm_pow(a: dict, p: int, max_deg: int, d: int) -> dict:
    out = {(0,) * d: 1.0 + 0.0j}
    for _ in range(p):
        out = pm_mul(out, a, max_deg)
    return out


def pm_diff(a: dict, j: int) -> dict:
    """Partial derivative of a polynomial (scalar or vector coefficients)."""
    out = {}
    for e, c in a.items():
        if e[j] == 0:
            continue
        e2 = tuple(x - 1 if i == j else x for i, x in enumerate(e))
        out[e2] = out.get(e2, 0.0) + e[j] * c
    return out


def pm_degree_terms(a: dict, m: int) -> dict:
    return {e: c for e, c in a.items() if sum(e) == m}


def pm_truncate(a: dict, max_deg: int) -> dict:
    return {e: c for e, c in a.items() if sum(e) <= max_deg}


def pm_component(vec: dict, k: int) -> dict:
    """Scalar polynomial for one component of a vector-valued map."""
    return {e: c[k] for e, c in vec.items()}


def pm_apply_matrix(M: np.ndarray, vec: dict) -> dict:
    return {e: M @ c for e, c in vec.items()}


def pm_vector_from_scalars(scalars: list) -> dict:
    """Stack K scalar polynomials into one vector-valued map."""
    keys = set()
    for s in scalars:
        keys.update(s.keys())
    out = {}
    for e in keys:
        out[e] = np.array([s.get(e, 0.0) for s in scalars])
    return out


def pm_compose_linear(a: dict, C: np.ndarray, max_deg: int) -> dict:
    """Substitute p = C r into a polynomial map over p (C is d x d)."""
    d_new = C.shape[1]
    subs = []
    for i in range(C.shape[0]):
        s = {}
        for j in range(d_new):
            if C[i, j] != 0:
                s[tuple(int(k == j) for k in range(d_new))] = C[i, j]
        subs.append(s)
    return pm_compose(a, subs, max_deg, d_new)


def pm_compose(a: dict, subs: list, max_deg: int, d_new: int) -> dict:
    """Substitute each variable of a with the scalar polynomial subs[i]."""
    out = {}
    zero = (0,) * d_new
    for e, c in a.items():
        term = {zero: 1.0 + 0.0j}
        for i, p in enumerate(e):
            if p:
                term = pm_mul(term, pm_pow(subs[i], p, max_deg, d_new), max_deg)
        for e2, s in term.items():
            val = s * c if np.isscalar(c) else s * np.asarray(c)
            out[e2] = out.get(e2, 0.0) + val
    return out


def pm_eval(a: dict, point: np.ndarray):
    """Evaluate a polynomial map at a point."""
    total = 0.0
    for e, c in a.items():
        mono = 1.0
        for x, p in zip(point, e):
            if p:
                mono *= x ** p
        total = total + mono * c
    return total
