"""Finite-time Lyapunov exponent fields on 2D planes in phase space.

The flow map is differenced in the two plane directions around each grid
point (full N-dimensional probes; only initial conditions live on the plane),
giving the Cauchy-Green tensor and FTLE = log(lambda_max)/(2|t - t0|).
Ridges of the field estimate basin boundaries.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ModelFormatError
from .simulate import flow_map_batch


@dataclass(frozen=True)
class PlaneSpec:
    """base + s1*basis[0] + s2*basis[1] with an (n1 x n2) grid over the extents."""

    base: np.ndarray
    basis: np.ndarray            # (2, N) orthonormal rows
    n1: int
    n2: int
    extent1: tuple               # (lo, hi) along basis[0]
    extent2: tuple

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        if basis.shape != (2, base.size):
            raise ModelFormatError("plane basis must be two N-vectors")
        G = basis @ basis.T
        if np.max(np.abs(G - np.eye(2))) > 1e-10:
            raise ModelFormatError("plane basis must be orthonormal (1e-10)")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)

    def coords(self):
        s1 = np.linspace(self.extent1[0], self.extent1[1], self.n1)
        s2 = np.linspace(self.extent2[0], self.extent2[1], self.n2)
        return s1, s2

    def point(self, a: float, b: float) -> np.ndarray:
        return self.base + a * self.basis[0] + b * self.basis[1]


@dataclass
class FtleField:
    values: np.ndarray           # (n1, n2), NaN where masked
    mask: np.ndarray             # True where the computation failed
    plane: PlaneSpec
    horizon: tuple               # (t0, t)
    fd_step: float


def cauchy_green(DF: np.ndarray) -> np.ndarray:
    """C = DF^T DF for an (N, 2) flow-map gradient; symmetric PSD by construction."""
    DF = np.asarray(DF, dtype=float)
    return DF.T @ DF


def flow_map_gradient_on_plane(model, u, plane: PlaneSpec, point_idx, horizon,
                               h: float, dt: float = 1e-2):
    """Central differences of the full flow map in the two plane directions.

    Returns (DF (N, 2), ok).  Probes are full states offset from the grid
    point; they evolve under the complete vector field.
    """
    i, j = point_idx
    s1, s2 = plane.coords()
    p = plane.point(s1[i], s2[j])
    probes = np.array([p + h * plane.basis[0], p - h * plane.basis[0],
                       p + h * plane.basis[1], p - h * plane.basis[1]])
    t0, t1 = horizon
    Xf, ok = flow_map_batch(model, u, probes, t1 - t0, dt)
    if not np.all(ok):
        return None, False
    DF = np.column_stack([(Xf[0] - Xf[1]) / (2 * h), (Xf[2] - Xf[3]) / (2 * h)])
    return DF, True


def _ftle_from_gradient(DF: np.ndarray, span: float) -> float:
    C = cauchy_green(DF)
    lam_max = float(np.max(np.linalg.eigvalsh(C)))
    if lam_max <= 0:
        return -np.inf
    return float(np.log(lam_max) / (2.0 * abs(span)))


def ftle_field(model, u, plane: PlaneSpec, horizon, h: Optional[float] = None,
               dt: float = 1e-2, threads: Optional[int] = None) -> FtleField:
    """FTLE at every plane grid point; diverging probes are masked.

    The default finite-difference step is 1e-4 of the larger plane extent.
    All probes integrate as one batch (or a few, when threads > 1).
    """
    t0, t1 = horizon
    span = t1 - t0
    if span <= 0:
        raise ModelFormatError("horizon must have positive length")
    ext = max(plane.extent1[1] - plane.extent1[0],
              plane.extent2[1] - plane.extent2[0])
    if h is None:
        h = 1e-4 * ext
    s1, s2 = plane.coords()
    pts = np.array([plane.point(a, b) for a in s1 for b in s2])
    probes = np.concatenate([
        pts + h * plane.basis[0], pts - h * plane.basis[0],
        pts + h * plane.basis[1], pts - h * plane.basis[1]])

    if threads is None:
        threads = int(os.environ.get("SSMR_THREADS", "1") or "1")
    if threads > 1:
        chunks = np.array_split(np.arange(len(probes)), threads)
        results = [None] * threads
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(flow_map_batch, model, u, probes[c], span, dt): k
                    for k, c in enumerate(chunks) if len(c)}
            for fut, k in futs.items():
                results[k] = fut.result()
        Xf = np.concatenate([r[0] for r in results if r is not None])
        ok = np.concatenate([r[1] for r in results if r is not None])
    else:
        Xf, ok = flow_map_batch(model, u, probes, span, dt)

    n_pts = len(pts)
    values = np.full((plane.n1, plane.n2), np.nan)
    mask = np.zeros((plane.n1, plane.n2), dtype=bool)
    for idx in range(n_pts):
        i, j = divmod(idx, plane.n2)
        rows = [idx, idx + n_pts, idx + 2 * n_pts, idx + 3 * n_pts]
        if not all(ok[r] for r in rows):
            mask[i, j] = True
            continue
        DF = np.column_stack([(Xf[rows[0]] - Xf[rows[1]]) / (2 * h),
                              (Xf[rows[2]] - Xf[rows[3]]) / (2 * h)])
        values[i, j] = _ftle_from_gradient(DF, span)
    field_out = FtleField(values=values, mask=mask, plane=plane,
                          horizon=(float(t0), float(t1)), fd_step=float(h))
    if mask.mean() > 0.5:
        import warnings

        warnings.warn(f"{100 * mask.mean():.0f}% of FTLE grid points are masked")
    return field_out


def extract_ridges(field: FtleField, quantile: float = 0.95) -> list:
    """Chains of above-quantile points that are strict maxima across the ridge.

    A point passes when it is a strict maximum along the snapped gradient
    direction or its perpendicular: a crest sampled off-center has its
    gradient across the ridge, one on the crest line has it along, and a
    featureless slope is monotone in both.  Chains shorter than 3 points are
    dropped.  Returns a list of (k, 2) polylines in plane coordinates.
    """
    V = field.values
    n1, n2 = V.shape
    finite = np.isfinite(V)
    if not np.any(finite):
        return []
    thresh = float(np.quantile(V[finite], quantile))
    s1, s2 = field.plane.coords()

    def strict_max_along(i, j, di, dj):
        ia, ja, ib, jb = i + di, j + dj, i - di, j - dj
        return (0 <= ia < n1 and 0 <= ja < n2 and 0 <= ib < n1 and 0 <= jb < n2
                and finite[ia, ja] and finite[ib, jb]
                and V[i, j] > V[ia, ja] and V[i, j] > V[ib, jb])

    candidates = set()
    for i in range(1, n1 - 1):
        for j in range(1, n2 - 1):
            if not finite[i, j] or V[i, j] < thresh:
                continue
            if not (finite[i - 1, j] and finite[i + 1, j]
                    and finite[i, j - 1] and finite[i, j + 1]):
                continue
            gx = (V[i + 1, j] - V[i - 1, j]) / 2.0
            gy = (V[i, j + 1] - V[i, j - 1]) / 2.0
            gnorm = np.hypot(gx, gy)
            scale = max(abs(V[i, j]), 1e-30)
            if gnorm < 1e-9 * scale:
                if strict_max_along(i, j, 1, 0) or strict_max_along(i, j, 0, 1):
                    candidates.add((i, j))
                continue
            gi = int(np.round(gx / gnorm))
            gj = int(np.round(gy / gnorm))
            ti, tj = -gj, gi
            if (gi or gj) and strict_max_along(i, j, gi, gj):
                candidates.add((i, j))
            elif (ti or tj) and strict_max_along(i, j, ti, tj):
                candidates.add((i, j))

    # 8-neighborhood connected components, each ordered into a polyline
    polylines = []
    remaining = set(candidates)
    while remaining:
        seed = next(iter(remaining))
        comp = [seed]
        remaining.discard(seed)
        queue = [seed]
        while queue:
            ci, cj = queue.pop()
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    nb = (ci + di, cj + dj)
                    if nb in remaining:
                        remaining.discard(nb)
                        comp.append(nb)
                        queue.append(nb)
        if len(comp) < 3:
            continue
        pts = np.array([(s1[i], s2[j]) for i, j in comp])
        center = pts.mean(axis=0)
        principal = np.linalg.svd(pts - center, full_matrices=False)[2][0]
        order = np.argsort((pts - center) @ principal)
        polylines.append(pts[order])
    return polylines


def save_field_csv(field: FtleField, path) -> None:
    import csv

    from .simulate import format_float

    s1, s2 = field.plane.coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "eta1", "eta2", "ftle", "masked"])
        for i in range(field.plane.n1):
            for j in range(field.plane.n2):
                v = field.values[i, j]
                writer.writerow([i, j, format_float(s1[i]), format_float(s2[j]),
                                 "" if not np.isfinite(v) else format_float(v),
                                 int(field.mask[i, j])])


def save_ridges_csv(polylines: list, path) -> None:
    import csv

    from .simulate import format_float

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain_id", "eta1", "eta2"])
        for cid, poly in enumerate(polylines):
            for a, b in poly:
                writer.writerow([cid, format_float(a), format_float(b)])


def save_plane_json(plane: PlaneSpec, path) -> None:
    import json

    doc = {"base": plane.base.tolist(), "basis": plane.basis.tolist(),
           "n1": plane.n1, "n2": plane.n2,
           "extent1": list(plane.extent1), "extent2": list(plane.extent2)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
