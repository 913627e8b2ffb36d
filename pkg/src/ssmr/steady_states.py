"""Fixed points, linear spectra, spectral-subspace selection, and continuation.

Conventions: eigenvalues are sorted by descending real part with conjugate
pairs adjacent (positive imaginary part first); the realifier uses the
standard (a, b; -b, a) blocks so reduced coordinates are always real.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import models
from .errors import ModelFormatError, SsmrError

HYPERBOLICITY_TOL = 1e-8
NEWTON_TOL = 1e-10
DEDUP_TOL = 1e-6


@dataclass(frozen=True)
class FixedPoint:
    x0: np.ndarray
    u: Optional[np.ndarray]
    residual_norm: float
    stability: str  # stable / unstable / nonhyperbolic

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.u is not None:
            object.__setattr__(self, "u", np.asarray(self.u, dtype=float))


@dataclass
class FixedPointSet:
    """Converged, deduplicated roots plus seed-convergence diagnostics."""

    points: list
    n_seeds: int = 0
    n_converged: int = 0
    n_failed: int = 0

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def classify_stability(eigenvalues, tol: float = HYPERBOLICITY_TOL) -> str:
    re = np.real(eigenvalues)
    if np.any(np.abs(re) <= tol):
        return "nonhyperbolic"
    return "unstable" if np.any(re > tol) else "stable"


def _newton(model, u, x0, tol, max_iter):
    """Damped Newton with backtracking on ||rhs||^2 (factor 0.5, <= 30 halvings)."""
    x = np.asarray(x0, dtype=float).copy()
    r = models.rhs(model, x, u)
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if nr <= tol:
            return x, nr
        J = models.jacobian(model, x, u)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        s = 1.0
        base = nr * nr
        for _ in range(30):
            x_new = x + s * step
            r_new = models.rhs(model, x_new, u)
            if float(r_new @ r_new) < base:
                break
            s *= 0.5
        else:
            return None
        x, r = x_new, r_new
    nr = np.linalg.norm(r)
    return (x, nr) if nr <= tol else None


def find_fixed_points(model, u, seeds: Sequence, newton_tol: float = NEWTON_TOL,
                      max_iter: int = 100, dedup_tol: float = DEDUP_TOL) -> FixedPointSet:
    """Damped Newton from every seed; converged roots deduplicated pairwise."""
    seeds = [np.asarray(s, dtype=float) for s in seeds]
    if not seeds:
        raise ModelFormatError("seeds must be nonempty")
    roots, n_conv = [], 0
    for seed in seeds:
        res = _newton(model, u, seed, newton_tol, max_iter)
        if res is None:
            continue
        n_conv += 1
        x, nr = res
        if all(np.linalg.norm(x - r0) >= dedup_tol for r0, _ in roots):
            roots.append((x, nr))
    points = []
    for x, nr in roots:
        lam = np.linalg.eigvals(models.jacobian(model, x, u))
        points.append(FixedPoint(x0=x, u=None if u is None else np.asarray(u, float),
                                 residual_norm=nr, stability=classify_stability(lam)))
    return FixedPointSet(points=points, n_seeds=len(seeds), n_converged=n_conv,
                         n_failed=len(seeds) - n_conv)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Sorted spectrum with complex eigenvectors and a real block-diagonalizer."""

    eigenvalues: np.ndarray        # (N,) complex, descending real part
    eigenvectors: np.ndarray       # (N, N) complex, columns match eigenvalues
    realizer: np.ndarray           # (N, N) real T with T^-1 A T block diagonal
    matrix: np.ndarray             # the Jacobian that was decomposed
    condition: float = np.nan

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def conjugate_partner(self, i: int) -> Optional[int]:
        """Index of the adjacent conjugate for a complex eigenvalue, else None."""
        lam = self.eigenvalues
        if abs(lam[i].imag) < 1e-12 * max(1.0, abs(lam[i])):
            return None
        if i + 1 < len(lam) and np.isclose(lam[i + 1], np.conj(lam[i])):
            return i + 1
        if i > 0 and np.isclose(lam[i - 1], np.conj(lam[i])):
            return i - 1
        return None


def _sort_spectrum(lam, P):
    order = np.lexsort((-np.sign(lam.imag), np.abs(lam.imag), -lam.real))
    return lam[order], P[:, order]


def linearize(model, fp: FixedPoint) -> SpectralDecomposition:
    """Spectrum of the Jacobian at the fixed point, sorted, with real block realizer."""
    A = models.jacobian(model, fp.x0, fp.u)
    return decompose(A)


def decompose(A: np.ndarray) -> SpectralDecomposition:
    A = np.asarray(A, dtype=float)
    try:
        lam, P = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise SsmrError(
            f"eigensolver failed (cond ~ {np.linalg.cond(A):.3g})") from exc
    lam, P = _sort_spectrum(lam, P)

    n = len(lam)
    T = np.zeros((n, n))
    i = 0
    scale = max(1.0, float(np.max(np.abs(lam))))
    while i < n:
        v = P[:, i]
        if abs(lam[i].imag) < 1e-12 * scale:
            col = np.real(v)
            col = col / np.linalg.norm(col)
            if col[np.argmax(np.abs(col))] < 0:
                col = -col
                P[:, i] = -P[:, i]
            T[:, i] = col
            i += 1
        else:
            if i + 1 >= n or not np.isclose(lam[i + 1], np.conj(lam[i]), atol=1e-10 * scale):
                raise SsmrError("conjugate pair not adjacent after sorting")
            # enforce exact conjugate eigenvector for the partner
            P[:, i + 1] = np.conj(v)
            T[:, i] = np.real(v)
            T[:, i + 1] = np.imag(v)
            i += 2
    cond = float(np.linalg.cond(T))
    if not np.isfinite(cond) or cond > 1e14:
        raise SsmrError(f"realizer nearly singular (cond {cond:.3g})")
    return SpectralDecomposition(eigenvalues=lam, eigenvectors=P, realizer=T,
                                 matrix=A, condition=cond)


def spectral_quotient(spec: SpectralDecomposition, indices: Sequence[int],
                      tol: float = HYPERBOLICITY_TOL) -> Optional[int]:
    """Int[max_outside Re / min_inside Re]; None marks the unstable-inside case.

    Defined only when every inside eigenvalue decays; with non-decaying inside
    eigenvalues the caller should fall back to the all-orders nonresonance check.
    """
    indices = list(indices)
    n = spec.n
    if len(indices) >= n:
        raise ModelFormatError("spectral quotient undefined for the whole space")
    inside = np.real(spec.eigenvalues[indices])
    if np.any(np.abs(inside) <= tol):
        raise ModelFormatError("inside eigenvalues must have nonzero real part")
    if np.any(inside > 0):
        return None
    outside = np.real(np.delete(spec.eigenvalues, indices))
    return int(np.max(outside) / np.min(inside))


@dataclass(frozen=True)
class ResonanceHit:
    multi_index: tuple
    combination: complex
    outside_eigenvalue: complex
    margin: float


def check_nonresonance(spec: SpectralDecomposition, indices: Sequence[int],
                       max_order: Optional[int] = None,
                       resonance_tol: float = 1e-6) -> list:
    """All inside multi-index combinations 2 <= |m| <= max_order vs outside real parts.

    Empty report means nonresonant.  Default max_order: spectral quotient + 1
    when the inside spectrum decays, else the fixed all-orders bound 10 used
    for unstable subspaces.
    """
    indices = list(indices)
    lam_in = spec.eigenvalues[indices]
    lam_out = np.delete(spec.eigenvalues, indices)
    if max_order is None:
        q = spectral_quotient(spec, indices)
        max_order = (q + 1) if q is not None else 10
    if max_order < 2:
        max_order = 2
    hits = []
    for m in _multi_indices(len(lam_in), 2, max_order):
        combo = complex(np.sum(np.array(m) * lam_in))
        for lo in lam_out:
            diff = abs(combo.real - lo.real)
            rel = diff / max(abs(lo.real), 1.0)
            if rel < resonance_tol:
                hits.append(ResonanceHit(multi_index=tuple(m), combination=combo,
                                         outside_eigenvalue=complex(lo), margin=diff))
    return hits


def _multi_indices(d: int, order_min: int, order_max: int):
    from itertools import product

    for total in range(order_min, order_max + 1):
        for combo in _compositions(total, d):
            yield combo


def _compositions(total: int, d: int):
    if d == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, d - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class SubspaceSelection:
    indices: tuple
    V_E: np.ndarray                # (N, d) orthonormal
    spectral_gap: float
    spectral_quotient: Optional[int]
    nonresonance_report: list
    eigenvalues: np.ndarray        # inside eigenvalues, sorted

    @property
    def d(self) -> int:
        return self.V_E.shape[1]


def select_slow_subspace(spec: SpectralDecomposition, d: Optional[int] = None,
                         gap_tol: float = 1e-9, strict: bool = False,
                         max_order: Optional[int] = None) -> SubspaceSelection:
    """Pick the d slowest realified directions (or the largest-gap cut if d is None).

    Never splits a conjugate pair: d is bumped by one with a warning, or an
    error is raised in strict mode.
    """
    lam = spec.eigenvalues
    n = spec.n
    re = np.real(lam)

    def splits_pair(k):
        # True if cutting after the first k eigenvalues separates a conjugate pair
        return 0 < k < n and spec.conjugate_partner(k - 1) == k

    if d is None:
        gaps = re[:-1] - re[1:]
        valid = [k for k in range(1, n) if not splits_pair(k)]
        if not valid:
            raise ModelFormatError("no valid spectral cut exists")
        k = max(valid, key=lambda k: gaps[k - 1])
        if gaps[k - 1] <= gap_tol:
            raise ModelFormatError("spectrum degenerate at every candidate cut")
    else:
        k = int(d)
        if not 1 <= k < n:
            raise ModelFormatError(f"d must be in [1, {n - 1}]")
        if splits_pair(k):
            if strict:
                raise ModelFormatError(
                    f"d={k} would split a complex-conjugate pair")
            warnings.warn(f"d={k} splits a conjugate pair; bumped to {k + 1}")
            k += 1
    indices = tuple(range(k))
    gap = float(re[k - 1] - re[k])
    if gap <= gap_tol:
        raise ModelFormatError(f"spectral gap {gap:.3g} at the cut is below gap_tol")
    basis = spec.realizer[:, :k]
    Q, R = np.linalg.qr(basis)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q = Q * signs[np.newaxis, :]
    quotient = spectral_quotient(spec, indices)
    report = check_nonresonance(spec, indices, max_order=max_order)
    return SubspaceSelection(indices=indices, V_E=Q, spectral_gap=gap,
                             spectral_quotient=quotient, nonresonance_report=report,
                             eigenvalues=lam[:k].copy())


# ---------------------------------------------------------------------------
# Parameter continuation with saddle-node detection.
# ---------------------------------------------------------------------------

@dataclass
class BranchPoint:
    mu: float
    branch_id: int
    x0: np.ndarray
    z0: float
    re_lambda_max: float
    stability: str


@dataclass
class BifurcationDiagram:
    mus: np.ndarray
    points: list                      # BranchPoint, ordered by (mu, branch_id)
    events: list                      # dicts {mu_lo, mu_hi, type, branch_ids}
    unmatched: list = field(default_factory=list)

    def branch(self, branch_id: int):
        return [p for p in self.points if p.branch_id == branch_id]

    def at_mu(self, mu: float):
        return [p for p in self.points if np.isclose(p.mu, mu)]


def _readout_value(model, x, readout_vector):
    if readout_vector is not None:
        return float(np.asarray(readout_vector, float) @ x)
    if isinstance(model, models.RnnModel):
        return float(model.Y[0] @ x)
    if isinstance(model, models.PolynomialSystem) and model.readout_vector is not None:
        return float(model.readout_vector @ x)
    return float(x[0])


def continuation_scan(model, u_base, direction, mu_range, n_steps: int,
                      seeds: Sequence, newton_tol: float = NEWTON_TOL,
                      match_tol: float = 0.5, sn_tol: float = 1e-3,
                      readout_vector=None, refine_iters: int = 48,
                      dedup_tol: float = 1e-4) -> BifurcationDiagram:
    """Grid scan over u = u_base + mu*direction with warm-started fixed points.

    Branches are matched across steps by nearest neighbor.  Every branch that
    ends (or begins) inside the grid is bisected to its critical mu; branches
    whose critical points coincide in parameter and state form a saddle-node
    event, confirmed by a near-zero real eigenvalue (|Re| < sn_tol) at the
    surviving edge.  The dedup tolerance is wider than the root-finder's so a
    fold's merging pair collapses to one point instead of a numerical cluster.
    """
    if n_steps < 2:
        raise ModelFormatError("n_steps must be >= 2")
    u_base = np.atleast_1d(np.asarray(u_base, dtype=float))
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    mus = np.linspace(mu_range[0], mu_range[1], n_steps)
    base_seeds = [np.asarray(s, float) for s in seeds]

    points = []
    unmatched = []
    lost_branches = []   # (branch_id, mu_last_index, fp)
    born_branches = []   # (branch_id, mu_first_index, fp)
    next_id = 0
    prev = []  # list of (branch_id, FixedPoint)
    for k, mu in enumerate(mus):
        u = u_base + mu * direction
        fps = find_fixed_points(model, u, [fp.x0 for _, fp in prev] + base_seeds,
                                newton_tol=newton_tol, dedup_tol=dedup_tol).points
        assigned = {}
        used_prev = set()
        pairs = sorted(
            ((np.linalg.norm(fp.x0 - pfp.x0), i, j)
             for i, fp in enumerate(fps) for j, (_, pfp) in enumerate(prev)),
            key=lambda t: t[0])
        for dist, i, j in pairs:
            if dist > match_tol or i in assigned or j in used_prev:
                continue
            assigned[i] = prev[j][0]
            used_prev.add(j)
        current = []
        for i, fp in enumerate(fps):
            bid = assigned.get(i)
            if bid is None:
                bid = next_id
                next_id += 1
                if k > 0:
                    born_branches.append((bid, k, fp))
            current.append((bid, fp))
            lam = np.linalg.eigvals(models.jacobian(model, fp.x0, u))
            points.append(BranchPoint(
                mu=float(mu), branch_id=bid, x0=fp.x0,
                z0=_readout_value(model, fp.x0, readout_vector),
                re_lambda_max=float(np.max(np.real(lam))), stability=fp.stability))
        for j, (bid, pfp) in enumerate(prev):
            if j not in used_prev:
                lost_branches.append((bid, k - 1, pfp))
        prev = current

    events, leftover = _pair_critical_points(
        model, u_base, direction, mus, lost_branches, born_branches,
        newton_tol, match_tol, sn_tol, refine_iters, dedup_tol)
    unmatched.extend(leftover)
    return BifurcationDiagram(mus=mus, points=points, events=events,
                              unmatched=unmatched)


def _refine_critical(model, u_base, direction, mu_exists, mu_gone, fp, newton_tol,
                     match_tol, refine_iters, dedup_tol):
    """Bisect the parameter where the root tracked from fp stops existing.

    Returns (mu_star_lo, mu_star_hi, x_last, min_abs_re_lambda) with lo on the
    side where the root exists.
    """
    x_track = fp.x0

    def exists(mu):
        u = u_base + mu * direction
        res = _newton(model, u, x_track, newton_tol, 100)
        if res is None:
            return None
        x, _ = res
        if np.linalg.norm(x - x_track) > match_tol:
            return None
        return x

    lo, hi = mu_exists, mu_gone
    x_last = x_track
    for _ in range(refine_iters):
        mid = 0.5 * (lo + hi)
        x_mid = exists(mid)
        if x_mid is not None:
            lo = mid
            x_track = x_mid
            x_last = x_mid
        else:
            hi = mid
    u = u_base + lo * direction
    lam = np.linalg.eigvals(models.jacobian(model, x_last, u))
    return lo, hi, x_last, float(np.min(np.abs(np.real(lam))))


def _pair_critical_points(model, u_base, direction, mus, lost, born, newton_tol,
                          match_tol, sn_tol, refine_iters, dedup_tol):
    """Refine each ended/started branch and group coincident critical points."""
    refined = []
    for bid, k_last, fp in lost:
        if k_last + 1 >= len(mus):
            continue
        lo, hi, x_last, min_re = _refine_critical(
            model, u_base, direction, float(mus[k_last]), float(mus[k_last + 1]),
            fp, newton_tol, match_tol, refine_iters, dedup_tol)
        refined.append({"bid": bid, "lo": lo, "hi": hi, "x": x_last,
                        "min_re": min_re})
    for bid, k_first, fp in born:
        lo, hi, x_last, min_re = _refine_critical(
            model, u_base, direction, float(mus[k_first]), float(mus[k_first - 1]),
            fp, newton_tol, match_tol, refine_iters, dedup_tol)
        refined.append({"bid": bid, "lo": lo, "hi": hi, "x": x_last,
                        "min_re": min_re})

    span = abs(mus[-1] - mus[0])
    group_tol = max(1e-6 * span, 64 * span * 0.5 ** refine_iters,
                    abs(mus[1] - mus[0]) * 1e-3)
    events, used = [], set()
    for a in range(len(refined)):
        if a in used:
            continue
        for b in range(a + 1, len(refined)):
            if b in used:
                continue
            ra, rb = refined[a], refined[b]
            mu_a = 0.5 * (ra["lo"] + ra["hi"])
            mu_b = 0.5 * (rb["lo"] + rb["hi"])
            if abs(mu_a - mu_b) > group_tol:
                continue
            if np.linalg.norm(ra["x"] - rb["x"]) > match_tol:
                continue
            min_re = min(ra["min_re"], rb["min_re"])
            events.append({
                "mu_lo": float(min(ra["lo"], rb["lo"])),
                "mu_hi": float(max(ra["hi"], rb["hi"])),
                "type": "saddle-node",
                "branch_ids": sorted([ra["bid"], rb["bid"]]),
                "min_abs_re_lambda": min_re,
                "confirmed": bool(min_re < sn_tol),
            })
            used.add(a)
            used.add(b)
            break
    leftover = [refined[i]["bid"] for i in range(len(refined)) if i not in used]
    events.sort(key=lambda e: e["mu_lo"])
    return events, leftover


def save_diagram_csv(diagram: BifurcationDiagram, path) -> None:
    import csv

    from .simulate import format_float

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "branch_id", "readout_z0", "re_lambda_max", "stability"])
        for p in diagram.points:
            writer.writerow([format_float(p.mu), p.branch_id, format_float(p.z0),
                             format_float(p.re_lambda_max), p.stability])


def save_events_json(diagram: BifurcationDiagram, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(diagram.events, fh, indent=1)
        fh.write("\n")
