"""Bounded-aperiodic-forcing extensions: anchor trajectories and moving charts.

A hyperbolic fixed point perturbs, under weak uniformly bounded forcing, into
a uniformly bounded anchor trajectory.  Its expansion orders solve linear
problems with the same hyperbolic Green's function: stable modes integrate
the past, unstable modes the future.  The forcing is piecewise constant on
its grid, so each step propagates with an exact exponential.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import models
from .errors import (HorizonOverflowError, ModelFormatError, ResonanceError)
from .steady_states import HYPERBOLICITY_TOL, SpectralDecomposition

KERNEL_TOL = 1e-12


@dataclass(frozen=True)
class ForcingRecord:
    """Piecewise-constant forcing f1 on a uniform grid; actual forcing is eps*f1.

    values[k] holds on [times[k], times[k] + dt).
    """

    times: np.ndarray
    values: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or v.ndim != 2 or len(t) != len(v):
            raise ModelFormatError("times and values must be aligned")
        dt = np.diff(t)
        if len(dt) and not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
            raise ModelFormatError("forcing grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise ModelFormatError("forcing values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def forcing_from_noise(traj, tau: float = 1.0, amplitude: Optional[float] = None
                       ) -> ForcingRecord:
    """Build the forcing record from a trajectory's recorded per-step noise draws.

    For RNNs the state equation sees sigma(t)/tau, so values are draws/(eps*tau)
    with eps the noise amplitude.
    """
    if traj.noise_values is None:
        raise ModelFormatError("trajectory carries no recorded noise "
                               "(integrate with record_noise=True)")
    eps = amplitude if amplitude is not None else 1.0
    vals = traj.noise_values / (eps * tau)
    return ForcingRecord(times=traj.times[:-1], values=vals, amplitude=eps)


@dataclass
class AnchorTerm:
    """One expansion order on the forcing grid, with its valid window."""

    times: np.ndarray
    values: np.ndarray           # (T, N) real
    valid: slice                 # indices where the truncated improper integrals hold


@dataclass
class AnchorExpansion:
    orders: list                 # [y1, y2, y3] AnchorTerm, ascending order
    epsilon: float

    @property
    def valid(self) -> slice:
        start = max(o.valid.start for o in self.orders)
        stop = min(o.valid.stop for o in self.orders)
        return slice(start, stop)

    def composite(self, upto: Optional[int] = None,
                  epsilon: Optional[float] = None) -> np.ndarray:
        """Sum of eps^nu * y_nu, shape (T, N); slice with .valid for trusted values."""
        eps = self.epsilon if epsilon is None else epsilon
        upto = len(self.orders) if upto is None else upto
        out = np.zeros_like(self.orders[0].values)
        for nu, term in enumerate(self.orders[:upto], start=1):
            out += eps ** nu * term.values
        return out


def _hyperbolic_split(spec: SpectralDecomposition, tol: float = HYPERBOLICITY_TOL):
    re = np.real(spec.eigenvalues)
    if np.any(np.abs(re) <= tol):
        raise HorizonOverflowError(
            f"eigenvalue with |Re| <= {tol:g}: no hyperbolic splitting")
    unstable = np.flatnonzero(re > tol)
    stable = np.flatnonzero(re < -tol)
    return stable, unstable


def _bounded_solution(spec: SpectralDecomposition, times: np.ndarray,
                      source: np.ndarray, kernel_tol: float = KERNEL_TOL,
                      source_rule: str = "const") -> AnchorTerm:
    """Unique bounded solution of ydot = A y + source(t) for hyperbolic A.

    Stable eigenmodes accumulate the past, unstable ones the future, with an
    exact exponential kernel per step.  source_rule "const" treats the source
    as held at the left endpoint (exact for the per-step frozen noise draws);
    "trapezoid" interpolates it linearly within each step, which the smooth
    higher-order sources need.
    """
    lam = spec.eigenvalues
    P = spec.eigenvectors
    stable, unstable = _hyperbolic_split(spec)
    dt = float(times[1] - times[0])
    T = len(times)
    Z = source @ np.linalg.inv(P).T        # (T, N) complex eigen components
    I = np.zeros((T, spec.n), dtype=complex)
    trapezoid = source_rule == "trapezoid"
    if source_rule not in ("const", "trapezoid"):
        raise ModelFormatError(f"unknown source rule {source_rule!r}")

    if len(stable):
        lam_s = lam[stable]
        decay = np.exp(lam_s * dt)
        g1 = (decay - 1.0) / lam_s
        g2 = (decay - 1.0 - lam_s * dt) / lam_s ** 2
        acc = np.zeros(len(stable), dtype=complex)
        for k in range(1, T):
            a = Z[k - 1, stable]
            if trapezoid:
                c = (Z[k, stable] - a) / dt
                acc = decay * acc + a * g1 + c * g2
            else:
                acc = decay * acc + a * g1
            I[k, stable] = acc
    if len(unstable):
        lam_u = lam[unstable]
        decay = np.exp(-lam_u * dt)
        g1 = (1.0 - decay) / lam_u
        g2 = (1.0 - (1.0 + lam_u * dt) * decay) / lam_u ** 2
        acc = np.zeros(len(unstable), dtype=complex)
        for k in range(T - 2, -1, -1):
            a = Z[k, unstable]
            if trapezoid:
                c = (Z[k + 1, unstable] - a) / dt
                acc = decay * acc + a * g1 + c * g2
            else:
                acc = decay * acc + a * g1
            I[k, unstable] = -acc

    y = np.real(I @ P.T)
    horizon = np.log(1.0 / kernel_tol)
    lo = 0
    if len(stable):
        h_s = horizon / float(np.min(np.abs(np.real(lam[stable]))))
        lo = int(np.ceil(h_s / dt))
    hi = T
    if len(unstable):
        h_u = horizon / float(np.min(np.abs(np.real(lam[unstable]))))
        hi = T - int(np.ceil(h_u / dt))
    if lo >= hi:
        raise HorizonOverflowError(
            "truncation horizon exceeds the forcing span (eigenvalue too close "
            "to zero for this record length)")
    return AnchorTerm(times=times.copy(), values=y, valid=slice(lo, hi))


def anchor_order1(spec: SpectralDecomposition, forcing: ForcingRecord,
                  kernel_tol: float = KERNEL_TOL) -> AnchorTerm:
    """First-order anchor term: bounded response to the unit forcing f1."""
    return _bounded_solution(spec, forcing.times, forcing.values, kernel_tol)


def anchor_order2(spec: SpectralDecomposition, y1: AnchorTerm,
                  quad: Callable, kernel_tol: float = KERNEL_TOL) -> AnchorTerm:
    """Second-order term: bounded response to (1/2) d2f0 [y1, y1]."""
    src = 0.5 * np.array([quad(v, v) for v in y1.values])
    term = _bounded_solution(spec, y1.times, src, kernel_tol,
                             source_rule="trapezoid")
    return _merge_valid(term, y1)


def anchor_order3(spec: SpectralDecomposition, y1: AnchorTerm, y2: AnchorTerm,
                  quad: Callable, cubic: Callable,
                  kernel_tol: float = KERNEL_TOL) -> AnchorTerm:
    """Third-order term with source (1/6) d3f0 [y1,y1,y1] + d2f0 [y1, y2].

    The mixed quadratic source counts both ordered pairings of (y1, y2), i.e.
    the symmetrized Taylor contribution.
    """
    if len(y1.times) != len(y2.times):
        raise ModelFormatError("expansion orders must share one grid")
    src = np.array([cubic(v, v, v) / 6.0 + quad(v, w)
                    for v, w in zip(y1.values, y2.values)])
    term = _bounded_solution(spec, y1.times, src, kernel_tol,
                             source_rule="trapezoid")
    return _merge_valid(_merge_valid(term, y1), y2)


def _merge_valid(term: AnchorTerm, other: AnchorTerm) -> AnchorTerm:
    lo = max(term.valid.start, other.valid.start)
    hi = min(term.valid.stop, other.valid.stop)
    if lo >= hi:
        raise HorizonOverflowError("no overlap between valid windows")
    return AnchorTerm(times=term.times, values=term.values, valid=slice(lo, hi))


def anchor_expansion(model, fp, spec: SpectralDecomposition, forcing: ForcingRecord,
                     order: int = 3, kernel_tol: float = KERNEL_TOL) -> AnchorExpansion:
    """Orders 1..order of the anchor trajectory for a model with exact tensors."""
    if order < 1 or order > 3:
        raise ModelFormatError("anchor expansion supports orders 1..3")
    quad = lambda v, w: models.contract_tensor_2(model, fp.x0, v, w)
    cubic = lambda v, w, z: models.contract_tensor_3(model, fp.x0, v, w, z)
    y1 = anchor_order1(spec, forcing, kernel_tol)
    orders = [y1]
    if order >= 2:
        orders.append(anchor_order2(spec, y1, quad, kernel_tol))
    if order >= 3:
        orders.append(anchor_order3(spec, y1, orders[1], quad, cubic, kernel_tol))
    return AnchorExpansion(orders=orders, epsilon=forcing.amplitude)


# ---------------------------------------------------------------------------
# Time-dependent chart coefficients along the anchor (slowest-mode case, d=1).
# ---------------------------------------------------------------------------

@dataclass
class TimeDependentSsmCoeffs:
    """v = h20 u^2 + eps h11(t) u in the eigen coordinates (u, v) at the anchor."""

    h20: np.ndarray              # (N-1,) complex, autonomous order-2 coefficients
    h11: np.ndarray              # (T, N-1) complex
    times: np.ndarray
    valid: slice
    eigen_basis: np.ndarray      # P, columns sorted as in the decomposition
    lambda1: complex

    def surface_v(self, u: float, t_index: int, eps: float) -> np.ndarray:
        return self.h20 * u ** 2 + eps * self.h11[t_index] * u


def kernel_gk(spec: SpectralDecomposition, k: int, t: float) -> np.ndarray:
    """Diagonal entries of G_k(t) = exp((A_v - k lambda_1 I) t)."""
    lam = spec.eigenvalues
    return np.exp((lam[1:] - k * lam[0]) * t)


def td_ssm_coeffs(model, fp, spec: SpectralDecomposition, forcing: ForcingRecord,
                  y1: AnchorTerm, kernel_tol: float = KERNEL_TOL,
                  resonance_tol: float = 1e-8) -> TimeDependentSsmCoeffs:
    """Order-(u^2, eps*u) coefficients of the moving chart over the slowest mode.

    h20 comes from the same order-2 invariance solve as the autonomous chart;
    h11 is the bounded solution of hdot = (A_v - lambda_1 I) h + M11(t) with
    M11 = [P^-1 d2f0(x0)[y1(t), e1]]_v.
    """
    from .ssm_geometry import _field_taylor_builder, solve_invariance_eigen

    lam = spec.eigenvalues
    lam1 = lam[0]
    if abs(lam1.imag) > 1e-10 * max(1.0, abs(lam1)):
        raise ModelFormatError("slowest eigenvalue must be real for the d=1 chart")
    P = spec.eigenvectors
    n = spec.n

    # autonomous order-2 coefficients over the slowest direction (shared solve)
    ft = _field_taylor_builder(model, fp.x0, fp.u, 2)
    w = solve_invariance_eigen(lam, P, [0], list(range(1, n)), ft, 2,
                               resonance_tol=resonance_tol)
    h20 = w.get((2,), np.zeros(n - 1, dtype=complex))

    # resonance guard for the k=1 kernel: rates lambda_j - lambda_1
    rates = lam[1:] - lam1
    bad = np.abs(np.real(rates)) <= HYPERBOLICITY_TOL
    if np.any(bad):
        j = int(np.argmax(bad))
        raise ResonanceError(
            f"(A_v - lambda_1 I) nearly singular at eigenvalue {lam[1 + j]:.6g}",
            eigenvalue=lam[1 + j])

    Pinv = np.linalg.inv(P)
    e1 = P[:, 0]
    T = len(y1.times)
    M11 = np.empty((T, n - 1), dtype=complex)
    for k in range(T):
        full = Pinv @ models.contract_tensor_2(model, fp.x0, y1.values[k], e1)
        M11[k] = full[1:]

    dt = float(y1.times[1] - y1.times[0])
    h11 = np.zeros((T, n - 1), dtype=complex)
    stab = np.flatnonzero(np.real(rates) < 0)
    unst = np.flatnonzero(np.real(rates) > 0)
    if len(stab):
        dec = np.exp(rates[stab] * dt)
        g1 = (dec - 1.0) / rates[stab]
        g2 = (dec - 1.0 - rates[stab] * dt) / rates[stab] ** 2
        acc = np.zeros(len(stab), dtype=complex)
        for k in range(1, T):
            a = M11[k - 1, stab]
            c = (M11[k, stab] - a) / dt
            acc = dec * acc + a * g1 + c * g2
            h11[k, stab] = acc
    if len(unst):
        dec = np.exp(-rates[unst] * dt)
        g1 = (1.0 - dec) / rates[unst]
        g2 = (1.0 - (1.0 + rates[unst] * dt) * dec) / rates[unst] ** 2
        acc = np.zeros(len(unst), dtype=complex)
        for k in range(T - 2, -1, -1):
            a = M11[k, unst]
            c = (M11[k + 1, unst] - a) / dt
            acc = dec * acc + a * g1 + c * g2
            h11[k, unst] = -acc

    horizon = np.log(1.0 / kernel_tol)
    lo, hi = 0, T
    if len(stab):
        lo = int(np.ceil(horizon / float(np.min(np.abs(np.real(rates[stab])))) / dt))
    if len(unst):
        hi = T - int(np.ceil(horizon / float(np.min(np.abs(np.real(rates[unst])))) / dt))
    lo = max(lo, y1.valid.start)
    hi = min(hi, y1.valid.stop)
    if lo >= hi:
        raise HorizonOverflowError("h11 horizon exceeds the forcing span")
    return TimeDependentSsmCoeffs(h20=h20, h11=h11, times=y1.times.copy(),
                                  valid=slice(lo, hi), eigen_basis=P, lambda1=lam1)


def save_td_coeffs(td: TimeDependentSsmCoeffs, csv_path, json_path) -> None:
    """h11 time series as CSV (re/im interleaved) plus h20 and metadata as JSON."""
    import csv
    import json

    from .simulate import format_float

    sl = td.valid
    n = td.h11.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t"]
        for i in range(n):
            header += [f"h11_{i + 1}_re", f"h11_{i + 1}_im"]
        writer.writerow(header)
        for k in range(sl.start, sl.stop):
            row = [format_float(td.times[k])]
            for i in range(n):
                row += [format_float(td.h11[k, i].real),
                        format_float(td.h11[k, i].imag)]
            writer.writerow(row)
    doc = {
        "h20_re": td.h20.real.tolist(),
        "h20_im": td.h20.imag.tolist(),
        "lambda1": [td.lambda1.real, td.lambda1.imag],
        "valid_window": [int(sl.start), int(sl.stop)],
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def save_anchor_csv(expansion: AnchorExpansion, path) -> None:
    """CSV t, then y1_1..y1_N, y2_1.., y3_1.. for the valid window."""
    import csv

    from .simulate import format_float

    sl = expansion.valid
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n = expansion.orders[0].values.shape[1]
        header = ["t"]
        for nu in range(1, len(expansion.orders) + 1):
            header += [f"y{nu}_{i + 1}" for i in range(n)]
        writer.writerow(header)
        times = expansion.orders[0].times[sl]
        for k, t in enumerate(times):
            row = [format_float(t)]
            for term in expansion.orders:
                row += [format_float(v) for v in term.values[sl][k]]
            writer.writerow(row)
