"""Reduced polynomial vector fields on a chart and their phase portraits.

Covers derivative estimation, the reduced-model regression, trajectory
reconstruction error, fixed points / basins / limit cycles / heteroclinic
branches of the reduced flow, Lyapunov-type numbers, and parameter-dependent
reduced models with the parameter as a dummy variable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import models
from .errors import (DivergenceError, IllPosedFitError, ModelFormatError,
                     TrajectoryTooShortError)
from .poly import MonomialBasis, ORDERING_TAG, monomial_jacobian, monomials
from .simulate import Trajectory
from .ssm_geometry import SsmChart, _ridge_lstsq

RIDGE_SCALE = 1e-10


@dataclass
class ReducedModel:
    """Polynomial reduced field  etadot = W_r phi(eta)  on a chart."""

    basis: MonomialBasis
    W_r: np.ndarray                       # (d, m)
    chart: Optional[SsmChart] = None
    domain_radius: float = np.inf
    diagnostics: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.W_r.shape[0]

    def rhs(self, eta) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return self.W_r @ monomials(self.basis, eta)

    def jacobian(self, eta) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return self.W_r @ monomial_jacobian(self.basis, eta)

    def linear_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.jacobian(np.zeros(self.d)))


@dataclass
class ParametricReducedModel:
    """Reduced field over (eta, mubar) with mudot = 0 enforced structurally."""

    basis: MonomialBasis                  # over d+1 variables, degrees 1..q
    W_r: np.ndarray                       # (d, m) -- only eta components evolve
    mu0: float
    chart: Optional[SsmChart] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.W_r.shape[0]

    def rhs(self, eta, mu: float) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        q = np.concatenate([eta, [mu - self.mu0]])
        return self.W_r @ monomials(self.basis, q)

    def slice_at(self, mu: float) -> ReducedModel:
        """Collapse the parameter to a constant, returning a plain reduced model."""
        mubar = mu - self.mu0
        d = self.d
        by_eta = {}
        for k, expo in enumerate(self.basis.exponent_table):
            e_eta, b = expo[:-1], expo[-1]
            by_eta.setdefault(e_eta, np.zeros(d))
            by_eta[e_eta] += self.W_r[:, k] * mubar ** b
        deg_max = max(sum(e) for e in by_eta)
        eta_basis = MonomialBasis(d, 0, deg_max)
        W = np.zeros((d, len(eta_basis)))
        lookup = {e: k for k, e in enumerate(eta_basis.exponent_table)}
        for e, col in by_eta.items():
            W[:, lookup[e]] = col
        return ReducedModel(basis=eta_basis, W_r=W,
                            diagnostics={"sliced_at_mu": float(mu)})


def estimate_eta_dot(trajectories, chart: SsmChart, scheme: str = "central-4th-order"):
    """Project trajectories and estimate time derivatives on the uniform grid.

    central-4th-order: five-point stencil, two endpoints dropped per side.
    spline: smoothing-spline derivative (better under measurement noise).
    """
    etas, dots = [], []
    for traj in trajectories:
        t = traj.times
        dt_all = np.diff(t)
        if not np.allclose(dt_all, dt_all[0], rtol=1e-8, atol=1e-12):
            raise ModelFormatError("estimate_eta_dot needs a uniform time grid")
        dt = float(dt_all[0])
        eta = (traj.states - chart.anchor.x0[np.newaxis, :]) @ chart.V_E
        if scheme == "central-4th-order":
            if len(eta) < 5:
                raise TrajectoryTooShortError("need >= 5 samples for the 4th-order stencil")
            core = slice(2, len(eta) - 2)
            ddt = (-eta[4:] + 8 * eta[3:-1] - 8 * eta[1:-3] + eta[:-4]) / (12 * dt)
            etas.append(eta[core])
            dots.append(ddt)
        elif scheme == "spline":
            from scipy.interpolate import make_smoothing_spline

            if len(eta) < 8:
                raise TrajectoryTooShortError("need >= 8 samples for the spline scheme")
            ddt = np.column_stack([
                make_smoothing_spline(t, eta[:, j]).derivative()(t)
                for j in range(eta.shape[1])])
            etas.append(eta)
            dots.append(ddt)
        else:
            raise ModelFormatError(f"unknown derivative scheme {scheme!r}")
    return np.vstack(etas), np.vstack(dots)


def fit_reduced(samples, M_r: int, ridge_scale: float = RIDGE_SCALE,
                chart: Optional[SsmChart] = None,
                scheme: str = "central-4th-order") -> ReducedModel:
    """Least-squares W_r over monomials of degrees 1..M_r."""
    eta, eta_dot = samples
    eta = np.atleast_2d(np.asarray(eta, float))
    eta_dot = np.atleast_2d(np.asarray(eta_dot, float))
    d = eta.shape[1]
    basis = MonomialBasis(d, 1, M_r)
    if eta.shape[0] < 10 * len(basis):
        raise ModelFormatError(
            f"need >= {10 * len(basis)} samples for {len(basis)} coefficients")
    Phi = monomials(basis, eta)
    C, rho = _ridge_lstsq(Phi, eta_dot, ridge_scale)
    W = C.T
    resid = float(np.sqrt(np.mean((eta_dot - Phi @ C) ** 2)))
    radius = 1.5 * float(np.max(np.linalg.norm(eta, axis=1)))
    return ReducedModel(basis=basis, W_r=W, chart=chart, domain_radius=radius,
                        diagnostics={"ridge": rho, "rms_residual": resid,
                                     "n_samples": int(eta.shape[0]),
                                     "derivative_scheme": scheme})


def fit_reduced_from_trajectories(trajectories, chart: SsmChart, M_r: int,
                                  scheme: str = "central-4th-order",
                                  ridge_scale: float = RIDGE_SCALE) -> ReducedModel:
    samples = estimate_eta_dot(trajectories, chart, scheme)
    return fit_reduced(samples, M_r, ridge_scale, chart=chart, scheme=scheme)


def _rk4(field, x, dt):
    k1 = field(x)
    k2 = field(x + 0.5 * dt * k1)
    k3 = field(x + 0.5 * dt * k2)
    k4 = field(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rhs_batch(model, etas: np.ndarray) -> np.ndarray:
    """Reduced field over a batch of points, shape (n, d) -> (n, d)."""
    from .poly import monomials as eval_monomials

    return eval_monomials(model.basis, np.atleast_2d(etas)) @ model.W_r.T


def flow_endpoints(model, eta0s: np.ndarray, dt: float, t_end: float):
    """Batch RK4 endpoints of the reduced flow; rows leaving the trusted
    domain are masked out and frozen."""
    etas = np.atleast_2d(np.asarray(eta0s, dtype=float)).copy()
    ok = np.ones(len(etas), dtype=bool)
    radius = getattr(model, "domain_radius", np.inf)
    guard = max(10.0 * radius, 1e3) if np.isfinite(radius) else 1e6
    n = max(1, int(round(t_end / dt)))
    for _ in range(n):
        act = etas[ok]
        if act.size == 0:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = rhs_batch(model, act)
            k2 = rhs_batch(model, act + 0.5 * dt * k1)
            k3 = rhs_batch(model, act + 0.5 * dt * k2)
            k4 = rhs_batch(model, act + dt * k3)
            new = act + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            good = np.all(np.isfinite(new), axis=1) & \
                ~(np.linalg.norm(np.nan_to_num(new), axis=1) > guard)
        idx = np.flatnonzero(ok)
        etas[idx[good]] = new[good]
        ok[idx[~good]] = False
    return etas, ok


def simulate_reduced(model, eta0, dt: float, t_end: float,
                     t_start: float = 0.0) -> Trajectory:
    """RK4 on the reduced field with a divergence guard at the training radius."""
    if dt <= 0 or t_end <= t_start:
        raise ModelFormatError("need dt > 0 and t_end > t_start")
    radius = getattr(model, "domain_radius", np.inf)
    guard = max(10.0 * radius, 1e3) if np.isfinite(radius) else 1e6
    eta = np.atleast_1d(np.asarray(eta0, dtype=float)).copy()
    n = max(1, int(round((t_end - t_start) / dt)))
    times = [t_start]
    states = [eta.copy()]
    for k in range(n):
        eta = _rk4(model.rhs, eta, dt)
        if not np.all(np.isfinite(eta)) or np.linalg.norm(eta) > guard:
            raise DivergenceError(
                "reduced trajectory left the trusted domain "
                f"(radius {radius:g}; polynomial fields blow up outside it)",
                last_valid_time=t_start + k * dt)
        times.append(t_start + (k + 1) * dt)
        states.append(eta.copy())
    return Trajectory(times=np.array(times), states=np.array(states))


def nmte(model: ReducedModel, chart: SsmChart, test_trajectories,
         normalized: bool = True):
    """Mean reconstruction error of reduced-model predictions on held-out data.

    Each test trajectory is re-simulated from its projected initial state on
    the same grid, lifted, and compared in the full state space.  Diverging
    members are excluded and counted.
    """
    errs = []
    excluded = 0
    for traj in test_trajectories:
        t = traj.times
        dt = float(t[1] - t[0])
        eta0 = chart.project(traj.states[0])
        try:
            red = simulate_reduced(model, eta0, dt, float(t[-1]), t_start=float(t[0]))
        except DivergenceError:
            excluded += 1
            continue
        n = min(len(red.states), len(traj.states))
        lifted = np.array([chart.lift(e) for e in red.states[:n]])
        dist = np.linalg.norm(traj.states[:n] - lifted, axis=1)
        if normalized:
            scale = float(np.mean(np.linalg.norm(
                traj.states[:n] - chart.anchor.x0[np.newaxis, :], axis=1)))
            errs.append(float(np.mean(dist)) / max(scale, 1e-30))
        else:
            errs.append(float(np.mean(dist)))
    if not errs:
        raise DivergenceError("every test trajectory diverged under the reduced model")
    return float(np.mean(errs)), excluded


# ---------------------------------------------------------------------------
# Phase-portrait objects.
# ---------------------------------------------------------------------------

@dataclass
class ReducedFixedPoint:
    eta: np.ndarray
    stability: str
    eigenvalues: np.ndarray


@dataclass
class PhasePortraitReport:
    """Everything the portrait search found, in one serializable record."""

    fixed_points_reduced: list = field(default_factory=list)
    basin_boundaries_1d: list = field(default_factory=list)
    basin_widths: dict = field(default_factory=dict)
    limit_cycles: list = field(default_factory=list)
    heteroclinics: list = field(default_factory=list)
    heteroclinic_loop_closed: bool = False
    type_numbers: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "fixed_points_reduced": [
                {"eta": f.eta.tolist(), "stability": f.stability,
                 "eigenvalues_re": f.eigenvalues.real.tolist(),
                 "eigenvalues_im": f.eigenvalues.imag.tolist()}
                for f in self.fixed_points_reduced],
            "basin_boundaries_1d": list(self.basin_boundaries_1d),
            "basin_widths": {f"{k:.12g}": v for k, v in self.basin_widths.items()},
            "limit_cycles": [
                {"period": c.period, "frequency": c.frequency}
                for c in self.limit_cycles],
            "heteroclinics": [
                {"source": b.source.tolist(),
                 "target": None if b.target is None else b.target.tolist(),
                 "status": b.status} for b in self.heteroclinics],
            "heteroclinic_loop_closed": self.heteroclinic_loop_closed,
            "type_numbers": list(self.type_numbers),
        }


def reduced_fixed_points(model, domain_box, n_grid: Optional[int] = None,
                         tol: float = 1e-9, nonhyp_tol: float = 1e-6) -> list:
    """Roots of the reduced field in a box.

    d=1: sign-change bisection on a dense grid plus Newton polish;
    d=2,3: Newton multistart from a uniform grid, deduplicated.
    """
    box = np.atleast_2d(np.asarray(domain_box, dtype=float))
    d = box.shape[0]
    if d > 3:
        raise ModelFormatError("portrait search supports d <= 3")

    roots = []
    if d == 1:
        n = n_grid or 10_000
        xs = np.linspace(box[0, 0], box[0, 1], n + 1)
        vals = np.array([model.rhs([x])[0] for x in xs])
        for i in range(n):
            a, b, fa, fb = xs[i], xs[i + 1], vals[i], vals[i + 1]
            if fa == 0.0:
                roots.append(np.array([a]))
                continue
            if fa * fb < 0:
                for _ in range(80):
                    m = 0.5 * (a + b)
                    fm = model.rhs([m])[0]
                    if fa * fm <= 0:
                        b, fb = m, fm
                    else:
                        a, fa = m, fm
                roots.append(np.array([0.5 * (a + b)]))
        if vals[-1] == 0.0:
            roots.append(np.array([xs[-1]]))
    else:
        per_axis = n_grid or (50 if d == 2 else 22)
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        for seed in grid:
            eta = seed.copy()
            ok = False
            for _ in range(60):
                r = model.rhs(eta)
                if np.linalg.norm(r) < tol:
                    ok = True
                    break
                try:
                    step = np.linalg.solve(model.jacobian(eta), -r)
                except np.linalg.LinAlgError:
                    break
                if np.linalg.norm(step) > 2 * np.max(box[:, 1] - box[:, 0]):
                    break
                eta = eta + step
            if not ok or np.any(eta < box[:, 0] - 1e-9) or np.any(eta > box[:, 1] + 1e-9):
                continue
            if all(np.linalg.norm(eta - r) >= 1e-6 for r in roots):
                roots.append(eta)

    out = []
    for eta in roots:
        eta = polish_root(model, eta, tol)
        if eta is None:
            continue
        if any(np.linalg.norm(eta - o.eta) < 1e-6 for o in out):
            continue
        lam = np.linalg.eigvals(model.jacobian(eta))
        re = np.real(lam)
        if np.any(np.abs(re) < nonhyp_tol):
            stability = "nonhyperbolic"
        elif np.all(re < 0):
            stability = "stable"
        else:
            stability = "unstable"
        out.append(ReducedFixedPoint(eta=eta, stability=stability, eigenvalues=lam))
    out.sort(key=lambda r: tuple(r.eta))
    return out


def polish_root(model, eta, tol):
    eta = np.asarray(eta, dtype=float).copy()
    for _ in range(50):
        r = model.rhs(eta)
        if np.linalg.norm(r) < tol:
            return eta
        try:
            eta = eta + np.linalg.solve(model.jacobian(eta), -r)
        except np.linalg.LinAlgError:
            return None
    return eta if np.linalg.norm(model.rhs(eta)) < 10 * tol else None


def basin_widths_1d(model, domain) -> dict:
    """Separators (unstable roots) and per-stable-root basin widths on a 1D domain."""
    lo, hi = float(domain[0]), float(domain[1])
    fps = reduced_fixed_points(model, [[lo, hi]])
    stable = [float(f.eta[0]) for f in fps if f.stability == "stable"]
    unstable = [float(f.eta[0]) for f in fps if f.stability != "stable"]
    if not stable:
        raise ModelFormatError("no stable fixed point in the domain")
    separators = sorted(unstable)
    widths = {}
    for s in stable:
        left = max([u for u in separators if u < s], default=lo)
        right = min([u for u in separators if u > s], default=hi)
        widths[s] = right - left
    return {"separators": separators, "widths": widths,
            "stable_roots": sorted(stable)}


@dataclass
class LimitCycle:
    period: float
    frequency: float
    samples: np.ndarray  # one full cycle, shape (k, d)


def detect_limit_cycle(model, eta0, dt: float, t_max: float,
                       cycle_tol: float = 1e-7,
                       settle_fraction: float = 0.5) -> Optional[LimitCycle]:
    """Run to the attractor, then measure the period on a Poincare section.

    The section passes through the point of maximum speed on the attractor,
    normal to the local flow direction (avoids tangential crossings); crossing
    times are linearly interpolated.  Returns None for fixed-point convergence
    or when no recurrence is found within t_max.
    """
    if model.d != 2:
        raise ModelFormatError("detect_limit_cycle expects a 2D reduced model")
    try:
        traj = simulate_reduced(model, eta0, dt, t_max)
    except DivergenceError:
        return None
    n_settle = int(settle_fraction * len(traj.states))
    tail = traj.states[n_settle:]
    times = traj.times[n_settle:]
    extent = float(np.max(np.ptp(tail, axis=0)))
    speeds = np.linalg.norm(rhs_batch(model, tail), axis=1)
    if np.max(speeds) < max(cycle_tol, 1e-9) or extent < 100 * cycle_tol:
        return None  # settled on a fixed point
    anchor_idx = int(np.argmax(speeds))
    p_star = tail[anchor_idx]
    normal = model.rhs(p_star)
    normal = normal / np.linalg.norm(normal)

    s = (tail - p_star) @ normal
    crossings = []
    for i in range(len(s) - 1):
        if s[i] < 0 <= s[i + 1]:
            frac = -s[i] / (s[i + 1] - s[i])
            t_cross = times[i] + frac * (times[i + 1] - times[i])
            point = tail[i] + frac * (tail[i + 1] - tail[i])
            crossings.append((t_cross, point))
    if len(crossings) < 3:
        return None
    pts = np.array([p for _, p in crossings])
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if float(np.mean(gaps[-3:])) > max(cycle_tol, 1e-4 * extent):
        return None  # return map has not converged within t_max
    t_cross = np.array([t for t, _ in crossings])
    periods = np.diff(t_cross)
    k = max(1, len(periods) // 2)
    period = float(np.mean(periods[-k:]))
    # a collapsing spiral masquerades as a cycle: its per-period extent shrinks
    last = traj.states[traj.times >= t_cross[-1] - period - 1e-12]
    prev = traj.states[(traj.times >= t_cross[-1] - 2 * period - 1e-12)
                       & (traj.times < t_cross[-1] - period)]
    ext_last = float(np.max(np.ptp(last, axis=0)))
    if prev.size:
        ext_prev = float(np.max(np.ptp(prev, axis=0)))
        if ext_last < 0.9 * ext_prev or ext_last < 100 * cycle_tol:
            return None
    start = crossings[-2][0]
    mask = (traj.times >= start - 1e-12) & (traj.times <= start + period + dt)
    return LimitCycle(period=period, frequency=1.0 / period,
                      samples=traj.states[mask])


@dataclass
class HeteroclinicBranch:
    source: np.ndarray
    target: Optional[np.ndarray]
    polyline: np.ndarray
    status: str  # "connects" / "escapes" / "unresolved"


@dataclass
class HeteroclinicResult:
    branches: list
    loop: Optional[np.ndarray]  # closed polyline when the chain closes up


def detect_heteroclinic(model, domain_box, tol: float = 1e-6, dt: float = 1e-3,
                        t_max: float = 200.0, eps: float = 1e-4,
                        n_grid: Optional[int] = None) -> HeteroclinicResult:
    """Unstable-manifold branches of saddle points, classified by their omega-limit.

    Launches +-eps along each unit unstable eigenvector and integrates until
    the branch settles at a stable fixed point (connection), leaves the box
    (escape), or times out.  A chain visiting every branch endpoint closes
    into a loop polyline.
    """
    if model.d != 2:
        raise ModelFormatError("detect_heteroclinic expects a 2D reduced model")
    box = np.atleast_2d(np.asarray(domain_box, dtype=float))
    fps = reduced_fixed_points(model, box, n_grid=n_grid)
    stable = [f for f in fps if f.stability == "stable"]
    saddles = []
    for f in fps:
        if f.stability != "unstable":
            continue
        re = np.real(f.eigenvalues)
        if np.sum(re > 0) == 1 and np.all(np.abs(f.eigenvalues.imag) < 1e-9):
            saddles.append(f)
    branches = []
    for sad in saddles:
        J = model.jacobian(sad.eta)
        lam, vecs = np.linalg.eig(J)
        k = int(np.argmax(np.real(lam)))
        v = np.real(vecs[:, k])
        v = v / np.linalg.norm(v)
        for sign in (+1.0, -1.0):
            eta = sad.eta + sign * eps * v
            pts = [sad.eta.copy(), eta.copy()]
            status, target = "unresolved", None
            t = 0.0
            while t < t_max:
                eta = _rk4(model.rhs, eta, dt)
                t += dt
                pts.append(eta.copy())
                if np.any(eta < box[:, 0]) or np.any(eta > box[:, 1]):
                    status = "escapes"
                    break
                hit = [s for s in stable if np.linalg.norm(eta - s.eta) < max(tol, 1e-6)]
                if hit:
                    status, target = "connects", hit[0].eta
                    pts.append(hit[0].eta.copy())
                    break
            branches.append(HeteroclinicBranch(
                source=sad.eta, target=target, polyline=np.array(pts), status=status))

    loop = None
    connecting = [b for b in branches if b.status == "connects"]
    if connecting and len(connecting) == len(branches) and len(connecting) % 2 == 0:
        # close the chain: walk branches, reversing every second one
        ordered = [connecting[0].polyline]
        used = {0}
        current_end = connecting[0].target
        while len(used) < len(connecting):
            found = False
            for i, b in enumerate(connecting):
                if i in used:
                    continue
                if np.linalg.norm(b.target - current_end) < 1e-6:
                    ordered.append(b.polyline[::-1])
                    current_end = b.source
                    used.add(i)
                    found = True
                    break
                if np.linalg.norm(b.source - current_end) < 1e-6:
                    ordered.append(b.polyline)
                    current_end = b.target
                    used.add(i)
                    found = True
                    break
            if not found:
                break
        if len(used) == len(connecting) and \
                np.linalg.norm(current_end - connecting[0].source) < 1e-6:
            loop = np.vstack(ordered)
    return HeteroclinicResult(branches=branches, loop=loop)


# ---------------------------------------------------------------------------
# Lyapunov-type numbers (normal hyperbolicity diagnostics).
# ---------------------------------------------------------------------------

@dataclass
class TypeNumbers:
    nu: float
    sigma: float
    rho: Optional[int]
    normally_attracting: bool
    margin: float  # 1 - nu (negative when not normally attracting)


def lyapunov_type_numbers(eigenvalues, tangent_indices) -> TypeNumbers:
    """nu = exp(max Re over normal stable directions); sigma = lam_tan / lam_normal.

    tangent_indices mark the eigenvalues tangent to the invariant manifold at
    the limit set; rho = floor(1/sigma) is declared only when nu < 1 and
    sigma > 0.  Normal non-decaying directions make the manifold non-attracting.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    tangent = sorted(set(int(i) for i in tangent_indices))
    if not tangent or any(i < 0 or i >= len(lam) for i in tangent):
        raise ModelFormatError("tangent_indices must be a nonempty subset of the spectrum")
    normal = [i for i in range(len(lam)) if i not in tangent]
    if not normal:
        raise ModelFormatError("no normal directions remain")
    re_norm = np.real(lam[normal])
    lam_perp = float(np.max(re_norm))
    nu = float(np.exp(lam_perp))
    lam_tan = float(np.max(np.real(lam[tangent])))
    sigma = lam_tan / lam_perp if lam_perp != 0 else np.inf
    attracting = nu < 1.0
    rho = int(np.floor(1.0 / sigma)) if (attracting and sigma > 0) else None
    return TypeNumbers(nu=nu, sigma=float(sigma), rho=rho,
                       normally_attracting=attracting, margin=1.0 - nu)


def tangent_index_from_alignment(spec_eigenvectors, tangent_vector,
                                 tie_tol: float = 1e-6) -> int:
    """Eigenvector with maximal |cos| alignment to the manifold tangent.

    A tie within tie_tol is an error, never a guess.
    """
    t = np.asarray(tangent_vector, dtype=float)
    t = t / np.linalg.norm(t)
    cos = np.array([
        abs(np.vdot(spec_eigenvectors[:, k], t))
        / max(np.linalg.norm(spec_eigenvectors[:, k]), 1e-300)
        for k in range(spec_eigenvectors.shape[1])])
    order = np.argsort(-cos)
    if len(cos) > 1 and cos[order[0]] - cos[order[1]] < tie_tol:
        raise ModelFormatError(
            "ambiguous tangent direction: two eigenvectors align equally")
    return int(order[0])


def type_number_scan(model, diagram, manifold_dim: int = 1,
                     u_base=None, direction=None) -> list:
    """Per-mu supremum of type numbers over the fixed points of a tracked manifold.

    Tangent directions at each fixed point are taken as the manifold_dim
    slowest eigenvalues (the slow-manifold convention used by the scans).
    Entries with no fixed points are interpolated from neighbors and flagged.
    """
    from .steady_states import decompose

    rows = []
    for mu in diagram.mus:
        pts = [p for p in diagram.points if np.isclose(p.mu, mu)]
        sup_nu, sup_sigma = -np.inf, -np.inf
        for p in pts:
            u = None
            if u_base is not None and direction is not None:
                u = np.atleast_1d(u_base) + p.mu * np.atleast_1d(direction)
            spec = decompose(models.jacobian(model, p.x0, u))
            tn = lyapunov_type_numbers(spec.eigenvalues, list(range(manifold_dim)))
            sup_nu = max(sup_nu, tn.nu)
            sup_sigma = max(sup_sigma, tn.sigma)
        rows.append({"mu": float(mu), "sup_nu": sup_nu, "sup_sigma": sup_sigma,
                     "n_points": len(pts), "interpolated": False})
    # fill gaps (bifurcation points with no tracked fixed point)
    for i, row in enumerate(rows):
        if row["n_points"] == 0:
            neighbors = [r for r in (rows[i - 1] if i > 0 else None,
                                     rows[i + 1] if i + 1 < len(rows) else None)
                         if r and r["n_points"] > 0]
            if neighbors:
                row["sup_nu"] = float(np.mean([r["sup_nu"] for r in neighbors]))
                row["sup_sigma"] = float(np.mean([r["sup_sigma"] for r in neighbors]))
                row["interpolated"] = True
    return rows


# ---------------------------------------------------------------------------
# Parameter-dependent reduced models.
# ---------------------------------------------------------------------------

def fit_parametric_reduced(samples_by_mu: dict, M_r: int, mu0: Optional[float] = None,
                           ridge_scale: float = RIDGE_SCALE) -> ParametricReducedModel:
    """Joint fit over (eta, mu - mu0) monomials of total degree 1..M_r.

    samples_by_mu: {mu: (eta, eta_dot)}.  The parameter never evolves
    (mudot = 0 by construction: the model only outputs eta components).
    """
    mus = sorted(samples_by_mu)
    if len(mus) < 3:
        raise ModelFormatError("need >= 3 parameter values")
    if mu0 is None:
        mu0 = mus[len(mus) // 2]
    Phi_rows, Z_rows = [], []
    d = None
    for mu in mus:
        eta, eta_dot = samples_by_mu[mu]
        eta = np.atleast_2d(np.asarray(eta, float))
        eta_dot = np.atleast_2d(np.asarray(eta_dot, float))
        d = eta.shape[1]
        Q = np.hstack([eta, np.full((len(eta), 1), mu - mu0)])
        basis = MonomialBasis(d + 1, 1, M_r)
        Phi_rows.append(monomials(basis, Q))
        Z_rows.append(eta_dot)
    basis = MonomialBasis(d + 1, 1, M_r)
    Phi = np.vstack(Phi_rows)
    Z = np.vstack(Z_rows)
    C, rho = _ridge_lstsq(Phi, Z, ridge_scale)
    return ParametricReducedModel(basis=basis, W_r=C.T, mu0=float(mu0),
                                  diagnostics={"ridge": rho,
                                               "mus": [float(m) for m in mus]})


# ---------------------------------------------------------------------------
# Files.
# ---------------------------------------------------------------------------

def save_reduced_model(model: ReducedModel, path, chart_path: Optional[str] = None):
    doc = {
        "d": model.d,
        "basis": {"d": model.basis.d, "degree_min": model.basis.degree_min,
                  "degree_max": model.basis.degree_max, "ordering": ORDERING_TAG},
        "W_r": model.W_r.tolist(),
        "domain_radius": float(model.domain_radius),
        "chart": chart_path,
        "derivative_scheme": model.diagnostics.get("derivative_scheme"),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_reduced_model(path, chart: Optional[SsmChart] = None) -> ReducedModel:
    with open(path) as fh:
        doc = json.load(fh)
    b = doc["basis"]
    if b.get("ordering", ORDERING_TAG) != ORDERING_TAG:
        raise ModelFormatError(f"unsupported monomial ordering {b.get('ordering')!r}")
    basis = MonomialBasis(int(b["d"]), int(b["degree_min"]), int(b["degree_max"]))
    return ReducedModel(basis=basis, W_r=np.asarray(doc["W_r"], float), chart=chart,
                        domain_radius=float(doc.get("domain_radius", np.inf)),
                        diagnostics={"derivative_scheme": doc.get("derivative_scheme")})
