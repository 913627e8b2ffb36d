"""Polynomial manifold charts over a spectral subspace.

Two independent routes produce the same object: a ridge-regularized graph
regression on trajectory data, and an order-by-order solve of the invariance
equation using exact derivatives of the vector field.  The second is the
oracle for the first on analytic systems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import models, _polymap as pm
from .errors import (FixedPointLostError, IllPosedFitError, ModelFormatError,
                     ResonanceError)
from .poly import (MonomialBasis, ORDERING_TAG, extended_graph_basis,
                   monomial_jacobian, monomials)
from .steady_states import (FixedPoint, SubspaceSelection, check_nonresonance,
                            decompose)

RIDGE_SCALE = 1e-10


@dataclass
class SsmChart:
    """Graph  x = x0 + V_E eta + H phi(eta)  with H in the complement of V_E."""

    anchor: FixedPoint
    V_E: np.ndarray
    basis: MonomialBasis
    H: np.ndarray
    fit_diagnostics: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.V_E.shape[1]

    @property
    def degree(self) -> int:
        return self.basis.degree_max

    def lift(self, eta) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return self.anchor.x0 + self.V_E @ eta + self.H @ monomials(self.basis, eta)

    def project(self, x) -> np.ndarray:
        return self.V_E.T @ (np.asarray(x, dtype=float) - self.anchor.x0)

    def tangent_at(self, eta) -> np.ndarray:
        """Columns span the chart's tangent space at eta (N x d)."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        return self.V_E + self.H @ monomial_jacobian(self.basis, eta)


def lift(chart: SsmChart, eta) -> np.ndarray:
    return chart.lift(eta)


def project(chart: SsmChart, x) -> np.ndarray:
    return chart.project(x)


def _stack_states(trajectories) -> np.ndarray:
    rows = []
    for traj in trajectories:
        rows.append(np.asarray(traj.states if hasattr(traj, "states") else traj, float))
    return np.vstack(rows)


def _ridge_lstsq(Phi: np.ndarray, Z: np.ndarray, ridge_scale: float):
    """Solve min ||Z - Phi C||^2 + rho ||C||^2 with rho tied to the regressor scale.

    Columns are RMS-normalized before the solve so monomials of different
    degree do not wreck the conditioning; C is rescaled back afterwards.
    """
    m = Phi.shape[1]
    scale = np.sqrt(np.mean(Phi ** 2, axis=0))
    scale[scale < 1e-300] = 1.0
    Phi_n = Phi / scale[np.newaxis, :]
    rho = ridge_scale * float(np.mean(np.sum(Phi_n ** 2, axis=1)))
    G_reg = Phi_n.T @ Phi_n + rho * np.eye(m)
    cond = np.linalg.cond(G_reg)
    if not np.isfinite(cond) or cond > 1e14:
        raise IllPosedFitError(
            f"regression gram matrix condition {cond:.3g}; "
            "supply more trajectories or lower the polynomial order")
    C = scipy.linalg.solve(G_reg, Phi_n.T @ Z, assume_a="pos")
    return C / scale[:, np.newaxis], rho


def fit_ssm_data(train, fp: FixedPoint, selection: SubspaceSelection, M: int,
                 ridge_scale: float = RIDGE_SCALE) -> SsmChart:
    """Least-squares graph coefficients from trajectory data.

    States are re-centered at the anchor; regression targets are projected
    onto the orthogonal complement of V_E so lift/project are exact inverses.
    """
    if M < 2:
        raise ModelFormatError("chart order M must be >= 2")
    V = selection.V_E
    X = _stack_states(train)
    Y = X - fp.x0[np.newaxis, :]
    Eta = Y @ V
    Z = Y - Eta @ V.T
    basis = MonomialBasis(selection.d, 2, M)
    Phi = monomials(basis, Eta)
    C, rho = _ridge_lstsq(Phi, Z, ridge_scale)
    H = C.T
    H = H - V @ (V.T @ H)  # numerical hygiene: rows exactly in the complement

    chart = SsmChart(anchor=fp, V_E=V, basis=basis, H=H,
                     fit_diagnostics={"method": "data-driven", "ridge": rho,
                                      "n_samples": int(Y.shape[0])})
    curve = []
    for order in range(2, M + 1):
        sub = MonomialBasis(selection.d, 2, order)
        cols = [basis.exponent_table.index(e) for e in sub.exponent_table]
        sub_chart = SsmChart(anchor=fp, V_E=V, basis=sub, H=H[:, cols])
        curve.append((order, mfe(sub_chart, train)))
    chart.fit_diagnostics["mfe_train"] = curve[-1][1]
    chart.fit_diagnostics["residual_curve"] = curve
    return chart


def mfe(chart: SsmChart, trajectories, normalized: bool = True) -> float:
    """Mean distance from samples to their chart reconstruction.

    Normalized (default) by the mean centered amplitude; pass
    normalized=False for the raw mean distance.
    """
    X = _stack_states(trajectories)
    if X.size == 0:
        raise ModelFormatError("mfe needs at least one sample")
    Y = X - chart.anchor.x0[np.newaxis, :]
    Eta = Y @ chart.V_E
    recon = Eta @ chart.V_E.T + monomials(chart.basis, Eta) @ chart.H.T
    dist = np.linalg.norm(Y - recon, axis=1)
    raw = float(np.mean(dist))
    if not normalized:
        return raw
    scale = float(np.mean(np.linalg.norm(Y, axis=1)))
    return raw / scale if scale > 0 else raw


def invariance_residual(chart: SsmChart, model, etas, u=None) -> float:
    """Max over sample points of the vector-field component normal to the chart,
    relative to the field magnitude (pointwise restatement of invariance)."""
    worst = 0.0
    for eta in np.atleast_2d(etas):
        x = chart.lift(eta)
        f = models.rhs(model, x, u)
        if np.linalg.norm(f) < 1e-12:
            continue  # at the anchor the relative residual is 0/0
        T = chart.tangent_at(eta)
        coeffs, *_ = np.linalg.lstsq(T, f, rcond=None)
        normal = f - T @ coeffs
        worst = max(worst, float(np.linalg.norm(normal) / np.linalg.norm(f)))
    return worst


# ---------------------------------------------------------------------------
# Equation-driven route: Taylor coefficients from the invariance equation.
# ---------------------------------------------------------------------------

def _tanh_taylor_coeffs(x0: np.ndarray, max_order: int) -> np.ndarray:
    """coeffs[m, j] = tanh^(m)(x0_j) / m! via the derivative polynomials in t=tanh."""
    t = np.tanh(np.asarray(x0, dtype=float))
    # D_1(t) = 1 - t^2;  D_{m+1} = D_m'(t) (1 - t^2)
    poly = np.array([1.0, 0.0, -1.0])  # coefficients of 1 - t^2, ascending powers
    out = np.zeros((max_order + 1, t.size))
    out[0] = t
    fact = 1.0
    for m in range(1, max_order + 1):
        fact *= m
        out[m] = np.polyval(poly[::-1], t) / fact
        dpoly = np.array([k * poly[k] for k in range(1, len(poly))])
        poly = np.convolve(dpoly, [1.0, 0.0, -1.0])
    return out


def _field_taylor_builder(model, x0, u, max_deg):
    """Return taylor(y_map) -> vector polynomial of f(x0 + y(p)) in p coordinates."""
    if isinstance(model, models.RnnModel):
        if model.variant != "vanilla":
            raise ModelFormatError("equation-driven charts support the vanilla variant")
        coeffs = _tanh_taylor_coeffs(x0, max_deg)
        Bu = model.B @ models._check_u(model, u)
        n = model.n_units

        def taylor(y_map, d):
            zero = (0,) * d
            g = []
            for j in range(n):
                yj = pm.pm_component(y_map, j)
                gj = {zero: coeffs[0, j] + 0.0j}
                yj_pow = {zero: 1.0 + 0.0j}
                for m in range(1, max_deg + 1):
                    yj_pow = pm.pm_mul(yj_pow, yj, max_deg)
                    if coeffs[m, j] != 0.0:
                        gj = pm.pm_add(gj, pm.pm_scale(yj_pow, coeffs[m, j]))
                g.append(gj)
            gvec = pm.pm_vector_from_scalars(g)
            out = pm.pm_apply_matrix(model.W, gvec)
            out = pm.pm_add(out, pm.pm_scale(y_map, -1.0))
            const = {zero: (-x0 + Bu).astype(complex)}
            out = pm.pm_add(out, const)
            return pm.pm_scale(out, 1.0 / model.tau)

        return taylor

    if isinstance(model, models.PolynomialSystem):
        A = model.A
        const_in = np.zeros(model.dim)
        if model.B is not None:
            const_in = model.B @ models._check_u(model, u)

        def taylor(y_map, d):
            zero = (0,) * d
            out = pm.pm_apply_matrix(A, y_map)
            out = pm.pm_add(out, {zero: (A @ x0 + const_in).astype(complex)})
            for term in model.terms:
                s = {zero: 1.0 + 0.0j}
                for v, p, kind in term.factors:
                    if kind == "input":
                        s = pm.pm_scale(s, (v @ models._input_vec(u)) ** p)
                        continue
                    lin = {zero: complex(v @ x0)}
                    for e, c in y_map.items():
                        val = complex(v @ c)
                        if val != 0:
                            lin[e] = lin.get(e, 0.0) + val
                    s = pm.pm_mul(s, pm.pm_pow(lin, p, max_deg, d), max_deg)
                out = pm.pm_add(out, {e: c * term.coeff for e, c in s.items()})
            return out

        return taylor

    raise ModelFormatError(
        "equation-driven charts need an analytic model (RnnModel or PolynomialSystem)")


def solve_invariance_eigen(lam, P, in_idx, out_idx, field_taylor, M,
                           resonance_tol: float = 1e-8) -> dict:
    """Order-by-order graph coefficients over the eigen coordinates.

    Seeks q = w(p) (inside coordinates p, outside q) satisfying
    Dw(p) pdot = qdot on the graph; at degree m every coefficient solves a
    scalar equation with divisor <alpha, lam_in> - lam_out.
    """
    d = len(in_idx)
    Pinv = np.linalg.inv(P)
    lam_in = lam[list(in_idx)]
    lam_out = lam[list(out_idx)]
    scale = max(1.0, float(np.max(np.abs(lam))))
    w = {}

    def y_map_current():
        y = {}
        for i in range(d):
            e = tuple(int(j == i) for j in range(d))
            y[e] = P[:, in_idx[i]].astype(complex)
        for e, c in w.items():
            add = P[:, list(out_idx)] @ c
            y[e] = y.get(e, np.zeros(P.shape[0], complex)) + add
        return y

    for m in range(2, M + 1):
        F = field_taylor(y_map_current(), d)
        G = pm.pm_apply_matrix(Pinv, F)
        G_in = [
            {e: c[in_idx[j]] for e, c in G.items()} for j in range(d)
        ]
        G_out = {e: c[list(out_idx)] for e, c in G.items()}
        # residual at degree m: [G_out - Dw . G_in]_m with w known to order m-1
        R = pm.pm_degree_terms(G_out, m)
        for j in range(d):
            DwGj = {}
            dw = pm.pm_diff(w, j) if w else {}
            for e1, c1 in dw.items():
                for e2, s2 in G_in[j].items():
                    if sum(e1) + sum(e2) != m:
                        continue
                    e = tuple(a + b for a, b in zip(e1, e2))
                    DwGj[e] = DwGj.get(e, 0.0) + c1 * s2
            for e, c in DwGj.items():
                R[e] = R.get(e, np.zeros(len(out_idx), complex)) - c
        for e, rhs_vec in R.items():
            div = np.sum(np.array(e) * lam_in) - lam_out
            bad = np.abs(div) < resonance_tol * scale
            if np.any(bad):
                k = int(np.argmax(bad))
                raise ResonanceError(
                    f"resonant multi-index {e} against outside eigenvalue "
                    f"{lam_out[k]:.6g}", multi_index=e, eigenvalue=lam_out[k])
            w[e] = rhs_vec / div
    return w


def _realifier(lam_in: np.ndarray) -> np.ndarray:
    """C with p = C r mapping real coordinates to the complex eigen coordinates."""
    d = len(lam_in)
    C = np.zeros((d, d), complex)
    i = 0
    while i < d:
        if abs(lam_in[i].imag) < 1e-12 * max(1.0, abs(lam_in[i])):
            C[i, i] = 1.0
            i += 1
        else:
            C[i, i] = 1.0
            C[i, i + 1] = 1.0j
            C[i + 1, i] = 1.0
            C[i + 1, i + 1] = -1.0j
            i += 2
    return C


def ssm_taylor_equation_driven(model, fp: FixedPoint, selection: SubspaceSelection,
                               M: int, resonance_tol: float = 1e-8) -> SsmChart:
    """Chart from the invariance equation, independent of any trajectory data.

    Solves the eigen-coordinate graph order-by-order, then re-expresses the
    manifold as a graph over the orthonormal V_E by power-series inversion, so
    the result is directly comparable to the data-driven chart.
    """
    if M < 2:
        raise ModelFormatError("chart order M must be >= 2")
    A = models.jacobian(model, fp.x0, fp.u)
    spec = decompose(A)
    in_idx = list(selection.indices)
    out_idx = [i for i in range(spec.n) if i not in in_idx]
    hits = check_nonresonance(spec, in_idx, max_order=M)
    if hits:
        h = hits[0]
        raise ResonanceError(
            f"nonresonance violated at multi-index {h.multi_index} vs "
            f"{h.outside_eigenvalue:.6g}", multi_index=h.multi_index,
            eigenvalue=h.outside_eigenvalue)
    field_taylor = _field_taylor_builder(model, fp.x0, fp.u, M)
    w = solve_invariance_eigen(spec.eigenvalues, spec.eigenvectors, in_idx, out_idx,
                               field_taylor, M, resonance_tol)

    d = len(in_idx)
    lam_in = spec.eigenvalues[in_idx]
    C = _realifier(lam_in)
    P_in = spec.eigenvectors[:, in_idx]
    P_out = spec.eigenvectors[:, out_idx]
    T_in = P_in @ C
    if np.max(np.abs(T_in.imag)) > 1e-8 * max(1.0, np.max(np.abs(T_in.real))):
        raise ModelFormatError("realified tangent basis is not real")
    T_in = T_in.real

    # manifold in real parameters r: y(r) = T_in r + P_out w(C r)
    w_r = pm.pm_compose_linear(w, C, M) if w else {}
    y_map = {}
    for i in range(d):
        e = tuple(int(j == i) for j in range(d))
        y_map[e] = T_in[:, i].astype(complex)
    for e, c in w_r.items():
        y_map[e] = y_map.get(e, np.zeros(spec.n, complex)) + P_out @ c

    V = selection.V_E
    S = V.T @ T_in
    S_inv = np.linalg.inv(S)
    # eta(r) = S r + E(r); invert order by order to get r(eta)
    E_map = {e: V.T @ c for e, c in y_map.items() if sum(e) >= 2}
    r_subs = [
        {tuple(int(j == i) for j in range(d)): complex(S_inv[k, i])
         for i in range(d) if S_inv[k, i] != 0}
        for k in range(d)
    ]
    for m in range(2, M + 1):
        E_comp = pm.pm_compose(E_map, r_subs, m, d)
        corr = pm.pm_degree_terms(E_comp, m)
        for e, c in corr.items():
            delta = -(S_inv @ c)
            for k in range(d):
                if delta[k] != 0:
                    r_subs[k][e] = r_subs[k].get(e, 0.0) + delta[k]

    y_eta = pm.pm_compose(y_map, r_subs, M, d)
    basis = MonomialBasis(d, 2, M)
    H = np.zeros((spec.n, len(basis)))
    P_perp = np.eye(spec.n) - V @ V.T
    for k, e in enumerate(basis.exponent_table):
        c = y_eta.get(e)
        if c is None:
            continue
        if np.max(np.abs(c.imag)) > 1e-7 * max(1.0, np.max(np.abs(c.real))):
            raise ModelFormatError(f"non-real chart coefficient at {e}")
        H[:, k] = P_perp @ c.real
    return SsmChart(anchor=fp, V_E=V, basis=basis, H=H,
                    fit_diagnostics={"method": "equation-driven"})


# ---------------------------------------------------------------------------
# Parameter-extended charts (dummy-variable parameter direction).
# ---------------------------------------------------------------------------

@dataclass
class ExtendedSsmChart:
    """Graph over (eta, mu - mu0): x = x0(mu0) + V_E eta + H phi_ext(eta, mubar)."""

    anchor: FixedPoint
    V_E: np.ndarray
    basis: MonomialBasis
    H: np.ndarray
    mu0: float
    parameter: str = "mu"
    fit_diagnostics: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.V_E.shape[1]

    def lift(self, eta, mu) -> np.ndarray:
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        q = np.concatenate([eta, [mu - self.mu0]])
        return self.anchor.x0 + self.V_E @ eta + self.H @ monomials(self.basis, q)

    def slice_coefficients(self, mu: float):
        """(anchor_offset, tangent_tilt, H_eta basis, H_eta) of the fixed-mu slice."""
        mubar = mu - self.mu0
        d = self.d
        offset = np.zeros(self.V_E.shape[0])
        tilt = np.zeros_like(self.V_E)
        eta_basis = MonomialBasis(d, 2, self.basis.degree_max)
        H_eta = np.zeros((self.V_E.shape[0], len(eta_basis)))
        lookup = {e: k for k, e in enumerate(eta_basis.exponent_table)}
        for k, expo in enumerate(self.basis.exponent_table):
            e_eta, b = expo[:-1], expo[-1]
            weight = mubar ** b
            col = self.H[:, k] * weight
            deg = sum(e_eta)
            if deg == 0:
                offset += col
            elif deg == 1:
                j = int(np.argmax(e_eta))
                tilt[:, j] += col
            else:
                H_eta[:, lookup[e_eta]] += col
        return offset, tilt, eta_basis, H_eta



def fit_extended_ssm(data_by_mu, fp_family, selection: SubspaceSelection, M: int,
                     mu0: Optional[float] = None,
                     ridge_scale: float = RIDGE_SCALE) -> ExtendedSsmChart:
    """Single regression over (eta, mu - mu0) for a family of ensembles.

    data_by_mu: {mu: trajectories}; fp_family: {mu: FixedPoint} (None marks a
    lost anchor, which is an error directing the caller to per-mu charts).
    """
    mus = sorted(data_by_mu)
    if len(mus) < 3:
        raise ModelFormatError("need >= 3 distinct parameter values")
    for mu in mus:
        fp = fp_family.get(mu)
        if fp is None or fp.stability == "nonhyperbolic":
            raise FixedPointLostError(
                f"fixed point lost or nonhyperbolic at mu={mu}; a single "
                "parameter-dependent model is impossible across a bifurcation -- "
                "fit per-mu charts instead")
    if mu0 is None:
        mu0 = mus[len(mus) // 2]
    fp0 = fp_family[mu0]
    V = selection.V_E
    basis = extended_graph_basis(selection.d, M)
    Phi_rows, Z_rows = [], []
    for mu in mus:
        X = _stack_states(data_by_mu[mu])
        Y = X - fp0.x0[np.newaxis, :]
        Eta = Y @ V
        Q = np.hstack([Eta, np.full((len(Eta), 1), mu - mu0)])
        Phi_rows.append(monomials(basis, Q))
        Z_rows.append(Y - Eta @ V.T)
    Phi = np.vstack(Phi_rows)
    Z = np.vstack(Z_rows)
    C, rho = _ridge_lstsq(Phi, Z, ridge_scale)
    H = C.T
    H = H - V @ (V.T @ H)
    return ExtendedSsmChart(anchor=fp0, V_E=V, basis=basis, H=H, mu0=float(mu0),
                            fit_diagnostics={"method": "extended", "ridge": rho,
                                             "mus": [float(m) for m in mus]})


# ---------------------------------------------------------------------------
# Chart files.
# ---------------------------------------------------------------------------

def save_chart(chart: SsmChart, path) -> None:
    doc = {
        "anchor": {
            "x0": chart.anchor.x0.tolist(),
            "u": None if chart.anchor.u is None else chart.anchor.u.tolist(),
            "residual_norm": float(chart.anchor.residual_norm),
            "stability": chart.anchor.stability,
        },
        "V_E": chart.V_E.tolist(),
        "basis": {
            "d": chart.basis.d,
            "degree_min": chart.basis.degree_min,
            "degree_max": chart.basis.degree_max,
            "ordering": ORDERING_TAG,
        },
        "H": chart.H.tolist(),
        "diagnostics": _jsonable(chart.fit_diagnostics),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_chart(path) -> SsmChart:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("anchor", "V_E", "basis", "H"):
        if key not in doc:
            raise ModelFormatError(f"chart file missing field '{key}'")
    b = doc["basis"]
    if b.get("ordering", ORDERING_TAG) != ORDERING_TAG:
        raise ModelFormatError(f"unsupported monomial ordering {b.get('ordering')!r}")
    anchor = FixedPoint(
        x0=np.asarray(doc["anchor"]["x0"], float),
        u=None if doc["anchor"].get("u") is None else np.asarray(doc["anchor"]["u"], float),
        residual_norm=float(doc["anchor"].get("residual_norm", np.nan)),
        stability=doc["anchor"].get("stability", "stable"))
    basis = MonomialBasis(int(b["d"]), int(b["degree_min"]), int(b["degree_max"]))
    return SsmChart(anchor=anchor, V_E=np.asarray(doc["V_E"], float), basis=basis,
                    H=np.asarray(doc["H"], float),
                    fit_diagnostics=doc.get("diagnostics", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
