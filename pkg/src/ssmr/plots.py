"""Figure rendering for the CLI report paths.

Every function writes a PNG next to the delimited artifacts and returns the
path.  Figures are diagnostic companions to the CSV/JSON output, not the
primary data products.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_trajectory(traj, path, readout=None):
    fig, ax = plt.subplots(figsize=(7, 4))
    if readout is not None:
        ax.plot(traj.times, traj.states @ np.asarray(readout), lw=1.2)
        ax.set_ylabel("readout")
    else:
        n_show = min(traj.dim, 8)
        for i in range(n_show):
            ax.plot(traj.times, traj.states[:, i], lw=0.9, label=f"x{i + 1}")
        if n_show <= 6:
            ax.legend(fontsize=8, ncol=2)
        ax.set_ylabel("state")
    ax.set_xlabel("t")
    return _save(fig, path)


def plot_chart(chart, path, trajectories=None):
    fig = plt.figure(figsize=(6, 5))
    if chart.d == 1:
        ax = fig.add_subplot(111)
        extent = 1.0
        if trajectories:
            etas = np.concatenate([
                (t.states - chart.anchor.x0) @ chart.V_E for t in trajectories])
            extent = 1.1 * float(np.max(np.abs(etas))) or 1.0
        grid = np.linspace(-extent, extent, 200)
        lifted = np.array([chart.lift([e]) for e in grid])
        off = np.linalg.norm(lifted - chart.anchor.x0
                             - np.outer(grid, chart.V_E[:, 0]), axis=1)
        ax.plot(grid, off, lw=1.4)
        ax.set_xlabel("eta1")
        ax.set_ylabel("|off-subspace component|")
    else:
        ax = fig.add_subplot(111, projection="3d")
        extent = 1.0
        if trajectories:
            etas = np.concatenate([
                (t.states - chart.anchor.x0) @ chart.V_E for t in trajectories])
            extent = 1.1 * float(np.max(np.abs(etas))) or 1.0
        g = np.linspace(-extent, extent, 30)
        E1, E2 = np.meshgrid(g, g)
        Z = np.zeros_like(E1)
        for i in range(E1.shape[0]):
            for j in range(E1.shape[1]):
                x = chart.lift([E1[i, j], E2[i, j]])
                y = x - chart.anchor.x0
                Z[i, j] = np.linalg.norm(y - chart.V_E @ (chart.V_E.T @ y))
        ax.plot_surface(E1, E2, Z, cmap="viridis", alpha=0.8)
        ax.set_xlabel("eta1")
        ax.set_ylabel("eta2")
        ax.set_zlabel("|off-subspace|")
    return _save(fig, path)


def plot_reduced_field(model, path, domain=None, fixed_points=None, cycles=None,
                       branches=None):
    fig, ax = plt.subplots(figsize=(6, 5))
    if model.d == 1:
        lo, hi = domain[0] if domain is not None else (-2.0, 2.0)
        grid = np.linspace(lo, hi, 400)
        vals = np.array([model.rhs([g])[0] for g in grid])
        ax.axhline(0.0, color="0.6", lw=0.8)
        ax.plot(grid, vals, lw=1.4)
        if fixed_points:
            for f in fixed_points:
                color = "tab:blue" if f.stability == "stable" else "tab:red"
                ax.plot(f.eta[0], 0.0, "x", color=color, ms=9, mew=2)
        ax.set_xlabel("eta1")
        ax.set_ylabel("eta1-dot")
    else:
        box = np.atleast_2d(domain) if domain is not None else np.array([[-2, 2], [-2, 2]])
        g1 = np.linspace(box[0, 0], box[0, 1], 30)
        g2 = np.linspace(box[1, 0], box[1, 1], 30)
        E1, E2 = np.meshgrid(g1, g2)
        U = np.zeros_like(E1)
        V = np.zeros_like(E2)
        for i in range(E1.shape[0]):
            for j in range(E1.shape[1]):
                v = model.rhs([E1[i, j], E2[i, j]])
                U[i, j], V[i, j] = v
        ax.streamplot(E1, E2, U, V, color="0.7", density=1.2, linewidth=0.7)
        if fixed_points:
            for f in fixed_points:
                color = "tab:blue" if f.stability == "stable" else "tab:red"
                ax.plot(f.eta[0], f.eta[1], "x", color=color, ms=10, mew=2.5)
        if cycles:
            for c in cycles:
                ax.plot(c.samples[:, 0], c.samples[:, 1], "tab:orange", lw=1.8)
        if branches:
            for b in branches:
                ax.plot(b.polyline[:, 0], b.polyline[:, 1], "tab:green", lw=1.6)
        ax.set_xlabel("eta1")
        ax.set_ylabel("eta2")
    return _save(fig, path)


def plot_bifurcation(diagram, path):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_branch = {}
    for p in diagram.points:
        by_branch.setdefault(p.branch_id, []).append(p)
    for bid, pts in sorted(by_branch.items()):
        pts = sorted(pts, key=lambda p: p.mu)
        mus = [p.mu for p in pts]
        z = [p.z0 for p in pts]
        stable = all(p.stability == "stable" for p in pts)
        ax.plot(mus, z, "-" if stable else "--", lw=1.4,
                label=f"branch {bid}{'' if stable else ' (unstable)'}")
    for ev in diagram.events:
        ax.axvline(0.5 * (ev["mu_lo"] + ev["mu_hi"]), color="tab:red", lw=0.8,
                   alpha=0.6)
    ax.set_xlabel("mu")
    ax.set_ylabel("readout z0")
    if len(by_branch) <= 8:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_ftle(field, path, ridges=None):
    fig, ax = plt.subplots(figsize=(6, 5))
    s1, s2 = field.plane.coords()
    im = ax.pcolormesh(s1, s2, field.values.T, shading="auto", cmap="magma")
    fig.colorbar(im, ax=ax, label="FTLE")
    if ridges:
        for poly in ridges:
            ax.plot(poly[:, 0], poly[:, 1], "cyan", lw=1.5)
    ax.set_xlabel("eta1")
    ax.set_ylabel("eta2")
    return _save(fig, path)


def plot_anchor(expansion, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    sl = expansion.valid
    t = expansion.orders[0].times[sl]
    comp = expansion.composite()[sl]
    n_show = min(comp.shape[1], 4)
    for i in range(n_show):
        ax.plot(t, comp[:, i], lw=0.9, label=f"x{i + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("composite anchor offset")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_surface_export(rows, d, path):
    fig = plt.figure(figsize=(6, 5))
    arr = np.asarray(rows, dtype=float)
    if d == 1:
        ax = fig.add_subplot(111)
        ax.plot(arr[:, 0], np.linalg.norm(arr[:, 1:], axis=1), lw=1.3)
        ax.set_xlabel("eta1")
        ax.set_ylabel("|x - x0|")
    else:
        ax = fig.add_subplot(111, projection="3d")
        ax.scatter(arr[:, 0], arr[:, 1], np.linalg.norm(arr[:, 2:], axis=1),
                   s=3, c=np.linalg.norm(arr[:, 2:], axis=1), cmap="viridis")
        ax.set_xlabel("eta1")
        ax.set_ylabel("eta2")
        ax.set_zlabel("|x - x0|")
    return _save(fig, path)
