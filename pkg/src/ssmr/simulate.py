"""Fixed-step RK4 integration with piecewise-constant inputs and bounded noise.

Noise is redrawn once per step and held constant across the step's stages,
matching the discontinuous-in-time, weak-forcing reading of the noise term
(a per-step frozen draw, not a stochastic integrator).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import models
from .errors import DivergenceError, ModelFormatError, TrajectoryTooShortError
from .models import InputSchedule, RnnModel

BLOWUP_DEFAULT = 1e6


@dataclass(frozen=True)
class NoiseSpec:
    """Bounded Gaussian noise: amplitude * N(0,1) with draws rejected beyond +-bound."""

    amplitude: float
    bound: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ModelFormatError("noise amplitude must be nonnegative")
        if self.bound <= 0:
            raise ModelFormatError("noise bound must be positive")


def sample_bounded_gaussian(spec: NoiseSpec, n: int, dim: int,
                            rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """n i.i.d. dim-vectors of bounded normals scaled by spec.amplitude."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    draws = rng.standard_normal((n, dim))
    bad = np.abs(draws) > spec.bound
    while np.any(bad):
        draws[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(draws) > spec.bound
    return spec.amplitude * draws


@dataclass(frozen=True)
class Trajectory:
    """Time-stamped state sequence with its input schedule and noise provenance."""

    times: np.ndarray
    states: np.ndarray
    input_schedule: Optional[InputSchedule] = None
    noise_seed: Optional[int] = None
    noise_values: Optional[np.ndarray] = None  # per-step draws, shape (len-1, N)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        if t.ndim != 1 or x.ndim != 2 or len(t) != len(x) or len(t) < 2:
            raise TrajectoryTooShortError("times/states must be aligned with length >= 2")
        if np.any(np.diff(t) <= 0):
            raise ModelFormatError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class Ensemble:
    trajectories: list
    split: list  # "train" / "test" per trajectory

    def __post_init__(self):
        if not self.trajectories:
            raise ModelFormatError("ensemble must be nonempty")
        dims = {traj.dim for traj in self.trajectories}
        if len(dims) != 1:
            raise ModelFormatError("ensemble trajectories must share one dimension")
        if len(self.split) != len(self.trajectories):
            raise ModelFormatError("split labels must match trajectory count")

    @property
    def train(self):
        return [t for t, s in zip(self.trajectories, self.split) if s == "train"]

    @property
    def test(self):
        return [t for t, s in zip(self.trajectories, self.split) if s == "test"]


def _rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _segment_grid(schedule: Optional[InputSchedule], t_start: float, t_end: float, dt: float):
    """Split [t_start, t_end] at schedule boundaries; dt shrinks per segment to land exactly."""
    cuts = [t_start]
    if schedule is not None:
        for t_seg, _ in schedule.segments:
            if t_start < t_seg < t_end:
                cuts.append(t_seg)
    cuts.append(t_end)
    cuts = sorted(set(cuts))
    for a, b in zip(cuts, cuts[1:]):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        yield a, b, n


def integrate(model, x0, schedule: Optional[InputSchedule], dt: float, t_end: float,
              noise: Optional[NoiseSpec] = None, blowup: float = BLOWUP_DEFAULT,
              record_noise: bool = False) -> Trajectory:
    """Classical RK4 with step-aligned schedule segments and per-step frozen noise.

    For RnnModel the noise enters the state equation as sigma(t)/tau, matching
    tau*dx/dt = ... + sigma(t); for other systems it is added to dx/dt directly.
    """
    if dt <= 0:
        raise ModelFormatError("dt must be positive")
    x = np.asarray(x0, dtype=float).copy()
    t0 = schedule.t_start if schedule is not None else 0.0
    if t_end <= t0:
        raise ModelFormatError("t_end must exceed the start time")
    rng = np.random.default_rng(noise.seed) if noise is not None else None
    noise_scale = 1.0 / model.tau if isinstance(model, RnnModel) else 1.0

    times = [t0]
    states = [x.copy()]
    drawn = []
    for a, b, n in _segment_grid(schedule, t0, t_end, dt):
        h = (b - a) / n
        u = schedule.u_at(a) if schedule is not None else None
        for k in range(n):
            t = a + k * h
            if noise is not None:
                sigma = sample_bounded_gaussian(noise, 1, x.size, rng)[0]
                if record_noise:
                    drawn.append(sigma)
                f = lambda y: models.rhs(model, y, u, t) + noise_scale * sigma
            else:
                f = lambda y: models.rhs(model, y, u, t)
            x = _rk4_step(f, x, h)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > blowup:
                raise DivergenceError(
                    f"state norm exceeded {blowup:g} at t={t + h:.6g}",
                    last_valid_time=t)
            times.append(t + h)
            states.append(x.copy())
    return Trajectory(
        times=np.array(times), states=np.array(states), input_schedule=schedule,
        noise_seed=noise.seed if noise is not None else None,
        noise_values=np.array(drawn) if record_noise and drawn else None)


def flow_map_batch(model, u, X0: np.ndarray, t_span: float, dt: float,
                   blowup: float = BLOWUP_DEFAULT):
    """Endpoint of the flow for a batch of initial conditions (constant input u).

    Returns (X_final, ok_mask); rows that blew up are masked out and frozen.
    """
    X = np.array(X0, dtype=float)
    ok = np.ones(X.shape[0], dtype=bool)
    if t_span <= 0:
        return X, ok
    n = max(1, math.ceil(t_span / dt - 1e-9))
    h = t_span / n
    for _ in range(n):
        Xa = X[ok]
        if Xa.size == 0:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = models.rhs_batch(model, Xa, u)
            k2 = models.rhs_batch(model, Xa + 0.5 * h * k1, u)
            k3 = models.rhs_batch(model, Xa + 0.5 * h * k2, u)
            k4 = models.rhs_batch(model, Xa + h * k3, u)
            Xn = Xa + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            good = np.all(np.isfinite(Xn), axis=1) & \
                ~(np.linalg.norm(np.nan_to_num(Xn), axis=1) > blowup)
        idx = np.flatnonzero(ok)
        X[idx[good]] = Xn[good]
        ok[idx[~good]] = False
    return X, ok


def trim_transient(traj: Trajectory, rate: float, factor: float = 1.0) -> Trajectory:
    """Drop samples with t - t_start < factor/|rate|; rate is the fastest-ignored decay."""
    if rate >= 0:
        raise ModelFormatError("rate must be negative (a decay rate)")
    if factor < 0:
        raise ModelFormatError("factor must be nonnegative")
    if factor == 0:
        return traj
    cutoff = traj.times[0] + factor / abs(rate)
    keep = traj.times >= cutoff - 1e-12
    if keep.sum() < 2:
        raise TrajectoryTooShortError("fewer than 2 samples remain after transient trim")
    return Trajectory(times=traj.times[keep], states=traj.states[keep],
                      input_schedule=traj.input_schedule, noise_seed=traj.noise_seed)


class BallSampler:
    """Uniform initial conditions in a ball of given radius around a center point."""

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        dim = self.center.size
        v = rng.standard_normal((n, dim))
        v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
        r = self.radius * rng.random(n) ** (1.0 / dim)
        return self.center[np.newaxis, :] + r[:, np.newaxis] * v


class SubspaceSampler:
    """Initial conditions spread along a subspace, with a small transverse perturbation."""

    def __init__(self, center, directions, extent: float, transverse: float = 0.0):
        self.center = np.asarray(center, dtype=float)
        self.directions = np.atleast_2d(np.asarray(directions, dtype=float))  # (k, N)
        self.extent = float(extent)
        self.transverse = float(transverse)

    def __call__(self, rng: np.random.Generator, n: int) -> np.ndarray:
        k, dim = self.directions.shape
        coeff = rng.uniform(-self.extent, self.extent, size=(n, k))
        pts = self.center[np.newaxis, :] + coeff @ self.directions
        if self.transverse > 0:
            pts = pts + self.transverse * rng.standard_normal((n, dim))
        return pts


def generate_ensemble(model, init_sampler, schedule, dt, t_end, n_traj: int,
                      noise: Optional[NoiseSpec] = None, split_fraction: float = 0.8,
                      master_seed: int = 0) -> Ensemble:
    """Simulate n_traj trajectories with seeds split off a master seed.

    Per-trajectory noise seeds come from SeedSequence.spawn, so members are
    independent and the whole ensemble is reproducible from (config, master_seed).
    """
    if n_traj < 2:
        raise ModelFormatError("n_traj must be >= 2")
    if not 0 < split_fraction < 1:
        raise ModelFormatError("split_fraction must lie in (0, 1)")
    ss = np.random.SeedSequence(master_seed)
    child_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(n_traj + 2)]
    init_rng = np.random.default_rng(child_seeds[0])
    split_rng = np.random.default_rng(child_seeds[1])
    x0s = init_sampler(init_rng, n_traj)
    trajectories = []
    for i in range(n_traj):
        spec_i = None
        if noise is not None:
            spec_i = NoiseSpec(noise.amplitude, noise.bound, child_seeds[i + 2])
        try:
            trajectories.append(integrate(model, x0s[i], schedule, dt, t_end, spec_i))
        except DivergenceError as exc:
            raise DivergenceError(f"ensemble member {i} diverged: {exc}",
                                  last_valid_time=exc.last_valid_time) from exc
    n_train = int(round(split_fraction * n_traj))
    n_train = min(max(n_train, 1), n_traj - 1)
    order = split_rng.permutation(n_traj)
    split = ["test"] * n_traj
    for i in order[:n_train]:
        split[i] = "train"
    return Ensemble(trajectories=trajectories, split=split)


# ---------------------------------------------------------------------------
# File formats: trajectory CSV (header t,x1,...,xN) and ensemble manifest JSON.
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """Shortest round-trip decimal representation, capped at 17 significant digits."""
    return repr(float(x))


def save_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(traj.dim)])
        for t, row in zip(traj.times, traj.states):
            writer.writerow([format_float(t)] + [format_float(v) for v in row])


def load_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ModelFormatError(f"trajectory CSV must start with a 't' column: {path}")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(rows)
    return Trajectory(times=arr[:, 0], states=arr[:, 1:])


def save_ensemble(ensemble: Ensemble, directory, prefix: str = "traj",
                  config: Optional[dict] = None) -> str:
    """Write member CSVs plus a manifest that records files, seeds, and split labels."""
    import os

    os.makedirs(directory, exist_ok=True)
    members = []
    for i, (traj, label) in enumerate(zip(ensemble.trajectories, ensemble.split)):
        fname = f"{prefix}_{i:03d}.csv"
        save_trajectory_csv(traj, os.path.join(directory, fname))
        members.append({"file": fname, "split": label, "noise_seed": traj.noise_seed})
    manifest = {"members": members, "config": config or {}}
    mpath = os.path.join(directory, f"{prefix}_manifest.json")
    with open(mpath, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return mpath


def load_ensemble(manifest_path) -> Ensemble:
    import os

    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(manifest_path)
    trajectories, split = [], []
    for m in manifest["members"]:
        trajectories.append(load_trajectory_csv(os.path.join(base, m["file"])))
        split.append(m["split"])
    return Ensemble(trajectories=trajectories, split=split)
