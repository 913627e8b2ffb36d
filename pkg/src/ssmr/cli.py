"""Command-line front end: config-driven pipelines with provenance records.

Every command reads one JSON config (or a prior run.json, which embeds the
effective config), writes its module's artifact files plus run.json into the
output directory, and exits 0 on success, 2 on validation errors, 3 on
numerical failures, naming the failing stage on stderr.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time

import numpy as np

from . import __version__, models, plots, simulate as sim
from . import ftle as ftle_mod
from . import nonautonomous as na
from . import reduced_dynamics as rd
from . import ssm_geometry as geo
from . import steady_states as ss
from .errors import (DivergenceError, FixedPointLostError, HorizonOverflowError,
                     IllPosedFitError, ModelFormatError, ResonanceError, SsmrError)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_NUMERICAL = (DivergenceError, IllPosedFitError, ResonanceError,
              HorizonOverflowError, FixedPointLostError)


class StageFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
        self.exc = exc


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageFailure(name, exc) from exc


# ---------------------------------------------------------------------------
# Config handling.
# ---------------------------------------------------------------------------

DEFAULTS = {
    "seed": 0,
    "plot": True,
    "schedule": None,
    "simulation": {"dt": 1e-2, "t_end": 10.0, "x0": None, "noise": None},
    "ensemble": {"n_traj": 20, "split_fraction": 0.8, "dt": 1e-2, "t_end": 6.0,
                 "noise": None,
                 "sampler": {"type": "ball", "center": "fixed_point", "radius": 0.1},
                 "trim": None},
    "fixed_points": {"n_random_seeds": 50, "seed_radius": 1.0, "newton_tol": 1e-10},
    "ssm": {"order": 3, "dimension": None},
    "reduced": {"order": 3, "scheme": "central-4th-order", "chart": None},
    "portrait": {"reduced_model": None, "chart": None, "domain": None},
    "ftle": {"plane": {"center": "fixed_point", "basis": "slow",
                       "n1": 31, "n2": 31, "extent1": [-1.0, 1.0],
                       "extent2": [-1.0, 1.0]},
             "horizon": 4.0, "fd_step": None, "dt": 1e-2},
    "anchor": {"order": 3, "dt": 1e-2, "t_end": 60.0,
               "noise": {"amplitude": 0.01, "bound": 3.0, "seed": 0}},
    "continuation": {"direction": None, "mu_range": [-0.1, 0.1], "n_steps": 21,
                     "readout": None, "match_tol": 0.5, "sn_tol": 1e-3},
    "export": {"source": None, "grid": [50, 50], "extent": [[-1.0, 1.0], [-1.0, 1.0]]},
}


def _merge_defaults(config: dict) -> dict:
    """Deep-fill defaults so the provenance copy echoes every effective value."""
    out = copy.deepcopy(DEFAULTS)

    def merge(dst, src):
        for k, v in src.items():
            if isinstance(v, dict) and isinstance(dst.get(k), dict):
                merge(dst[k], v)
            else:
                dst[k] = v
    merge(out, config)
    return out


def load_config(path: str, overrides=(), seed=None, out_dir=None,
                no_plot=False) -> dict:
    if not os.path.exists(path):
        raise ModelFormatError(f"config file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if "command" in doc and "config" in doc:
        doc = doc["config"]  # a provenance record suffices to re-run
    config = _merge_defaults(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ModelFormatError(f"override must be dotted.path=value: {item!r}")
        dotted, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    if seed is not None:
        config["seed"] = seed
    if out_dir is not None:
        config["output_dir"] = out_dir
    if no_plot:
        config["plot"] = False
    if "model" not in config:
        raise ModelFormatError("config must name a 'model' file")
    if not os.path.exists(config["model"]):
        raise ModelFormatError(f"model file not found: {config['model']}")
    config.setdefault("output_dir", "ssmr-out")
    return config


def _write_provenance(command: str, config: dict, out_dir: str, t_start: float):
    doc = {"command": command, "config": config, "version": __version__,
           "seed": config.get("seed"), "wall_time_s": time.time() - t_start}
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _prepare(config):
    out_dir = config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    model = models.load_model(config["model"])
    schedule = None
    if config.get("schedule"):
        schedule = models.InputSchedule(
            [(seg["t_start"], seg["u"]) for seg in config["schedule"]])
    return model, schedule, out_dir


def _constant_u(config, model):
    if config.get("schedule"):
        return np.asarray(config["schedule"][0]["u"], dtype=float)
    n_in = getattr(model, "n_inputs", 0)
    return np.zeros(n_in) if n_in else None


def _noise_spec(block, fallback_seed):
    if not block:
        return None
    return sim.NoiseSpec(amplitude=block.get("amplitude", 0.0),
                         bound=block.get("bound", 3.0),
                         seed=block.get("seed", fallback_seed))


def _find_anchor(model, u, config, rng):
    fp_cfg = config["fixed_points"]
    dim = model.dim
    seeds = [np.zeros(dim)]
    seeds += list(rng.normal(scale=fp_cfg["seed_radius"],
                             size=(fp_cfg["n_random_seeds"], dim)))
    fps = ss.find_fixed_points(model, u, seeds, newton_tol=fp_cfg["newton_tol"])
    if not len(fps):
        raise ModelFormatError("no fixed point found from the configured seeds")
    origin_dist = [float(np.linalg.norm(f.x0)) for f in fps]
    return fps[int(np.argmin(origin_dist))], fps


def _build_ensemble(model, schedule, config, fp):
    ens_cfg = config["ensemble"]
    sampler_cfg = ens_cfg["sampler"]
    center = sampler_cfg.get("center", "fixed_point")
    center = fp.x0 if isinstance(center, str) else np.asarray(center, dtype=float)
    if sampler_cfg.get("type", "ball") == "ball":
        sampler = sim.BallSampler(center, sampler_cfg.get("radius", 0.1))
    else:
        sampler = sim.SubspaceSampler(center,
                                      np.asarray(sampler_cfg["directions"], float),
                                      sampler_cfg.get("extent", 0.1),
                                      sampler_cfg.get("transverse", 0.0))
    noise = _noise_spec(ens_cfg.get("noise"), config["seed"])
    ens = sim.generate_ensemble(model, sampler, schedule, ens_cfg["dt"],
                                ens_cfg["t_end"], ens_cfg["n_traj"], noise,
                                ens_cfg["split_fraction"], master_seed=config["seed"])
    trim = ens_cfg.get("trim")
    if trim:
        trimmed = [sim.trim_transient(t, trim["rate"], trim.get("factor", 1.0))
                   for t in ens.trajectories]
        ens = sim.Ensemble(trajectories=trimmed, split=list(ens.split))
    return ens


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

def cmd_simulate(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    sim_cfg = config["simulation"]
    x0 = np.zeros(model.dim) if sim_cfg.get("x0") is None \
        else np.asarray(sim_cfg["x0"], dtype=float)
    noise = _noise_spec(sim_cfg.get("noise"), config["seed"])
    traj = _stage("integrate", sim.integrate, model, x0, schedule,
                  sim_cfg["dt"], sim_cfg["t_end"], noise)
    sim.save_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    if config["plot"]:
        plots.plot_trajectory(traj, os.path.join(out_dir, "trajectory.png"))
    _write_provenance("simulate", config, out_dir, t0)
    return EXIT_OK


def cmd_fixed_points(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    u = _constant_u(config, model)
    rng = np.random.default_rng(config["seed"])
    _, fps = _stage("newton-search", _find_anchor, model, u, config, rng)
    doc = []
    for f in fps:
        lam = np.linalg.eigvals(models.jacobian(model, f.x0, u))
        order = np.argsort(-lam.real)
        doc.append({
            "x0": f.x0.tolist(),
            "residual_norm": float(f.residual_norm),
            "stability": f.stability,
            "eigenvalues_re": lam.real[order].tolist(),
            "eigenvalues_im": lam.imag[order].tolist(),
        })
    with open(os.path.join(out_dir, "fixed_points.json"), "w") as fh:
        json.dump({"n_seeds": fps.n_seeds, "n_failed": fps.n_failed,
                   "points": doc}, fh, indent=1)
        fh.write("\n")
    _write_provenance("fixed-points", config, out_dir, t0)
    return EXIT_OK


def _chart_pipeline(config):
    """Shared front half: model, anchor, subspace, ensemble, chart."""
    model, schedule, out_dir = _prepare(config)
    u = _constant_u(config, model)
    rng = np.random.default_rng(config["seed"])
    fp, _ = _stage("newton-search", _find_anchor, model, u, config, rng)
    spec = _stage("linearize", ss.linearize, model, fp)
    sel = _stage("subspace-selection", ss.select_slow_subspace, spec,
                 config["ssm"]["dimension"])
    ens = _stage("ensemble", _build_ensemble, model, schedule, config, fp)
    chart = _stage("ssm-fit", geo.fit_ssm_data, ens.train, fp, sel,
                   config["ssm"]["order"])
    chart.fit_diagnostics["mfe_test"] = geo.mfe(chart, ens.test) if ens.test else None
    return model, schedule, out_dir, u, fp, sel, ens, chart


def cmd_fit_ssm(config) -> int:
    t0 = time.time()
    model, schedule, out_dir, u, fp, sel, ens, chart = _chart_pipeline(config)
    geo.save_chart(chart, os.path.join(out_dir, "chart.json"))
    sim.save_ensemble(ens, out_dir, config=None)
    if config["plot"]:
        plots.plot_chart(chart, os.path.join(out_dir, "chart.png"), ens.train)
    _write_provenance("fit-ssm", config, out_dir, t0)
    return EXIT_OK


def cmd_fit_reduced(config) -> int:
    t0 = time.time()
    red_cfg = config["reduced"]
    if red_cfg.get("chart"):
        model, schedule, out_dir = _prepare(config)
        chart = geo.load_chart(red_cfg["chart"])
        fp = chart.anchor
        ens = _stage("ensemble", _build_ensemble, model, schedule, config, fp)
    else:
        model, schedule, out_dir, u, fp, sel, ens, chart = _chart_pipeline(config)
        geo.save_chart(chart, os.path.join(out_dir, "chart.json"))
    reduced = _stage("reduced-fit", rd.fit_reduced_from_trajectories,
                     ens.train, chart, red_cfg["order"], red_cfg["scheme"])
    nmte_val, excluded = (None, 0)
    if ens.test:
        try:
            nmte_val, excluded = rd.nmte(reduced, chart, ens.test)
        except DivergenceError:
            nmte_val = None
    reduced.diagnostics["nmte_test"] = nmte_val
    reduced.diagnostics["nmte_excluded"] = excluded
    rd.save_reduced_model(reduced, os.path.join(out_dir, "reduced.json"),
                          chart_path="chart.json")
    with open(os.path.join(out_dir, "reduced_diagnostics.json"), "w") as fh:
        json.dump(geo._jsonable(reduced.diagnostics), fh, indent=1)
        fh.write("\n")
    if config["plot"]:
        box = [[-reduced.domain_radius, reduced.domain_radius]] * reduced.d
        plots.plot_reduced_field(reduced, os.path.join(out_dir, "reduced_field.png"),
                                 domain=box)
    _write_provenance("fit-reduced", config, out_dir, t0)
    return EXIT_OK


def cmd_portrait(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    por = config["portrait"]
    if not por.get("reduced_model"):
        raise ModelFormatError("portrait needs portrait.reduced_model (a reduced.json)")
    chart = geo.load_chart(por["chart"]) if por.get("chart") else None
    reduced = rd.load_reduced_model(por["reduced_model"], chart=chart)
    if por.get("domain") is not None:
        box = np.atleast_2d(np.asarray(por["domain"], dtype=float))
    else:
        r = reduced.domain_radius if np.isfinite(reduced.domain_radius) else 2.0
        box = np.tile([-r, r], (reduced.d, 1))
    fps = _stage("reduced-roots", rd.reduced_fixed_points, reduced, box)
    report = rd.PhasePortraitReport(fixed_points_reduced=fps)
    cycles, het = [], None
    if reduced.d == 1:
        try:
            basins = rd.basin_widths_1d(reduced, box[0])
            report.basin_boundaries_1d = basins["separators"]
            report.basin_widths = basins["widths"]
        except ModelFormatError:
            pass
    elif reduced.d == 2:
        u0 = box.mean(axis=1) + 0.1 * (box[:, 1] - box.mean(axis=1))
        cyc = _stage("limit-cycle", rd.detect_limit_cycle, reduced, u0, 1e-3, 200.0)
        if cyc is not None:
            cycles = [cyc]
            report.limit_cycles = [cyc]
            np.savetxt(os.path.join(out_dir, "cycle.csv"), cyc.samples,
                       delimiter=",", header="eta1,eta2", comments="")
        het = _stage("heteroclinic", rd.detect_heteroclinic, reduced, box)
        report.heteroclinics = het.branches
        report.heteroclinic_loop_closed = het.loop is not None
        for k, b in enumerate(het.branches):
            np.savetxt(os.path.join(out_dir, f"branch_{k}.csv"), b.polyline,
                       delimiter=",", header="eta1,eta2", comments="")
    # type numbers at lifted fixed points when the chart and model are available
    if chart is not None and fps:
        u = _constant_u(config, model)
        for f in fps:
            x_lift = chart.lift(f.eta)
            res = ss.find_fixed_points(model, u, [x_lift])
            if not len(res):
                continue
            full_fp = res[0]
            spec = ss.decompose(models.jacobian(model, full_fp.x0, u))
            try:
                tangent = [rd.tangent_index_from_alignment(
                    spec.eigenvectors, chart.tangent_at(f.eta)[:, 0])]
                tn = rd.lyapunov_type_numbers(spec.eigenvalues, tangent)
                report.type_numbers.append(
                    {"eta": f.eta.tolist(), "nu": tn.nu,
                     "sigma": tn.sigma, "rho": tn.rho})
            except ModelFormatError:
                continue
    with open(os.path.join(out_dir, "portrait.json"), "w") as fh:
        json.dump(report.as_dict(), fh, indent=1)
        fh.write("\n")
    if config["plot"]:
        plots.plot_reduced_field(
            reduced, os.path.join(out_dir, "portrait.png"), domain=box,
            fixed_points=fps, cycles=cycles,
            branches=het.branches if het is not None else None)
    _write_provenance("portrait", config, out_dir, t0)
    return EXIT_OK


def cmd_ftle(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    u = _constant_u(config, model)
    f_cfg = config["ftle"]
    p_cfg = f_cfg["plane"]
    rng = np.random.default_rng(config["seed"])
    if isinstance(p_cfg.get("center"), str) or isinstance(p_cfg.get("basis"), str):
        fp, _ = _stage("newton-search", _find_anchor, model, u, config, rng)
        spec = ss.linearize(model, fp)
    center = p_cfg.get("center", "fixed_point")
    center = fp.x0 if isinstance(center, str) else np.asarray(center, dtype=float)
    basis = p_cfg.get("basis", "slow")
    if isinstance(basis, str):
        sel = ss.select_slow_subspace(spec, d=2)
        basis = sel.V_E.T
    else:
        basis = np.asarray(basis, dtype=float)
    plane = ftle_mod.PlaneSpec(base=center, basis=basis, n1=p_cfg["n1"],
                               n2=p_cfg["n2"], extent1=tuple(p_cfg["extent1"]),
                               extent2=tuple(p_cfg["extent2"]))
    field = _stage("ftle-field", ftle_mod.ftle_field, model, u, plane,
                   (0.0, f_cfg["horizon"]), f_cfg.get("fd_step"), f_cfg["dt"])
    ridges = _stage("ridge-extraction", ftle_mod.extract_ridges, field)
    ftle_mod.save_field_csv(field, os.path.join(out_dir, "ftle.csv"))
    ftle_mod.save_ridges_csv(ridges, os.path.join(out_dir, "ridges.csv"))
    ftle_mod.save_plane_json(plane, os.path.join(out_dir, "plane.json"))
    if config["plot"]:
        plots.plot_ftle(field, os.path.join(out_dir, "ftle.png"), ridges)
    _write_provenance("ftle", config, out_dir, t0)
    return EXIT_OK


def cmd_anchor(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    u = _constant_u(config, model)
    a_cfg = config["anchor"]
    rng = np.random.default_rng(config["seed"])
    fp, _ = _stage("newton-search", _find_anchor, model, u, config, rng)
    spec = _stage("linearize", ss.linearize, model, fp)
    noise = _noise_spec(a_cfg["noise"], config["seed"])
    if noise is None or noise.amplitude <= 0:
        raise ModelFormatError("anchor needs a noise block with amplitude > 0")
    traj = _stage("noisy-simulation", sim.integrate, model, fp.x0, schedule,
                  a_cfg["dt"], a_cfg["t_end"], noise, record_noise=True)
    tau = model.tau if isinstance(model, models.RnnModel) else 1.0
    forcing = na.forcing_from_noise(traj, tau=tau, amplitude=noise.amplitude)
    expansion = _stage("anchor-expansion", na.anchor_expansion, model, fp, spec,
                       forcing, a_cfg["order"])
    na.save_anchor_csv(expansion, os.path.join(out_dir, "anchor.csv"))
    if a_cfg.get("td_chart"):
        td = _stage("td-chart", na.td_ssm_coeffs, model, fp, spec, forcing,
                    expansion.orders[0])
        na.save_td_coeffs(td, os.path.join(out_dir, "h11.csv"),
                          os.path.join(out_dir, "td_coeffs.json"))
    sl = expansion.valid
    direct = traj.states[:-1][sl] - fp.x0[np.newaxis, :]
    comp = expansion.composite()[sl]
    sup_err = float(np.max(np.linalg.norm(direct - comp, axis=1)))
    with open(os.path.join(out_dir, "anchor_summary.json"), "w") as fh:
        json.dump({"epsilon": noise.amplitude, "orders": len(expansion.orders),
                   "sup_error_vs_direct": sup_err,
                   "valid_window": [int(sl.start), int(sl.stop)]}, fh, indent=1)
        fh.write("\n")
    if config["plot"]:
        plots.plot_anchor(expansion, os.path.join(out_dir, "anchor.png"))
    _write_provenance("anchor", config, out_dir, t0)
    return EXIT_OK


def cmd_continuation(config) -> int:
    t0 = time.time()
    model, schedule, out_dir = _prepare(config)
    c_cfg = config["continuation"]
    if c_cfg.get("direction") is None:
        raise ModelFormatError("continuation needs continuation.direction")
    u_base = _constant_u(config, model)
    if u_base is None:
        u_base = np.zeros(len(c_cfg["direction"]))
    rng = np.random.default_rng(config["seed"])
    fp_cfg = config["fixed_points"]
    seeds = [np.zeros(model.dim)]
    seeds += list(rng.normal(scale=fp_cfg["seed_radius"],
                             size=(fp_cfg["n_random_seeds"], model.dim)))
    readout = c_cfg.get("readout")
    diagram = _stage("continuation-scan", ss.continuation_scan, model, u_base,
                     np.asarray(c_cfg["direction"], float),
                     tuple(c_cfg["mu_range"]), c_cfg["n_steps"], seeds,
                     fp_cfg["newton_tol"], c_cfg["match_tol"], c_cfg["sn_tol"],
                     None if readout is None else np.asarray(readout, float))
    ss.save_diagram_csv(diagram, os.path.join(out_dir, "bifurcation.csv"))
    ss.save_events_json(diagram, os.path.join(out_dir, "events.json"))
    if config["plot"]:
        plots.plot_bifurcation(diagram, os.path.join(out_dir, "bifurcation.png"))
    _write_provenance("continuation", config, out_dir, t0)
    return EXIT_OK


def cmd_export_surface(config) -> int:
    t0 = time.time()
    out_dir = config["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    e_cfg = config["export"]
    source = e_cfg.get("source")
    if not source:
        raise ModelFormatError("export needs export.source (chart or reduced model)")
    from .simulate import format_float

    with open(source) as fh:
        doc = json.load(fh)
    rows = []
    if "H" in doc and "V_E" in doc:
        chart = geo.load_chart(source)
        if chart.d > 2:
            raise ModelFormatError("surface export supports d <= 2 charts")
        ext = e_cfg["extent"]
        if chart.d == 1:
            grid = np.linspace(ext[0][0], ext[0][1], e_cfg["grid"][0])
            for g in grid:
                rows.append([g] + chart.lift([g]).tolist())
            header = ["eta1"] + [f"x{i + 1}" for i in range(chart.V_E.shape[0])]
        else:
            g1 = np.linspace(ext[0][0], ext[0][1], e_cfg["grid"][0])
            g2 = np.linspace(ext[1][0], ext[1][1], e_cfg["grid"][1])
            for a in g1:
                for b in g2:
                    rows.append([a, b] + chart.lift([a, b]).tolist())
            header = ["eta1", "eta2"] + [f"x{i + 1}"
                                         for i in range(chart.V_E.shape[0])]
        out_path = os.path.join(out_dir, "surface.csv")
        d = chart.d
    else:
        reduced = rd.load_reduced_model(source)
        if reduced.d > 2:
            raise ModelFormatError("field export supports d <= 2 reduced models")
        ext = e_cfg["extent"]
        if reduced.d == 1:
            grid = np.linspace(ext[0][0], ext[0][1], e_cfg["grid"][0])
            for g in grid:
                rows.append([g] + reduced.rhs([g]).tolist())
            header = ["eta1", "deta1"]
        else:
            g1 = np.linspace(ext[0][0], ext[0][1], e_cfg["grid"][0])
            g2 = np.linspace(ext[1][0], ext[1][1], e_cfg["grid"][1])
            for a in g1:
                for b in g2:
                    rows.append([a, b] + reduced.rhs([a, b]).tolist())
            header = ["eta1", "eta2", "deta1", "deta2"]
        out_path = os.path.join(out_dir, "field.csv")
        d = reduced.d
    import csv

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) for v in row])
    if config["plot"] and "H" in doc:
        plots.plot_surface_export(rows, d, os.path.join(out_dir, "surface.png"))
    _write_provenance("export-surface", config, out_dir, t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------

COMMANDS = {
    "simulate": cmd_simulate,
    "fixed-points": cmd_fixed_points,
    "fit-ssm": cmd_fit_ssm,
    "fit-reduced": cmd_fit_reduced,
    "portrait": cmd_portrait,
    "ftle": cmd_ftle,
    "anchor": cmd_anchor,
    "continuation": cmd_continuation,
    "export-surface": cmd_export_surface,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ssmr",
        description="Spectral-submanifold reduced-order modeling pipelines")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file (or a prior run.json)")
        p.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="dotted.path=value",
                       help="override a config value (JSON-parsed)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out-dir", default=None, help="override output_dir")
        p.add_argument("--no-plot", action="store_true",
                       help="skip figure rendering")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides, args.seed,
                             args.out_dir, args.no_plot)
        return COMMANDS[args.command](config)
    except StageFailure as fail:
        print(f"ssmr {args.command}: {fail}", file=sys.stderr)
        if isinstance(fail.exc, _NUMERICAL):
            return EXIT_NUMERICAL
        return EXIT_VALIDATION
    except _NUMERICAL as exc:
        print(f"ssmr {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ModelFormatError, SsmrError, json.JSONDecodeError, OSError) as exc:
        print(f"ssmr {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
