"""Command-line entry point.

Usage::

    hawkes-cascade <subcommand> --config run.json [--seed N] [--out DIR]

Subcommands map onto run modes; ``run`` takes the mode from the document.
The environment variable ``SEED_OVERRIDE`` replaces the seed of every run,
and ``--seed`` wins over both.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds, experiments
from .config import RunConfig, config_hash, load_config, serialize
from .errors import ConfigError, HawkesCascadeError
from .integrators import Scheme, integrate
from .model import RngStream
from .pdmp import BoundKind, thinning_simulate
from .reports import write_csv, write_plot_script, write_report

log = logging.getLogger("hawkes_cascade")

SUBCOMMANDS = {
    "simulate-pdmp": "pdmp",
    "simulate-sde": "sde",
    "simulate-ode": "ode",
    "bounds": "bounds",
    "converge": "converge",
    "compare": "compare",
    "timing": "timing",
    "density": "density",
}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DATA = 0, 2, 3, 4


def _state_columns(model):
    return [f"x{k}_{j}" for k in (1, 2) for j in range(1, model.pop(k).eta + 2)]


def _x0(cfg: RunConfig, model):
    return model.zeros() if cfg.run.x0 is None else np.asarray(cfg.run.x0, dtype=float)


def _trajectory(cfg, model, out, meta):
    r = cfg.run
    scheme = Scheme(r.scheme)
    n = r.steps()
    noise = 0.0 if scheme.is_ode else (r.noise_scale if r.noise_scale is not None
                                        else 1.0 / math.sqrt(model.total_neurons))
    rng = RngStream(r.seed, 0)
    tr = integrate(model, scheme, _x0(cfg, model), r.delta, n, noise, rng, r.stride)
    cols = ["t"] + _state_columns(model)
    rows = (([t] + list(x)) for t, x in zip(tr.times, tr.states))
    files = [write_csv(out / "trajectory.csv", cols, rows, meta)]
    i11 = 2
    i21 = 2 + model.pop(1).eta + 1
    files.append(write_plot_script(out / "trajectory.gp", f"""
set multiplot layout 2,1
set xlabel 't'
plot 'trajectory.csv' using 1:{i11} with lines title 'x1_1', '' using 1:{i21} with lines title 'x2_1'
set xlabel 'x1_1'; set ylabel 'x2_1'
plot 'trajectory.csv' using {i11}:{i21} with lines title 'phase portrait'
unset multiplot
""", meta))
    return files, {"n_rows": len(tr), "scheme": scheme.value, "noise_scale": noise}


def _pdmp(cfg, model, out, meta):
    r = cfg.run
    res = thinning_simulate(model, _x0(cfg, model), r.t_max, BoundKind(r.bound), RngStream(r.seed, 0),
                            record=r.record, grid_dt=r.delta)
    files = []
    if res.spikes is not None:
        s = res.spikes
        files.append(write_csv(out / "spikes.csv", ["population", "neuron", "time"],
                               zip(s.population, s.neuron, s.times), meta))
    if res.path is not None:
        p = res.path
        cols = ["time", "k_star", "neuron"] + _state_columns(model) + ["lambda_1", "lambda_2"]
        rows = ([t, k, n] + list(x) + [l[0], l[1]]
                for t, k, n, l, x in zip(p.times, p.k_star, p.neuron, p.intensities, p.states))
        files.append(write_csv(out / "events.csv", cols, rows, meta))
    if res.grid is not None:
        cols = ["t"] + _state_columns(model)
        rows = ([i * r.delta] + list(x) for i, x in enumerate(res.grid))
        files.append(write_csv(out / "grid.csv", cols, rows, meta))
    if res.spikes is not None:
        files.append(write_plot_script(out / "spikes.gp", """
set xlabel 't'; set ylabel 'neuron'
plot 'spikes.csv' using 3:($1 == 1 ? $2 : 1/0) with dots title 'population 1', \\
     'spikes.csv' using 3:($1 == 2 ? -$2 : 1/0) with dots title 'population 2'
""", meta))
    st = res.stats
    extra = {"advanced": st.advanced, "accepted": st.accepted, "rejected": st.rejected,
             "rejection_fraction": st.rejection_fraction, "spike_counts": list(res.spike_counts)}
    return files, extra


def _bounds(cfg, model, out, meta):
    r = cfg.run
    times = np.asarray(r.times if r.times is not None else np.arange(11.0))
    curves = bounds.moment_bound_curves(model, _x0(cfg, model), times, r.delta)
    rows = (row for c in curves for row in c.rows())
    files = [write_csv(out / "bounds.csv", ["t", "component", "lower", "upper", "order", "flavor"], rows, meta)]
    files.append(write_plot_script(out / "bounds.gp", """
set xlabel 't'
plot 'bounds.csv' using 1:(strcol(5) eq 'first' && strcol(6) eq 'continuous' ? $3 : 1/0) title 'lower', \\
     'bounds.csv' using 1:(strcol(5) eq 'first' && strcol(6) eq 'continuous' ? $4 : 1/0) title 'upper'
""", meta))
    return files, {"n_curves": len(curves)}


def _converge(cfg, model, out, meta):
    r = cfg.run
    tab = experiments.rmse_convergence(model, r.schemes, r.deltas, r.M, r.t_star, r.ref_delta,
                                       RngStream(r.seed, 0), x0=_x0(cfg, model),
                                       noise_scale=r.noise_scale, workers=r.workers)
    rows = ((x.delta, x.scheme, x.rmse, x.se, x.M, x.t_star) for x in tab.rows)
    files = [write_csv(out / "rmse.csv", ["delta", "scheme", "rmse", "se", "M", "t_star"], rows, meta)]
    files.append(write_plot_script(out / "rmse.gp", """
set logscale xy; set xlabel 'delta'; set ylabel 'RMSE'
plot for [s in "em lie_trotter strang"] 'rmse.csv' using 1:(strcol(2) eq s ? $3 : 1/0) with linespoints title s, \\
     x title 'slope 1'
""", meta))
    return files, {"slopes": tab.slopes, "residuals": tab.residuals, "monotone": tab.monotone_flags}


def _density_rows(dens_by_label):
    for label, d in dens_by_label:
        for g, v in zip(d.grid, d.density):
            yield label, d.component, g, v, d.bandwidth, d.n, d.mean


_DENSITY_COLS = ["source", "component", "x", "density", "bandwidth", "n", "mean"]


def _density(cfg, model, out, meta):
    r = cfg.run
    delta = r.delta or 0.1
    n = experiments._ratio(r.t_long, delta)
    noise = r.noise_scale if r.noise_scale is not None else 1.0 / math.sqrt(model.total_neurons)
    tr = integrate(model, Scheme(r.scheme), _x0(cfg, model), delta, n, noise, RngStream(r.seed, 0))
    cut = int(r.burn_in * len(tr))
    dens = [(r.scheme, experiments.kde(tr.states[cut:, model.block(k).start], component=f"{k},1"))
            for k in (1, 2)]
    files = [write_csv(out / "density.csv", _DENSITY_COLS, _density_rows(dens), meta)]
    files.append(write_plot_script(out / "density.gp", """
set multiplot layout 1,2
plot 'density.csv' using 3:(strcol(2) eq '1,1' ? $4 : 1/0) with lines title 'x1_1'
plot 'density.csv' using 3:(strcol(2) eq '2,1' ? $4 : 1/0) with lines title 'x2_1'
unset multiplot
""", meta))
    return files, {d.component: {"mean": d.mean, "bandwidth": d.bandwidth, "n": d.n} for _, d in dens}


def _compare(cfg, model, out, meta):
    r = cfg.run
    rep = experiments.compare_pdmp_diffusion(model, r.t_long, r.delta or 0.1, RngStream(r.seed, 0),
                                             x0=_x0(cfg, model), bound=BoundKind(r.bound), burn_in=r.burn_in)
    dens = [(src, d) for k in (1, 2) for src, d in
            (("pdmp", rep.densities_pdmp[k]), ("diffusion", rep.densities_diffusion[k]))]
    files = [write_csv(out / "compare_density.csv", _DENSITY_COLS, _density_rows(dens), meta)]
    rows = ((k, rep.means_pdmp[k], rep.means_diffusion[k], rep.amplitude[k], rep.ks_distance[k],
             rep.relative_mean_gap(k)) for k in (1, 2))
    files.append(write_csv(out / "compare_summary.csv",
                           ["population", "mean_pdmp", "mean_diffusion", "amplitude", "ks_distance",
                            "relative_mean_gap"], rows, meta))
    files.append(write_plot_script(out / "compare.gp", """
set multiplot layout 1,2
plot 'compare_density.csv' using 3:(strcol(1) eq 'pdmp' && strcol(2) eq '1,1' ? $4 : 1/0) with lines title 'PDMP x1_1', \\
     '' using 3:(strcol(1) eq 'diffusion' && strcol(2) eq '1,1' ? $4 : 1/0) with lines title 'diffusion x1_1'
plot 'compare_density.csv' using 3:(strcol(1) eq 'pdmp' && strcol(2) eq '2,1' ? $4 : 1/0) with lines title 'PDMP x2_1', \\
     '' using 3:(strcol(1) eq 'diffusion' && strcol(2) eq '2,1' ? $4 : 1/0) with lines title 'diffusion x2_1'
unset multiplot
""", meta))
    return files, rep.summary()


def _timing(cfg, model, out, meta):
    r = cfg.run
    rows_ = experiments.timing_benchmark(model, r.n_list, r.bound_kinds, r.t_max or 100.0, r.repeats,
                                         RngStream(r.seed, 0), diffusion_delta=r.delta or 0.1)
    rows = ((x.method, x.n_total, x.bound, x.mean_seconds, x.sd_seconds,
             float(np.mean(x.rejection_fractions)) if x.rejection_fractions else float("nan"))
            for x in rows_)
    files = [write_csv(out / "timing.csv", ["method", "N", "bound", "mean_seconds", "sd_seconds",
                                            "mean_rejection_fraction"], rows, meta)]
    files.append(write_plot_script(out / "timing.gp", """
set xlabel 'N'; set ylabel 'seconds'
plot 'timing.csv' using 2:(strcol(3) eq 'global' ? $4 : 1/0):5 with yerrorlines title 'global', \\
     '' using 2:(strcol(3) eq 'local' ? $4 : 1/0):5 with yerrorlines title 'local', \\
     '' using 2:(strcol(1) eq 'diffusion' ? $4 : 1/0) with points title 'diffusion'
""", meta))
    return files, {"rows": [vars(x) for x in rows_]}


HANDLERS = {
    "pdmp": _pdmp,
    "sde": _trajectory,
    "ode": _trajectory,
    "bounds": _bounds,
    "converge": _converge,
    "compare": _compare,
    "timing": _timing,
    "density": _density,
}


def apply_overrides(cfg: RunConfig, seed: int | None = None, out: str | None = None) -> RunConfig:
    """Seed precedence: explicit ``seed`` > ``SEED_OVERRIDE`` > document."""
    env = os.environ.get("SEED_OVERRIDE")
    updates = {}
    if env is not None and env != "":
        try:
            updates["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"SEED_OVERRIDE must be an integer, got {env!r}") from None
    if seed is not None:
        updates["seed"] = seed
    if out is not None:
        updates["out"] = out
    if not updates:
        return cfg
    return RunConfig.model_validate({"model": cfg.model.model_dump(),
                                     "run": {**cfg.run.model_dump(), **updates}})


def run(cfg: RunConfig) -> tuple[int, list[Path]]:
    """Dispatch on ``cfg.run.mode``; write result files and ``run_report.json``."""
    out = Path(cfg.run.out)
    h = config_hash(cfg)
    meta = {"config_hash": h, "seed": cfg.run.seed, "mode": cfg.run.mode}
    model = cfg.model.build()
    t0 = time.perf_counter()
    files, extra = HANDLERS[cfg.run.mode](cfg, model, out, meta)
    wall = time.perf_counter() - t0
    report = write_report(out / "run_report.json", json.loads(serialize(cfg)), cfg.run.seed, h, wall,
                          [f.name for f in files], extra)
    return EXIT_OK, files + [report]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkes-cascade",
                                     description="Simulate and analyse two-population Erlang-kernel Hawkes networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["run", *SUBCOMMANDS]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="overrides the configured seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args.seed, args.out)
        if args.command != "run" and SUBCOMMANDS[args.command] != cfg.run.mode:
            raise ConfigError(f"subcommand {args.command!r} needs run.mode={SUBCOMMANDS[args.command]!r}, "
                              f"config has {cfg.run.mode!r}")
        code, files = run(cfg)
        for f in files:
            log.info("wrote %s", f)
        return code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HawkesCascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
