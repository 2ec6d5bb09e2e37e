"""Command-line entry point.

One resolved configuration drives each subcommand; every run writes a
manifest recording that configuration plus input digests, and a manifest can
be passed back as ``-c`` to reproduce the run bit for bit.

Exit codes: 0 success / verdict pass, 1 verdict fail, 2 config error,
3 integration failure, 4 precondition failure, 5 bound blow-up.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_integrator,
    build_params,
    build_sampler,
    load_config,
)
from .dynamics import (
    IntegrationError,
    axial_momentum,
    dissipation_rate,
    energy,
    simulate,
)
from .figures import render_bounds, render_convergence, render_flock, render_simulate
from .flocking import (
    flocking_verdict,
    position_spread,
    simulate_classical,
    velocity_diameter,
)
from .functionals import (
    envelope_ratio_series,
    normalized_speed_series,
    sup_energy_density,
)
from .model import min_pair_distance
from .partial import HorizonTooLargeError, convergence_study, run_ladder
from .reports import (
    BOUNDS_HEADER,
    CONVERGENCE_HEADER,
    FLOCK_HEADER,
    SIMULATE_HEADER,
    write_csv,
    write_json,
)
from .sampling import (
    load_snapshot,
    sample_configuration,
    save_snapshot,
    save_trajectory,
    verify_membership,
)

EXIT_OK = 0
EXIT_VERDICT_FAIL = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3
EXIT_PRECONDITION = 4
EXIT_BOUND_BLOWUP = 5


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    """Output directory, resolved config, and manifest bookkeeping."""

    def __init__(self, command: str, cfg: dict, config_path: str | None):
        self.command = command
        self.cfg = cfg
        self.out = cfg["output"]["dir"]
        self.formats = cfg["output"]["formats"]
        os.makedirs(self.out, exist_ok=True)
        self.digests: dict[str, str] = {}
        if config_path is not None:
            self.digests["config"] = _sha256(config_path)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def want(self, fmt: str) -> bool:
        return fmt in self.formats

    def initial_configuration(self, params):
        snap = self.cfg["input"]["snapshot"]
        if snap is not None:
            if not os.path.exists(snap):
                raise ConfigError(f"input.snapshot not found: {snap}")
            self.digests["snapshot"] = _sha256(snap)
            config = load_snapshot(snap)
            config.validate()
            return config
        spec = build_sampler(self.cfg)
        return sample_configuration(spec, params.geometry, params)

    def write_manifest(self, extra: dict | None = None) -> None:
        doc = {
            "command": self.command,
            "package_version": __version__,
            "seed": self.cfg["sampler"]["seed"],
            "input_digests": self.digests,
            "resolved_config": self.cfg,
        }
        if extra:
            doc.update(extra)
        write_json(self.path("manifest.json"), doc)


def _wall_margin(config, params) -> float:
    geo = params.geometry
    if geo is None or not geo.wall_active or not len(config):
        return math.inf
    s = np.linalg.norm(geo.transverse(config.positions), axis=1)
    return float(geo.radius - s.max())


def cmd_simulate(cfg: dict, config_path: str | None) -> int:
    run = _Run("simulate", cfg, config_path)
    params = build_params(cfg)
    icfg = build_integrator(cfg)
    initial = run.initial_configuration(params)
    study = cfg["study"]
    traj = simulate(initial, params, icfg, T=float(study["T"]), stride=float(study["stride"]))
    rows = []
    for snap in traj.snapshots:
        dmin = min_pair_distance(snap.positions, params.axis) if len(snap) >= 2 else math.inf
        rows.append(
            (
                snap.time,
                energy(snap, params),
                dissipation_rate(snap, params),
                axial_momentum(snap, params),
                dmin,
                _wall_margin(snap, params),
            )
        )
    write_csv(run.path("diagnostics.csv"), SIMULATE_HEADER, rows)
    save_trajectory(traj.snapshots, run.path("trajectory.jsonl"), params)
    save_snapshot(traj.snapshots[-1], run.path("final_state.jsonl"), params)
    if run.want("png"):
        render_simulate(rows, run.path("simulate.png"))
    run.write_manifest(
        {
            "stats": {
                "accepted": traj.stats.accepted,
                "rejected": traj.stats.rejected,
                "rhs_evals": traj.stats.rhs_evals,
                "min_step": traj.stats.min_step,
            }
        }
    )
    return EXIT_OK


def cmd_sample_init(cfg: dict, config_path: str | None) -> int:
    run = _Run("sample-init", cfg, config_path)
    params = build_params(cfg)
    spec = build_sampler(cfg)
    config = sample_configuration(spec, params.geometry, params)
    save_snapshot(config, run.path("initial_state.jsonl"), params)
    report = verify_membership(config, params)
    write_json(run.path("membership.json"), report.to_dict())
    run.write_manifest({"count": len(config)})
    return EXIT_OK


def cmd_partial_converge(cfg: dict, config_path: str | None) -> int:
    run = _Run("partial-converge", cfg, config_path)
    params = build_params(cfg)
    icfg = build_integrator(cfg)
    full = run.initial_configuration(params)
    study = cfg["study"]
    report = convergence_study(
        full,
        [int(n) for n in study["nladder"]],
        float(study["k"]),
        params,
        icfg,
        T=float(study["T"]),
        stride=float(study["stride"]),
    )
    rows = []
    rbar = params.interaction_range or 0.0
    for j, pair in enumerate(report.pairs):
        prev = report.pairs[j - 1] if j else None
        for it, t in enumerate(pair.times):
            if prev is None:
                ratio = None
            elif prev.u[it] == 0.0:
                ratio = 0.0 if pair.u[it] == 0.0 else math.inf
            else:
                ratio = pair.u[it] / prev.u[it]
            horizon_t = rbar + 2.0 * t * report.v_max
            rows.append((pair.n_low, pair.n_high, report.k, t, pair.u[it], ratio, horizon_t))
    write_csv(run.path("convergence.csv"), CONVERGENCE_HEADER, rows)
    write_json(run.path("convergence_summary.json"), report.summary())
    if run.want("png"):
        render_convergence(
            [(p.n_low, p.n_high, p.times, p.u) for p in report.pairs],
            run.path("convergence.png"),
        )
    run.write_manifest({"decay_ok": bool(report.decay_ok)})
    return EXIT_OK if report.decay_ok else EXIT_VERDICT_FAIL


def cmd_bounds_check(cfg: dict, config_path: str | None) -> int:
    run = _Run("bounds-check", cfg, config_path)
    params = build_params(cfg)
    icfg = build_integrator(cfg)
    full = run.initial_configuration(params)
    study = cfg["study"]
    q0 = sup_energy_density(full, params)
    runs = run_ladder(
        full,
        [int(n) for n in study["nladder"]],
        params,
        icfg,
        T=float(study["T"]),
        stride=float(study["stride"]),
    )
    rbar = params.interaction_range or 1.0
    rows = []
    fig_series = []
    lemma_peaks = []
    cor_finals = []
    for level in runs:
        series = envelope_ratio_series(level.trajectory, level.n, params, q0.value)
        cor = normalized_speed_series(level.trajectory, level.n, rbar)
        env = series.envelope
        for it, t in enumerate(series.times):
            rows.append(
                (
                    t,
                    level.n,
                    env.speed_max[it],
                    env.m[it],
                    env.radius[it],
                    series.sup_window[it],
                    series.ratios[it],
                    cor[it],
                )
            )
        fig_series.append((level.n, series.times, series.ratios, cor))
        lemma_peaks.append(float(series.ratios.max()))
        cor_finals.append(float(cor[-1]))
    factor = float(study["bound_factor"])

    def spread(values) -> float:
        lo, hi = min(values), max(values)
        if hi == 0.0:
            return 1.0
        if lo <= 0.0:
            return math.inf
        return hi / lo

    lemma_spread = spread(lemma_peaks)
    cor_spread = spread(cor_finals)
    finite = all(map(math.isfinite, lemma_peaks + cor_finals))
    ok = finite and lemma_spread <= factor and cor_spread <= factor
    write_csv(run.path("bounds.csv"), BOUNDS_HEADER, rows)
    write_json(
        run.path("bounds_summary.json"),
        {
            "q0": q0.value,
            "levels": [r.n for r in runs],
            "lemma_peaks": lemma_peaks,
            "lemma_spread": lemma_spread,
            "cor_finals": cor_finals,
            "cor_spread": cor_spread,
            "bound_factor": factor,
            "bounded": bool(ok),
        },
    )
    if run.want("png"):
        render_bounds(fig_series, run.path("bounds.png"))
    run.write_manifest({"bounded": bool(ok)})
    return EXIT_OK if ok else EXIT_BOUND_BLOWUP


def cmd_flock(cfg: dict, config_path: str | None) -> int:
    run = _Run("flock", cfg, config_path)
    icfg = build_integrator(cfg)
    f = cfg["flock"]
    traj = simulate_classical(
        int(f["n"]),
        float(f["beta"]),
        float(f["lam"]),
        int(f["seed"]),
        float(f["t"]),
        icfg,
        stride=float(f["stride"]),
    )
    times = traj.times
    vdiams = [velocity_diameter(c) for c in traj.snapshots]
    spreads = [position_spread(c) for c in traj.snapshots]
    write_csv(run.path("flock.csv"), FLOCK_HEADER, zip(times, vdiams, spreads))
    verdict = flocking_verdict(
        traj,
        v_threshold=float(f["v_threshold_ratio"]) * vdiams[0],
        x_bound=float(f["x_bound"]),
    )
    write_json(run.path("flock_summary.json"), verdict.to_dict())
    if run.want("png"):
        render_flock(times, vdiams, spreads, run.path("flock.png"))
    run.write_manifest({"passed": bool(verdict.passed)})
    return EXIT_OK if verdict.passed else EXIT_VERDICT_FAIL


_COMMANDS = {
    "simulate": cmd_simulate,
    "sample-init": cmd_sample_init,
    "partial-converge": cmd_partial_converge,
    "bounds-check": cmd_bounds_check,
    "flock": cmd_flock,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubeflock",
        description="Tube-confined alignment dynamics: simulation and bound checking",
    )
    parser.add_argument("--version", action="version", version=f"tubeflock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", default=None, help="JSON config file (or a manifest)")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one config entry (repeatable)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.sets)
        return _COMMANDS[args.command](cfg, args.config)
    except ConfigError as exc:
        print(f"tubeflock: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HorizonTooLargeError as exc:
        print(f"tubeflock: precondition failure: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except IntegrationError as exc:
        print(f"tubeflock: integration failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
