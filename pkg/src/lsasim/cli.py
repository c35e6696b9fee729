"""Command-line front end.

Subcommands:
    simulate         integrate one configuration, export trace + pulse metrics
    sweep-current    energy-increase heatmap over an (i_on, i_off) grid
    sweep-power      pulse energy/shape versus injected power
    correlate        correlation envelope versus injected power
    isolation        required optical isolation for a power bound
    validate-config  parse and validate a config, print its digest

Each data-producing command writes into a single run directory (timestamped
and named by the config digest unless --out pins it), containing the CSV
outputs, rendered figures and a manifest.json with the full resolved config.
Re-running a command with --config pointed at that manifest reproduces the
data outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dynamics, experiments, interferometry, plotting, pulse_metrics
from .config import PROFILES, RunConfig, load_config, parse_si
from .errors import ConfigError, NumericalError
from .params import (
    auto_duty_cycle,
    enforce_drive_constraints,
    synthesize_current,
    threshold_current,
)

BURN_IN = dynamics.DEFAULT_BURN_IN


def _provenance(cfg: RunConfig) -> dict:
    return {"config_sha256": cfg.digest(), "tool_version": __version__, "seed": cfg.seed}


def _make_run_dir(cfg: RunConfig, command: str, out_override: str | None, resume: bool) -> Path:
    if out_override:
        run_dir = Path(out_override)
    else:
        stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
        run_dir = Path(cfg.out_dir) / f"{stamp}-{command}-{cfg.digest()[:12]}"
    if run_dir.exists() and any(run_dir.iterdir()) and not resume:
        raise ConfigError(f"run directory {run_dir} exists and is not empty (use --resume for sweeps)")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_manifest(run_dir: Path, cfg: RunConfig, command: str, outputs: list[str], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.raw,
        "config_sha256": cfg.digest(),
        "tool_version": __version__,
        "seed": cfg.seed,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": outputs,
        "threshold_current_a": threshold_current(cfg.alice),
    }
    manifest.update(extra or {})
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_duty(cfg: RunConfig):
    wave = cfg.drive
    resolved = None
    if cfg.on_fraction_auto:
        duty = auto_duty_cycle(cfg.alice, wave, dt=cfg.dt)
        wave = replace(wave, on_fraction=duty.on_fraction)
        resolved = duty
    return wave, resolved


def cmd_simulate(cfg: RunConfig, args) -> int:
    run_dir = _make_run_dir(cfg, "simulate", args.out, resume=False)
    if cfg.enforce_current_constraints:
        enforce_drive_constraints(cfg.alice, cfg.drive)
    wave, duty = _resolve_duty(cfg)
    trace = dynamics.integrate(cfg.alice, wave, cfg.injection, cfg.dt, cfg.seed)
    current = synthesize_current(wave, cfg.dt)
    metrics = pulse_metrics.analyze_pulses(trace, wave, burn_in=min(BURN_IN, wave.n_pulses - 1))
    meta = _provenance(cfg)
    outputs = ["trace.csv", "pulses.csv"]
    dynamics.trace_to_csv(run_dir / "trace.csv", trace, current, meta=meta)
    pulse_metrics.metrics_to_csv(run_dir / "pulses.csv", metrics, meta=meta)
    if cfg.scenario.get("trace_binary"):
        dynamics.trace_to_binary(run_dir / "trace.bin", trace, current, meta=meta)
        outputs.append("trace.bin")
    if cfg.figures and not args.no_figures:
        plotting.plot_trace(trace, run_dir / "trace.png", current, meta=meta)
        outputs.append("trace.png")
    _write_manifest(run_dir, cfg, "simulate", outputs,
                    {"on_fraction": wave.on_fraction, "clamp_events": trace.clamp_events})
    energies = [m.energy for m in metrics]
    delays = [m.turn_on_delay for m in metrics if m.lasing]
    print(f"threshold current: {threshold_current(cfg.alice) * 1e3:.3f} mA")
    if duty is not None:
        print(f"auto duty cycle: on_fraction = {wave.on_fraction:.4f}"
              + (" (overdamped fallback)" if duty.flagged else ""))
    print(f"pulses analyzed: {len(metrics)} (after {min(BURN_IN, wave.n_pulses - 1)} burn-in)")
    print(f"mean energy per pulse: {np.mean(energies):.4e} J")
    if delays:
        print(f"mean turn-on delay: {np.mean(delays) * 1e12:.1f} ps")
    print(f"clamp events: {trace.clamp_events}")
    print(f"outputs in {run_dir}")
    return 0


def _grid_values(spec, default_start, default_stop, default_num, name) -> np.ndarray:
    if spec is None:
        return np.linspace(default_start, default_stop, default_num)
    if isinstance(spec, list):
        if not spec or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec):
            raise ConfigError(f"scenario.{name} must be a non-empty list of numbers")
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra:
            raise ConfigError(f"scenario.{name}: unknown key(s) {sorted(extra)}")
        try:
            return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
        except KeyError as exc:
            raise ConfigError(f"scenario.{name}: missing {exc}") from exc
    raise ConfigError(f"scenario.{name} must be a list or start/stop/num object")


def _read_completed_cells(path: Path, i_on: np.ndarray, i_off: np.ndarray) -> dict:
    completed = {}
    if not path.exists():
        return completed
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("I_on_mA"):
            continue
        on_ma, off_ma, value, status = line.split(",")
        i = int(np.argmin(np.abs(i_on - float(on_ma) * 1e-3)))
        j = int(np.argmin(np.abs(i_off - float(off_ma) * 1e-3)))
        if abs(i_on[i] - float(on_ma) * 1e-3) < 1e-9 and abs(i_off[j] - float(off_ma) * 1e-3) < 1e-9:
            completed[(i, j)] = (float(value), status)
    return completed


def cmd_sweep_current(cfg: RunConfig, args) -> int:
    allowed = {"i_on_ma", "i_off_ma", "p_inj_w", "n_pulses"}
    unknown = set(cfg.scenario) - allowed - {"name"}
    if unknown:
        raise ConfigError(f"sweep-current scenario: unknown key(s) {sorted(unknown)}")
    run_dir = _make_run_dir(cfg, "sweep-current", args.out, resume=args.resume)
    i_on = _grid_values(cfg.scenario.get("i_on_ma"), 15.0, 24.0, 10, "i_on_ma") * 1e-3
    i_off = _grid_values(cfg.scenario.get("i_off_ma"), 0.0, 9.0, 10, "i_off_ma") * 1e-3
    p_inj = cfg.scenario.get("p_inj_w", 100e-9)
    n_pulses = cfg.scenario.get("n_pulses", 100) + BURN_IN
    completed = _read_completed_cells(run_dir / "heatmap.csv", i_on, i_off) if args.resume else None
    grid = experiments.heatmap_energy_increase(
        i_on, i_off, p_inj, cfg.alice, dt=cfg.dt, master_seed=cfg.seed,
        period=cfg.drive.period, filter_bw=cfg.drive.filter_bw,
        n_pulses=n_pulses, burn_in=BURN_IN,
        enforce_constraints=cfg.enforce_current_constraints,
        duty_probe_dt=cfg.dt, n_jobs=cfg.jobs if args.jobs is None else args.jobs,
        completed=completed,
    )
    meta = _provenance(cfg)
    outputs = ["heatmap.csv"]
    experiments.grid_to_csv(run_dir / "heatmap.csv", grid, meta=meta)
    if cfg.figures and not args.no_figures:
        plotting.plot_heatmap(grid, run_dir / "heatmap.png", meta=meta)
        outputs.append("heatmap.png")
    _write_manifest(run_dir, cfg, "sweep-current", outputs, {
        "grid": {"i_on_ma": (i_on * 1e3).tolist(), "i_off_ma": (i_off * 1e3).tolist()},
        "p_inj_w": p_inj,
        "seed_policy": grid.metadata["seed_policy"],
    })
    resolved = grid.resolved()
    n_flagged = int(np.sum(grid.status != experiments.STATUS_OK))
    print(f"threshold current: {threshold_current(cfg.alice) * 1e3:.3f} mA")
    print(f"cells: {grid.values.size} total, {len(resolved)} resolved, {n_flagged} flagged")
    if len(resolved):
        print(f"energy increase: median {np.median(resolved):.2f}%, max {resolved.max():.2f}%")
    print(f"outputs in {run_dir}")
    return 0


def cmd_sweep_power(cfg: RunConfig, args) -> int:
    allowed = {"p_inj_w_values", "noise_on", "n_pulses"}
    unknown = set(cfg.scenario) - allowed - {"name"}
    if unknown:
        raise ConfigError(f"sweep-power scenario: unknown key(s) {sorted(unknown)}")
    run_dir = _make_run_dir(cfg, "sweep-power", args.out, resume=False)
    if cfg.enforce_current_constraints:
        enforce_drive_constraints(cfg.alice, cfg.drive)
    powers = _grid_values(cfg.scenario.get("p_inj_w_values"), 0.0, 0.0, 1, "p_inj_w_values")
    if cfg.scenario.get("p_inj_w_values") is None:
        powers = np.array([0.0, 1e-9, 10e-9, 100e-9])
    wave, _ = _resolve_duty(cfg)
    n_pulses = cfg.scenario.get("n_pulses")
    if n_pulses is not None:
        wave = replace(wave, n_pulses=int(n_pulses) + BURN_IN)
    result = experiments.power_sweep_energy(
        powers, wave, cfg.alice, dt=cfg.dt, seed=cfg.seed, burn_in=BURN_IN,
        noise_on=bool(cfg.scenario.get("noise_on", False)),
    )
    meta = _provenance(cfg)
    outputs = ["power_sweep.csv", "pulse_shapes.csv"]
    experiments.power_sweep_to_csv(run_dir / "power_sweep.csv", result, meta=meta)
    experiments.pulse_shapes_to_csv(run_dir / "pulse_shapes.csv", result, meta=meta)
    if cfg.figures and not args.no_figures:
        plotting.plot_power_sweep(result, run_dir / "power_sweep.png", meta=meta)
        outputs.append("power_sweep.png")
    _write_manifest(run_dir, cfg, "sweep-power", outputs, {"on_fraction": wave.on_fraction})
    for row in result.rows:
        print(f"P_inj = {row.p_inj * 1e9:8.3f} nW: energy {row.energy:.4e} J, "
              f"delay {row.turn_on_delay * 1e12:7.2f} ps")
    print(f"outputs in {run_dir}")
    return 0


def cmd_correlate(cfg: RunConfig, args) -> int:
    allowed = {"p_inj_w_values", "n_trials", "n_pulses", "phase_mode"}
    unknown = set(cfg.scenario) - allowed - {"name"}
    if unknown:
        raise ConfigError(f"correlate scenario: unknown key(s) {sorted(unknown)}")
    run_dir = _make_run_dir(cfg, "correlate", args.out, resume=False)
    profile = cfg.profile
    powers = cfg.scenario.get("p_inj_w_values")
    powers = np.asarray(powers, dtype=float) if powers is not None else np.asarray(profile.power_grid_w)
    n_trials = int(cfg.scenario.get("n_trials", profile.n_trials))
    n_pulses = int(cfg.scenario.get("n_pulses", profile.n_pulses))
    phase_mode = cfg.scenario.get("phase_mode", "per_pulse_uniform")
    dt = cfg.dt if "dt_fs" in cfg.raw else profile.dt
    wave = replace(cfg.drive, n_pulses=n_pulses + BURN_IN)
    curve = interferometry.correlation_vs_power_curve(
        powers, cfg.alice, cfg.eve, wave, phase_mode=phase_mode,
        master_seed=cfg.seed, n_trials=n_trials, dt=dt, burn_in=BURN_IN,
        n_jobs=cfg.jobs if args.jobs is None else args.jobs,
    )
    meta = _provenance(cfg)
    outputs = ["envelope.csv", "trials.csv"]
    interferometry.curve_to_csv(run_dir / "envelope.csv", curve, meta=meta)
    interferometry.trials_to_csv(run_dir / "trials.csv", curve.reports,
                                 [p.p_inj for p in curve.points], meta=meta)
    if cfg.figures and not args.no_figures:
        plotting.plot_correlation_curve(curve, run_dir / "correlation.png", meta=meta)
        outputs.append("correlation.png")
    _write_manifest(run_dir, cfg, "correlate", outputs, {
        "n_trials": n_trials, "n_pulses": n_pulses, "dt_s": dt,
        "onset_power_w": None if math.isnan(curve.onset_power) else curve.onset_power,
    })
    for point in curve.points:
        print(f"P_inj = {point.p_inj * 1e9:8.3f} nW: rho_max {point.rho_max:+.3f}, rho_min {point.rho_min:+.3f}")
    if math.isnan(curve.onset_power):
        print("onset: not reached within the grid")
    else:
        print(f"onset power: {curve.onset_power * 1e9:.3f} nW "
              f"(baseline max {curve.points[0].baseline_max:+.3f})")
    print(f"outputs in {run_dir}")
    return 0


def cmd_isolation(args) -> int:
    if args.bound:
        eve_max = experiments.EVE_POWER_PRESETS[args.bound]
        source = args.bound
    elif args.eve_max is not None:
        eve_max = parse_si(args.eve_max, expect_unit="W")
        source = "custom"
    else:
        raise ConfigError("need --eve-max or --bound")
    threshold = parse_si(args.threshold, expect_unit="W")
    budget = experiments.isolation_budget(eve_max, threshold, bound_source=source)
    print(f"attacker power bound: {budget.eve_max_power:.6g} W ({budget.bound_source})")
    print(f"attack onset threshold: {budget.alice_threshold:.6g} W")
    print(f"required isolation: {budget.required_isolation_db:.1f} dB")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "isolation.csv", "w", encoding="utf-8") as fh:
            fh.write("eve_max_power_W,alice_threshold_W,required_isolation_dB,bound_source\n")
            fh.write(f"{budget.eve_max_power!r},{budget.alice_threshold!r},"
                     f"{budget.required_isolation_db:.6f},{budget.bound_source}\n")
        print(f"outputs in {out_dir}")
    return 0


def cmd_validate_config(cfg: RunConfig, args) -> int:
    print(f"config OK; digest {cfg.digest()}")
    print(f"threshold current: {threshold_current(cfg.alice) * 1e3:.3f} mA")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsasim",
                                     description="Gain-switched laser seeding simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON run config (or a manifest.json from a previous run)")
        p.add_argument("--profile", choices=sorted(PROFILES), help="override the config profile")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--out", help="exact run directory (default: auto under out_dir)")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_sim = sub.add_parser("simulate", help="integrate one configuration")
    add_common(p_sim)
    p_swc = sub.add_parser("sweep-current", help="(i_on, i_off) energy-increase heatmap")
    add_common(p_swc)
    p_swc.add_argument("--resume", action="store_true", help="skip cells already in the output CSV")
    p_swp = sub.add_parser("sweep-power", help="pulse response versus injected power")
    add_common(p_swp)
    p_cor = sub.add_parser("correlate", help="correlation envelope versus injected power")
    add_common(p_cor)
    p_iso = sub.add_parser("isolation", help="isolation budget arithmetic")
    p_iso.add_argument("--eve-max", help="attacker power bound, e.g. '55kW'")
    p_iso.add_argument("--bound", choices=sorted(experiments.EVE_POWER_PRESETS),
                       help="preset attacker power bound")
    p_iso.add_argument("--threshold", required=True, help="attack onset power, e.g. '1nW'")
    p_iso.add_argument("--out", help="directory for the budget CSV")
    p_val = sub.add_parser("validate-config", help="validate a config file")
    p_val.add_argument("--config", required=True)
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    raw = dict(cfg.raw)
    changed = False
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
        changed = True
    if getattr(args, "profile", None):
        raw["profile"] = args.profile
        changed = True
    if getattr(args, "jobs", None) is not None:
        raw["jobs"] = args.jobs
        changed = True
    if changed:
        from .config import load_config_dict

        return load_config_dict(raw)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "isolation":
            return cmd_isolation(args)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "sweep-current":
            return cmd_sweep_current(cfg, args)
        if args.command == "sweep-power":
            return cmd_sweep_power(cfg, args)
        if args.command == "correlate":
            return cmd_correlate(cfg, args)
        if args.command == "validate-config":
            return cmd_validate_config(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
