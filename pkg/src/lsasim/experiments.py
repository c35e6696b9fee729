"""Scenario orchestration: current-parameter sweeps, injected-power sweeps,
isolation budgets and the phase-randomized seeding scenario.

Every sweep cell and every trial is keyed by an explicit seed derived from
the run's master seed (see `seeding`), so any cell can be recomputed
bit-identically in isolation from its recorded coordinates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from . import interferometry, pulse_metrics, seeding
from .dynamics import DEFAULT_BURN_IN, DEFAULT_DT, _fmt
from .errors import NonLasingError
from .interferometry import CorrelationReport, InterferometerModel, envelope_protocol
from .params import (
    DriveWaveform,
    InjectionSignal,
    LaserParams,
    auto_duty_cycle,
    check_drive_constraints,
    threshold_current,
)
from .seeding import derive_seed

STATUS_OK = "ok"
STATUS_CONSTRAINT = "constraint_violation"
STATUS_NON_LASING = "non_lasing"

# Upper bounds on the power an attacker can deliver through the fiber plant,
# by countermeasure class.
EVE_POWER_PRESETS = {
    "LIDT": 55e3,  # damage threshold of standard silica fiber (W)
    "fuse": 1.0,  # optical fuse breaking point (W)
    "power_limiter": 1e-6,  # passive power limiter ceiling (W)
}


@dataclass(frozen=True)
class IsolationBudget:
    """Attenuation needed to bring the attacker's power under the onset
    threshold at the transmitter's cavity."""

    eve_max_power: float  # W
    alice_threshold: float  # W
    required_isolation_db: float
    bound_source: str = "custom"


def isolation_budget(eve_max_power: float, alice_threshold: float, bound_source: str = "custom") -> IsolationBudget:
    """Required isolation in dB: 10*log10(eve_max_power / alice_threshold),
    floored at zero when the attacker's bound is already below threshold."""
    if not (eve_max_power > 0.0 and math.isfinite(eve_max_power)):
        raise ValueError(f"eve_max_power must be positive and finite, got {eve_max_power!r}")
    if not (alice_threshold > 0.0 and math.isfinite(alice_threshold)):
        raise ValueError(f"alice_threshold must be positive and finite, got {alice_threshold!r}")
    ratio = eve_max_power / alice_threshold
    db = 10.0 * math.log10(ratio) if ratio > 1.0 else 0.0
    return IsolationBudget(eve_max_power, alice_threshold, db, bound_source)


@dataclass(frozen=True)
class SweepAxis:
    name: str
    unit: str
    values: np.ndarray


@dataclass
class SweepGrid:
    """Result grid of a two-parameter sweep.

    values[i, j] corresponds to (row_axis.values[i], col_axis.values[j]);
    cells that could not be computed hold NaN and a non-"ok" status.
    """

    row_axis: SweepAxis
    col_axis: SweepAxis
    values: np.ndarray
    status: np.ndarray
    metadata: dict = field(default_factory=dict)

    def resolved(self) -> np.ndarray:
        return self.values[self.status == STATUS_OK]


def _heatmap_cell(args):
    (i, j, i_on, i_off, p_inj, params, dt, seed, period, filter_bw,
     n_pulses, burn_in, enforce_constraints, duty_probe_dt) = args
    wave_probe = DriveWaveform(i_on=i_on, i_off=i_off, period=period,
                               on_fraction=0.5, filter_bw=filter_bw, n_pulses=n_pulses)
    if enforce_constraints and check_drive_constraints(params, wave_probe):
        return i, j, math.nan, STATUS_CONSTRAINT
    try:
        duty = auto_duty_cycle(params, wave_probe, dt=duty_probe_dt)
    except NonLasingError:
        return i, j, math.nan, STATUS_NON_LASING
    wave = replace(wave_probe, on_fraction=duty.on_fraction)
    free = pulse_metrics.simulate_pulse_metrics(params, wave, None, dt, seed,
                                                noise_on=True, burn_in=burn_in)
    lasing_fraction = np.mean([m.lasing for m in free])
    if lasing_fraction < 0.5:
        return i, j, math.nan, STATUS_NON_LASING
    inj = InjectionSignal(p_inj=p_inj)
    seeded = pulse_metrics.simulate_pulse_metrics(params, wave, inj, dt, seed,
                                                  noise_on=True, burn_in=burn_in)
    e_free = float(np.mean([m.energy for m in free]))
    e_seeded = float(np.mean([m.energy for m in seeded]))
    if e_free <= 0.0:
        return i, j, math.nan, STATUS_NON_LASING
    return i, j, 100.0 * (e_seeded - e_free) / e_free, STATUS_OK


def heatmap_energy_increase(
    i_on_values: np.ndarray,
    i_off_values: np.ndarray,
    p_inj: float,
    params: LaserParams,
    dt: float = DEFAULT_DT,
    master_seed: int = 0,
    period: float = 1e-9,
    filter_bw: float = 3.5e9,
    n_pulses: int = 100 + DEFAULT_BURN_IN,
    burn_in: int = DEFAULT_BURN_IN,
    enforce_constraints: bool = True,
    duty_probe_dt: float = DEFAULT_DT,
    n_jobs: int = 1,
    completed: dict[tuple[int, int], tuple[float, str]] | None = None,
) -> SweepGrid:
    """Percent pulse-energy increase across an (i_on, i_off) current grid.

    Each cell derives its duty cycle from the automatic rule at its own
    currents, then compares seeded against unseeded mean pulse energy with a
    common per-cell noise seed (derive_seed(master, SWEEP_CELL, i, j)).
    Cells violating the operating constraints or failing to lase are
    flagged, never silently skipped. `completed` allows a resumed run to
    inject already-computed cells.
    """
    if p_inj < 0:
        raise ValueError("p_inj must be non-negative")
    i_on_values = np.asarray(i_on_values, dtype=float)
    i_off_values = np.asarray(i_off_values, dtype=float)
    values = np.full((len(i_on_values), len(i_off_values)), math.nan)
    status = np.full(values.shape, "", dtype=object)
    jobs = []
    for i, i_on in enumerate(i_on_values):
        for j, i_off in enumerate(i_off_values):
            if completed and (i, j) in completed:
                values[i, j], status[i, j] = completed[(i, j)]
                continue
            seed = derive_seed(master_seed, seeding.DOMAIN_SWEEP_CELL, i, j)
            jobs.append((i, j, float(i_on), float(i_off), p_inj, params, dt, seed,
                         period, filter_bw, n_pulses, burn_in, enforce_constraints,
                         duty_probe_dt))
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_heatmap_cell, jobs))
    else:
        results = [_heatmap_cell(job) for job in jobs]
    for i, j, value, st in results:
        values[i, j] = value
        status[i, j] = st
    return SweepGrid(
        row_axis=SweepAxis("i_on", "A", i_on_values),
        col_axis=SweepAxis("i_off", "A", i_off_values),
        values=values,
        status=status,
        metadata={
            "p_inj_w": p_inj,
            "master_seed": master_seed,
            "seed_policy": "derive_seed(master, DOMAIN_SWEEP_CELL, row, col)",
            "threshold_current_a": threshold_current(params),
            "dt_s": dt,
            "n_pulses": n_pulses,
        },
    )


def grid_to_csv(path, grid: SweepGrid, meta: dict | None = None) -> None:
    """One row per cell: I_on_mA, I_off_mA, increase_pct, status."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("I_on_mA,I_off_mA,increase_pct,status\n")
        for i, i_on in enumerate(grid.row_axis.values):
            for j, i_off in enumerate(grid.col_axis.values):
                fh.write(f"{_fmt(i_on * 1e3)},{_fmt(i_off * 1e3)},{_fmt(grid.values[i, j])},{grid.status[i, j]}\n")


@dataclass(frozen=True)
class PowerSweepRow:
    p_inj: float  # W
    energy: float  # J, mean over analyzed pulses
    turn_on_delay: float  # s, mean over lasing pulses
    first_peak_power: float  # W
    second_peak_power: float  # W, NaN if single-peaked


@dataclass
class PowerSweepResult:
    rows: list[PowerSweepRow]
    # one representative post-burn-in pulse shape per power: (t_s, P_W)
    pulse_shapes: list[tuple[np.ndarray, np.ndarray]]
    metadata: dict = field(default_factory=dict)


def power_sweep_energy(
    p_inj_values: np.ndarray,
    wave: DriveWaveform,
    params: LaserParams,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    burn_in: int = DEFAULT_BURN_IN,
    noise_on: bool = False,
) -> PowerSweepResult:
    """Pulse energy, turn-on delay and peak structure versus injected power.

    Defaults to noise-free integration: the sweep characterizes the mean
    pulse response and small energy changes at weak injection would be
    buried by shot-to-shot fluctuations otherwise.
    """
    from . import dynamics

    rows = []
    shapes = []
    for p_inj in (float(p) for p in p_inj_values):
        if p_inj < 0:
            raise ValueError("injected powers must be non-negative")
        inj = InjectionSignal(p_inj=p_inj)
        trace = dynamics.integrate(params, wave, inj, dt, seed, noise_on=noise_on)
        metrics = pulse_metrics.analyze_pulses(trace, wave, burn_in)
        energies = [m.energy for m in metrics]
        delays = [m.turn_on_delay for m in metrics if m.lasing]
        firsts = [m.peak_powers[0] for m in metrics if len(m.peak_powers) >= 1]
        seconds = [m.peak_powers[1] for m in metrics if len(m.peak_powers) >= 2]
        rows.append(PowerSweepRow(
            p_inj=p_inj,
            energy=float(np.mean(energies)),
            turn_on_delay=float(np.mean(delays)) if delays else math.nan,
            first_peak_power=float(np.mean(firsts)) if firsts else math.nan,
            second_peak_power=float(np.mean(seconds)) if seconds else math.nan,
        ))
        n_per = len(trace.power[:-1]) // wave.n_pulses
        k = burn_in  # first analyzed pulse as the representative shape
        window = trace.power[k * n_per : (k + 1) * n_per + 1]
        shapes.append((dt * np.arange(len(window)), window.copy()))
    return PowerSweepResult(rows=rows, pulse_shapes=shapes,
                            metadata={"seed": seed, "dt_s": dt, "noise_on": noise_on})


def power_sweep_to_csv(path, result: PowerSweepResult, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("P_inj_W,energy_J,delay_s,first_peak_W,second_peak_W\n")
        for r in result.rows:
            fh.write(f"{_fmt(r.p_inj)},{_fmt(r.energy)},{_fmt(r.turn_on_delay)},{_fmt(r.first_peak_power)},{_fmt(r.second_peak_power)}\n")


def pulse_shapes_to_csv(path, result: PowerSweepResult, meta: dict | None = None) -> None:
    """Long-form pulse shapes: P_inj_W, t_s, P_W."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("P_inj_W,t_s,P_W\n")
        for row, (t, p) in zip(result.rows, result.pulse_shapes):
            for i in range(len(t)):
                fh.write(f"{_fmt(row.p_inj)},{_fmt(t[i])},{_fmt(p[i])}\n")


@dataclass(frozen=True)
class RandomnessDiagnostics:
    """What the transmitter sees when monitoring its own interferometer."""

    n_pulses: int
    ks_stat: float
    ks_pvalue: float
    ks_pass: bool  # arcsine law at 1% significance
    autocorr_max_abs: float
    autocorr_band: float  # 4 / sqrt(n)
    autocorr_pass: bool
    output_variance: float

    @property
    def passed(self) -> bool:
        return self.ks_pass and self.autocorr_pass and self.output_variance > 0.0


def randomness_diagnostics(
    pulses: list[pulse_metrics.PulseMetrics],
    wave: DriveWaveform,
    phi0: float = 0.0,
    max_lag: int = 100,
) -> RandomnessDiagnostics:
    """Arcsine-law KS test and autocorrelation band check on the per-pulse
    interferometer output of an analyzed pulse stream."""
    model = InterferometerModel(phi0=phi0, delay=wave.period)
    u = interferometry.normalized_interferogram(pulses, model, wave)
    u = u[np.isfinite(u)]
    raw = interferometry.interferogram_from_pulses(pulses, model, wave)
    n = len(u)
    if n < max_lag + 2:
        raise ValueError(f"need more than {max_lag + 2} lasing pulses, got {n}")
    ks = scipy.stats.kstest(u, scipy.stats.arcsine.cdf)
    r = interferometry.autocorrelation(raw, max_lag)
    band = 4.0 / math.sqrt(n)
    r_max = float(np.nanmax(np.abs(r)))
    variance = float(np.nanvar(raw))
    return RandomnessDiagnostics(
        n_pulses=n,
        ks_stat=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        ks_pass=bool(ks.pvalue >= 0.01),
        autocorr_max_abs=r_max,
        autocorr_band=band,
        autocorr_pass=bool(r_max < band),
        output_variance=variance,
    )


@dataclass
class ScenarioResult:
    """Randomness diagnostics on the transmitter side plus the attacker's
    correlation envelope, under the same injected power."""

    diagnostics: RandomnessDiagnostics
    report: CorrelationReport
    baseline: CorrelationReport
    p_inj: float


def phase_randomized_lsa_scenario(
    params: LaserParams,
    wave: DriveWaveform,
    p_inj: float,
    seed: int = 0,
    n_trials: int = 20,
    dt: float = DEFAULT_DT,
    burn_in: int = DEFAULT_BURN_IN,
    diagnostics_pulses: int = 5000,
    phase_mode: str = "per_pulse_uniform",
    n_jobs: int = 1,
) -> ScenarioResult:
    """Seeding attack with a randomized (but attacker-known) injected phase.

    Runs (a) a long transmitter simulation under injection, checked with the
    transmitter's own randomness diagnostics, and (b) the attacker-side
    correlation envelope against its zero-injection baseline. A successful
    undetectable attack passes (a) while (b) clears the baseline.
    """
    if p_inj < 0:
        raise ValueError("p_inj must be non-negative")
    diag_wave = replace(wave, n_pulses=diagnostics_pulses + burn_in)
    diag_seed = derive_seed(seed, seeding.DOMAIN_SCENARIO, 0)
    inj = InjectionSignal(
        p_inj=p_inj,
        phase_mode=phase_mode,
        phase_seed=derive_seed(seed, seeding.DOMAIN_SCENARIO, 1) if phase_mode == "per_pulse_uniform" else None,
    )
    pulses = pulse_metrics.simulate_pulse_metrics(params, diag_wave, inj, dt, diag_seed,
                                                  noise_on=True, burn_in=burn_in)
    diagnostics = randomness_diagnostics(pulses, diag_wave)
    baseline = envelope_protocol(
        n_trials, params, None, wave, 0.0, phase_mode,
        derive_seed(seed, seeding.DOMAIN_BASELINE), dt, burn_in, 0, n_jobs,
    )
    report = envelope_protocol(
        n_trials, params, None, wave, p_inj, phase_mode,
        derive_seed(seed, seeding.DOMAIN_SCENARIO, 2), dt, burn_in, 0, n_jobs,
        baseline=baseline,
    )
    return ScenarioResult(diagnostics=diagnostics, report=report, baseline=baseline, p_inj=p_inj)
