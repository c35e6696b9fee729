"""Asymmetric Mach-Zehnder interferometry and the phase-correlation protocol.

An asymmetric interferometer with arm delay equal to one drive period
interferes each pulse with its predecessor; the output intensity

    I_out = I_in / 2 * (1 + cos(dphi + phi0))

converts the pulse-to-pulse phase difference dphi into an intensity, up to
the unknown arm offset phi0. Both the eavesdropper and the transmitter are
modeled with one interferometer each, sampled once per pulse at the pulse
peak (peak power in, peak phase difference in), which captures the same
statistic as correlating full detector waveforms without modeling detector
bandwidth.

Because a real interferometer's phi0 drifts over seconds, a single Pearson
correlation between the two outputs can sit anywhere between -rho and +rho.
The envelope protocol repeats the measurement many times with phi0 redrawn
uniformly per trial per interferometer and keeps the extreme values; the
zero-injection baseline of the same protocol quantifies how far those
extremes wander from pure statistics.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import pulse_metrics, seeding
from .dynamics import DEFAULT_BURN_IN, DEFAULT_DT, Trace, _fmt
from .params import DriveWaveform, InjectionSignal, LaserParams
from .seeding import derive_seed

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class InterferometerModel:
    """Asymmetric Mach-Zehnder with arm delay an integer number of periods.

    phi0_policy "fixed" keeps phi0 at the given value for every trial;
    "uniform_per_trial" redraws it uniformly on [0, 2*pi) per trial,
    emulating slow drift between repeated measurements.
    """

    phi0: float = 0.0
    delay: float = 1e-9
    phi0_policy: str = "fixed"

    def __post_init__(self):
        if self.phi0_policy not in ("fixed", "uniform_per_trial"):
            raise ValueError(f"unknown phi0_policy {self.phi0_policy!r}")

    def delay_pulses(self, wave: DriveWaveform) -> int:
        k = round(self.delay / wave.period)
        if k < 1 or abs(self.delay - k * wave.period) > 1e-9 * wave.period:
            raise ValueError(
                f"arm delay {self.delay!r} s must be a positive integer multiple of the period {wave.period!r} s"
            )
        return k


def mzi_output(i_in, delta_phi, phi0: float):
    """Interferometer output intensity; broadcasts over array inputs."""
    return 0.5 * i_in * (1.0 + np.cos(delta_phi + phi0))


def interferogram_from_pulses(
    pulses: list[pulse_metrics.PulseMetrics],
    model: InterferometerModel,
    wave: DriveWaveform,
    phi0: float | None = None,
) -> np.ndarray:
    """Per-pulse interferometer output from an analyzed pulse stream.

    Entry j interferes pulse j+k with pulse j (k = arm delay in periods)
    using the phase difference at the pulse peaks and the later pulse's peak
    power as input intensity. Non-lasing pulses propagate as NaN gaps.
    Output length is len(pulses) - k.
    """
    k = model.delay_pulses(wave)
    if len(pulses) <= k:
        raise ValueError(f"need more than {k} pulses, got {len(pulses)}")
    if phi0 is None:
        phi0 = model.phi0
    phases = np.array([m.phase_at_peak for m in pulses])
    powers = np.array([m.peak_power for m in pulses])
    lasing = np.array([m.lasing for m in pulses])
    dphi = phases[k:] - phases[:-k]
    i_in = np.where(lasing[k:] & lasing[:-k], powers[k:], np.nan)
    return mzi_output(i_in, dphi, phi0)


def interferogram(
    trace: Trace,
    model: InterferometerModel,
    wave: DriveWaveform,
    burn_in: int = DEFAULT_BURN_IN,
) -> np.ndarray:
    """Interferogram of a stored trace (see interferogram_from_pulses)."""
    return interferogram_from_pulses(pulse_metrics.analyze_pulses(trace, wave, burn_in), model, wave)


def normalized_interferogram(
    pulses: list[pulse_metrics.PulseMetrics],
    model: InterferometerModel,
    wave: DriveWaveform,
    phi0: float | None = None,
) -> np.ndarray:
    """Interferometer output normalized by the input intensity, in [0, 1].

    For fully randomized pulse-to-pulse phases this follows the arcsine
    distribution regardless of intensity fluctuations.
    """
    k = model.delay_pulses(wave)
    out = interferogram_from_pulses(pulses, model, wave, phi0)
    powers = np.array([m.peak_power for m in pulses])
    return out / powers[k:]


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelation r[1..max_lag] over finite entries."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if max_lag >= len(x):
        raise ValueError(f"max_lag = {max_lag} too large for length {len(x)}")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        return np.full(max_lag, math.nan)
    return np.array([float(np.dot(xc[:-l], xc[l:])) / denom for l in range(1, max_lag + 1)])


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation over finite pairs; NaN if either side has no
    variance (undefined, deliberately not reported as zero)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 2:
        return math.nan
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        return math.nan
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def pearson_at_lag(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    """Pearson correlation of x[t] against y[t + lag] (truncated overlap)."""
    if lag > 0:
        return pearson(x[:-lag or None], y[lag:])
    if lag < 0:
        return pearson(x[-lag:], y[:lag])
    return pearson(x, y)


@dataclass(frozen=True)
class LagCorrelation:
    """Correlation-versus-lag scan and its peak."""

    lags: np.ndarray  # s
    rho: np.ndarray
    best_lag: float  # s, argmax of |rho|
    best_rho: float


def cross_correlation_vs_lag(
    x: np.ndarray,
    y: np.ndarray,
    max_lag: int,
    sample_period: float = 1.0,
) -> LagCorrelation:
    """Pearson correlation at every integer shift in [-max_lag, +max_lag].

    Positive lag means y is delayed with respect to x. sample_period scales
    the reported lags to seconds.
    """
    if len(x) != len(y):
        raise ValueError("sequences must have equal length")
    if max_lag >= len(x) // 2:
        raise ValueError(f"max_lag = {max_lag} too large for length {len(x)}")
    shifts = np.arange(-max_lag, max_lag + 1)
    rho = np.array([pearson_at_lag(x, y, int(s)) for s in shifts])
    finite = np.isfinite(rho)
    if not finite.any():
        best = 0
        best_rho = math.nan
    else:
        idx = np.flatnonzero(finite)
        best = idx[np.argmax(np.abs(rho[idx]))]
        best_rho = float(rho[best])
    return LagCorrelation(lags=shifts * sample_period, rho=rho,
                          best_lag=float(shifts[best] * sample_period), best_rho=best_rho)


@dataclass(frozen=True)
class CorrelationReport:
    """Envelope-protocol outcome at one injected power."""

    per_trial_rho: np.ndarray
    best_lag: float  # s
    rho_max: float
    rho_min: float
    baseline_max: float
    baseline_min: float
    n_trials: int
    window: float  # s, duration of one measurement

    def __post_init__(self):
        finite = self.per_trial_rho[np.isfinite(self.per_trial_rho)]
        if len(finite) and (finite.max() > 1.0 + 1e-12 or finite.min() < -1.0 - 1e-12):
            raise ValueError("correlation outside [-1, 1]")
        if self.n_trials != len(self.per_trial_rho):
            raise ValueError("n_trials must match per_trial_rho length")


def lsa_correlation_trial(
    params_alice: LaserParams,
    params_eve: LaserParams | None,
    wave: DriveWaveform,
    p_inj: float,
    phase_mode: str,
    seed: int,
    phi0_alice: float = 0.0,
    phi0_eve: float = 0.0,
    dt: float = DEFAULT_DT,
    burn_in: int = DEFAULT_BURN_IN,
    lag: int = 0,
    constant_phi_inj: float = 0.0,
) -> float:
    """One correlation measurement between the attacker's phase record and
    the transmitter's interferometer output.

    The attacker's injected phase sequence is drawn per pulse (seeded from
    `seed`), fed to the transmitter simulation, and simultaneously passed
    through the attacker's own interferometer as her reference stream; the
    transmitter's interferogram is built from its simulated pulse train.
    Returns the Pearson correlation at the calibrated lag (in pulses).

    params_eve is accepted for interface parity but does not enter the
    per-pulse statistic: the attacker reads her phases off her own record
    rather than being re-simulated.
    """
    noise_seed = derive_seed(seed, seeding.DOMAIN_TRACE)
    phase_seed = derive_seed(seed, seeding.DOMAIN_PHASE)
    inj = InjectionSignal(
        p_inj=p_inj,
        phase_mode=phase_mode,
        phi_inj=constant_phi_inj,
        phase_seed=phase_seed if phase_mode == "per_pulse_uniform" else None,
    )
    pulses = pulse_metrics.simulate_pulse_metrics(
        params_alice, wave, inj, dt, noise_seed, noise_on=True, burn_in=burn_in
    )
    model_a = InterferometerModel(phi0=phi0_alice, delay=wave.period)
    alice = interferogram_from_pulses(pulses, model_a, wave)
    # Eve's reference: her known phase record through her own interferometer
    phases = inj.resolve_phases(wave.n_pulses)[burn_in:]
    eve = mzi_output(1.0, phases[1:] - phases[:-1], phi0_eve)
    return pearson_at_lag(alice, eve, lag)


def _trial_job(args) -> float:
    return lsa_correlation_trial(*args)


def _run_trials(
    params_alice: LaserParams,
    params_eve: LaserParams | None,
    wave: DriveWaveform,
    p_inj: float,
    phase_mode: str,
    master_seed: int,
    n_trials: int,
    dt: float,
    burn_in: int,
    lag: int,
    n_jobs: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trials with phi0 redrawn per trial per interferometer."""
    phi0_rng = seeding.make_rng(derive_seed(master_seed, seeding.DOMAIN_TRIAL, 0))
    phi0_a = phi0_rng.uniform(0.0, TWO_PI, n_trials)
    phi0_e = phi0_rng.uniform(0.0, TWO_PI, n_trials)
    jobs = [
        (params_alice, params_eve, wave, p_inj, phase_mode,
         derive_seed(master_seed, seeding.DOMAIN_TRIAL, 1 + i),
         phi0_a[i], phi0_e[i], dt, burn_in, lag)
        for i in range(n_trials)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rho = np.array(list(pool.map(_trial_job, jobs)))
    else:
        rho = np.array([_trial_job(j) for j in jobs])
    return rho, phi0_a, phi0_e


def envelope_protocol(
    n_trials: int,
    params_alice: LaserParams,
    params_eve: LaserParams | None,
    wave: DriveWaveform,
    p_inj: float,
    phase_mode: str = "per_pulse_uniform",
    master_seed: int = 0,
    dt: float = DEFAULT_DT,
    burn_in: int = DEFAULT_BURN_IN,
    lag: int = 0,
    n_jobs: int = 1,
    baseline: CorrelationReport | None = None,
) -> CorrelationReport:
    """Max/min correlation envelope over repeated drifting-phi0 trials.

    When p_inj is zero the envelope itself is the statistical baseline and
    is copied into the baseline fields; otherwise the baseline fields come
    from the `baseline` report (NaN if none was supplied).
    """
    if n_trials < 2:
        raise ValueError("need at least 2 trials for an envelope")
    rho, _, _ = _run_trials(params_alice, params_eve, wave, p_inj, phase_mode,
                            master_seed, n_trials, dt, burn_in, lag, n_jobs)
    finite = rho[np.isfinite(rho)]
    if len(finite) == 0:
        # degenerate streams (e.g. constant reference phase): undefined, not zero
        rho_max = rho_min = math.nan
    else:
        rho_max = float(finite.max())
        rho_min = float(finite.min())
    if p_inj == 0.0:
        base_max, base_min = rho_max, rho_min
    elif baseline is not None:
        base_max, base_min = baseline.baseline_max, baseline.baseline_min
    else:
        base_max = base_min = math.nan
    return CorrelationReport(
        per_trial_rho=rho,
        best_lag=lag * wave.period,
        rho_max=rho_max,
        rho_min=rho_min,
        baseline_max=base_max,
        baseline_min=base_min,
        n_trials=n_trials,
        window=wave.n_pulses * wave.period,
    )


@dataclass(frozen=True)
class PowerCurvePoint:
    p_inj: float
    rho_max: float
    rho_min: float
    baseline_max: float
    baseline_min: float


@dataclass(frozen=True)
class PowerCurve:
    """Correlation envelope as a function of injected power."""

    points: list[PowerCurvePoint]
    reports: list[CorrelationReport]
    onset_power: float  # W; NaN if the envelope never leaves the baseline

    def as_rows(self) -> list[tuple]:
        return [(p.p_inj, p.rho_max, p.rho_min, p.baseline_max, p.baseline_min) for p in self.points]


def correlation_vs_power_curve(
    powers: np.ndarray,
    params_alice: LaserParams,
    params_eve: LaserParams | None,
    wave: DriveWaveform,
    phase_mode: str = "per_pulse_uniform",
    master_seed: int = 0,
    n_trials: int = 20,
    dt: float = DEFAULT_DT,
    burn_in: int = DEFAULT_BURN_IN,
    n_jobs: int = 1,
) -> PowerCurve:
    """Envelope protocol at each injected power on the grid.

    A dedicated zero-injection run (separate seed) provides the baseline
    attached to every point; the onset power is the smallest grid power
    whose rho_max rises above that baseline's maximum.
    """
    baseline = envelope_protocol(
        n_trials, params_alice, params_eve, wave, 0.0, phase_mode,
        derive_seed(master_seed, seeding.DOMAIN_BASELINE), dt, burn_in, 0, n_jobs,
    )
    points = []
    reports = []
    onset = math.nan
    for i, p_inj in enumerate(sorted(float(p) for p in powers)):
        report = envelope_protocol(
            n_trials, params_alice, params_eve, wave, p_inj, phase_mode,
            derive_seed(master_seed, seeding.DOMAIN_TRIAL, 1000 + i), dt, burn_in, 0, n_jobs,
            baseline=baseline,
        )
        points.append(PowerCurvePoint(p_inj, report.rho_max, report.rho_min,
                                      baseline.baseline_max, baseline.baseline_min))
        reports.append(report)
        if math.isnan(onset) and p_inj > 0.0 and report.rho_max > baseline.baseline_max:
            onset = p_inj
    return PowerCurve(points=points, reports=reports, onset_power=onset)


def trials_to_csv(path, reports: list[CorrelationReport], powers: list[float], meta: dict | None = None) -> None:
    """Per-trial long-form table (P_inj_W, trial, rho)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("P_inj_W,trial,rho\n")
        for p_inj, report in zip(powers, reports):
            for i, rho in enumerate(report.per_trial_rho):
                fh.write(f"{_fmt(p_inj)},{i},{_fmt(rho)}\n")


def curve_to_csv(path, curve: PowerCurve, meta: dict | None = None) -> None:
    """Per-power summary (P_inj_W, rho_max, rho_min, baseline_max, baseline_min)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("P_inj_W,rho_max,rho_min,baseline_max,baseline_min\n")
        for row in curve.as_rows():
            fh.write(",".join(_fmt(v) for v in row) + "\n")
