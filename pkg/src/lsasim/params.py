"""Physical parameters, drive waveform and injection signal definitions.

Units follow the usual semiconductor rate-equation conventions: carrier and
photon densities are per cm^3 and the active volume is in cm^3, everything
else is SI (seconds, amperes, watts, meters). The default `LaserParams`
describe a fitted distributed-feedback telecom diode operated around
1550 nm.

The threshold current is derived analytically from the steady state of the
noise-free rate equations: lasing starts once the modal gain compensates the
cavity loss, i.e. at a carrier density

    N_th = N0 + 1 / (Gamma * g * tau_p)

reached (below threshold, where stimulated recombination is negligible) at

    I_th = q * V * N_th / tau_n.

Note that with the default parameter set this evaluates to roughly 94 mA,
which is large for a telecom diode; drive configurations in the tens of
milliamperes need a longer carrier lifetime (e.g. tau_n = 1.5 ns puts the
threshold near 9.4 mA). The computed threshold is surfaced in all run
summaries, and the operating-constraint check can be relaxed per config
instead of silently adjusting parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.signal

from .errors import ConfigError, DriveConstraintError, NonLasingError

PLANCK_H = 6.62607015e-34  # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
SPEED_OF_LIGHT = 2.99792458e8  # m/s


@dataclass(frozen=True)
class LaserParams:
    """Single-mode rate-equation parameters of the gain-switched diode.

    Attributes:
        tau_n: carrier lifetime (s)
        tau_p: photon lifetime (s)
        g: differential gain coefficient (cm^3 s^-1)
        epsilon: gain compression factor (cm^3)
        N0: carrier density at transparency (cm^-3)
        beta: fraction of spontaneous emission coupled into the lasing mode
        alpha: linewidth enhancement factor
        eta: differential quantum efficiency
        V: active layer volume (cm^3)
        Gamma: mode confinement factor
        kappa: injection coupling rate into the slave cavity (Hz)
        lambda0: free-running wavelength (m)
        q: elementary charge (C)
        h: Planck constant (J s)
    """

    tau_n: float = 0.15e-9
    tau_p: float = 4.47e-12
    g: float = 1.70e-6
    epsilon: float = 3.24e-17
    N0: float = 3.79e18
    beta: float = 4.44e-5
    alpha: float = 2.95
    eta: float = 0.52
    V: float = 2e-11
    Gamma: float = 0.22
    kappa: float = 1.13e11
    lambda0: float = 1550e-9
    q: float = ELEMENTARY_CHARGE
    h: float = PLANCK_H

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"LaserParams.{f.name} must be a finite positive number, got {value!r}")
        for name in ("beta", "eta", "Gamma"):
            if getattr(self, name) > 1.0:
                raise ConfigError(f"LaserParams.{name} must not exceed 1, got {getattr(self, name)!r}")

    @property
    def nu(self) -> float:
        """Optical frequency c / lambda0 (Hz)."""
        return SPEED_OF_LIGHT / self.lambda0

    @property
    def photon_energy(self) -> float:
        """h * nu (J)."""
        return self.h * self.nu

    @property
    def power_coefficient(self) -> float:
        """Output power per unit photon density, V*eta*h*nu / (2*Gamma*tau_p) (W cm^3)."""
        return self.V * self.eta * self.photon_energy / (2.0 * self.Gamma * self.tau_p)


def threshold_current(params: LaserParams) -> float:
    """Analytic threshold current I_th = q*V*(N0 + 1/(Gamma*g*tau_p))/tau_n (A)."""
    n_th = params.N0 + 1.0 / (params.Gamma * params.g * params.tau_p)
    return params.q * params.V * n_th / params.tau_n


def power_to_photon_density(power: float, params: LaserParams) -> float:
    """Convert optical power (W) to intracavity photon density (cm^-3).

    Inverse of the output-power map, S = 2*Gamma*tau_p*P / (V*eta*h*nu);
    the same cavity convention is used for injected light, with the coupling
    rate kappa absorbing coupling efficiency.
    """
    if power < 0:
        raise ValueError("power must be non-negative")
    return power / params.power_coefficient


def photon_density_to_power(photon_density: float, params: LaserParams) -> float:
    """Convert photon density (cm^-3) to emitted optical power (W)."""
    return params.power_coefficient * photon_density


@dataclass(frozen=True)
class DriveWaveform:
    """Band-limited pulse-wave drive current.

    The ideal waveform is at `i_on` for the first `on_fraction` of each
    period and at `i_off` for the rest; a causal low-pass filter with cutoff
    `filter_bw` models the finite bandwidth of the pulse generator.
    """

    i_on: float
    i_off: float
    period: float = 1e-9
    on_fraction: float = 0.5
    filter_bw: float = 3.5e9
    n_pulses: int = 100

    def __post_init__(self):
        if self.i_off < 0:
            raise ConfigError(f"i_off must be non-negative, got {self.i_off!r}")
        if self.i_on < self.i_off:
            raise ConfigError("i_on must not be below i_off")
        if not 0.0 < self.on_fraction < 1.0:
            raise ConfigError(f"on_fraction must lie in (0, 1), got {self.on_fraction!r}")
        if self.period <= 0 or not math.isfinite(self.period):
            raise ConfigError("period must be positive")
        if self.filter_bw <= 0:
            raise ConfigError("filter_bw must be positive (use math.inf for no filtering)")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be at least 1")

    @property
    def mean_current(self) -> float:
        return self.i_off + (self.i_on - self.i_off) * self.on_fraction


def check_drive_constraints(params: LaserParams, wave: DriveWaveform) -> list[str]:
    """Return the list of violated gain-switching constraints (empty if none).

    The operating rule is 0 <= i_off < I_th < i_on: the off-time current must
    keep the laser below threshold so the cavity empties between pulses, and
    the on-time current must exceed threshold so pulses form at all.
    """
    i_th = threshold_current(params)
    violations = []
    if wave.i_off >= i_th:
        violations.append(
            f"i_off = {wave.i_off:.6g} A must stay below the threshold current I_th = {i_th:.6g} A"
        )
    if wave.i_on <= i_th:
        violations.append(
            f"i_on = {wave.i_on:.6g} A must exceed the threshold current I_th = {i_th:.6g} A"
        )
    return violations


def enforce_drive_constraints(params: LaserParams, wave: DriveWaveform) -> None:
    """Raise DriveConstraintError if the drive violates the operating rule."""
    violations = check_drive_constraints(params, wave)
    if violations:
        raise DriveConstraintError("; ".join(violations))


def samples_per_period(period: float, dt: float) -> int:
    """Number of integration samples per drive period.

    dt must divide the period to within one part in 1e6 of a sample.
    """
    ratio = period / dt
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-6:
        raise ConfigError(f"dt = {dt!r} does not divide the period {period!r} into whole samples")
    return n


def _bessel_lowpass_sos(filter_bw: float, fs: float):
    # -3 dB at the cutoff; Bessel for flat group delay (no ringing on pulse edges)
    return scipy.signal.bessel(4, filter_bw, btype="low", analog=False, output="sos", fs=fs, norm="mag")


def synthesize_current_period(wave: DriveWaveform, dt: float) -> np.ndarray:
    """One steady-state period of the filtered drive current, starting at the
    ideal rising edge.

    The causal filter is applied to a tiled run of identical periods and a
    late period is extracted, so the returned samples are the periodic
    steady-state response. Negative excursions from filter ringing are
    clamped at zero (a current source cannot swing negative).
    """
    if dt > wave.period / 100.0:
        raise ConfigError(f"dt = {dt!r} too coarse: need at least 100 samples per period")
    n = samples_per_period(wave.period, dt)
    ideal = np.full(n, wave.i_off)
    n_on = int(round(wave.on_fraction * n))
    ideal[:n_on] = wave.i_on
    fs = 1.0 / dt
    if not math.isfinite(wave.filter_bw) or wave.filter_bw >= 0.49 * fs:
        return ideal
    sos = _bessel_lowpass_sos(wave.filter_bw, fs)
    n_settle = 8
    tiled = np.tile(ideal, n_settle)
    filtered = scipy.signal.sosfilt(sos, tiled)
    out = filtered[(n_settle - 2) * n : (n_settle - 1) * n].copy()
    np.clip(out, 0.0, None, out=out)
    return out


def synthesize_current(wave: DriveWaveform, dt: float) -> np.ndarray:
    """Full sampled drive current I(t), length n_pulses * period / dt."""
    return np.tile(synthesize_current_period(wave, dt), wave.n_pulses)


@dataclass(frozen=True)
class DutyCycleResult:
    """Outcome of the automatic duty-cycle rule.

    on_fraction is (turn-on delay + half a relaxation-oscillation period) /
    period, clamped to (0.05, 0.95). `flagged` marks the overdamped fallback
    where no second oscillation peak was found.
    """

    on_fraction: float
    turn_on_delay: float
    half_ro_period: float
    flagged: bool


def auto_duty_cycle(params: LaserParams, wave: DriveWaveform, dt: float = 1e-13) -> DutyCycleResult:
    """Duty cycle for single-peak emission at the given currents.

    Runs a short noise-free free-running pre-simulation at 50% duty, measures
    the turn-on delay (current rising edge to the first crossing of 10% of
    the first peak power) and half the spacing of the first two
    relaxation-oscillation peaks, and returns their sum as the on-time.
    When the 50% on-window is too short to contain two oscillation peaks
    (long turn-on delay), the probe escalates to wider windows before
    concluding the response is overdamped.

    Raises NonLasingError if no probe produces a pulse.
    """
    from . import dynamics, pulse_metrics

    n_settle = 10
    n = samples_per_period(wave.period, dt)
    result = None
    for probe_duty in (0.5, 0.75, 0.9):
        probe = replace(wave, on_fraction=probe_duty, n_pulses=n_settle)
        trace = dynamics.integrate_free_running(params, probe, dt=dt, seed=0, noise_on=False)
        # analyze the last full period, by which the pulse train has settled
        k = n_settle - 1
        power = trace.power[k * n : (k + 1) * n + 1]
        floor = pulse_metrics.spontaneous_floor(power, probe_duty)
        peaks = pulse_metrics.find_power_peaks(power, dt, floor)
        if len(peaks) == 0 or power.max() <= 10.0 * floor:
            continue
        first_peak_power = power[peaks[0]]
        crossing = np.argmax(power >= 0.1 * first_peak_power)
        delay = crossing * dt
        if len(peaks) >= 2:
            half_period = 0.5 * (peaks[1] - peaks[0]) * dt
            result = (delay, half_period, False)
            break
        # single peak: remember the measurement but try a wider window first
        if result is None:
            result = (delay, 2.0e3 * params.tau_p, True)
    if result is None:
        raise NonLasingError(
            f"no pulse at i_on = {wave.i_on:.4g} A, i_off = {wave.i_off:.4g} A: "
            "cannot measure turn-on delay"
        )
    delay, half_period, flagged = result
    on_fraction = (delay + half_period) / wave.period
    on_fraction = min(max(on_fraction, 0.05), 0.95)
    return DutyCycleResult(on_fraction, delay, half_period, flagged)


# JSON parameter documents use explicit unit-suffixed keys so a config file is
# self-describing. Scale factors convert the document value to the internal
# unit of the corresponding LaserParams field.
_PARAM_KEYS: dict[str, tuple[str, float]] = {
    "tau_n_ns": ("tau_n", 1e-9),
    "tau_p_ps": ("tau_p", 1e-12),
    "g_cm3_per_s": ("g", 1.0),
    "epsilon_cm3": ("epsilon", 1.0),
    "N0_per_cm3": ("N0", 1.0),
    "beta": ("beta", 1.0),
    "alpha": ("alpha", 1.0),
    "eta": ("eta", 1.0),
    "V_cm3": ("V", 1.0),
    "Gamma": ("Gamma", 1.0),
    "kappa_hz": ("kappa", 1.0),
    "lambda0_nm": ("lambda0", 1e-9),
}


def laser_params_from_dict(doc: dict) -> LaserParams:
    """Build LaserParams from a JSON-style document with unit-suffixed keys.

    Missing keys take the default value; unknown keys are rejected.
    """
    unknown = set(doc) - set(_PARAM_KEYS)
    if unknown:
        raise ConfigError(
            f"unknown laser parameter key(s): {', '.join(sorted(unknown))}; "
            f"expected keys: {', '.join(sorted(_PARAM_KEYS))}"
        )
    kwargs = {}
    for key, value in doc.items():
        name, scale = _PARAM_KEYS[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"laser parameter {key} must be a number, got {value!r}")
        kwargs[name] = value * scale
    return LaserParams(**kwargs)


def laser_params_to_dict(params: LaserParams) -> dict:
    """Serialize LaserParams to the unit-suffixed document form."""
    return {key: getattr(params, name) / scale for key, (name, scale) in _PARAM_KEYS.items()}


@dataclass(frozen=True)
class InjectionSignal:
    """Externally injected seed light reaching the slave laser cavity.

    p_inj is the average injected optical power at the cavity; it is
    converted to an injected photon density with the same cavity convention
    as the output-power map. phase_mode selects the master phase trajectory:

        "constant":         phi_inj(t) = phi_inj for all t
        "per_pulse_uniform": one i.i.d. uniform [0, 2*pi) draw per drive
                             period, reproducible from phase_seed; the full
                             draw record is available via resolve_phases().

    delta_omega is the free-running angular-frequency detuning between
    master and slave (rad/s); zero models frequency-matched lasers.
    """

    p_inj: float = 0.0
    phase_mode: str = "constant"
    phi_inj: float = 0.0
    phase_seed: int | None = None
    delta_omega: float = 0.0

    def __post_init__(self):
        if self.p_inj < 0 or not math.isfinite(self.p_inj):
            raise ConfigError(f"p_inj must be finite and non-negative, got {self.p_inj!r}")
        if self.phase_mode not in ("constant", "per_pulse_uniform"):
            raise ConfigError(f"phase_mode must be 'constant' or 'per_pulse_uniform', got {self.phase_mode!r}")
        if self.phase_mode == "per_pulse_uniform" and self.phase_seed is None:
            raise ConfigError("per_pulse_uniform phase mode requires phase_seed")
        if not math.isfinite(self.delta_omega):
            raise ConfigError("delta_omega must be finite")

    def resolve_phases(self, n_pulses: int) -> np.ndarray:
        """Per-period injected phase, one value per drive period.

        In per_pulse_uniform mode this is the attacker's full phase record:
        the same seed always reproduces the same draws.
        """
        if self.phase_mode == "constant":
            return np.full(n_pulses, self.phi_inj)
        rng = np.random.Generator(np.random.PCG64(self.phase_seed))
        return rng.uniform(0.0, 2.0 * np.pi, n_pulses)

    def photon_density(self, params: LaserParams) -> float:
        """Injected photon density S_inj in the slave cavity (cm^-3)."""
        return power_to_photon_density(self.p_inj, params)
