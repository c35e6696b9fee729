"""Stochastic rate-equation integrator for the free-running and injection-
locked gain-switched laser.

State is (N, S, phi): carrier density, photon density (both cm^-3) and the
unwrapped optical phase. The deterministic part of the free-running system
is

    dN/dt   = I/(q V) - N/tau_n - g (N - N0) S / (1 + eps S)
    dS/dt   = Gamma g (N - N0) S / (1 + eps S) - S/tau_p + Gamma beta N/tau_n
    dphi/dt = (alpha/2) [Gamma g (N - N0) - 1/tau_p]

and external seeding adds the master-slave coupling terms

    dS/dt   += 2 kappa sqrt(S_inj S) cos(phi - phi_inj - dw t)
    dphi/dt += -kappa sqrt(S_inj / S) sin(phi - phi_inj - dw t)

Spontaneous emission enters as Langevin forcing with per-step coefficients

    F_S   = sqrt(2 Gamma beta N S / (tau_n dt)) x_S
    F_phi = sqrt(Gamma beta N / (2 tau_n S dt)) x_phi
    F_Z   = sqrt(2 N / (V tau_n dt)) x_Z
    F_N   = F_Z - F_S / Gamma

with x_S, x_phi, x_Z i.i.d. standard normal per step. The SDE is advanced
with the Euler-Maruyama scheme,

    y_{k+1} = y_k + dt * (drift + injection) + dt * F,

where the 1/sqrt(dt) inside F makes dt * F carry the sqrt(dt) Wiener
scaling. The phase terms diverge as S -> 0, so S is replaced by a floor of
1 cm^-3 inside them (below that density, phase is rerandomized by the next
spontaneous event anyway); applications of the floor are counted, as are
clampings of S at zero after a noisy overshoot.

Output power is derived from S through P = V eta h nu / (2 Gamma tau_p) * S
at every sample (never integrated separately).

Performance notes: the per-step loop is JIT-compiled; noise is drawn in
period-sized blocks from a PCG64 generator owned by the trajectory, so
equal seeds give bit-identical trajectories and distinct trajectories can
run in parallel with no shared state. `integrate_free_running` is a
deliberately separate code path (not the injection integrator with S_inj=0)
so the two can cross-check each other.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalError, TraceFormatError
from .params import (
    DriveWaveform,
    InjectionSignal,
    LaserParams,
    samples_per_period,
    synthesize_current_period,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-13  # s; about tau_p / 45 for the default parameters
S_FLOOR = 1.0  # cm^-3; regularizes 1/S and 1/sqrt(S) phase terms
DEFAULT_BURN_IN = 5  # periods discarded before any analysis


@dataclass(frozen=True)
class LaserState:
    """Instantaneous laser state."""

    N: float
    S: float
    phi: float
    t: float = 0.0


@dataclass(frozen=True)
class NoiseDraws:
    """One step's standard-normal draws (mutually independent)."""

    x_S: float
    x_phi: float
    x_Z: float


def drift_free_running(state: LaserState, current: float, params: LaserParams) -> tuple[float, float, float]:
    """Deterministic right-hand side (dN/dt, dS/dt, dphi/dt) of the
    free-running laser."""
    p = params
    gain = p.g * (state.N - p.N0) / (1.0 + p.epsilon * state.S)
    dN = current / (p.q * p.V) - state.N / p.tau_n - gain * state.S
    dS = p.Gamma * gain * state.S - state.S / p.tau_p + p.Gamma * p.beta * state.N / p.tau_n
    dphi = 0.5 * p.alpha * (p.Gamma * p.g * (state.N - p.N0) - 1.0 / p.tau_p)
    return dN, dS, dphi


def noise_terms(state: LaserState, params: LaserParams, dt: float, draws: NoiseDraws):
    """Langevin forcing (F_N, F_S, F_phi) for one step of length dt.

    The 1/S factor in F_phi uses max(S, S_FLOOR).
    """
    p = params
    s_eff = state.S if state.S > S_FLOOR else S_FLOOR
    f_s = np.sqrt(2.0 * p.Gamma * p.beta * state.N * state.S / (p.tau_n * dt)) * draws.x_S
    f_phi = np.sqrt(p.Gamma * p.beta * state.N / (2.0 * p.tau_n * s_eff * dt)) * draws.x_phi
    f_z = np.sqrt(2.0 * state.N / (p.V * p.tau_n * dt)) * draws.x_Z
    f_n = f_z - f_s / p.Gamma
    return f_n, f_s, f_phi


def oil_terms(
    state: LaserState,
    s_inj: float,
    phi_inj: float,
    delta_omega: float,
    params: LaserParams,
) -> tuple[float, float]:
    """Injection-locking additions (dS/dt, dphi/dt) for a resolved injection
    (S_inj, phi_inj, delta_omega) at the state's time.

    Identically (0, 0) when s_inj == 0. The 1/S in the phase term uses
    max(S, S_FLOOR).
    """
    if s_inj == 0.0:
        return 0.0, 0.0
    angle = state.phi - phi_inj - delta_omega * state.t
    s_eff = state.S if state.S > S_FLOOR else S_FLOOR
    ds = 2.0 * params.kappa * np.sqrt(s_inj * state.S) * np.cos(angle)
    dphi = -params.kappa * np.sqrt(s_inj / s_eff) * np.sin(angle)
    return ds, dphi


def _param_tuple(p: LaserParams):
    return (p.tau_n, p.tau_p, p.g, p.epsilon, p.N0, p.beta, p.alpha, p.V, p.Gamma, p.kappa, p.q)


@njit(cache=True)
def _chunk_oil(
    N, S, phi, k0, current, draws, dt, noise_on, s_inj, phi_inj, delta_omega,
    tau_n, tau_p, g, eps, N0, beta, alpha, V, Gamma, kappa, q,
    out_N, out_S, out_phi,
):
    """Advance one drive period with injection terms; returns final state
    and (clamp, floor) event counts. out arrays receive the post-step states."""
    clamps = 0
    floors = 0
    n = current.shape[0]
    for k in range(n):
        cur = current[k]
        gain = g * (N - N0) / (1.0 + eps * S)
        dN = cur / (q * V) - N / tau_n - gain * S
        dS = Gamma * gain * S - S / tau_p + Gamma * beta * N / tau_n
        dphi = 0.5 * alpha * (Gamma * g * (N - N0) - 1.0 / tau_p)
        floored = False
        if s_inj > 0.0:
            s_eff = S
            if s_eff <= S_FLOOR:
                s_eff = S_FLOOR
                floored = True
            t = (k0 + k) * dt
            angle = phi - phi_inj - delta_omega * t
            dS += 2.0 * kappa * np.sqrt(s_inj * S) * np.cos(angle)
            dphi += -kappa * np.sqrt(s_inj / s_eff) * np.sin(angle)
        if noise_on:
            s_eff = S
            if s_eff <= S_FLOOR:
                s_eff = S_FLOOR
                floored = True
            f_s = np.sqrt(2.0 * Gamma * beta * N * S / (tau_n * dt)) * draws[k, 0]
            f_phi = np.sqrt(Gamma * beta * N / (2.0 * tau_n * s_eff * dt)) * draws[k, 1]
            f_z = np.sqrt(2.0 * N / (V * tau_n * dt)) * draws[k, 2]
            dN += f_z - f_s / Gamma
            dS += f_s
            dphi += f_phi
        if floored:
            floors += 1
        N = N + dt * dN
        S = S + dt * dS
        phi = phi + dt * dphi
        if S < 0.0:
            S = 0.0
            clamps += 1
        if N < 0.0:
            N = 0.0
        out_N[k] = N
        out_S[k] = S
        out_phi[k] = phi
    return N, S, phi, clamps, floors


@njit(cache=True)
def _chunk_free(
    N, S, phi, current, draws, dt, noise_on,
    tau_n, tau_p, g, eps, N0, beta, alpha, V, Gamma, q,
    out_N, out_S, out_phi,
):
    """Free-running reference integrator, coded independently of _chunk_oil."""
    clamps = 0
    floors = 0
    n = current.shape[0]
    for k in range(n):
        cur = current[k]
        gain = g * (N - N0) / (1.0 + eps * S)
        dN = cur / (q * V) - N / tau_n - gain * S
        dS = Gamma * gain * S - S / tau_p + Gamma * beta * N / tau_n
        dphi = 0.5 * alpha * (Gamma * g * (N - N0) - 1.0 / tau_p)
        if noise_on:
            s_eff = S
            if s_eff <= S_FLOOR:
                s_eff = S_FLOOR
                floors += 1
            f_s = np.sqrt(2.0 * Gamma * beta * N * S / (tau_n * dt)) * draws[k, 0]
            f_phi = np.sqrt(Gamma * beta * N / (2.0 * tau_n * s_eff * dt)) * draws[k, 1]
            f_z = np.sqrt(2.0 * N / (V * tau_n * dt)) * draws[k, 2]
            dN += f_z - f_s / Gamma
            dS += f_s
            dphi += f_phi
        N = N + dt * dN
        S = S + dt * dS
        phi = phi + dt * dphi
        if S < 0.0:
            S = 0.0
            clamps += 1
        if N < 0.0:
            N = 0.0
        out_N[k] = N
        out_S[k] = S
        out_phi[k] = phi
    return N, S, phi, clamps, floors


@dataclass
class Trace:
    """A stored trajectory with uniform step dt starting at t0.

    Arrays N, S, phi include the initial state at index 0 and one entry per
    integration step after it. power is derived from S through the output
    power map exactly (elementwise multiplication by power_coefficient).
    """

    dt: float
    seed: int
    N: np.ndarray
    S: np.ndarray
    phi: np.ndarray
    power_coef: float
    clamp_events: int = 0
    floor_events: int = 0
    t0: float = 0.0
    power: np.ndarray = field(init=False)

    def __post_init__(self):
        self.power = self.power_coef * self.S

    def __len__(self) -> int:
        return len(self.S)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.S))

    def state_at(self, i: int) -> LaserState:
        return LaserState(N=float(self.N[i]), S=float(self.S[i]), phi=float(self.phi[i]), t=float(self.t0 + i * self.dt))


def initial_state(params: LaserParams, wave: DriveWaveform) -> LaserState:
    """Below-threshold quasi-steady state at the off-time current."""
    n0 = wave.i_off * params.tau_n / (params.q * params.V)
    s0 = params.Gamma * params.beta * n0 * params.tau_p / params.tau_n
    return LaserState(N=n0, S=s0, phi=0.0, t=0.0)


def _check_dt(params: LaserParams, dt: float) -> None:
    if dt > params.tau_p / 10.0:
        raise ConfigError(f"dt = {dt!r} exceeds the stability guard tau_p/10 = {params.tau_p / 10.0!r}")


def _check_finite_chunk(out_N, out_S, out_phi, k0, wave, dt, seed):
    if np.isfinite(out_N).all() and np.isfinite(out_S).all() and np.isfinite(out_phi).all():
        return
    bad = np.flatnonzero(~(np.isfinite(out_N) & np.isfinite(out_S) & np.isfinite(out_phi)))[0]
    step = k0 + int(bad)
    state = (float(out_N[bad]), float(out_S[bad]), float(out_phi[bad]))
    raise NumericalError(
        f"non-finite state at step {step} (t = {step * dt:.3e} s): (N, S, phi) = {state}; "
        f"inputs: i_on = {wave.i_on}, i_off = {wave.i_off}, dt = {dt}, seed = {seed}",
        step=step,
        state=state,
    )


def iter_pulse_windows(
    params: LaserParams,
    wave: DriveWaveform,
    inj: InjectionSignal | None = None,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    noise_on: bool = True,
):
    """Integrate pulse by pulse, yielding per-period windows.

    Yields (pulse_index, S_window, phi_window) where the windows hold
    n_per + 1 samples: the state at the period's starting edge plus one per
    step. Successive windows share their boundary sample, so per-pulse
    trapezoidal energies add up to the exact whole-trace integral. Yielded
    arrays are freshly allocated views the consumer may keep.

    The final counts are available on the generator's return value via
    StopIteration, but most callers use the wrappers below.
    """
    if inj is None:
        inj = InjectionSignal(p_inj=0.0)
    _check_dt(params, dt)
    n_per = samples_per_period(wave.period, dt)
    current = synthesize_current_period(wave, dt)
    s_inj = inj.photon_density(params)
    phases = inj.resolve_phases(wave.n_pulses)
    pt = _param_tuple(params)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = initial_state(params, wave)
    N, S, phi = state.N, state.S, state.phi
    out_N = np.empty(n_per)
    out_S = np.empty(n_per)
    out_phi = np.empty(n_per)
    empty_draws = np.zeros((1, 3))
    clamps_total = 0
    floors_total = 0
    prev_S, prev_phi = state.S, state.phi
    for p in range(wave.n_pulses):
        draws = rng.standard_normal((n_per, 3)) if noise_on else empty_draws
        N, S, phi, clamps, floors = _chunk_oil(
            N, S, phi, p * n_per, current, draws, dt, noise_on,
            s_inj, phases[p], inj.delta_omega, *pt,
            out_N, out_S, out_phi,
        )
        _check_finite_chunk(out_N, out_S, out_phi, p * n_per, wave, dt, seed)
        clamps_total += clamps
        floors_total += floors
        s_win = np.concatenate(([prev_S], out_S))
        phi_win = np.concatenate(([prev_phi], out_phi))
        prev_S = out_S[-1]
        prev_phi = out_phi[-1]
        yield p, s_win, phi_win
    if floors_total:
        logger.info("S floor regularization applied %d times (seed %d)", floors_total, seed)
    return clamps_total, floors_total


def integrate(
    params: LaserParams,
    wave: DriveWaveform,
    inj: InjectionSignal | None = None,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    noise_on: bool = True,
) -> Trace:
    """Integrate the (possibly seeded) laser over n_pulses drive periods.

    Equal (params, wave, inj, dt, seed) give a bit-identical Trace. Aborts
    with NumericalError if the state goes non-finite.
    """
    if inj is None:
        inj = InjectionSignal(p_inj=0.0)
    _check_dt(params, dt)
    n_per = samples_per_period(wave.period, dt)
    n = n_per * wave.n_pulses
    current = synthesize_current_period(wave, dt)
    s_inj = inj.photon_density(params)
    phases = inj.resolve_phases(wave.n_pulses)
    pt = _param_tuple(params)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = initial_state(params, wave)
    all_N = np.empty(n + 1)
    all_S = np.empty(n + 1)
    all_phi = np.empty(n + 1)
    all_N[0], all_S[0], all_phi[0] = state.N, state.S, state.phi
    N, S, phi = state.N, state.S, state.phi
    empty_draws = np.zeros((1, 3))
    clamps_total = 0
    floors_total = 0
    for p in range(wave.n_pulses):
        k0 = p * n_per
        draws = rng.standard_normal((n_per, 3)) if noise_on else empty_draws
        N, S, phi, clamps, floors = _chunk_oil(
            N, S, phi, k0, current, draws, dt, noise_on,
            s_inj, phases[p], inj.delta_omega, *pt,
            all_N[k0 + 1 : k0 + 1 + n_per], all_S[k0 + 1 : k0 + 1 + n_per], all_phi[k0 + 1 : k0 + 1 + n_per],
        )
        _check_finite_chunk(all_N[k0 + 1 : k0 + 1 + n_per], all_S[k0 + 1 : k0 + 1 + n_per],
                            all_phi[k0 + 1 : k0 + 1 + n_per], k0, wave, dt, seed)
        clamps_total += clamps
        floors_total += floors
    if floors_total:
        logger.info("S floor regularization applied %d times (seed %d)", floors_total, seed)
    return Trace(
        dt=dt, seed=seed, N=all_N, S=all_S, phi=all_phi,
        power_coef=params.power_coefficient,
        clamp_events=clamps_total, floor_events=floors_total,
    )


def integrate_free_running(
    params: LaserParams,
    wave: DriveWaveform,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    noise_on: bool = True,
) -> Trace:
    """Reference free-running integrator (independent code path).

    With any injection disabled, `integrate` must reproduce this output
    bit for bit for equal seeds.
    """
    _check_dt(params, dt)
    n_per = samples_per_period(wave.period, dt)
    n = n_per * wave.n_pulses
    current = synthesize_current_period(wave, dt)
    p_ = params
    pt_free = (p_.tau_n, p_.tau_p, p_.g, p_.epsilon, p_.N0, p_.beta, p_.alpha, p_.V, p_.Gamma, p_.q)
    rng = np.random.Generator(np.random.PCG64(seed))
    state = initial_state(params, wave)
    all_N = np.empty(n + 1)
    all_S = np.empty(n + 1)
    all_phi = np.empty(n + 1)
    all_N[0], all_S[0], all_phi[0] = state.N, state.S, state.phi
    N, S, phi = state.N, state.S, state.phi
    empty_draws = np.zeros((1, 3))
    clamps_total = 0
    floors_total = 0
    for p in range(wave.n_pulses):
        k0 = p * n_per
        draws = rng.standard_normal((n_per, 3)) if noise_on else empty_draws
        N, S, phi, clamps, floors = _chunk_free(
            N, S, phi, current, draws, dt, noise_on, *pt_free,
            all_N[k0 + 1 : k0 + 1 + n_per], all_S[k0 + 1 : k0 + 1 + n_per], all_phi[k0 + 1 : k0 + 1 + n_per],
        )
        _check_finite_chunk(all_N[k0 + 1 : k0 + 1 + n_per], all_S[k0 + 1 : k0 + 1 + n_per],
                            all_phi[k0 + 1 : k0 + 1 + n_per], k0, wave, dt, seed)
        clamps_total += clamps
        floors_total += floors
    return Trace(
        dt=dt, seed=seed, N=all_N, S=all_S, phi=all_phi,
        power_coef=params.power_coefficient,
        clamp_events=clamps_total, floor_events=floors_total,
    )


# ---------------------------------------------------------------------------
# Trace persistence: CSV and a compact binary form. Both round-trip
# losslessly at the stored (float64) precision.

def _fmt(x) -> str:
    """Shortest lossless decimal form of a float (plain Python repr)."""
    return repr(float(x))


_BIN_MAGIC = b"GSLT"
_BIN_VERSION = 1
_BIN_HEADER = struct.Struct("<4sIdQQddQQI")  # magic, version, dt, n, seed, t0, power_coef, clamps, floors, meta_len


def trace_to_csv(path, trace: Trace, current: np.ndarray | None = None, meta: dict | None = None) -> None:
    """Write columns (t_s, I_A, N_cm3, S_cm3, phi_rad, P_W), one row per sample.

    `current` supplies the I_A column (periodic extension by one sample at
    the end); zeros if omitted. Leading '# key=value' comment lines carry
    provenance metadata.
    """
    n = len(trace)
    if current is None:
        cur = np.zeros(n)
    else:
        cur = np.concatenate([current, current[:1]]) if len(current) == n - 1 else np.asarray(current)
        if len(cur) != n:
            raise ValueError(f"current has {len(cur)} samples, trace has {n}")
    t = trace.t
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# dt={_fmt(trace.dt)} seed={trace.seed} t0={_fmt(trace.t0)} power_coef={_fmt(trace.power_coef)}")
        fh.write(f" clamp_events={trace.clamp_events} floor_events={trace.floor_events}\n")
        fh.write("t_s,I_A,N_cm3,S_cm3,phi_rad,P_W\n")
        for i in range(n):
            fh.write(f"{_fmt(t[i])},{_fmt(cur[i])},{_fmt(trace.N[i])},{_fmt(trace.S[i])},{_fmt(trace.phi[i])},{_fmt(trace.power[i])}\n")


def trace_from_csv(path) -> tuple[Trace, np.ndarray]:
    """Read a trace CSV written by trace_to_csv; returns (trace, current)."""
    header = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, value = token.partition("=")
                        header[key] = value
                continue
            if line.startswith("t_s,"):
                continue
            rows.append(line.split(","))
    required = ("dt", "seed", "power_coef")
    if any(k not in header for k in required):
        raise TraceFormatError(f"missing header fields in {path}: need {required}")
    data = np.array(rows, dtype=float)
    if data.shape[1] != 6:
        raise TraceFormatError(f"expected 6 columns, got {data.shape[1]}")
    trace = Trace(
        dt=float(header["dt"]), seed=int(header["seed"]),
        N=data[:, 2].copy(), S=data[:, 3].copy(), phi=data[:, 4].copy(),
        power_coef=float(header["power_coef"]),
        clamp_events=int(header.get("clamp_events", 0)),
        floor_events=int(header.get("floor_events", 0)),
        t0=float(header.get("t0", 0.0)),
    )
    return trace, data[:, 1].copy()


def trace_to_binary(path, trace: Trace, current: np.ndarray | None = None, meta: dict | None = None) -> None:
    """Compact binary trace: fixed header, JSON metadata blob, then float64
    arrays I, N, S, phi."""
    n = len(trace)
    cur = np.zeros(n) if current is None else np.resize(np.asarray(current, dtype=float), n)
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    header = _BIN_HEADER.pack(
        _BIN_MAGIC, _BIN_VERSION, trace.dt, n, trace.seed, trace.t0,
        trace.power_coef, trace.clamp_events, trace.floor_events, len(blob),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blob)
        fh.write(cur.astype("<f8").tobytes())
        fh.write(trace.N.astype("<f8").tobytes())
        fh.write(trace.S.astype("<f8").tobytes())
        fh.write(trace.phi.astype("<f8").tobytes())


def trace_from_binary(path) -> tuple[Trace, np.ndarray, dict]:
    """Read a binary trace; returns (trace, current, metadata)."""
    with open(path, "rb") as fh:
        raw = fh.read(_BIN_HEADER.size)
        if len(raw) < _BIN_HEADER.size:
            raise TraceFormatError(f"{path}: truncated header")
        magic, version, dt, n, seed, t0, coef, clamps, floors, meta_len = _BIN_HEADER.unpack(raw)
        if magic != _BIN_MAGIC:
            raise TraceFormatError(f"{path}: bad magic {magic!r}")
        if version != _BIN_VERSION:
            raise TraceFormatError(f"{path}: unsupported version {version}")
        meta = json.loads(fh.read(meta_len).decode("utf-8")) if meta_len else {}
        body = np.frombuffer(fh.read(4 * n * 8), dtype="<f8")
        if len(body) != 4 * n:
            raise TraceFormatError(f"{path}: truncated body")
    cur, N, S, phi = (body[i * n : (i + 1) * n].copy() for i in range(4))
    trace = Trace(dt=dt, seed=seed, N=N, S=S, phi=phi, power_coef=coef,
                  clamp_events=clamps, floor_events=floors, t0=t0)
    return trace, cur, meta
