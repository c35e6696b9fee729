"""Run configuration: JSON schema, SI quantity parsing and provenance digests.

A run config is a single JSON document with explicit units in every key
name. Unknown keys are rejected everywhere so typos fail loudly instead of
silently running defaults. The canonical serialized form of the resolved
config hashes to a stable digest that is embedded in every output file,
which together with the recorded seed makes any run reproducible
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .params import DriveWaveform, InjectionSignal, LaserParams, laser_params_from_dict

_SI_PREFIXES = {
    "f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6,
    "m": 1e-3, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
}
_SI_UNITS = ("Hz", "W", "A", "s", "J")
_SI_RE = re.compile(
    r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([fpnuµmkMGT]?)(Hz|W|A|s|J)?\s*$"
)


def parse_si(text: str | float, expect_unit: str | None = None) -> float:
    """Parse a human-readable SI quantity like '1nW', '100fs' or '55kW'.

    Bare numbers pass through. When expect_unit is given, an explicit unit
    letter must match it (a missing unit is accepted).
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    if not isinstance(text, str):
        raise ConfigError(f"cannot parse quantity from {text!r}")
    m = _SI_RE.match(text)
    if not m:
        raise ConfigError(f"malformed quantity {text!r} (expected e.g. '1nW', '100fs', '24mA')")
    number, prefix, unit = m.groups()
    if expect_unit and unit and unit != expect_unit:
        raise ConfigError(f"quantity {text!r} has unit {unit}, expected {expect_unit}")
    return float(number) * (_SI_PREFIXES[prefix] if prefix else 1.0)


@dataclass(frozen=True)
class Profile:
    """Scale preset for statistical experiments."""

    name: str
    n_pulses: int  # analyzed pulses per correlation trial
    n_trials: int  # envelope repetitions per power
    dt: float  # integration step for correlation runs (s)
    power_grid_w: tuple = (0.0, 0.1e-9, 1e-9, 10e-9, 100e-9)


PROFILES = {
    "ci": Profile(name="ci", n_pulses=2000, n_trials=20, dt=2e-13),
    "paper": Profile(name="paper", n_pulses=25000, n_trials=50, dt=1e-13),
}

_DRIVE_KEYS = {"i_on_ma", "i_off_ma", "period_ns", "on_fraction", "filter_bw_ghz", "n_pulses"}
_INJECTION_KEYS = {"p_inj_w", "phase_mode", "phi_inj_rad", "phase_seed", "delta_omega_rad_per_s"}
_TOP_KEYS = {
    "alice", "eve", "drive", "injection", "scenario",
    "dt_fs", "seed", "out_dir", "profile", "enforce_current_constraints",
    "jobs", "figures",
}


def _require_keys(doc: dict, allowed: set[str], where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(doc).__name__}")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}; "
                          f"allowed: {', '.join(sorted(allowed))}")


def _number(doc: dict, key: str, default, where: str, minimum=None):
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value!r}")
    return value


@dataclass
class RunConfig:
    """Validated, resolved run configuration."""

    alice: LaserParams
    eve: LaserParams | None
    drive: DriveWaveform
    on_fraction_auto: bool
    injection: InjectionSignal
    scenario: dict
    dt: float
    seed: int
    out_dir: str
    profile: Profile
    enforce_current_constraints: bool
    jobs: int
    figures: bool
    raw: dict = field(repr=False, default_factory=dict)

    def digest(self) -> str:
        return config_digest(self.raw)


def config_digest(doc: dict) -> str:
    """SHA-256 of the canonical JSON form of a config document."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _load_drive(doc: dict) -> tuple[DriveWaveform, bool]:
    _require_keys(doc, _DRIVE_KEYS, "drive")
    on_fraction = doc.get("on_fraction", "auto")
    auto = on_fraction == "auto"
    if auto:
        on_fraction = 0.5  # placeholder until the duty rule resolves it
    elif isinstance(on_fraction, bool) or not isinstance(on_fraction, (int, float)):
        raise ConfigError(f"drive.on_fraction must be a number or 'auto', got {on_fraction!r}")
    filter_bw_ghz = doc.get("filter_bw_ghz", 3.5)
    if filter_bw_ghz is None:
        filter_bw = math.inf
    else:
        filter_bw = _number({"filter_bw_ghz": filter_bw_ghz}, "filter_bw_ghz", 3.5, "drive", minimum=1e-12) * 1e9
    n_pulses = doc.get("n_pulses", 100)
    if isinstance(n_pulses, bool) or not isinstance(n_pulses, int):
        raise ConfigError(f"drive.n_pulses must be an integer, got {n_pulses!r}")
    wave = DriveWaveform(
        i_on=_number(doc, "i_on_ma", 150.0, "drive") * 1e-3,
        i_off=_number(doc, "i_off_ma", 2.0, "drive", minimum=0.0) * 1e-3,
        period=_number(doc, "period_ns", 1.0, "drive", minimum=1e-12) * 1e-9,
        on_fraction=float(on_fraction),
        filter_bw=filter_bw,
        n_pulses=n_pulses,
    )
    return wave, auto


def _load_injection(doc: dict) -> InjectionSignal:
    _require_keys(doc, _INJECTION_KEYS, "injection")
    phase_seed = doc.get("phase_seed")
    if phase_seed is not None and (isinstance(phase_seed, bool) or not isinstance(phase_seed, int)):
        raise ConfigError(f"injection.phase_seed must be an integer, got {phase_seed!r}")
    return InjectionSignal(
        p_inj=_number(doc, "p_inj_w", 0.0, "injection", minimum=0.0),
        phase_mode=doc.get("phase_mode", "constant"),
        phi_inj=_number(doc, "phi_inj_rad", 0.0, "injection"),
        phase_seed=phase_seed,
        delta_omega=_number(doc, "delta_omega_rad_per_s", 0.0, "injection"),
    )


def load_config_dict(doc: dict) -> RunConfig:
    """Validate a parsed JSON document and resolve it into domain objects."""
    # accept a manifest wrapper transparently so a run can be re-executed
    # straight from its manifest
    if "config" in doc and "config_sha256" in doc:
        doc = doc["config"]
    _require_keys(doc, _TOP_KEYS, "config")
    profile_name = doc.get("profile", "ci")
    if profile_name not in PROFILES:
        raise ConfigError(f"profile must be one of {sorted(PROFILES)}, got {profile_name!r}")
    try:
        alice = laser_params_from_dict(doc.get("alice", {}))
        eve = laser_params_from_dict(doc["eve"]) if "eve" in doc else None
    except ConfigError as exc:
        raise ConfigError(f"laser parameter block: {exc}") from exc
    wave, auto = _load_drive(doc.get("drive", {}))
    injection = _load_injection(doc.get("injection", {}))
    scenario = doc.get("scenario", {})
    if not isinstance(scenario, dict):
        raise ConfigError("scenario must be a JSON object")
    dt_fs = doc.get("dt_fs")
    if dt_fs is not None:
        dt = _number({"dt_fs": dt_fs}, "dt_fs", None, "config", minimum=1e-3) * 1e-15
    else:
        dt = 1e-13
    seed = doc.get("seed", 1)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    jobs = doc.get("jobs", 1)
    if isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1:
        raise ConfigError(f"jobs must be a positive integer, got {jobs!r}")
    for flag in ("enforce_current_constraints", "figures"):
        if flag in doc and not isinstance(doc[flag], bool):
            raise ConfigError(f"{flag} must be true or false")
    return RunConfig(
        alice=alice,
        eve=eve,
        drive=wave,
        on_fraction_auto=auto,
        injection=injection,
        scenario=scenario,
        dt=dt,
        seed=seed,
        out_dir=doc.get("out_dir", "runs"),
        profile=PROFILES[profile_name],
        enforce_current_constraints=doc.get("enforce_current_constraints", True),
        jobs=jobs,
        figures=doc.get("figures", True),
        raw=doc,
    )


def load_config(path) -> RunConfig:
    """Load and validate a config (or manifest) JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return load_config_dict(doc)
