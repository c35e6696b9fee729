"""Simulation and analysis toolkit for optical seeding of gain-switched
semiconductor lasers in QKD transmitters.

The package integrates the injection-locked laser rate equations with
spontaneous-emission noise, extracts per-pulse observables, models
asymmetric-interferometer phase monitoring, and orchestrates the standard
experiments: correlation versus injected power, pulse energy versus
injected power, drive-current sweeps and optical-isolation budgets.
"""

__version__ = "0.1.0"

from .params import (  # noqa: F401
    DriveWaveform,
    InjectionSignal,
    LaserParams,
    auto_duty_cycle,
    photon_density_to_power,
    power_to_photon_density,
    synthesize_current,
    threshold_current,
)
from .dynamics import (  # noqa: F401
    LaserState,
    Trace,
    integrate,
    integrate_free_running,
)
from .experiments import isolation_budget, phase_randomized_lsa_scenario  # noqa: F401
from .interferometry import (  # noqa: F401
    CorrelationReport,
    InterferometerModel,
    correlation_vs_power_curve,
    cross_correlation_vs_lag,
    envelope_protocol,
    lsa_correlation_trial,
    mzi_output,
)
