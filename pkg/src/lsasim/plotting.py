"""Figure rendering for simulation reports.

All figures are written to files (Agg backend, no display) next to the
delimited output of the command that produced them. PNG metadata is
stripped so re-rendering the same data gives byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt

from .dynamics import Trace
from .experiments import STATUS_OK, PowerSweepResult, SweepGrid
from .interferometry import PowerCurve

def _save(fig, path, meta: dict | None = None):
    # drop the version-dependent Software chunk; keep provenance as text chunks
    metadata = {"Software": None}
    metadata.update({k: str(v) for k, v in (meta or {}).items()})
    fig.savefig(path, dpi=150, metadata=metadata)
    plt.close(fig)
    return path


def plot_trace(trace: Trace, path, current: np.ndarray | None = None, max_points: int = 200_000, meta: dict | None = None):
    """Power and phase versus time for a stored trace."""
    stride = max(1, len(trace) // max_points)
    t = trace.t[::stride] * 1e9
    fig, (ax_p, ax_phi) = plt.subplots(2, 1, sharex=True, figsize=(9, 6))
    ax_p.plot(t, trace.power[::stride] * 1e3, lw=0.8)
    ax_p.set_ylabel("Power (mW)")
    if current is not None:
        ax_i = ax_p.twinx()
        cur = np.resize(current, len(trace))[::stride]
        ax_i.plot(t, cur * 1e3, color="tab:gray", lw=0.6, alpha=0.6)
        ax_i.set_ylabel("Drive current (mA)", color="tab:gray")
    ax_phi.plot(t, trace.phi[::stride], lw=0.8, color="tab:orange")
    ax_phi.set_ylabel("Phase (rad)")
    ax_phi.set_xlabel("Time (ns)")
    fig.tight_layout()
    return _save(fig, path, meta)


def plot_power_sweep(result: PowerSweepResult, path, meta: dict | None = None):
    """Pulse shapes overlay plus energy and delay versus injected power."""
    fig, (ax_shape, ax_energy) = plt.subplots(2, 1, figsize=(8, 8))
    for row, (t, p) in zip(result.rows, result.pulse_shapes):
        label = "free running" if row.p_inj == 0 else f"{row.p_inj * 1e9:g} nW"
        ax_shape.plot(t * 1e12, p * 1e3, lw=1.0, label=label)
    ax_shape.set_xlabel("Time in pulse (ps)")
    ax_shape.set_ylabel("Power (mW)")
    ax_shape.legend(fontsize=8)
    p_inj = np.array([r.p_inj for r in result.rows])
    energy = np.array([r.energy for r in result.rows])
    delay = np.array([r.turn_on_delay for r in result.rows])
    positive = p_inj > 0
    ax_energy.plot(p_inj[positive] * 1e9, energy[positive] * 1e15, "o-", label="energy per pulse")
    if (~positive).any():
        ax_energy.axhline(energy[~positive][0] * 1e15, ls="--", color="tab:gray", label="no injection")
    ax_energy.set_xscale("log")
    ax_energy.set_xlabel("Injected power (nW)")
    ax_energy.set_ylabel("Energy per pulse (fJ)")
    ax_delay = ax_energy.twinx()
    ax_delay.plot(p_inj[positive] * 1e9, delay[positive] * 1e12, "s--", color="tab:red", label="turn-on delay")
    ax_delay.set_ylabel("Turn-on delay (ps)", color="tab:red")
    ax_energy.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    return _save(fig, path, meta)


def plot_heatmap(grid: SweepGrid, path, meta: dict | None = None):
    """Energy-increase heatmap over the drive-current grid."""
    fig, ax = plt.subplots(figsize=(7, 6))
    values = np.where(grid.status == STATUS_OK, grid.values.astype(float), np.nan)
    i_off_mA = grid.col_axis.values * 1e3
    i_on_mA = grid.row_axis.values * 1e3
    mesh = ax.pcolormesh(i_off_mA, i_on_mA, values, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="Energy per pulse increase (%)")
    bad_i, bad_j = np.where(grid.status != STATUS_OK)
    if len(bad_i):
        ax.plot(i_off_mA[bad_j], i_on_mA[bad_i], "x", color="tab:red", ms=6, label="flagged")
        ax.legend(fontsize=8)
    ax.set_xlabel("Off-time current (mA)")
    ax.set_ylabel("On-time current (mA)")
    fig.tight_layout()
    return _save(fig, path, meta)


def plot_correlation_curve(curve: PowerCurve, path, meta: dict | None = None):
    """Max/min correlation envelope versus injected power with baselines."""
    rows = curve.as_rows()
    p = np.array([r[0] for r in rows])
    rho_max = np.array([r[1] for r in rows])
    rho_min = np.array([r[2] for r in rows])
    base_max = rows[0][3]
    base_min = rows[0][4]
    fig, ax = plt.subplots(figsize=(8, 5))
    positive = p > 0
    ax.plot(p[positive] * 1e9, rho_max[positive], "o-", label="max correlation")
    ax.plot(p[positive] * 1e9, rho_min[positive], "s-", label="min correlation")
    ax.axhline(base_max, ls="--", color="k", lw=0.8, label="zero-injection baseline")
    ax.axhline(base_min, ls="--", color="k", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("Injected power (nW)")
    ax.set_ylabel("Pearson correlation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path, meta)


def plot_interferogram_diagnostics(u: np.ndarray, autocorr: np.ndarray, band: float, path, meta: dict | None = None):
    """Normalized output histogram against the arcsine law, plus the
    autocorrelation with its significance band."""
    fig, (ax_hist, ax_ac) = plt.subplots(2, 1, figsize=(8, 7))
    u = u[np.isfinite(u)]
    ax_hist.hist(u, bins=50, density=True, alpha=0.7, label="simulated")
    x = np.linspace(1e-4, 1 - 1e-4, 400)
    ax_hist.plot(x, 1.0 / (np.pi * np.sqrt(x * (1 - x))), "k--", lw=1.2, label="arcsine law")
    ax_hist.set_xlabel("Normalized interferometer output")
    ax_hist.set_ylabel("Density")
    ax_hist.set_ylim(0, 6)
    ax_hist.legend(fontsize=8)
    lags = np.arange(1, len(autocorr) + 1)
    ax_ac.stem(lags, autocorr, basefmt=" ", markerfmt=".")
    ax_ac.axhline(band, ls="--", color="tab:red", lw=0.8)
    ax_ac.axhline(-band, ls="--", color="tab:red", lw=0.8)
    ax_ac.set_xlabel("Lag (pulses)")
    ax_ac.set_ylabel("Autocorrelation")
    fig.tight_layout()
    return _save(fig, path, meta)
