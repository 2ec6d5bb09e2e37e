"""Static figure rendering for the report path (Agg backend, PNG files)."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_simulate(rows, path) -> None:
    """Diagnostics panels: energy + dissipation, axial momentum drift,
    minimum pair distance, wall margin."""
    t = np.array([r[0] for r in rows])
    e = np.array([r[1] for r in rows])
    diss = np.array([r[2] for r in rows])
    p_ax = np.array([r[3] for r in rows])
    dmin = np.array([r[4] for r in rows])
    wall = np.array([r[5] for r in rows])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    ax = axes[0, 0]
    ax.plot(t, e, label="E")
    ax.set_xlabel("t")
    ax.set_ylabel("total energy")
    ax2 = ax.twinx()
    ax2.plot(t, diss, color="tab:red", alpha=0.6, label="dE/dt")
    ax2.set_ylabel("dissipation rate")
    ax = axes[0, 1]
    ax.plot(t, p_ax - p_ax[0])
    ax.set_xlabel("t")
    ax.set_ylabel("axial momentum drift")
    ax = axes[1, 0]
    ax.plot(t, dmin)
    ax.set_xlabel("t")
    ax.set_ylabel("min pair distance")
    ax = axes[1, 1]
    finite = np.isfinite(wall)
    if finite.any():
        ax.plot(t[finite], wall[finite])
    ax.set_xlabel("t")
    ax.set_ylabel("wall margin")
    _finish(fig, path)


def render_bounds(series_by_n, path) -> None:
    """Windowed growth ratios and normalized top speed per ladder level."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for n, times, lemma, cor in series_by_n:
        ax1.plot(times, lemma, label=f"n={n}")
        ax2.plot(times, cor, label=f"n={n}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("windowed growth ratio")
    ax1.legend()
    ax2.set_xlabel("t")
    ax2.set_ylabel("V / sqrt(log(e+n))")
    ax2.legend()
    _finish(fig, path)


def render_convergence(pairs, path) -> None:
    """Discrepancy decay: u(t) per ladder pair and the final-time decay."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    floor = 1e-300
    finals = []
    for n_low, n_high, times, u in pairs:
        ax1.semilogy(times, np.maximum(u, floor), label=f"{n_low}->{n_high}")
        finals.append((n_high, max(u[-1], floor)))
    ax1.set_xlabel("t")
    ax1.set_ylabel("window discrepancy")
    ax1.legend()
    ns = [f[0] for f in finals]
    ax2.semilogy(ns, [f[1] for f in finals], marker="o")
    ax2.set_xlabel("upper level n")
    ax2.set_ylabel("final discrepancy")
    _finish(fig, path)


def render_flock(times, vdiam, spread, path) -> None:
    """Velocity diameter decay (log scale) and position spread."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    positive = np.array(vdiam) > 0
    if positive.any():
        ax1.semilogy(np.array(times)[positive], np.array(vdiam)[positive])
    ax1.set_xlabel("t")
    ax1.set_ylabel("velocity diameter")
    ax2.plot(times, spread)
    ax2.set_xlabel("t")
    ax2.set_ylabel("position spread")
    _finish(fig, path)
