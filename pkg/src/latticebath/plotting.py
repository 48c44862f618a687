"""Headless figure rendering for the command-line reports.

Forces the Agg backend before pyplot loads, so figures render identically
with or without a display. Each function writes one PNG next to the CSV it
illustrates and closes the figure; nothing here touches global state
beyond the backend selection.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 140


def _finite(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_relax_sweep(t_K: np.ndarray, curves: dict[str, np.ndarray],
                     ratios: dict[str, np.ndarray], t_debye_K: float,
                     path: str) -> None:
    """Rates vs temperature (left) and their ratios (right)."""
    fig, (ax_rate, ax_ratio) = plt.subplots(
        1, 2, figsize=(9.2, 3.8), constrained_layout=True)
    any_positive = False
    for label, values in curves.items():
        x, y = _finite(t_K, values)
        any_positive = any_positive or bool(np.any(y > 0))
        marker = "o" if label.startswith("sim") else "s"
        style = "-" if "full" in label or "st" in label else "--"
        ax_rate.plot(x, y, marker + style, ms=4, label=label)
    ax_rate.axvline(t_debye_K, color="0.6", lw=0.8, ls=":")
    ax_rate.set_xscale("log")
    if any_positive:
        ax_rate.set_yscale("log")
    ax_rate.set_xlabel("T [K]")
    ax_rate.set_ylabel(r"$1/\tau$ [fs$^{-1}$]")
    ax_rate.legend(fontsize=8)

    for label, values in ratios.items():
        x, y = _finite(t_K, values)
        ax_ratio.plot(x, y, "o-", ms=4, label=label)
    ax_ratio.axhline(1.0, color="0.6", lw=0.8, ls=":")
    ax_ratio.axvline(t_debye_K, color="0.6", lw=0.8, ls=":")
    ax_ratio.set_xscale("log")
    ax_ratio.set_xlabel("T [K]")
    ax_ratio.set_ylabel(r"$\tau_{\rm st}/\tau_{\rm mf}$")
    ax_ratio.legend(fontsize=8)
    _save(fig, path)


def plot_spread_sweep(per_material: dict[str, dict[str, np.ndarray]],
                      path: str) -> None:
    """One panel per material: stochastic and mean-field spread vs T."""
    n = len(per_material)
    fig, axes = plt.subplots(1, n, figsize=(4.6 * n, 3.8),
                             constrained_layout=True, squeeze=False)
    for ax, (name, data) in zip(axes[0], per_material.items()):
        ax.plot(*_finite(data["t_K"], data["xi_st"]), "o-", ms=4,
                label=r"$\xi_{\rm st}$")
        ax.plot(*_finite(data["t_K"], data["xi_mf"]), "s--", ms=4,
                label=r"$\xi_{\rm mf}$")
        ax.axvline(data["t_debye_K"], color="0.6", lw=0.8, ls=":")
        ax.set_xscale("log")
        ax.set_title(name)
        ax.set_xlabel("T [K]")
        ax.set_ylabel(r"$\xi$ [nm]")
        ax.legend(fontsize=8)
    _save(fig, path)


def plot_noise_report(report, path: str) -> None:
    """Per-check estimate with 3-sigma band against the analytic target."""
    checks = report.checks
    ncols = 2
    nrows = math.ceil(len(checks) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(8.8, 2.6 * nrows),
                             constrained_layout=True, squeeze=False)
    for ax, check in zip(axes.ravel(), checks):
        est, tgt = np.asarray(check.estimate), np.asarray(check.target)
        for part, color, style in (("real", "C0", "-"), ("imag", "C1", "--")):
            e, t = getattr(est, part), getattr(tgt, part)
            ax.fill_between(check.lags, e - 3 * check.stderr,
                            e + 3 * check.stderr, color=color,
                            alpha=0.3, lw=0,
                            label=rf"{part} est $\pm 3\sigma$")
            ax.plot(check.lags, t, color="k", ls=style, lw=1.0,
                    label=f"{part} target")
        ax.set_title(f"{check.label}   max|z| = {check.max_z:.2f}",
                     fontsize=9)
        ax.set_xlabel("lag [steps]")
    for ax in axes.ravel()[len(checks):]:
        ax.set_visible(False)
    axes[0, 0].legend(fontsize=8)
    _save(fig, path)


def plot_pt_sweep(t_K: np.ndarray, full: np.ndarray, mf: np.ndarray,
                  ratio: np.ndarray, t_debye_K: float, path: str) -> None:
    fig, (ax_rate, ax_ratio) = plt.subplots(
        1, 2, figsize=(9.2, 3.8), constrained_layout=True)
    ax_rate.loglog(t_K, full, "o-", ms=4, label="full")
    ax_rate.loglog(t_K, mf, "s--", ms=4, label="mean-field")
    ax_rate.axvline(t_debye_K, color="0.6", lw=0.8, ls=":")
    ax_rate.set_xlabel("T [K]")
    ax_rate.set_ylabel(r"$1/\tau$ [fs$^{-1}$]")
    ax_rate.legend(fontsize=8)
    ax_ratio.semilogx(t_K, ratio, "o-", ms=4)
    ax_ratio.axhline(1.0, color="0.6", lw=0.8, ls=":")
    ax_ratio.axvline(t_debye_K, color="0.6", lw=0.8, ls=":")
    ax_ratio.set_xlabel("T [K]")
    ax_ratio.set_ylabel(r"$\tau_{\rm full}/\tau_{\rm mf}$")
    _save(fig, path)


def plot_defpot(rms_draws: np.ndarray, analytic_rms: float,
                t_grid_K: np.ndarray, dv2: np.ndarray, exponent: float,
                path: str) -> None:
    """Draw-level RMS histogram plus the low-T scaling of the variance."""
    fig, (ax_hist, ax_scale) = plt.subplots(
        1, 2, figsize=(9.2, 3.8), constrained_layout=True)
    ax_hist.hist(rms_draws, bins=max(10, rms_draws.size // 10),
                 color="C0", alpha=0.8)
    ax_hist.axvline(analytic_rms, color="k", lw=1.2, label="quadrature")
    ax_hist.set_xlabel("grid RMS [eV]")
    ax_hist.set_ylabel("draws")
    ax_hist.legend(fontsize=8)
    keep = dv2 > 0
    ax_scale.loglog(t_grid_K[keep], dv2[keep], "o-", ms=4)
    ax_scale.set_xlabel("T [K]")
    ax_scale.set_ylabel(r"$\Delta V^2$ [eV$^2$]")
    ax_scale.set_title(f"low-T exponent {exponent:.3f}", fontsize=9)
    _save(fig, path)
