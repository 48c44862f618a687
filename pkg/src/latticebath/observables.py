"""Raw bilinear expectation values and derived diagnostics.

The unraveling represents the reduced density matrix as an ensemble average
of |psi_plus><psi_minus| without normalization, so every observable is the
raw bilinear <psi_minus|O|psi_plus> averaged over realizations; physical
values are the real parts of those averages and the imaginary residuals
shrink with ensemble size. Nothing here is normalized by the overlap.

Position moments are taken in box-centered coordinates. Because the box is
periodic, raw second moments corrupt once a packet touches the boundary,
so the series also carries the circular first harmonics
<e^{i 2 pi x / L}>; for a Gaussian density of variance V_x,
|<e^{i kappa x}>| = e^{-kappa^2 V_x / 2}, giving the translation-invariant
estimate V_x = -2 ln|z| / kappa^2 (capped at the uniform-density value
L^2/12). The spread diagnostic xi can use either route.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid2D
from .materials import fs_to_internal


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableSeries:
    """Time series of ensemble-averaged raw bilinears (complex)."""

    t_fs: np.ndarray
    px: np.ndarray
    x: np.ndarray
    y: np.ndarray
    r2: np.ndarray
    overlap: np.ndarray
    char_x: np.ndarray
    char_y: np.ndarray
    box_length: float
    n_realizations: int = 1
    n_divergent: int = 0
    stderr_px: np.ndarray | None = None
    g_expect: np.ndarray | None = None   # (n_records, n_modes, 2), feedback runs

    @property
    def n_records(self) -> int:
        return self.t_fs.size

    @property
    def max_imag_residual(self) -> float:
        """Largest imaginary part across reported bilinears (convergence tell)."""
        return float(max(np.abs(a.imag).max()
                         for a in (self.px, self.x, self.y, self.r2)))


def bilinear_expect(psi_minus: np.ndarray, psi_plus: np.ndarray, grid: Grid2D,
                    operator) -> complex:
    """<psi_minus|O|psi_plus> on the grid, no normalization.

    operator: one of the strings 'overlap', 'x', 'y', 'r2', 'char_x',
    'char_y' (position multipliers), 'px', 'py' (spectral momentum), a
    position-space multiplier array, or ('fourier', multiplier_array) for a
    custom reciprocal-space multiplier.
    """
    if isinstance(operator, str):
        xc = grid.x_centered
        kappa = 2.0 * math.pi / grid.length
        if operator == "overlap":
            acted = psi_plus
        elif operator == "x":
            acted = psi_plus * xc[:, None]
        elif operator == "y":
            acted = psi_plus * xc[None, :]
        elif operator == "r2":
            acted = psi_plus * (xc[:, None] ** 2 + xc[None, :] ** 2)
        elif operator == "char_x":
            acted = psi_plus * np.exp(1j * kappa * grid.x)[:, None]
        elif operator == "char_y":
            acted = psi_plus * np.exp(1j * kappa * grid.x)[None, :]
        elif operator == "px":
            acted = np.fft.ifft2(grid.k[:, None] * np.fft.fft2(psi_plus))
        elif operator == "py":
            acted = np.fft.ifft2(grid.k[None, :] * np.fft.fft2(psi_plus))
        else:
            raise ObservableError(f"unknown operator {operator!r}")
    elif isinstance(operator, tuple) and len(operator) == 2 and operator[0] == "fourier":
        acted = np.fft.ifft2(np.asarray(operator[1]) * np.fft.fft2(psi_plus))
    else:
        acted = psi_plus * np.asarray(operator)
    return complex(grid.cell_area * np.sum(np.conj(psi_minus) * acted))


def spectral_momentum(psi: np.ndarray, grid: Grid2D, axis: int = 0) -> np.ndarray:
    """Apply the momentum operator along one axis via the FFT."""
    mult = grid.k[:, None] if axis == 0 else grid.k[None, :]
    return np.fft.ifft2(mult * np.fft.fft2(psi))


@dataclass(frozen=True)
class RelaxationFit:
    tau_fs: float
    r_squared: float
    window: tuple[int, int]      # [start, stop) record indices used
    n_points: int
    ok: bool
    reason: str
    method: str = "log-linear-lsq"


def _fit_failure(reason: str, window=(0, 0), r2=0.0) -> RelaxationFit:
    return RelaxationFit(tau_fs=math.inf, r_squared=r2, window=window,
                         n_points=window[1] - window[0], ok=False, reason=reason)


def fit_relaxation(t_fs: np.ndarray, px_re: np.ndarray,
                   window: tuple[float, float] | None = None) -> RelaxationFit:
    """Exponential decay time of Re<p_x> by least squares on the log.

    The default window runs from t = 0 until the signal first reaches 0.2 of
    its initial value or would go nonpositive, whichever comes first. A
    degenerate window returns a failure result instead of raising; a
    nondecaying signal returns the tau = inf sentinel.
    """
    t = np.asarray(t_fs, dtype=float)
    p = np.asarray(px_re, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ObservableError("t_fs and px_re must be matching 1-D arrays")
    if t.size == 0 or not np.all(np.isfinite(t)):
        return _fit_failure("empty or non-finite time axis")

    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        idx = np.nonzero(sel)[0]
        if idx.size == 0:
            return _fit_failure("window selects no samples")
        start, stop = int(idx[0]), int(idx[-1]) + 1
    else:
        start = 0
        stop = t.size
    if not np.all(np.isfinite(p[start:stop])):
        return _fit_failure("non-finite momentum samples", (start, stop))
    if p[start] <= 0.0:
        return _fit_failure("initial momentum not positive", (start, stop))

    if window is None:
        floor = 0.2 * p[start]
        stop_decay = stop
        for i in range(start, stop):
            if p[i] <= 0.0:
                stop_decay = i          # exclude the nonpositive sample
                break
            if p[i] <= floor:
                stop_decay = i + 1      # include the crossing sample
                break
        stop = stop_decay

    n = stop - start
    if n < 10:
        return _fit_failure(f"only {n} usable points (need 10)", (start, stop))
    tt, pp = t[start:stop], p[start:stop]
    if np.any(pp <= 0.0):
        return _fit_failure("nonpositive samples inside explicit window", (start, stop))

    logp = np.log(pp)
    slope, intercept = np.polyfit(tt, logp, 1)
    fitted = slope * tt + intercept
    ss_res = float(np.sum((logp - fitted) ** 2))
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0.0:
        return _fit_failure("nonnegative decay slope", (start, stop), r2)
    return RelaxationFit(tau_fs=-1.0 / slope, r_squared=r2, window=(start, stop),
                         n_points=n, ok=True, reason="")


@dataclass(frozen=True)
class SpreadResult:
    xi_nm: float
    n_clamped: int
    method: str
    window_fs: float
    t_used_fs: float


def variance_from_harmonic(char: np.ndarray, box_length: float) -> np.ndarray:
    """Wrap-safe per-axis variance from <e^{i 2 pi x / L}> values.

    Exact for Gaussian densities; saturates at the uniform limit L^2/12 when
    the harmonic is consistent with zero.
    """
    kappa = 2.0 * math.pi / box_length
    cap = box_length**2 / 12.0
    mag = np.abs(np.asarray(char))
    floor = math.exp(-0.5 * kappa**2 * cap)
    out = np.full(mag.shape, cap)
    live = mag > floor
    out[live] = -2.0 * np.log(mag[live]) / kappa**2
    return out


def spread_xi(series: ObservableSeries, window_fs: float = 40.0,
              method: str = "raw") -> SpreadResult:
    """Time-averaged spatial spread xi over [0, window_fs].

    xi^2 = (1/T) integral of [<x^2 + y^2> - <x>^2 - <y>^2] dt by trapezoid
    on the ensemble-averaged real parts. method 'raw' uses box-centered
    moments; 'wrapsafe' uses the circular-harmonic variance, which stays
    meaningful after the packet crosses the boundary. Negative instantaneous
    variances (statistical noise) are clamped to zero and counted.
    """
    if method not in ("raw", "wrapsafe"):
        raise ObservableError(f"unknown spread method {method!r}")
    t = series.t_fs
    if t[-1] < window_fs * (1.0 - 1e-9):
        raise ObservableError(
            f"series ends at {t[-1]:.3f} fs, before the {window_fs} fs window")
    sel = t <= window_fs * (1.0 + 1e-9)
    tt = t[sel]

    if method == "raw":
        var = (series.r2.real - series.x.real**2 - series.y.real**2)[sel]
    else:
        var = (variance_from_harmonic(series.char_x, series.box_length)
               + variance_from_harmonic(series.char_y, series.box_length))[sel]
    n_clamped = int(np.sum(var < 0.0))
    var = np.clip(var, 0.0, None)
    t_used = float(tt[-1] - tt[0])
    if t_used <= 0.0:
        raise ObservableError("spread window shorter than one record interval")
    xi2 = np.trapezoid(var, tt) / t_used
    return SpreadResult(xi_nm=math.sqrt(max(xi2, 0.0)), n_clamped=n_clamped,
                        method=method, window_fs=window_fs, t_used_fs=t_used)


def free_packet_variance(t_fs: np.ndarray, sigma_nm: float, mass: float) -> np.ndarray:
    """Per-axis position variance of a free Gaussian packet (nm^2)."""
    t = fs_to_internal(np.asarray(t_fs, dtype=float))
    return sigma_nm**2 * (1.0 + (t / (2.0 * mass * sigma_nm**2)) ** 2)


def free_packet_xi(window_fs: float, sigma_nm: float, mass: float) -> float:
    """Closed-form xi of a free packet over [0, window_fs] (both axes)."""
    T = fs_to_internal(window_fs)
    return math.sqrt(2.0 * sigma_nm**2 * (1.0 + T**2 / (12.0 * mass**2 * sigma_nm**4)))
