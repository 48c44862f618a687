"""Discrete acoustic modes of the periodic box and their thermal state.

The box supports wavevectors q = (2 pi / L)(nx, ny). Each retained mode
(0 < |q| <= q_cut) is a harmonic oscillator of energy omega_q = hbar v_s |q|
described by quadratures X_q = (x_q, p_q). The electron feels

    V(r) = sum_q g_q(r) . X_q,
    g_q(r) = g_amp(q) * (cos(q.r + pi), sin(q.r)),
    g_amp(q) = E_d |q| / sqrt(rho2d A omega_q),

with A = L^2. Pairing +q with -q makes V real; its Fourier coefficients are
c_k = -(g_k/2)(zeta_k + conj(zeta_{-k})) with zeta = x + i p, so a frame
with ~10^3 modes assembles in one inverse FFT. A direct real-space sum over
modes is kept as an independent route for cross-checks.

Free bath evolution rotates zeta_q(t) = zeta_q(0) e^{-i omega_q t}. The
optional self-consistent variant instead integrates
dX/dt = J (omega X + <g>/2), J = ((0,-1),(1,0)), one exact rotation plus a
midpoint kick per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Grid2D, GridError
from .materials import Material, MaterialError, derive_parameters, kelvin_to_ev

THERMAL_SCHEMES = ("random-phase", "full-gaussian")


class ModeSetError(ValueError):
    """Invalid mode enumeration parameters."""


@dataclass(frozen=True)
class ModeSet:
    """Deterministically ordered acoustic modes of one box."""

    material: Material
    box_length: float        # nm
    q_cut: float             # nm^-1
    index_xy: np.ndarray     # (n_modes, 2) int, wave indices (nx, ny)
    qvec: np.ndarray         # (n_modes, 2) wavevectors, nm^-1
    omega: np.ndarray        # (n_modes,) mode energies, eV
    g_amp: np.ndarray        # (n_modes,) coupling amplitudes, eV
    neg_index: np.ndarray    # (n_modes,) row of the -q partner

    @property
    def n_modes(self) -> int:
        return self.omega.size

    @cached_property
    def coupling_square_sum(self) -> float:
        """sum_q g_amp^2, the T-independent field-variance scale."""
        return float(np.sum(self.g_amp**2))

    def thermal_occupation(self, temperature_K: float) -> np.ndarray:
        """Bose occupation of each mode; zeros at T = 0."""
        if temperature_K < 0.0:
            raise MaterialError("temperature must be nonnegative")
        if temperature_K == 0.0:
            return np.zeros(self.n_modes)
        x = self.omega / kelvin_to_ev(temperature_K)
        return 1.0 / np.expm1(np.clip(x, 1e-300, 700.0))

    def mean_square_potential(self, temperature_K: float) -> float:
        """Exact ensemble mean of V(r)^2 at any fixed point: sum_q g^2 nbar."""
        return float(np.sum(self.g_amp**2 * self.thermal_occupation(temperature_K)))


def enumerate_modes(material: Material, box_length: float,
                    q_cut: float | None = None) -> ModeSet:
    """All modes with 0 < |q| <= q_cut, sorted by (|q|^2, nx, ny).

    q_cut defaults to the material's Debye wavevector. The q = 0 slot is a
    force-free global offset and is excluded.
    """
    if not box_length > 0.0:
        raise ModeSetError(f"box_length must be positive, got {box_length}")
    d = derive_parameters(material)
    if q_cut is None:
        q_cut = d.q_debye
    if not 0.0 < q_cut <= d.q_debye * (1.0 + 1e-12):
        raise ModeSetError(f"q_cut must lie in (0, q_debye], got {q_cut}")

    dq = 2.0 * math.pi / box_length
    nmax = int(math.floor(q_cut / dq * (1.0 + 1e-12)))
    if nmax < 1:
        raise ModeSetError(
            f"box too small: no modes below q_cut={q_cut:.4g} with L={box_length:.4g}")

    cut2 = (q_cut / dq) ** 2 * (1.0 + 1e-12)
    rows = [(nx * nx + ny * ny, nx, ny)
            for nx in range(-nmax, nmax + 1)
            for ny in range(-nmax, nmax + 1)
            if 0 < nx * nx + ny * ny <= cut2]
    rows.sort()

    index_xy = np.array([(nx, ny) for _, nx, ny in rows], dtype=np.int64)
    qvec = index_xy * dq
    qabs = np.hypot(qvec[:, 0], qvec[:, 1])
    omega = d.hbar_v_s * qabs
    area = box_length * box_length
    g_amp = material.E_d_eV * qabs / np.sqrt(d.rho2d * area * omega)

    lookup = {(nx, ny): i for i, (_, nx, ny) in enumerate(rows)}
    neg_index = np.array([lookup[(-nx, -ny)] for _, nx, ny in rows], dtype=np.int64)

    return ModeSet(material=material, box_length=box_length, q_cut=float(q_cut),
                   index_xy=index_xy, qvec=qvec, omega=omega, g_amp=g_amp,
                   neg_index=neg_index)


def coupling_vector(modes: ModeSet, q_index: int, r: np.ndarray) -> np.ndarray:
    """g_q(r) for one mode at one position, shape (2,)."""
    phase = float(modes.qvec[q_index] @ np.asarray(r, dtype=float))
    g = modes.g_amp[q_index]
    return np.array([g * math.cos(phase + math.pi), g * math.sin(phase)])


@dataclass(frozen=True)
class ThermalAmplitudes:
    """Initial quadratures X_q(0) drawn from the thermal ensemble."""

    x0: np.ndarray           # (n_modes, 2)
    scheme: str
    temperature_K: float

    @property
    def zeta0(self) -> np.ndarray:
        """Complex amplitudes x + i p, shape (n_modes,)."""
        return self.x0[:, 0] + 1j * self.x0[:, 1]

    @property
    def occupation_estimate(self) -> np.ndarray:
        """|alpha_q|^2 = (x^2 + p^2)/2 per mode."""
        return 0.5 * np.sum(self.x0**2, axis=1)


def sample_thermal(modes: ModeSet, temperature_K: float, scheme: str,
                   rng: np.random.Generator) -> ThermalAmplitudes:
    """Draw initial mode quadratures.

    random-phase: fixed radius sqrt(2 nbar), uniform angle. full-gaussian:
    both quadratures independent N(0, nbar). Either gives <|alpha|^2> = nbar
    and an isotropic, zero-mean X distribution in phase-angle average.
    """
    if scheme not in THERMAL_SCHEMES:
        raise ModeSetError(f"unknown thermal scheme {scheme!r} (use {THERMAL_SCHEMES})")
    nbar = modes.thermal_occupation(temperature_K)
    if scheme == "random-phase":
        phi = rng.uniform(0.0, 2.0 * math.pi, modes.n_modes)
        radius = np.sqrt(2.0 * nbar)
        x0 = np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=1)
    else:
        x0 = rng.standard_normal((modes.n_modes, 2)) * np.sqrt(nbar)[:, None]
    return ThermalAmplitudes(x0=x0, scheme=scheme, temperature_K=temperature_K)


def fourier_coefficients(modes: ModeSet, zeta: np.ndarray) -> np.ndarray:
    """Per-mode Fourier coefficients c_q = -(g_q/2)(zeta_q + conj(zeta_{-q})).

    Valid for real quadratures packaged as zeta = x + i p. zeta may carry
    leading batch dimensions; the mode axis is last.
    """
    return -0.5 * modes.g_amp * (zeta + np.conj(zeta[..., modes.neg_index]))


def harmonic_coefficients(modes: ModeSet, w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    """Fourier coefficients of sum_q g_q(r) . w_q for complex quadratures.

    c_k = -(g_k/2) [ (w0 + i w1)_k + (w0 - i w1)_{-k} ]; reduces to
    fourier_coefficients when w is real. Mode axis is last.
    """
    zp = w0 + 1j * w1
    zm = w0 - 1j * w1
    return -0.5 * modes.g_amp * (zp + zm[..., modes.neg_index])


def grid_slots(modes: ModeSet, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """FFT slot indices (axis 0, axis 1) for every mode; checks resolvability."""
    half = grid.n // 2
    if np.any(np.abs(modes.index_xy) > half - 1):
        raise GridError(
            f"mode indices exceed the grid's resolvable range |n| <= {half - 1}; "
            f"increase n or reduce q_cut")
    return modes.index_xy[:, 0] % grid.n, modes.index_xy[:, 1] % grid.n


def field_from_coefficients(modes: ModeSet, grid: Grid2D,
                            coef: np.ndarray) -> np.ndarray:
    """Assemble sum_q c_q e^{i q.r} on the grid; batch dims lead."""
    sx, sy = grid_slots(modes, grid)
    shape = coef.shape[:-1] + (grid.n, grid.n)
    kbuf = np.zeros(shape, dtype=complex)
    kbuf[..., sx, sy] = coef
    return (grid.n * grid.n) * np.fft.ifft2(kbuf, axes=(-2, -1))


def deformation_field(modes: ModeSet, amps: ThermalAmplitudes, grid: Grid2D,
                      t: float) -> np.ndarray:
    """Thermal deformation potential V(r, t) on the grid (real, eV).

    Free evolution rotates each zeta by e^{-i omega t}; the +q/-q pairing
    makes the plane-wave sum real up to rounding.
    """
    zeta_t = amps.zeta0 * np.exp(-1j * modes.omega * t)
    field = field_from_coefficients(modes, grid, fourier_coefficients(modes, zeta_t))
    return field.real


def direct_field_sum(modes: ModeSet, amps: ThermalAmplitudes,
                     points: np.ndarray, t: float) -> np.ndarray:
    """Independent route: V at arbitrary points by explicit mode summation.

    O(n_points * n_modes); for cross-checks, not production stepping.
    """
    zeta_t = amps.zeta0 * np.exp(-1j * modes.omega * t)
    x_t, p_t = zeta_t.real, zeta_t.imag
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phase = pts @ modes.qvec.T                      # (n_points, n_modes)
    contrib = -np.cos(phase) * (modes.g_amp * x_t) + np.sin(phase) * (modes.g_amp * p_t)
    out = contrib.sum(axis=1)
    return out if np.asarray(points).ndim > 1 else float(out[0])


def ehrenfest_step(x: np.ndarray, omega: np.ndarray, g_expect: np.ndarray,
                   dt: float) -> np.ndarray:
    """One step of dX/dt = J(omega X + g/2): exact rotation, midpoint kick.

    x and g_expect have shape (..., 2); omega broadcasts over the leading
    dimensions. Exact for g = 0; second order in dt for constant g with
    fixed point X* = -g/(2 omega).
    """
    th = omega * dt
    c, s = np.cos(th), np.sin(th)
    ch, sh = np.cos(0.5 * th), np.sin(0.5 * th)
    x0, x1 = x[..., 0], x[..., 1]
    g0, g1 = g_expect[..., 0], g_expect[..., 1]
    # J g = (-g1, g0); drive = dt * R(th/2) J g / 2
    d0 = -ch * g1 - sh * g0
    d1 = -sh * g1 + ch * g0
    out = np.empty_like(np.broadcast_arrays(x, g_expect)[0])
    out[..., 0] = c * x0 - s * x1 + 0.5 * dt * d0
    out[..., 1] = s * x0 + c * x1 + 0.5 * dt * d1
    return out


def ehrenfest_closed_form(x0: np.ndarray, omega: float, g_const: np.ndarray,
                          t: float) -> np.ndarray:
    """Exact X(t) for constant g: rotation about X* = -g/(2 omega)."""
    xs = -np.asarray(g_const, dtype=float) / (2.0 * omega)
    th = omega * t
    c, s = math.cos(th), math.sin(th)
    rel = np.asarray(x0, dtype=float) - xs
    return xs + np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]])


def modeset_to_dict(modes: ModeSet) -> dict:
    m = modes.material
    return {
        "material": {"name": m.name, "m_eff": m.m_eff, "v_s_m_per_s": m.v_s_m_per_s,
                     "a_nm": m.a_nm, "E_d_eV": m.E_d_eV,
                     "rho_kg_per_m3": m.rho_kg_per_m3},
        "box_length": modes.box_length,
        "q_cut": modes.q_cut,
        "index_xy": modes.index_xy.tolist(),
    }


def modeset_from_dict(d: dict) -> ModeSet:
    material = Material(**d["material"])
    modes = enumerate_modes(material, d["box_length"], d["q_cut"])
    if modes.index_xy.tolist() != d["index_xy"]:
        raise ModeSetError("stored mode table does not match re-enumeration")
    return modes


def amplitudes_to_dict(amps: ThermalAmplitudes) -> dict:
    return {"scheme": amps.scheme, "temperature_K": amps.temperature_K,
            "x0": amps.x0.tolist()}


def amplitudes_from_dict(d: dict) -> ThermalAmplitudes:
    return ThermalAmplitudes(x0=np.asarray(d["x0"], dtype=float),
                             scheme=d["scheme"], temperature_K=d["temperature_K"])
