"""Material records, unit conversions, and thermal coupling scales.

Internal unit system: energies in eV, lengths in nm, hbar = 1. One internal
time unit is hbar/(1 eV) = 0.6582119569 fs. In these units momentum equals
wavenumber (nm^-1), mass carries eV^-1 nm^-2, velocity carries eV nm, and a
mass surface density carries eV^-1 nm^-4. Temperatures are always passed in
kelvin and sound speeds / mass densities in SI; conversion happens at the
boundary so material tables can be copied from the literature.

The electron couples to acoustic phonons through a deformation potential
E_d; the standing thermal field it produces has RMS amplitude

    DeltaV(T)^2 = E_d^2 / (2 pi rho2d vs) * int_0^qD q^2 / (exp(q vs/kT) - 1) dq

(written in internal units where vs stands for hbar*v_s in eV nm and rho2d
is the areal mass density). The ratio Kbar = E_F / DeltaV classifies the
coupling regime: Kbar > 1 perturbative, Kbar <= 1 nonperturbative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Final

from scipy.integrate import quad

HBAR_EV_S: Final[float] = 6.582119569e-16
HBARC_EV_NM: Final[float] = 197.3269804
KB_EV_PER_K: Final[float] = 8.617333262e-5
ELECTRON_MASS_EV: Final[float] = 510998.95
JOULE_PER_EV: Final[float] = 1.602176634e-19
C_M_PER_S: Final[float] = 2.99792458e8

FS_PER_INTERNAL_TIME: Final[float] = HBAR_EV_S * 1e15
ELECTRON_MASS_INT: Final[float] = ELECTRON_MASS_EV / HBARC_EV_NM**2


class MaterialError(ValueError):
    """Invalid material parameters or unknown material name."""


class CouplingClass(Enum):
    PERTURBATIVE = "perturbative"
    NONPERTURBATIVE = "nonperturbative"


def velocity_to_internal(v_m_per_s: float) -> float:
    """m/s -> eV nm (value of hbar*v in the hbar = 1 system)."""
    return v_m_per_s * HBAR_EV_S * 1e9


def mass_to_internal(m_kg: float) -> float:
    """kg -> eV^-1 nm^-2 (via m c^2 / (hbar c)^2)."""
    return m_kg * C_M_PER_S**2 / JOULE_PER_EV / HBARC_EV_NM**2


def areal_density_to_internal(rho_kg_per_m2: float) -> float:
    """kg/m^2 -> eV^-1 nm^-4."""
    return mass_to_internal(rho_kg_per_m2) * 1e-18


def kelvin_to_ev(temperature_K: float) -> float:
    return KB_EV_PER_K * temperature_K


def fs_to_internal(t_fs: float) -> float:
    return t_fs / FS_PER_INTERNAL_TIME


def internal_to_fs(t_int: float) -> float:
    return t_int * FS_PER_INTERNAL_TIME


@dataclass(frozen=True)
class Material:
    """Lab-unit record for a 2D sheet cut from a bulk crystal.

    a_nm is the lattice constant in nanometres; the sheet's areal mass
    density is rho_kg_per_m3 * a_nm (one atomic layer).
    """

    name: str
    m_eff: float            # effective mass in units of m_e
    v_s_m_per_s: float      # longitudinal sound speed
    a_nm: float             # lattice constant, nm
    E_d_eV: float           # deformation potential
    rho_kg_per_m3: float    # bulk mass density

    def __post_init__(self) -> None:
        for field in ("m_eff", "v_s_m_per_s", "a_nm", "rho_kg_per_m3"):
            if not getattr(self, field) > 0.0:
                raise MaterialError(f"{self.name or 'material'}: {field} must be positive")
        if self.E_d_eV < 0.0:
            raise MaterialError(f"{self.name}: E_d_eV must be nonnegative")


@dataclass(frozen=True)
class DerivedScales:
    """Internal-unit scales computed from a Material.

    q_debye:   Debye wavevector 2 sqrt(pi)/a, nm^-1 (2D circular zone)
    k_fermi:   q_debye/2 (half filling), nm^-1
    e_fermi:   k_fermi^2/(2m), eV
    t_debye_K: hbar v_s q_debye / kB, kelvin
    mass:      effective mass, eV^-1 nm^-2
    hbar_v_s:  sound speed as hbar*v_s, eV nm
    rho2d:     areal mass density, eV^-1 nm^-4
    """

    q_debye: float
    k_fermi: float
    e_fermi: float
    t_debye_K: float
    mass: float
    hbar_v_s: float
    rho2d: float


MATERIALS: Final[dict[str, Material]] = {
    "copper": Material(
        name="copper", m_eff=1.0, v_s_m_per_s=4700.0, a_nm=0.36,
        E_d_eV=10.0, rho_kg_per_m3=8960.0,
    ),
    "bi2212": Material(
        name="bi2212", m_eff=8.4, v_s_m_per_s=2800.0, a_nm=0.54,
        E_d_eV=10.0, rho_kg_per_m3=5200.0,
    ),
}


def get_material(name: str) -> Material:
    try:
        return MATERIALS[name.lower()]
    except KeyError:
        known = ", ".join(sorted(MATERIALS))
        raise MaterialError(f"unknown material {name!r} (known: {known})") from None


def derive_parameters(material: Material) -> DerivedScales:
    q_debye = 2.0 * math.sqrt(math.pi) / material.a_nm
    mass = material.m_eff * ELECTRON_MASS_INT
    hbar_v_s = velocity_to_internal(material.v_s_m_per_s)
    k_fermi = 0.5 * q_debye
    return DerivedScales(
        q_debye=q_debye,
        k_fermi=k_fermi,
        e_fermi=k_fermi**2 / (2.0 * mass),
        t_debye_K=hbar_v_s * q_debye / KB_EV_PER_K,
        mass=mass,
        hbar_v_s=hbar_v_s,
        rho2d=areal_density_to_internal(material.rho_kg_per_m3 * material.a_nm * 1e-9),
    )


def rms_deformation(material: Material, temperature_K: float) -> float:
    """RMS of the thermal deformation field at one point, in eV.

    Adaptive quadrature of q^2 / (e^{x} - 1) with x = hbar v_s q / kT over
    the circular zone 0 < q <= q_D. Exact zero at T = 0.
    """
    if temperature_K < 0.0:
        raise MaterialError("temperature must be nonnegative")
    if temperature_K == 0.0:
        return 0.0
    d = derive_parameters(material)
    kt = kelvin_to_ev(temperature_K)
    scale = kt / d.hbar_v_s  # thermal wavevector, sets the integrand's decay

    def integrand(q: float) -> float:
        x = q / scale
        if x < 1e-8:
            return q * scale  # q^2/x to leading order
        if x > 700.0:
            return 0.0
        return q * q / math.expm1(x)

    # Breakpoints guide the adaptive rule when the decay scale << q_D.
    pts = [p for p in (scale, 5.0 * scale, 25.0 * scale) if 0.0 < p < d.q_debye]
    val, _err = quad(integrand, 0.0, d.q_debye, epsabs=1e-10, epsrel=1e-10,
                     limit=200, points=pts or None)
    pref = material.E_d_eV**2 / (2.0 * math.pi * d.rho2d * d.hbar_v_s)
    return math.sqrt(pref * val)


def classify_coupling(
    material: Material, temperature_K: float, threshold: float = 1.0
) -> tuple[CouplingClass, float]:
    """Coupling regime and the ratio Kbar = E_F / DeltaV(T).

    Kbar <= threshold is nonperturbative (the boundary value counts as
    nonperturbative). DeltaV = 0 (T = 0) gives Kbar = inf.
    """
    d = derive_parameters(material)
    dv = rms_deformation(material, temperature_K)
    kbar = math.inf if dv == 0.0 else d.e_fermi / dv
    cls = CouplingClass.PERTURBATIVE if kbar > threshold else CouplingClass.NONPERTURBATIVE
    return cls, kbar
