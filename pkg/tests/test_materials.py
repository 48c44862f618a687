"""Units, derived scales, thermal RMS quadrature, and regime classification."""
import math

import numpy as np
import pytest

from latticebath import materials as mat
from latticebath.materials import (
    CouplingClass,
    Material,
    MaterialError,
    classify_coupling,
    derive_parameters,
    get_material,
    rms_deformation,
)


def trapezoid_rms(m: Material, temperature_K: float, n: int = 400_001) -> float:
    """Independent fixed-grid route to the thermal RMS integral."""
    d = derive_parameters(m)
    kt = mat.kelvin_to_ev(temperature_K)
    q = np.linspace(1e-12, d.q_debye, n)
    x = d.hbar_v_s * q / kt
    integ = np.where(x < 1e-8, q * kt / d.hbar_v_s,
                     q * q / np.expm1(np.clip(x, 1e-12, 700.0)))
    pref = m.E_d_eV**2 / (2.0 * np.pi * d.rho2d * d.hbar_v_s)
    return math.sqrt(pref * np.trapezoid(integ, q))


class TestConstants:
    def test_internal_electron_mass(self):
        # m c^2 / (hbar c)^2 recomputed from primary constants
        assert mat.ELECTRON_MASS_INT == pytest.approx(
            510998.95 / 197.3269804**2, rel=1e-12)

    def test_time_round_trip(self):
        assert mat.internal_to_fs(mat.fs_to_internal(17.3)) == pytest.approx(17.3, rel=1e-14)
        assert mat.fs_to_internal(mat.FS_PER_INTERNAL_TIME) == pytest.approx(1.0, rel=1e-14)

    def test_velocity_conversion(self):
        # 4700 m/s as hbar*v in eV nm
        assert mat.velocity_to_internal(4700.0) == pytest.approx(3.0935962e-3, rel=1e-7)

    def test_mass_conversion_consistency(self):
        # one electron mass in kg should land on ELECTRON_MASS_INT
        m_e_kg = 9.1093837015e-31
        assert mat.mass_to_internal(m_e_kg) == pytest.approx(
            mat.ELECTRON_MASS_INT, rel=1e-7)


class TestDerivedScales:
    def test_copper(self):
        d = derive_parameters(get_material("copper"))
        assert d.q_debye == pytest.approx(2.0 * math.sqrt(math.pi) / 0.36, rel=1e-12)
        assert d.q_debye == pytest.approx(9.8469658, rel=1e-7)
        assert d.k_fermi == pytest.approx(d.q_debye / 2.0, rel=1e-14)
        assert d.t_debye_K == pytest.approx(353.5031, abs=0.01)
        assert d.e_fermi == pytest.approx(0.923566, rel=1e-5)
        assert d.rho2d == pytest.approx(4.646956e7, rel=1e-5)

    def test_bi2212(self):
        d = derive_parameters(get_material("bi2212"))
        assert d.q_debye == pytest.approx(6.5646439, rel=1e-7)
        assert d.t_debye_K == pytest.approx(140.3984, abs=0.01)
        assert d.e_fermi == pytest.approx(0.048866, rel=1e-4)
        assert d.mass == pytest.approx(8.4 * mat.ELECTRON_MASS_INT, rel=1e-12)

    def test_scaling_with_lattice_constant(self):
        base = Material("x", 1.0, 4700.0, 0.36, 10.0, 8960.0)
        doubled = Material("x2", 1.0, 4700.0, 0.72, 10.0, 8960.0)
        db, dd = derive_parameters(base), derive_parameters(doubled)
        assert dd.q_debye == pytest.approx(db.q_debye / 2, rel=1e-12)
        assert dd.e_fermi == pytest.approx(db.e_fermi / 4, rel=1e-12)
        assert dd.t_debye_K == pytest.approx(db.t_debye_K / 2, rel=1e-12)
        assert dd.rho2d == pytest.approx(db.rho2d * 2, rel=1e-12)  # thicker sheet

    def test_validation(self):
        with pytest.raises(MaterialError):
            Material("bad", -1.0, 4700.0, 0.36, 10.0, 8960.0)
        with pytest.raises(MaterialError):
            Material("bad", 1.0, 0.0, 0.36, 10.0, 8960.0)
        with pytest.raises(MaterialError):
            Material("bad", 1.0, 4700.0, 0.36, -10.0, 8960.0)
        with pytest.raises(MaterialError):
            get_material("unobtainium")


class TestThermalRms:
    def test_zero_temperature(self):
        assert rms_deformation(get_material("copper"), 0.0) == 0.0

    def test_negative_temperature_rejected(self):
        with pytest.raises(MaterialError):
            rms_deformation(get_material("copper"), -1.0)

    @pytest.mark.parametrize("name,T,expected", [
        ("copper", 300.0, 0.17260233),
        ("copper", 353.5031, 0.19342476),
        ("bi2212", 300.0, 0.23461366),
        ("bi2212", 140.3984, 0.14620144),
    ])
    def test_frozen_values(self, name, T, expected):
        assert rms_deformation(get_material(name), T) == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("name", ["copper", "bi2212"])
    def test_against_trapezoid_route(self, name):
        m = get_material(name)
        T = derive_parameters(m).t_debye_K
        assert rms_deformation(m, T) == pytest.approx(trapezoid_rms(m, T), rel=1e-6)

    def test_monotone_in_temperature(self):
        m = get_material("copper")
        vals = [rms_deformation(m, T) for T in (10.0, 50.0, 150.0, 353.0, 900.0)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_classical_limit_scaling(self):
        # DeltaV^2 linear in T well above the Debye temperature
        m = get_material("copper")
        td = derive_parameters(m).t_debye_K
        r = rms_deformation(m, 20 * td) ** 2 / rms_deformation(m, 10 * td) ** 2
        assert r == pytest.approx(2.0, rel=0.02)

    def test_low_temperature_exponent(self):
        # DeltaV^2 ~ T^3 for T << T_D, so DeltaV ~ T^1.5
        m = get_material("copper")
        td = derive_parameters(m).t_debye_K
        lo = rms_deformation(m, 0.01 * td)
        hi = rms_deformation(m, 0.02 * td)
        assert math.log(hi / lo) / math.log(2.0) == pytest.approx(1.5, abs=0.01)

    def test_quadratic_in_coupling(self):
        a = Material("a", 1.0, 4700.0, 0.36, 10.0, 8960.0)
        b = Material("b", 1.0, 4700.0, 0.36, 20.0, 8960.0)
        assert rms_deformation(b, 300.0) == pytest.approx(
            2.0 * rms_deformation(a, 300.0), rel=1e-10)


class TestClassification:
    def test_copper_room_temperature(self):
        cls, kbar = classify_coupling(get_material("copper"), 300.0)
        assert cls is CouplingClass.PERTURBATIVE
        assert kbar == pytest.approx(5.3508, rel=1e-4)

    def test_bi2212_room_temperature(self):
        cls, kbar = classify_coupling(get_material("bi2212"), 300.0)
        assert cls is CouplingClass.NONPERTURBATIVE
        assert kbar == pytest.approx(0.2083, rel=1e-3)

    def test_boundary_counts_as_nonperturbative(self):
        m = get_material("copper")
        _, kbar = classify_coupling(m, 300.0)
        cls, _ = classify_coupling(m, 300.0, threshold=kbar)
        assert cls is CouplingClass.NONPERTURBATIVE

    def test_zero_temperature_is_perturbative(self):
        cls, kbar = classify_coupling(get_material("copper"), 0.0)
        assert cls is CouplingClass.PERTURBATIVE
        assert math.isinf(kbar)

    def test_kbar_nonincreasing_in_temperature(self):
        m = get_material("bi2212")
        ks = [classify_coupling(m, T)[1] for T in (50.0, 100.0, 200.0, 400.0)]
        assert all(b < a for a, b in zip(ks, ks[1:]))
