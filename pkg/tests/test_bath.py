"""Mode enumeration, thermal sampling, field assembly, oscillator stepping."""
import math

import numpy as np
import pytest

from latticebath import bath
from latticebath.bath import (
    ModeSetError,
    amplitudes_from_dict,
    amplitudes_to_dict,
    coupling_vector,
    deformation_field,
    direct_field_sum,
    ehrenfest_closed_form,
    ehrenfest_step,
    enumerate_modes,
    modeset_from_dict,
    modeset_to_dict,
    sample_thermal,
)
from latticebath.grid import Grid2D, GridError
from latticebath.materials import derive_parameters, get_material, rms_deformation

CU = get_material("copper")
CU_D = derive_parameters(CU)


@pytest.fixture(scope="module")
def modes12():
    return enumerate_modes(CU, 12.0)


class TestEnumeration:
    def test_count_and_order(self, modes12):
        assert modes12.n_modes == 1108
        assert modes12.index_xy[:5].tolist() == [[-1, 0], [0, -1], [0, 1], [1, 0], [-1, -1]]

    def test_all_within_cut_and_nonzero(self, modes12):
        qabs = np.hypot(*modes12.qvec.T)
        assert np.all(qabs > 0.0)
        assert np.all(qabs <= modes12.q_cut * (1 + 1e-12))

    def test_negation_pairing(self, modes12):
        assert np.all(modes12.index_xy[modes12.neg_index] == -modes12.index_xy)
        # pairing is an involution
        assert np.all(modes12.neg_index[modes12.neg_index] == np.arange(modes12.n_modes))

    def test_dispersion_and_coupling_amplitude(self, modes12):
        i = 7
        qabs = math.hypot(*modes12.qvec[i])
        assert modes12.omega[i] == pytest.approx(CU_D.hbar_v_s * qabs, rel=1e-12)
        expected = CU.E_d_eV * qabs / math.sqrt(CU_D.rho2d * 144.0 * modes12.omega[i])
        assert modes12.g_amp[i] == pytest.approx(expected, rel=1e-12)

    def test_q_cut_restricts(self):
        full = enumerate_modes(CU, 12.0)
        cut = enumerate_modes(CU, 12.0, q_cut=0.5 * CU_D.q_debye)
        assert 0 < cut.n_modes < full.n_modes
        assert np.max(np.hypot(*cut.qvec.T)) <= 0.5 * CU_D.q_debye * (1 + 1e-12)

    def test_errors(self):
        with pytest.raises(ModeSetError):
            enumerate_modes(CU, -1.0)
        with pytest.raises(ModeSetError):
            enumerate_modes(CU, 12.0, q_cut=2.0 * CU_D.q_debye)
        with pytest.raises(ModeSetError):
            enumerate_modes(CU, 0.3)  # no modes fit below q_D

    def test_serialization_round_trip(self, modes12):
        d = modeset_to_dict(modes12)
        back = modeset_from_dict(d)
        assert np.array_equal(back.index_xy, modes12.index_xy)
        assert np.allclose(back.g_amp, modes12.g_amp, rtol=0, atol=0)


class TestCouplingVector:
    def test_components(self, modes12):
        r = np.array([1.3, -0.4])
        i = 11
        g = coupling_vector(modes12, i, r)
        phase = modes12.qvec[i] @ r
        assert g[0] == pytest.approx(-modes12.g_amp[i] * math.cos(phase), abs=1e-15)
        assert g[1] == pytest.approx(modes12.g_amp[i] * math.sin(phase), abs=1e-15)
        assert np.hypot(*g) == pytest.approx(modes12.g_amp[i], rel=1e-12)


class TestThermalSampling:
    def test_zero_temperature(self, modes12):
        amps = sample_thermal(modes12, 0.0, "full-gaussian", np.random.default_rng(0))
        assert np.all(amps.x0 == 0.0)

    def test_random_phase_occupation_exact(self, modes12):
        # fixed-radius scheme: |alpha|^2 = nbar identically, per draw
        amps = sample_thermal(modes12, 300.0, "random-phase", np.random.default_rng(1))
        assert np.allclose(amps.occupation_estimate,
                           modes12.thermal_occupation(300.0), rtol=1e-12)

    def test_full_gaussian_occupation_statistics(self):
        small = enumerate_modes(CU, 1.4)  # 12 modes keeps the loop cheap
        nbar = small.thermal_occupation(300.0)
        rng = np.random.default_rng(42)
        total = np.zeros(small.n_modes)
        n_draws = 20_000
        for _ in range(n_draws):
            total += sample_thermal(small, 300.0, "full-gaussian", rng).occupation_estimate
        pooled = np.mean(total / n_draws / nbar)
        assert pooled == pytest.approx(1.0, abs=0.02)

    def test_unknown_scheme(self, modes12):
        with pytest.raises(ModeSetError):
            sample_thermal(modes12, 300.0, "bogus", np.random.default_rng(0))

    def test_amplitude_serialization(self, modes12):
        amps = sample_thermal(modes12, 77.0, "random-phase", np.random.default_rng(3))
        back = amplitudes_from_dict(amplitudes_to_dict(amps))
        assert np.allclose(back.x0, amps.x0, rtol=0, atol=0)
        assert back.scheme == amps.scheme


class TestFieldAssembly:
    def test_fft_matches_direct_sum(self, modes12):
        grid = Grid2D(64, 12.0)
        amps = sample_thermal(modes12, 300.0, "full-gaussian", np.random.default_rng(5))
        for t in (0.0, 3.7):
            fft_route = deformation_field(modes12, amps, grid, t)
            pts = np.stack(np.meshgrid(grid.x, grid.x, indexing="ij"), axis=-1).reshape(-1, 2)
            direct = direct_field_sum(modes12, amps, pts, t).reshape(grid.n, grid.n)
            assert np.max(np.abs(fft_route - direct)) < 1e-9

    def test_field_has_zero_spatial_mean(self, modes12):
        grid = Grid2D(64, 12.0)
        amps = sample_thermal(modes12, 300.0, "random-phase", np.random.default_rng(6))
        field = deformation_field(modes12, amps, grid, 0.0)
        assert abs(field.mean()) < 1e-12 * np.abs(field).max()

    def test_aliasing_guard(self, modes12):
        with pytest.raises(GridError):
            deformation_field(modes12, sample_thermal(modes12, 300.0, "random-phase",
                                                      np.random.default_rng(0)),
                              Grid2D(16, 12.0), 0.0)

    def test_lattice_mean_square_close_to_quadrature(self, modes12):
        lattice = math.sqrt(modes12.mean_square_potential(CU_D.t_debye_K))
        quad = rms_deformation(CU, CU_D.t_debye_K)
        assert lattice == pytest.approx(quad, rel=0.02)

    def test_sampled_rms_matches_expectation(self, modes12):
        grid = Grid2D(64, 12.0)
        rng = np.random.default_rng(11)
        acc = 0.0
        n = 150
        for _ in range(n):
            amps = sample_thermal(modes12, CU_D.t_debye_K, "random-phase", rng)
            acc += np.mean(deformation_field(modes12, amps, grid, 0.0) ** 2)
        sampled = math.sqrt(acc / n)
        exact = math.sqrt(modes12.mean_square_potential(CU_D.t_debye_K))
        assert sampled == pytest.approx(exact, rel=0.02)


class TestEhrenfest:
    OMEGA = 0.02
    G = np.array([0.013, -0.007])
    X0 = np.array([0.8, -0.3])

    def _advance(self, dt, horizon=60.0):
        x = self.X0.copy()
        n = int(round(horizon / dt))
        for _ in range(n):
            x = ehrenfest_step(x, np.array(self.OMEGA), self.G, dt)
        return x, n * dt

    def test_matches_closed_form(self):
        x, t = self._advance(0.125)
        exact = ehrenfest_closed_form(self.X0, self.OMEGA, self.G, t)
        assert np.max(np.abs(x - exact)) < 1e-6

    def test_second_order_convergence(self):
        errs = []
        for dt in (0.5, 0.25, 0.125):
            x, t = self._advance(dt)
            exact = ehrenfest_closed_form(self.X0, self.OMEGA, self.G, t)
            errs.append(np.max(np.abs(x - exact)))
        for a, b in zip(errs, errs[1:]):
            assert 3.6 < a / b < 4.4

    def test_free_rotation_preserves_norm(self):
        x = np.array([1.0, 0.0])
        zero = np.zeros(2)
        for _ in range(1000):
            x = ehrenfest_step(x, np.array(self.OMEGA), zero, 0.3)
        assert abs(np.hypot(*x) - 1.0) < 1e-10
        angle = math.atan2(x[1], x[0]) % (2 * math.pi)
        assert angle == pytest.approx((self.OMEGA * 0.3 * 1000) % (2 * math.pi), abs=1e-9)

    def test_vectorized_over_modes(self):
        omegas = np.array([0.01, 0.02, 0.05])
        xs = np.tile(self.X0, (3, 1))
        gs = np.tile(self.G, (3, 1))
        batch = ehrenfest_step(xs, omegas, gs, 0.2)
        for i, om in enumerate(omegas):
            single = ehrenfest_step(self.X0, np.array(om), self.G, 0.2)
            assert np.allclose(batch[i], single, rtol=1e-14)
