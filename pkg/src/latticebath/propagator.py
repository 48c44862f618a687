"""Split-operator evolution of the stochastic wavepacket pair.

Two fields psi_plus and psi_minus start identical and evolve under their
branch potentials

    V_plus(r, t)  = V_mf(r, t) - sum_q [eta_q(t) + nu_q(t)/2] . g_q(r),
    V_minus(r, t) = V_mf(r, t) - sum_q [conj(eta_q)(t) - conj(nu_q)(t)/2] . g_q(r),

complex-valued once noise is on, so the evolution is non-unitary and the
fields are never renormalized: the physics lives in the raw bilinears
<psi_minus|O|psi_plus> whose ensemble average reproduces the reduced
dynamics. The conjugation on the minus branch is forced by the averaging:
the bra <psi_minus| conjugates the stored field, and only if that bra is
an analytic functional of (eta, nu) do all Gaussian pairings in the
W-average close on the prescribed relation-only covariances; driving both
branches with unconjugated noise couples the average to the physically
meaningless conjugate covariances of the embedding and the mean overlap
drifts. The nu signs follow from the doubled-path generating functional,
where the relative eta sign flips between the paths and the nu sign does
not. Each step is Strang-split,

    psi <- e^{-i V dt/2} F^{-1}[ e^{-i k^2 dt / 2m} F[ e^{-i V dt/2} psi ] ],

with the potential sampled at the step's left edge (statistically
equivalent to the midpoint rule for these fields), giving O(dt^2) accuracy
on smooth potentials.

Realizations are vectorized in batches: fields live in (2, B, N, N) arrays
and the per-step potential is assembled by scattering per-mode Fourier
coefficients onto the reciprocal grid and inverse-FFT'ing the whole batch
at once. RNG streams are carved deterministically from the master seed:
realization r draws thermal amplitudes from spawn key (r, 0) and the noise
of mode m from spawn key (r, 1, m), so results never depend on ensemble
size, batch size, or scheduling.

A trajectory whose overlap magnitude exceeds the blow-up bound is frozen,
flagged, and excluded from ensemble averages; the count is reported.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import bath, noise
from .config import RunSetup
from .grid import Grid2D
from .materials import internal_to_fs
from .observables import ObservableSeries


class PropagationError(ValueError):
    pass


class EnsembleError(RuntimeError):
    """Every trajectory in the ensemble diverged."""


@dataclass(frozen=True)
class WavepacketPair:
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    step_index: int = 0


@dataclass(frozen=True)
class StepPlan:
    dt: float                    # internal time units
    n_steps: int
    kinetic_phase: np.ndarray    # (N, N), unit modulus
    record_steps: np.ndarray     # sorted step indices at which to record
    blowup_bound: float
    feedback: bool


def init_gaussian(grid: Grid2D, sigma: float,
                  center: tuple[float, float] | None = None,
                  k0: tuple[float, float] = (0.0, 0.0)) -> WavepacketPair:
    """Normalized Gaussian packet, identical on both branches.

    The envelope uses minimal-image displacements so a center near the box
    edge wraps smoothly; the boost phase e^{i k0.r} uses absolute
    coordinates.
    """
    if sigma < 2.0 * grid.dx:
        raise PropagationError(
            f"sigma={sigma:.4g} nm under-resolved: need >= 2 dx = {2 * grid.dx:.4g} nm")
    cx, cy = center if center is not None else (0.5 * grid.length, 0.5 * grid.length)
    L = grid.length
    ux = (grid.x - cx + 0.5 * L) % L - 0.5 * L
    uy = (grid.x - cy + 0.5 * L) % L - 0.5 * L
    envelope = np.exp(-(ux[:, None] ** 2 + uy[None, :] ** 2) / (4.0 * sigma**2))
    phase = np.exp(1j * (k0[0] * grid.x[:, None] + k0[1] * grid.x[None, :]))
    psi = envelope * phase
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2)) * grid.cell_area)
    return WavepacketPair(psi_plus=psi, psi_minus=psi.copy(), step_index=0)


def build_plan(setup: RunSetup, record_stride: int | None = None) -> StepPlan:
    stride = setup.config.record_stride if record_stride is None else record_stride
    if stride < 1:
        raise PropagationError(f"record_stride must be >= 1, got {stride}")
    kinetic = np.exp(-0.5j * setup.dt_internal * setup.grid.k2 / setup.derived.mass)
    steps = np.unique(np.append(np.arange(0, setup.n_steps, stride), setup.n_steps))
    return StepPlan(dt=setup.dt_internal, n_steps=setup.n_steps,
                    kinetic_phase=kinetic, record_steps=steps,
                    blowup_bound=setup.config.blowup_bound,
                    feedback=setup.config.feedback)


def strang_step(pair: WavepacketPair, plan: StepPlan, v_plus: np.ndarray,
                v_minus: np.ndarray) -> WavepacketPair:
    """One split step of both branches under their (complex) potentials."""
    out = []
    for psi, v in ((pair.psi_plus, v_plus), (pair.psi_minus, v_minus)):
        half = np.exp(-0.5j * plan.dt * v)
        stepped = half * np.fft.ifft2(plan.kinetic_phase * np.fft.fft2(half * psi))
        out.append(stepped)
    return WavepacketPair(psi_plus=out[0], psi_minus=out[1],
                          step_index=pair.step_index + 1)


def assemble_pseudopotential(modes: bath.ModeSet, amps: bath.ThermalAmplitudes | None,
                             noise_traj: noise.NoiseTrajectory | None, step: int,
                             grid: Grid2D, branch: int) -> np.ndarray:
    """Branch potential V_branch(r, t_step) as a complex field.

    branch is +1 or -1. amps=None means no mean field; noise_traj=None means
    noise off (the result is then the real thermal field).
    """
    if branch not in (+1, -1):
        raise PropagationError(f"branch must be +1 or -1, got {branch}")
    if noise_traj is None and amps is None:
        return np.zeros((grid.n, grid.n), dtype=complex)
    if noise_traj is not None:
        if noise_traj.eta.shape[0] != modes.n_modes:
            raise PropagationError(
                f"noise carries {noise_traj.eta.shape[0]} modes, bath has {modes.n_modes}")
        if not 0 <= step < noise_traj.n_steps:
            raise PropagationError(f"step {step} outside noise window")
        dt = noise_traj.dt
    else:
        dt = 0.0
    coef = np.zeros(modes.n_modes, dtype=complex)
    if amps is not None:
        zeta_t = amps.zeta0 * np.exp(-1j * modes.omega * (step * dt))
        coef = coef + bath.fourier_coefficients(modes, zeta_t)
    if noise_traj is not None:
        eta, nu = noise_traj.eta[:, step], noise_traj.nu[:, step]
        if branch == +1:
            w = eta + 0.5 * nu
        else:
            w = np.conj(eta) - 0.5 * np.conj(nu)
        coef = coef - bath.harmonic_coefficients(modes, w[:, 0], w[:, 1])
    return bath.field_from_coefficients(modes, grid, coef)


def direct_pseudopotential_sum(modes: bath.ModeSet, amps: bath.ThermalAmplitudes | None,
                               noise_traj: noise.NoiseTrajectory | None, step: int,
                               points: np.ndarray, branch: int) -> np.ndarray:
    """Independent route to the branch potential: explicit mode summation."""
    if branch not in (+1, -1):
        raise PropagationError(f"branch must be +1 or -1, got {branch}")
    w0 = np.zeros(modes.n_modes, dtype=complex)
    w1 = np.zeros(modes.n_modes, dtype=complex)
    if amps is not None:
        dt = noise_traj.dt if noise_traj is not None else 0.0
        zeta_t = amps.zeta0 * np.exp(-1j * modes.omega * (step * dt))
        w0 += zeta_t.real
        w1 += zeta_t.imag
    if noise_traj is not None:
        eta, nu = noise_traj.eta[:, step], noise_traj.nu[:, step]
        if branch == +1:
            w = eta + 0.5 * nu
        else:
            w = np.conj(eta) - 0.5 * np.conj(nu)
        w0 = w0 - w[:, 0]
        w1 = w1 - w[:, 1]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phase = pts @ modes.qvec.T
    return (-np.cos(phase) * (modes.g_amp * w0)
            + np.sin(phase) * (modes.g_amp * w1)).sum(axis=1)


@dataclass(frozen=True)
class EnsembleResult:
    series: ObservableSeries
    px_per_realization: np.ndarray   # (R, n_records) complex
    divergent_steps: np.ndarray      # (R,) first divergent step, -1 if clean
    n_divergent: int
    master_seed: int
    wall_time_s: float


_REC_FIELDS = ("px", "x", "y", "r2", "overlap", "char_x", "char_y")


def _thermal_rng(master_seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r, 0)))


def _noise_seed(master_seed: int, r: int, m: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(r, 1, m))


def _noise_coefficient_arrays(setup: RunSetup, indices: list[int],
                              factor_cache: dict[float, np.ndarray]
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Per-step reciprocal-slot coefficients of the eta and nu fields.

    Returns complex64 arrays of shape (B, n_steps, n_modes): slot k holds
    -(g_k/2)[(w0 + i w1)_k + (w0 - i w1)_{-k}] accumulated mode by mode.
    """
    modes = setup.modes
    B, S, M = len(indices), setup.n_steps, modes.n_modes
    c_eta = np.zeros((B, S, M), dtype=np.complex64)
    c_nu = np.zeros((B, S, M), dtype=np.complex64)
    npad = noise.next_pow2(2 * S)
    for m in range(M):
        om = float(modes.omega[m])
        if om not in factor_cache:
            factor_cache[om] = noise.spectral_factors(om, setup.dt_internal, S)
        factors = factor_cache[om]
        white = np.empty((B, npad, 4))
        for b, r in enumerate(indices):
            rng = np.random.default_rng(_noise_seed(setup.config.master_seed, r, m))
            white[b] = rng.standard_normal((npad, 4))
        z = noise.synthesize(factors, white, S)
        w = np.complex64(-0.5 * modes.g_amp[m])
        mneg = modes.neg_index[m]
        c_eta[:, :, m] += w * (z[..., 0] + 1j * z[..., 1]).astype(np.complex64)
        c_eta[:, :, mneg] += w * (z[..., 0] - 1j * z[..., 1]).astype(np.complex64)
        c_nu[:, :, m] += w * (z[..., 2] + 1j * z[..., 3]).astype(np.complex64)
        c_nu[:, :, mneg] += w * (z[..., 2] - 1j * z[..., 3]).astype(np.complex64)
    return c_eta, c_nu


def _run_batch(setup: RunSetup, plan: StepPlan, indices: list[int],
               factor_cache: dict[float, np.ndarray] | None = None,
               keep_g: bool = False):
    """Evolve a batch of realizations; returns (records, divergent, g_rec)."""
    cfg = setup.config
    grid, modes = setup.grid, setup.modes
    N, B, M = grid.n, len(indices), modes.n_modes
    dt = plan.dt
    n_rec = plan.record_steps.size
    flags = np.zeros(plan.n_steps + 1, dtype=bool)
    flags[plan.record_steps] = True

    pair0 = init_gaussian(grid, setup.sigma_nm, setup.center, setup.k0)
    psi = np.empty((2, B, N, N), dtype=complex)
    psi[0] = pair0.psi_plus
    psi[1] = pair0.psi_minus

    thermal = [bath.sample_thermal(modes, setup.temperature_K, cfg.scheme,
                                   _thermal_rng(cfg.master_seed, r))
               for r in indices]
    if plan.feedback:
        xq = np.stack([a.x0 for a in thermal])          # (B, M, 2)
    else:
        zeta = np.stack([a.zeta0 for a in thermal])     # (B, M)
        phase_step = np.exp(-1j * modes.omega * dt)

    if cfg.noise_enabled:
        c_eta, c_nu = _noise_coefficient_arrays(
            setup, indices, {} if factor_cache is None else factor_cache)

    sx, sy = bath.grid_slots(modes, grid)
    nsx, nsy = sx[modes.neg_index], sy[modes.neg_index]
    g_amp = modes.g_amp
    kbuf = np.zeros((2, B, N, N), dtype=complex)
    kphase = plan.kinetic_phase
    dA = grid.cell_area
    xc = grid.x_centered
    r2_mult = xc[:, None] ** 2 + xc[None, :] ** 2
    harm = np.exp(1j * (2.0 * math.pi / grid.length) * grid.x)
    kx_col = grid.k[:, None]

    rec = {f: np.zeros((n_rec, B), dtype=complex) for f in _REC_FIELDS}
    g_rec = np.zeros((n_rec, M, 2)) if (keep_g and plan.feedback and B == 1) else None
    divergent = np.full(B, -1, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    rec_i = 0

    def record(idx: int) -> np.ndarray:
        cross = np.conj(psi[1]) * psi[0]
        rec["overlap"][idx] = dA * cross.sum(axis=(-2, -1))
        rec["x"][idx] = dA * np.einsum("bij,i->b", cross, xc)
        rec["y"][idx] = dA * np.einsum("bij,j->b", cross, xc)
        rec["r2"][idx] = dA * np.einsum("bij,ij->b", cross, r2_mult)
        rec["char_x"][idx] = dA * np.einsum("bij,i->b", cross, harm)
        rec["char_y"][idx] = dA * np.einsum("bij,j->b", cross, harm)
        acted = np.fft.ifft2(kx_col * np.fft.fft2(psi[0], axes=(-2, -1)), axes=(-2, -1))
        rec["px"][idx] = dA * np.einsum("bij,bij->b", np.conj(psi[1]), acted)
        return cross

    for j in range(plan.n_steps):
        cross = None
        if flags[j]:
            cross = record(rec_i)
        if plan.feedback:
            if cross is None:
                cross = np.conj(psi[1]) * psi[0]
            spec = np.fft.fft2(cross, axes=(-2, -1))
            e_pos = dA * spec[:, nsx, nsy]   # <e^{+i q.r}>
            e_neg = dA * spec[:, sx, sy]     # <e^{-i q.r}>
            cos_q = 0.5 * (e_pos + e_neg).real
            sin_q = (0.5 * (e_pos - e_neg) / 1j).real
            g_ex = np.stack([-g_amp * cos_q, g_amp * sin_q], axis=-1)
            if g_rec is not None and flags[j]:
                g_rec[rec_i] = g_ex[0]
            c_mf = bath.harmonic_coefficients(modes, xq[..., 0], xq[..., 1])
        else:
            c_mf = -0.5 * g_amp * (zeta + np.conj(zeta[:, modes.neg_index]))
        if flags[j]:
            rec_i += 1

        kbuf[:] = 0.0
        if cfg.noise_enabled:
            # conjugating the per-mode amplitudes maps coefficient arrays
            # through c_k -> conj(c_{-k})
            ce, cn = c_eta[:, j], c_nu[:, j]
            neg = modes.neg_index
            kbuf[0][:, sx, sy] = c_mf - ce - 0.5 * cn
            kbuf[1][:, sx, sy] = c_mf - np.conj(ce[:, neg]) + 0.5 * np.conj(cn[:, neg])
        else:
            kbuf[0][:, sx, sy] = c_mf
            kbuf[1][:, sx, sy] = c_mf
        v = (N * N) * np.fft.ifft2(kbuf, axes=(-2, -1))

        half = np.exp(-0.5j * dt * v)
        psi *= half
        psi = np.fft.ifft2(kphase * np.fft.fft2(psi, axes=(-2, -1)), axes=(-2, -1))
        psi *= half

        if plan.feedback:
            xq = bath.ehrenfest_step(xq, modes.omega, g_ex, dt)
        else:
            zeta = zeta * phase_step

        ov = dA * np.einsum("bij,bij->b", np.conj(psi[1]), psi[0])
        bad = alive & (~np.isfinite(ov) | (np.abs(ov) > plan.blowup_bound))
        if np.any(bad):
            divergent[bad] = j
            alive &= ~bad
            psi[:, bad] = 0.0

    record(rec_i)
    return rec, divergent, g_rec


def _reduce(rec_list, div_list, t_fs, setup: RunSetup,
            wall: float) -> EnsembleResult:
    rec = {f: np.concatenate([r[f] for r in rec_list], axis=1) for f in _REC_FIELDS}
    divergent = np.concatenate(div_list)
    kept = divergent < 0
    n_div = int(np.sum(~kept))
    if not np.any(kept):
        raise EnsembleError(f"all {divergent.size} trajectories divergent")
    n_eff = int(np.sum(kept))
    mean = {f: rec[f][:, kept].mean(axis=1) for f in _REC_FIELDS}
    if n_eff > 1:
        stderr = rec["px"][:, kept].real.std(axis=1, ddof=1) / math.sqrt(n_eff)
    else:
        stderr = np.zeros(t_fs.size)
    series = ObservableSeries(
        t_fs=t_fs, px=mean["px"], x=mean["x"], y=mean["y"], r2=mean["r2"],
        overlap=mean["overlap"], char_x=mean["char_x"], char_y=mean["char_y"],
        box_length=setup.grid.length, n_realizations=divergent.size,
        n_divergent=n_div, stderr_px=stderr)
    return EnsembleResult(series=series, px_per_realization=rec["px"].T,
                          divergent_steps=divergent, n_divergent=n_div,
                          master_seed=setup.config.master_seed, wall_time_s=wall)


def _worker(args) -> tuple:
    setup, stride, indices = args
    plan = build_plan(setup, stride)
    rec, div, _ = _run_batch_chunks(setup, plan, indices)
    return rec, div


def _run_batch_chunks(setup: RunSetup, plan: StepPlan, indices: list[int]):
    """Run indices in batch_size groups with a shared factor cache."""
    cache: dict[float, np.ndarray] = {}
    bs = max(1, setup.config.batch_size)
    recs, divs = [], []
    for i in range(0, len(indices), bs):
        rec, div, _ = _run_batch(setup, plan, indices[i:i + bs], cache)
        recs.append(rec)
        divs.append(div)
    merged = {f: np.concatenate([r[f] for r in recs], axis=1) for f in _REC_FIELDS}
    return merged, np.concatenate(divs), None


def record_times_fs(setup: RunSetup, plan: StepPlan) -> np.ndarray:
    return internal_to_fs(plan.record_steps * setup.dt_internal)


def run_trajectory(setup: RunSetup, realization: int = 0,
                   record_stride: int | None = None) -> ObservableSeries:
    """Single realization; bit-identical to the same slot of run_ensemble."""
    plan = build_plan(setup, record_stride)
    rec, div, g_rec = _run_batch(setup, plan, [realization], keep_g=True)
    t_fs = record_times_fs(setup, plan)
    diverged = int(div[0] >= 0)
    return ObservableSeries(
        t_fs=t_fs, px=rec["px"][:, 0], x=rec["x"][:, 0], y=rec["y"][:, 0],
        r2=rec["r2"][:, 0], overlap=rec["overlap"][:, 0],
        char_x=rec["char_x"][:, 0], char_y=rec["char_y"][:, 0],
        box_length=setup.grid.length, n_realizations=1, n_divergent=diverged,
        stderr_px=None, g_expect=g_rec)


def run_ensemble(setup: RunSetup, record_stride: int | None = None) -> EnsembleResult:
    """All realizations of the configured ensemble, reduced in seed order."""
    cfg = setup.config
    if cfg.n_realizations < 1:
        raise PropagationError("n_realizations must be >= 1")
    t0 = time.perf_counter()
    plan = build_plan(setup, record_stride)
    indices = list(range(cfg.n_realizations))
    if cfg.max_parallel > 1 and cfg.n_realizations > 1:
        n_chunks = min(cfg.max_parallel, cfg.n_realizations)
        bounds = np.array_split(np.array(indices), n_chunks)
        jobs = [(setup, record_stride, list(b)) for b in bounds if b.size]
        with ProcessPoolExecutor(max_workers=n_chunks) as pool:
            results = list(pool.map(_worker, jobs))
        recs = [r for r, _ in results]
        divs = [d for _, d in results]
    else:
        rec, div, _ = _run_batch_chunks(setup, plan, indices)
        recs, divs = [rec], [div]
    t_fs = record_times_fs(setup, plan)
    return _reduce(recs, divs, t_fs, setup, time.perf_counter() - t0)
