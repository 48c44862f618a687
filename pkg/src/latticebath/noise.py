"""Complex colored-noise synthesis for the stochastic pair propagation.

Each bath mode drives the two branch equations through complex Gaussian
processes eta(t) and nu(t) (2-vectors each). The dynamics is holomorphic in
these variables, so only pseudo-covariances (products without conjugation)
matter; with z = (eta_x, eta_y, nu_x, nu_y) the targets are

    <eta_i(s) eta_j(s+tau)> = L(tau)_ij / 2,
    <eta_i(s) nu_j(s+tau)>  = [i M(tau) Theta(-tau)]_ij,
    <nu_i(s)  nu_j(s+tau)>  = 0,
    L(tau) = ((cos, -sin), (sin, cos)) omega tau,   M(tau) = diag(sin, -sin) omega tau.

The one-sided eta-nu block is what cancels the mean-field back-action on
average; the conjugate moments are free parameters of the embedding.

Synthesis is spectral: the lag sequence of 4x4 covariance blocks, wrapped on
a zero-padded window of npad >= 2 n_steps samples (the padding removes
circular leakage for every retained lag; the single ambiguous midpoint lag
is symmetrized, and the equal-time Heaviside convention Theta(0) = 1/2 is
adopted, which is invisible because M(0) = 0), is FFT'd into per-frequency
symbols Chat(f). Filtering real unit-variance white noise w (whose
pseudo-covariance is the identity) through per-frequency filters T requires
T(-f) T(f)^T = Chat(f); any such T reproduces the pseudo-covariances, but
the conjugate (physical) variance of the output, which the targets leave
free, is what the sampling error of every downstream average rides on. The
filters here minimize it: for paired slots the SVD Chat = U S V^H gives
T(-f) = U sqrt(S), T(+f) = conj(V) sqrt(S); the two self-paired slots
(f = 0 and the midpoint) take the Autonne-Takagi factor Q Q^T = Chat built
from the real symmetric embedding. Both choices realize the nuclear-norm
lower bound on the filter energy, so no embedding with smaller total
variance exists. A reconstruction residual above 1e-8 raises instead of
silently clipping.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .bath import ModeSet

RESIDUAL_TOL = 1e-8

#: labels, row/col indices into z = (eta_x, eta_y, nu_x, nu_y), and target
#: builders (lag array in radians omega*dt*j -> complex target) for every
#: monitored pseudo-covariance <z_i(0) z_j(lag)>.
_MONITORED: tuple[tuple[str, int, int], ...] = (
    ("eta_x.eta_x", 0, 0),
    ("eta_x.eta_y", 0, 1),
    ("eta_y.eta_x", 1, 0),
    ("eta_y.eta_y", 1, 1),
    ("nu_x.nu_x", 2, 2),
    ("nu_y.nu_y", 3, 3),
    ("eta_x.nu_x", 0, 2),
    ("nu_x.eta_x", 2, 0),
    ("nu_y.eta_y", 3, 1),
)


class NoiseError(RuntimeError):
    pass


class NoiseFactorizationError(NoiseError):
    """Spectral factor failed to reconstruct the covariance symbol."""


def _pair_target(i: int, j: int, theta: np.ndarray) -> np.ndarray:
    """Target <z_i(0) z_j(lag)> for nonnegative lags, theta = omega dt lag."""
    c, s = np.cos(theta), np.sin(theta)
    pos = theta > 0
    table = {
        (0, 0): 0.5 * c, (1, 1): 0.5 * c,
        (0, 1): -0.5 * s, (1, 0): 0.5 * s,
        (2, 0): -1j * s * pos, (3, 1): 1j * s * pos,
    }
    return np.asarray(table.get((i, j), np.zeros_like(theta)), dtype=complex)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def kernel_eval(omega: float, dt_lag: float) -> tuple[np.ndarray, np.ndarray]:
    """The 2x2 kernels (L, M) at one time lag."""
    th = omega * dt_lag
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s], [s, c]]), np.array([[s, 0.0], [0.0, -s]])


def build_cov_sequence(omega: float, dt: float, n_steps: int) -> np.ndarray:
    """Wrapped 4x4 pseudo-covariance blocks C_j = <z(t) z(t + j dt)^T>.

    Returns (npad, 4, 4) with npad = next power of two >= 2 n_steps; slots
    j > npad/2 hold negative lags j - npad. The midpoint slot is the average
    of its +/- lag values.
    """
    if n_steps < 1:
        raise NoiseError("n_steps must be >= 1")
    npad = next_pow2(2 * n_steps)
    j = np.arange(npad)
    tau = np.where(j <= npad // 2, j, j - npad) * dt
    th = omega * tau
    c, s = np.cos(th), np.sin(th)
    blocks = np.zeros((npad, 4, 4), dtype=complex)
    blocks[:, 0, 0] = 0.5 * c
    blocks[:, 0, 1] = -0.5 * s
    blocks[:, 1, 0] = 0.5 * s
    blocks[:, 1, 1] = 0.5 * c
    ahead = tau < 0   # eta earlier than nu: i M(tau) Theta(-tau)
    blocks[:, 0, 2] = 1j * s * ahead
    blocks[:, 1, 3] = -1j * s * ahead
    behind = tau > 0  # nu earlier than eta: i M(-tau) Theta(tau)
    blocks[:, 2, 0] = -1j * s * behind
    blocks[:, 3, 1] = 1j * s * behind
    mid = npad // 2
    blocks[mid] = 0.5 * (blocks[mid] + blocks[mid].T)
    return blocks


def _takagi_factor(c: np.ndarray) -> np.ndarray:
    """Q with Q Q^T = c for complex symmetric c, minimal Frobenius norm.

    Autonne-Takagi through the real symmetric embedding: eigenvectors of
    [[Re c, Im c], [Im c, -Re c]] at eigenvalue s >= 0 map to con-eigenvectors
    u = x + i y with c conj(u) = s u, so c = sum_s s u u^T.
    """
    n = c.shape[0]
    m = np.block([[c.real, c.imag], [c.imag, -c.real]])
    w, v = np.linalg.eigh(m)
    order = np.argsort(w)[::-1][:n]
    u = v[:n, order] + 1j * v[n:, order]
    return u * np.sqrt(np.clip(w[order], 0.0, None))


def spectral_factors(omega: float, dt: float, n_steps: int,
                     residual_tol: float = RESIDUAL_TOL) -> np.ndarray:
    """Per-frequency filter T with T(-f) T(f)^T = FFT[cov sequence](f)."""
    cov = build_cov_sequence(omega, dt, n_steps)
    npad = cov.shape[0]
    chat = np.fft.fft(cov, axis=0)
    half = np.arange(npad // 2 + 1)
    u, s, vh = np.linalg.svd(chat[half])
    root = np.sqrt(s)
    factors = np.empty_like(chat)
    factors[(-half) % npad] = u * root[:, None, :]
    factors[half] = np.swapaxes(vh, 1, 2) * root[:, None, :]
    for f in (0, npad // 2):   # self-paired slots need T(f) T(f)^T = Chat(f)
        factors[f] = _takagi_factor(chat[f])

    recon = np.einsum("fij,fkj->fik", factors[(-half) % npad], factors[half])
    scale = np.abs(chat).max()
    residual = np.abs(recon - chat[half]).max()
    if residual > residual_tol * scale:
        raise NoiseFactorizationError(
            f"factor residual {residual:.3e} exceeds {residual_tol:.1e} x {scale:.3e} "
            f"(omega={omega}, dt={dt}, npad={npad})")
    return factors


def synthesize(factors: np.ndarray, white: np.ndarray, n_steps: int) -> np.ndarray:
    """Filter white (..., npad, 4) real draws into colored (..., n_steps, 4)."""
    spec = np.fft.fft(white, axis=-2)
    spec = np.einsum("fij,...fj->...fi", factors, spec)
    return np.fft.ifft(spec, axis=-2)[..., :n_steps, :]


@dataclass(frozen=True)
class NoiseTrajectory:
    """One realization of the colored drives for every mode."""

    eta: np.ndarray       # (n_modes, n_steps, 2) complex
    nu: np.ndarray        # (n_modes, n_steps, 2) complex
    dt: float
    n_steps: int
    seed: int | None

    @property
    def n_modes(self) -> int:
        return self.eta.shape[0]

    def stacked(self) -> np.ndarray:
        """(n_modes, n_steps, 4) view-order (eta_x, eta_y, nu_x, nu_y)."""
        return np.concatenate([self.eta, self.nu], axis=-1)


def generate(modes: ModeSet, dt: float, n_steps: int,
             seed: int | np.random.SeedSequence) -> NoiseTrajectory:
    """Colored noise for every mode; deterministic in (modes, dt, n_steps, seed).

    Mode m consumes the m-th child stream of the seed, so the draw for one
    mode never depends on how many other modes exist ahead of it.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(modes.n_modes)
    npad = next_pow2(2 * n_steps)
    factor_cache: dict[float, np.ndarray] = {}
    z = np.empty((modes.n_modes, n_steps, 4), dtype=complex)
    for m in range(modes.n_modes):
        om = float(modes.omega[m])
        if om not in factor_cache:
            factor_cache[om] = spectral_factors(om, dt, n_steps)
        rng = np.random.default_rng(children[m])
        white = rng.standard_normal((npad, 4))
        z[m] = synthesize(factor_cache[om], white, n_steps)
    seed_int = seed if isinstance(seed, int) else None
    return NoiseTrajectory(eta=z[..., :2], nu=z[..., 2:], dt=dt,
                           n_steps=n_steps, seed=seed_int)


def generate_mode_ensemble(omega: float, dt: float, n_steps: int,
                           n_realizations: int,
                           seed: int | np.random.SeedSequence,
                           chunk: int = 4000) -> np.ndarray:
    """Many independent realizations of a single mode, (R, n_steps, 4)."""
    rng = np.random.default_rng(seed)
    factors = spectral_factors(omega, dt, n_steps)
    npad = factors.shape[0]
    out = np.empty((n_realizations, n_steps, 4), dtype=complex)
    done = 0
    while done < n_realizations:
        m = min(chunk, n_realizations - done)
        white = rng.standard_normal((m, npad, 4))
        out[done:done + m] = synthesize(factors, white, n_steps)
        done += m
    return out


@dataclass(frozen=True)
class CovarianceCheck:
    label: str
    lags: np.ndarray
    target: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    z: np.ndarray

    @property
    def max_z(self) -> float:
        return float(np.max(self.z))

    @property
    def max_abs_deviation(self) -> float:
        return float(np.max(np.abs(self.estimate - self.target)))


@dataclass(frozen=True)
class CovarianceReport:
    omega: float
    dt: float
    n_realizations: int
    max_lag: int
    checks: list[CovarianceCheck] = field(repr=False)

    @property
    def worst_z(self) -> float:
        return max(c.max_z for c in self.checks)

    @property
    def max_abs_deviation(self) -> float:
        return max(c.max_abs_deviation for c in self.checks)

    def passed(self, z_threshold: float = 3.0) -> bool:
        return self.worst_z < z_threshold


def validate_statistics(samples: np.ndarray, omega: float, dt: float,
                        max_lag: int = 64) -> CovarianceReport:
    """Empirical pseudo-covariances of (R, n_steps, 4) samples vs targets.

    Estimates <z_i(0) z_j(lag)> across realizations for every monitored
    pair; the error bar is the cross-realization standard error. Needs at
    least 100 realizations for the bars to mean anything.
    """
    samples = np.asarray(samples)
    if samples.ndim != 3 or samples.shape[-1] != 4:
        raise NoiseError("samples must have shape (R, n_steps, 4)")
    n_real, n_steps = samples.shape[0], samples.shape[1]
    if n_real < 100:
        raise NoiseError(f"need >= 100 realizations, got {n_real}")
    if max_lag >= n_steps:
        raise NoiseError(f"max_lag {max_lag} outside the {n_steps}-step window")

    lags = np.arange(max_lag + 1)
    theta = omega * dt * lags
    checks = []
    for label, i, j in _MONITORED:
        target = _pair_target(i, j, theta)
        prod = samples[:, 0, i][:, None] * samples[:, lags, j]
        est = prod.mean(axis=0)
        var = prod.real.var(axis=0, ddof=1) + prod.imag.var(axis=0, ddof=1)
        se = np.sqrt(var / n_real)
        diff = np.abs(est - target)
        z = np.divide(diff, se, out=np.where(diff > 0, np.inf, 0.0), where=se > 0)
        checks.append(CovarianceCheck(label=label, lags=lags, target=target,
                                      estimate=est, stderr=se, z=z))
    return CovarianceReport(omega=omega, dt=dt, n_realizations=n_real,
                            max_lag=max_lag, checks=checks)


_MAGIC = b"LBNT"
_VERSION = 1


def dump_trajectory(traj: NoiseTrajectory, path: str) -> None:
    """Little-endian binary dump.

    Layout: magic 'LBNT', <u4 version, <u4 n_modes, <u4 n_steps, <f8 dt,
    <i8 seed (-1 when unknown), then eta and nu as row-major <c16 arrays of
    shape (n_modes, n_steps, 2) each.
    """
    header = _MAGIC + struct.pack("<IIId", _VERSION, traj.n_modes,
                                  traj.n_steps, traj.dt)
    header += struct.pack("<q", -1 if traj.seed is None else traj.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(traj.eta, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(traj.nu, dtype="<c16").tobytes())


def load_trajectory(path: str) -> NoiseTrajectory:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise NoiseError(f"{path}: not a noise trajectory dump")
        version, n_modes, n_steps = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise NoiseError(f"{path}: unsupported version {version}")
        dt, = struct.unpack("<d", fh.read(8))
        seed, = struct.unpack("<q", fh.read(8))
        count = n_modes * n_steps * 2
        eta = np.fromfile(fh, dtype="<c16", count=count).reshape(n_modes, n_steps, 2)
        nu = np.fromfile(fh, dtype="<c16", count=count).reshape(n_modes, n_steps, 2)
    return NoiseTrajectory(eta=eta.astype(complex), nu=nu.astype(complex),
                           dt=dt, n_steps=n_steps, seed=None if seed == -1 else seed)
