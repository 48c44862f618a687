"""Golden-rule momentum relaxation rates for a degenerate 2D carrier gas.

Independent analytic benchmark for the wavepacket simulations: the
directional scattering rate off acoustic phonons, thermally averaged over
the Fermi sea,

    1/tau = beta C sum_br int_0^qmax dq q^2 s_br W_br(q) J_br(q),
    C = E_d^2 / (2 pi rho2d vs),
    J_br(q) = int_{k0}^inf dk f(eps)(1 - f(eps +- w_q)) / (k sqrt(k^2 - s^2)),

with signed s = q/2 - m vs (absorption, occupation weight N_q) and
s = q/2 + m vs (emission, weight N_q + 1, or N_q in the mean-field
variant that lacks spontaneous emission). The signed absorption numerator
is physical: absorbing a forward-moving phonon with q < 2 m vs ADDS
forward momentum. Final-state Pauli blocking f(eps)(1 - f(eps +- w))
suppresses spontaneous emission at low temperature; a free wavepacket has
no Fermi sea, so comparisons against the simulated decay should use
q_max equal to the simulation's mode cutoff and expect the blocked rate
to sit slightly below the observed one.

The inverse-square-root endpoint of the k integral is removed exactly by
k = k0 cosh(u); the u integral is panelized around the Fermi crossing so
the sech^2-narrow thermal layer stays resolved at any temperature. Rates
are evaluated at two quadrature orders and the difference is reported as
the error estimate; disagreement beyond tolerance raises QuadratureError
naming the worst q panel.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Final, Iterable, Literal, Sequence

import numpy as np

from .materials import (
    FS_PER_INTERNAL_TIME,
    KB_EV_PER_K,
    Material,
    MaterialError,
    derive_parameters,
)

__all__ = [
    "QuadratureError",
    "RateResult",
    "SweepRow",
    "rate_full",
    "rate_meanfield",
    "rate_sweep",
    "analytic_kernel",
    "brute_force_kernel",
]

Variant = Literal["full", "mean_field"]
Branch = Literal["absorption", "emission"]

# Fermi-layer panel edges in units of kT around the chemical potential.
_LAYER_EDGES: Final[tuple[float, ...]] = (-40.0, -10.0, -3.0, 0.0, 3.0, 10.0, 40.0)
_N_Q_PANELS: Final[int] = 8
_CONVERGENCE_BOUND: Final[float] = 1e-3


class QuadratureError(RuntimeError):
    """Rate quadrature failed its self-convergence check."""


@dataclass(frozen=True)
class RateResult:
    """One evaluated rate: inverse relaxation time in fs^-1."""

    inv_tau_per_fs: float
    variant: Variant
    temperature_K: float
    err_rel: float

    def __post_init__(self) -> None:
        if self.inv_tau_per_fs < 0.0:
            raise QuadratureError(
                f"negative rate {self.inv_tau_per_fs} at T={self.temperature_K} K"
            )


@dataclass(frozen=True)
class SweepRow:
    """Full/mean-field pair at one temperature, plus their ratio."""

    temperature_K: float
    inv_tau_full_per_fs: float
    inv_tau_mf_per_fs: float
    ratio: float                 # (1/tau_mf) / (1/tau_full) = tau_full/tau_mf <= 1
    err_est: float


def _occupation(omega: np.ndarray, beta: float) -> np.ndarray:
    return 1.0 / np.expm1(np.clip(beta * omega, 1e-300, 700.0))


def _fermi(eps_minus_mu: np.ndarray, beta: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(np.clip(beta * eps_minus_mu, -350.0, 350.0)))


def _branch_q_integrand(
    q: np.ndarray,
    branch: Branch,
    variant: Variant,
    material_scales: tuple[float, float, float],
    beta: float,
    n_u: int,
) -> np.ndarray:
    """q^2 s W(q) J(q) for one branch, vectorized over q."""
    m, vs, e_f = material_scales
    omega = vs * q
    if branch == "absorption":
        s = q / 2.0 - m * vs
        weight = _occupation(omega, beta)
        shift = omega          # final state eps + w
    else:
        s = q / 2.0 + m * vs
        weight = _occupation(omega, beta)
        if variant == "full":
            weight = weight + 1.0
        shift = -omega         # final state eps - w
    k0 = np.abs(s)

    # u range: integrand dies once f(eps) < 1e-12, i.e. eps > mu + ~27.6 kT;
    # pad for the blocking shift.
    eps_hi = e_f + 40.0 / beta + np.max(omega)
    k_hi = np.sqrt(2.0 * m * eps_hi)
    safe_k0 = np.maximum(k0, 1e-12)
    u_max = np.arccosh(np.maximum(k_hi / safe_k0, 1.0 + 1e-12))

    # Panel edges where eps(k) crosses mu + c kT, monotone in c.
    edge_eps = e_f + np.array(_LAYER_EDGES) / beta
    edge_k = np.sqrt(np.clip(2.0 * m * edge_eps, 0.0, None))
    ratio = edge_k[None, :] / safe_k0[:, None]
    edge_u = np.arccosh(np.clip(ratio, 1.0, None))
    edge_u = np.clip(edge_u, 0.0, u_max[:, None])
    edges = np.concatenate(
        [np.zeros((q.size, 1)), edge_u, u_max[:, None]], axis=1
    )                                           # (nq, n_edges), sorted per row

    nodes, node_w = np.polynomial.legendre.leggauss(n_u)
    j_val = np.zeros_like(q)
    for left, right in zip(edges.T[:-1], edges.T[1:]):
        half = 0.5 * (right - left)             # (nq,), zero-width panels drop out
        u = left[:, None] + half[:, None] * (nodes[None, :] + 1.0)
        k = safe_k0[:, None] * np.cosh(u)
        eps = k * k / (2.0 * m)
        block = _fermi(eps - e_f, beta) * (1.0 - _fermi(eps + shift[:, None] - e_f, beta))
        j_val += half * np.sum(block / np.cosh(u) * node_w[None, :], axis=1)
    j_val /= safe_k0
    return q * q * s * weight * j_val


def _rate_ev(
    material: Material,
    temperature_K: float,
    variant: Variant,
    q_max: float | None,
    n_q: int,
    n_u: int,
) -> tuple[float, np.ndarray]:
    """Rate in eV along with the per-q-panel contributions."""
    if temperature_K <= 0.0:
        raise MaterialError("rate quadrature requires T > 0")
    der = derive_parameters(material)
    if q_max is None:
        q_max = der.q_debye
    if not 0.0 < q_max <= der.q_debye * (1.0 + 1e-12):
        raise MaterialError(f"q_max must lie in (0, q_debye], got {q_max}")
    beta = 1.0 / (KB_EV_PER_K * temperature_K)
    scales = (der.mass, der.hbar_v_s, der.e_fermi)
    prefactor = beta * material.E_d_eV**2 / (2.0 * np.pi * der.rho2d * der.hbar_v_s)

    nodes, node_w = np.polynomial.legendre.leggauss(n_q)
    bounds = np.linspace(0.0, q_max, _N_Q_PANELS + 1)
    panels = np.zeros(_N_Q_PANELS)
    for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        half = 0.5 * (b - a)
        q = a + half * (nodes + 1.0)
        total = np.zeros_like(q)
        for branch in ("absorption", "emission"):
            total += _branch_q_integrand(q, branch, variant, scales, beta, n_u)
        panels[i] = half * np.sum(node_w * total)
    return prefactor * float(np.sum(panels)), prefactor * panels


def _rate(
    material: Material,
    temperature_K: float,
    variant: Variant,
    q_max: float | None = None,
    n_q: int = 48,
    n_u: int = 48,
) -> RateResult:
    value, panels = _rate_ev(material, temperature_K, variant, q_max, n_q, n_u)
    check, panels_lo = _rate_ev(
        material, temperature_K, variant, q_max, n_q // 2, n_u // 2
    )
    scale = max(abs(value), 1e-300)
    err_rel = abs(value - check) / scale
    if err_rel > _CONVERGENCE_BOUND:
        worst = int(np.argmax(np.abs(panels - panels_lo)))
        der = derive_parameters(material)
        top = q_max if q_max is not None else der.q_debye
        width = top / _N_Q_PANELS
        raise QuadratureError(
            f"rate quadrature not converged (rel diff {err_rel:.2e}); worst q panel "
            f"[{worst * width:.3f}, {(worst + 1) * width:.3f}] nm^-1 at "
            f"T={temperature_K} K"
        )
    return RateResult(
        inv_tau_per_fs=value / FS_PER_INTERNAL_TIME,
        variant=variant,
        temperature_K=temperature_K,
        err_rel=err_rel,
    )


def rate_full(
    material: Material,
    temperature_K: float,
    q_max: float | None = None,
    n_q: int = 48,
    n_u: int = 48,
) -> RateResult:
    """Momentum relaxation rate with spontaneous emission included."""
    return _rate(material, temperature_K, "full", q_max, n_q, n_u)


def rate_meanfield(
    material: Material,
    temperature_K: float,
    q_max: float | None = None,
    n_q: int = 48,
    n_u: int = 48,
) -> RateResult:
    """Momentum relaxation rate with the emission weight N_q + 1 -> N_q.

    Models a carrier that only scatters off the thermally occupied field:
    the rate vanishes as T -> 0.
    """
    return _rate(material, temperature_K, "mean_field", q_max, n_q, n_u)


def rate_sweep(
    material: Material,
    temperatures_K: Sequence[float] | Iterable[float],
    q_max: float | None = None,
    max_workers: int = 1,
) -> list[SweepRow]:
    """Full and mean-field rates over a temperature list, order-preserving."""
    temps = [float(t) for t in temperatures_K]

    def one(t: float) -> SweepRow:
        full = rate_full(material, t, q_max)
        mf = rate_meanfield(material, t, q_max)
        # zero coupling gives 0/0; the ratio is then undefined, not 1
        ratio = (mf.inv_tau_per_fs / full.inv_tau_per_fs
                 if full.inv_tau_per_fs > 0.0 else math.nan)
        return SweepRow(
            temperature_K=t,
            inv_tau_full_per_fs=full.inv_tau_per_fs,
            inv_tau_mf_per_fs=mf.inv_tau_per_fs,
            ratio=ratio,
            err_est=max(full.err_rel, mf.err_rel),
        )

    if max_workers > 1 and len(temps) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, temps))
    return [one(t) for t in temps]


def _kernel_pieces(
    material: Material,
    temperature_K: float,
    q: float,
    k: float | None,
    branch: Branch,
) -> tuple[float, float, float, float, float, float]:
    der = derive_parameters(material)
    m, vs = der.mass, der.hbar_v_s
    if k is None:
        k = der.k_fermi
    if q <= 0.0 or k <= 0.0:
        raise MaterialError("kernel needs q > 0 and k > 0")
    beta = 1.0 / (KB_EV_PER_K * temperature_K)
    omega = vs * q
    if branch == "absorption":
        s = q / 2.0 - m * vs
        weight = float(_occupation(np.array(omega), beta))
        shift = omega
    else:
        s = q / 2.0 + m * vs
        weight = float(_occupation(np.array(omega), beta)) + 1.0
        shift = -omega
    eps = k * k / (2.0 * m)
    block = float(
        _fermi(np.array(eps - der.e_fermi), beta)
        * (1.0 - _fermi(np.array(eps + shift - der.e_fermi), beta))
    )
    return k, s, omega, weight, block, m


def analytic_kernel(
    material: Material,
    temperature_K: float,
    q: float,
    k: float | None = None,
    branch: Branch = "emission",
) -> float:
    """Angle-reduced directional kernel at fixed carrier momentum.

    Value of int dtheta (-(k.q)/k^2) delta(eps(k+q) - eps(k) -+ w) times the
    occupation and blocking weights: 2 m s W block / (k^2 sqrt(k^2 - s^2)),
    zero when the branch is kinematically closed (|s| >= k).
    """
    k, s, _, weight, block, m = _kernel_pieces(material, temperature_K, q, k, branch)
    if abs(s) >= k:
        return 0.0
    return 2.0 * m * s * weight * block / (k * k * np.sqrt(k * k - s * s))


def brute_force_kernel(
    material: Material,
    temperature_K: float,
    q: float,
    k: float | None = None,
    branch: Branch = "emission",
    eta: float = 2e-4,
    n_theta: int = 400_001,
) -> float:
    """Same kernel by direct angular quadrature of a Lorentzian delta.

    Trapezoid over theta with width-eta and width-eta/2 Lorentzians,
    Richardson-extrapolated to zero width. Exists solely to validate the
    angle reduction in analytic_kernel; production rates never broaden.
    """
    k, s, omega, weight, block, m = _kernel_pieces(
        material, temperature_K, q, k, branch
    )
    sign = 1.0 if branch == "absorption" else -1.0
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta)
    # carrier along x: (k.q)/k^2 = q cos(theta)/k for |q| at angle theta
    delta_arg = (q * q + 2.0 * k * q * np.cos(theta)) / (2.0 * m) - sign * omega

    def broadened(width: float) -> float:
        lorentz = width / np.pi / (delta_arg**2 + width**2)
        vals = -(q * np.cos(theta) / k) * lorentz
        return float(np.trapezoid(vals, theta))

    coarse = broadened(eta)
    fine = broadened(eta / 2.0)
    return (2.0 * fine - coarse) * weight * block
