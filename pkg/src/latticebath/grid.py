"""Periodic square simulation box and its Fourier bookkeeping.

Fields are (n, n) arrays indexed [ix, iy] with positions x_i = i * dx,
dx = length / n, so axis 0 is x. A plane-wave sum
sum_k c_k exp(i k . r) over the discrete wavevectors k = (2 pi / length) *
(nx, ny) is evaluated as n^2 * ifft2(C) where C holds c_k at slot
(nx mod n, ny mod n).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import pi

import numpy as np


class GridError(ValueError):
    """Invalid box discretization."""


@dataclass(frozen=True)
class Grid2D:
    n: int
    length: float  # nm

    def __post_init__(self) -> None:
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"n must be a power of two >= 4, got {self.n}")
        if not self.length > 0.0:
            raise GridError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def k_nyquist(self) -> float:
        """Largest resolved wavenumber magnitude along an axis, pi n / L."""
        return pi * self.n / self.length

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def x_centered(self) -> np.ndarray:
        """Coordinates relative to the box center, in [-L/2, L/2)."""
        return self.x - 0.5 * self.length

    @cached_property
    def k(self) -> np.ndarray:
        """Wavenumbers along one axis in FFT slot order."""
        return 2.0 * pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def k2(self) -> np.ndarray:
        """(n, n) array of |k|^2 in FFT slot order, axis 0 = kx."""
        return self.k[:, None] ** 2 + self.k[None, :] ** 2

    def slot(self, nx: int, ny: int) -> tuple[int, int]:
        """FFT slot of the wavevector with integer indices (nx, ny)."""
        return nx % self.n, ny % self.n
