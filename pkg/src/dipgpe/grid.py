"""Uniform periodic lattices and the discrete Fourier transform contract.

Everything downstream lives on a tensor-product lattice over the box
``prod_j [-L_j/2, L_j/2)`` with an even number of points per axis.  The
point with index ``i`` along axis ``j`` is ``x_i = -L_j/2 + i*dx_j`` and
the matching angular frequencies are ``xi_k = 2*pi*k/L_j`` for signed
integers ``k`` in ``{-N_j/2, ..., N_j/2 - 1}``, stored in FFT order.

``forward_transform`` and ``inverse_transform`` approximate the continuum
pair

    u_hat(xi) = integral u(x) exp(-i x.xi) dx,
    u(x)     = (2*pi)^(-d) integral u_hat(xi) exp(i x.xi) dxi,

by the trapezoidal rule on the lattice: ``u_hat = dx^d * S * fftn(u)``
and ``u = ifftn(u_hat * S) / dx^d``.  The sign lattice ``S`` accounts for
the box being centred at the origin while ``fftn`` assumes samples
starting at index 0; since the point counts are even, the parity of the
signed frequency integer equals the parity of the raw array index, so a
single per-axis ``(-1)**index`` vector serves both orderings.

Pointwise Fourier multipliers need neither the sign lattice nor the
volume factors (they cancel between the two directions), so operator
application elsewhere in the package is plain ``ifftn(m * fftn(u))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import fft as _fft

# scipy.fft delegates to pocketfft, whose output is bit-identical for any
# worker count, so parallel transforms are safe under the determinism
# requirement.
_WORKERS = -1


class GridError(ValueError):
    """Raised for invalid grid construction or mismatched field shapes."""


@dataclass(eq=False)
class SpectralGrid:
    """Tensor-product lattice with cached coordinate and frequency meshes.

    Instances are immutable by convention: nothing in the package mutates
    a grid after ``make_grid`` returns it, and cached meshes are shared
    freely across threads.
    """

    dim: int
    extents: tuple[float, ...]
    shape: tuple[int, ...]

    @property
    def steps(self) -> tuple[float, ...]:
        """Lattice spacing per axis, dx_j = L_j / N_j."""
        return tuple(L / n for L, n in zip(self.extents, self.shape))

    @property
    def freq_steps(self) -> tuple[float, ...]:
        """Frequency spacing per axis, 2*pi / L_j."""
        return tuple(2.0 * math.pi / L for L in self.extents)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.steps)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """1d coordinate arrays, x_i = -L/2 + i*dx per axis."""
        return [
            -L / 2.0 + (L / n) * np.arange(n) for L, n in zip(self.extents, self.shape)
        ]

    @cached_property
    def freqs(self) -> list[np.ndarray]:
        """1d angular-frequency arrays in FFT order."""
        return [
            2.0 * np.pi * _fft.fftfreq(n, d=L / n)
            for L, n in zip(self.extents, self.shape)
        ]

    @cached_property
    def coord_mesh(self) -> list[np.ndarray]:
        """Broadcastable (sparse) coordinate meshes."""
        return list(np.meshgrid(*self.coords, indexing="ij", sparse=True))

    @cached_property
    def freq_mesh(self) -> list[np.ndarray]:
        """Broadcastable (sparse) frequency meshes in FFT order."""
        return list(np.meshgrid(*self.freqs, indexing="ij", sparse=True))

    @cached_property
    def ksq(self) -> np.ndarray:
        """|xi|^2 on the full frequency lattice (FFT order)."""
        out = np.zeros(self.shape)
        for f in self.freq_mesh:
            out = out + f * f
        return out

    @cached_property
    def radius_sq(self) -> np.ndarray:
        """|x|^2 on the full coordinate lattice."""
        out = np.zeros(self.shape)
        for c in self.coord_mesh:
            out = out + c * c
        return out

    @cached_property
    def sign_mesh(self) -> np.ndarray:
        """Centre-shift signs (-1)^(i_1 + ... + i_d) on the full lattice."""
        out = np.ones(self.shape)
        for axis, n in enumerate(self.shape):
            s = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
            out = out * s.reshape([-1 if a == axis else 1 for a in range(self.dim)])
        return out

    @cached_property
    def top_octave_mask(self) -> np.ndarray:
        """Modes with |k_j| >= N_j/4 on at least one axis (FFT order).

        The complement is the "safe" band; spectral mass migrating into
        this mask is the collapse / under-resolution indicator.
        """
        mask = np.zeros(self.shape, dtype=bool)
        for axis, n in enumerate(self.shape):
            k = np.rint(_fft.fftfreq(n) * n).astype(int)
            axis_mask = np.abs(k) >= n // 4
            mask |= axis_mask.reshape(
                [-1 if a == axis else 1 for a in range(self.dim)]
            )
        return mask

    # -- transforms ---------------------------------------------------

    def fftn(self, u: np.ndarray) -> np.ndarray:
        """Raw unnormalized FFT (for multiplier application)."""
        return _fft.fftn(u, workers=_WORKERS)

    def ifftn(self, u: np.ndarray) -> np.ndarray:
        """Raw inverse FFT, including the 1/N factor."""
        return _fft.ifftn(u, workers=_WORKERS)

    def forward_transform(self, u: np.ndarray) -> np.ndarray:
        """Continuum-normalized forward transform on the frequency lattice.

        Returns u_hat with u_hat[k] ~ integral u(x) exp(-i x.xi_k) dx,
        in FFT order.
        """
        self._check_shape(u)
        return self.cell_volume * (self.sign_mesh * _fft.fftn(u, workers=_WORKERS))

    def inverse_transform(self, u_hat: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`forward_transform`."""
        self._check_shape(u_hat)
        return _fft.ifftn(u_hat * self.sign_mesh, workers=_WORKERS) / self.cell_volume

    def _check_shape(self, u: np.ndarray) -> None:
        if tuple(u.shape) != self.shape:
            raise GridError(
                f"field shape {tuple(u.shape)} does not match grid shape {self.shape}"
            )


def make_grid(
    dim: int,
    extents: Sequence[float],
    points: Sequence[int],
) -> SpectralGrid:
    """Validate and build a :class:`SpectralGrid`.

    ``extents`` are the box lengths L_j (the box is [-L_j/2, L_j/2)) and
    ``points`` the per-axis point counts, which must be even and at
    least 8 so the top-octave diagnostics are meaningful.
    """
    if dim not in (1, 2, 3):
        raise GridError(f"dim must be 1, 2 or 3, got {dim}")
    extents = tuple(float(L) for L in extents)
    points = tuple(int(n) for n in points)
    if len(extents) != dim or len(points) != dim:
        raise GridError(
            f"expected {dim} extents and {dim} point counts, "
            f"got {len(extents)} and {len(points)}"
        )
    for L in extents:
        if not (L > 0.0) or not math.isfinite(L):
            raise GridError(f"extents must be positive finite reals, got {L}")
    for n in points:
        if n < 8 or n % 2 != 0:
            raise GridError(f"point counts must be even and >= 8, got {n}")
    return SpectralGrid(dim=dim, extents=extents, shape=points)
