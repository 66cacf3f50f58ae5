"""Wavefunction container and every observable the analysis relies on.

Mass, the four-part energy, gradient norm, variance of the position
density and its growth rate, plus spectral diagnostics.  All derivatives
are spectral so that what the propagator conserves exactly is what these
functions measure.

An evolution is summarized by an ObservableSeries, one record per
sampling time, which serializes to CSV with the fixed header

    t,mass,E,Ekin,Epot,Ecubic,Edip,y,ydot,maxpsi,gradsq

written in full round-trip precision (17 significant digits).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dataclass_field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import fft as _fft

from .grid import GridError, SpectralGrid
from .kernel import KernelSymbol, apply_kernel

_WORKERS = -1

CSV_HEADER = "t,mass,E,Ekin,Epot,Ecubic,Edip,y,ydot,maxpsi,gradsq"


@dataclass(eq=False)
class PhysicalParams:
    """Trap frequencies and coupling constants.

    omega are the per-axis harmonic trap frequencies (nonnegative; zero
    means untrapped along that axis), lambda1 the contact coupling and
    lambda2 the dipolar coupling.  The dipole axis is fixed to the last
    coordinate axis by convention.
    """

    dim: int
    omega: tuple[float, ...]
    lambda1: float
    lambda2: float

    def __post_init__(self) -> None:
        self.omega = tuple(float(w) for w in self.omega)
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.omega) != self.dim:
            raise ValueError(
                f"expected {self.dim} trap frequencies, got {len(self.omega)}"
            )
        for w in self.omega:
            if w < 0.0 or not math.isfinite(w):
                raise ValueError(f"trap frequencies must be nonnegative, got {w}")
        self.lambda1 = float(self.lambda1)
        self.lambda2 = float(self.lambda2)

    @cached_property
    def omega_min(self) -> float:
        return min(self.omega)

    def in_stable_regime(self) -> bool:
        """lambda1 >= (4 pi / 3) lambda2 >= 0, the global-existence cone."""
        return self.lambda2 >= 0.0 and self.lambda1 >= (4.0 * math.pi / 3.0) * self.lambda2

    def potential(self, grid: SpectralGrid) -> np.ndarray:
        """Harmonic trap 0.5 * sum_j omega_j^2 x_j^2 on the full lattice."""
        if grid.dim != self.dim:
            raise GridError(
                f"params are {self.dim}-dimensional but grid is {grid.dim}-dimensional"
            )
        out = np.zeros(grid.shape)
        for w, c in zip(self.omega, grid.coord_mesh):
            out = out + (0.5 * w * w) * (c * c)
        return out


@dataclass(eq=False)
class WaveField:
    """Complex field sampled on a grid at one instant."""

    values: np.ndarray
    grid: SpectralGrid
    t: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=complex)
        self.grid._check_shape(self.values)

    def validate_finite(self) -> None:
        if not np.all(np.isfinite(self.values.view(float))):
            raise ValueError("field contains non-finite values")

    def copy(self) -> "WaveField":
        return WaveField(values=self.values.copy(), grid=self.grid, t=self.t)

    def spectrum(self) -> np.ndarray:
        """Continuum-normalized Fourier coefficients (FFT order)."""
        return self.grid.forward_transform(self.values)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    cubic: float
    dipolar: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.cubic + self.dipolar


def density(field: WaveField) -> np.ndarray:
    values = field.values
    return (values.real * values.real + values.imag * values.imag)


def mass(field: WaveField) -> float:
    return float(np.sum(density(field))) * field.grid.cell_volume


def max_abs(field: WaveField) -> float:
    return float(np.sqrt(density(field).max()))


def gradient_norm_sq(field: WaveField) -> float:
    """Squared L2 norm of the spectral gradient."""
    grid = field.grid
    spec_sq = np.abs(_fft.fftn(field.values, workers=_WORKERS)) ** 2
    return float(np.sum(grid.ksq * spec_sq)) * grid.cell_volume / grid.size


def quartic_norm(field: WaveField) -> float:
    """Integral of |psi|^4 evaluated in physical space."""
    rho = density(field)
    return float(np.sum(rho * rho)) * field.grid.cell_volume


def quartic_norm_spectral(field: WaveField) -> float:
    """Integral of |psi|^4 via the squared spectrum of the density.

    Equals quartic_norm by the discrete Plancherel identity; kept as an
    independent route for cross-checks.
    """
    grid = field.grid
    rho_spec = _fft.fftn(density(field), workers=_WORKERS)
    return float(np.sum(np.abs(rho_spec) ** 2)) * grid.cell_volume / grid.size


def energy(
    field: WaveField,
    params: PhysicalParams,
    symbol: "KernelSymbol | None" = None,
    potential_mesh: "np.ndarray | None" = None,
) -> EnergyBreakdown:
    """Four-part energy of a field.

    The kinetic part is spectral, the trap and contact parts are lattice
    sums, and the dipolar part pairs the density against the convolved
    potential.  A symbol is required whenever lambda2 is nonzero.
    potential_mesh may pass a precomputed trap to avoid rebuilding it in
    sampling loops.
    """
    grid = field.grid
    dv = grid.cell_volume
    rho = density(field)

    kinetic = 0.5 * gradient_norm_sq(field)
    if potential_mesh is None:
        potential_mesh = params.potential(grid)
    potential = float(np.sum(potential_mesh * rho)) * dv
    cubic = 0.5 * params.lambda1 * float(np.sum(rho * rho)) * dv
    if params.lambda2 == 0.0:
        dipolar = 0.0
    else:
        if symbol is None:
            raise ValueError("a kernel symbol is required when lambda2 != 0")
        grid._check_shape(symbol.values)
        phi = apply_kernel(symbol, rho)
        dipolar = 0.5 * params.lambda2 * float(np.sum(phi * rho)) * dv
    return EnergyBreakdown(
        kinetic=kinetic, potential=potential, cubic=cubic, dipolar=dipolar
    )


def variance_and_rate(field: WaveField) -> tuple[float, float]:
    """Position variance y = int |x|^2 |psi|^2 and its time derivative.

    The rate uses the standard identity dy/dt = 2 Im int conj(psi)
    (x . grad psi); the gradient is spectral.
    """
    grid = field.grid
    dv = grid.cell_volume
    rho = density(field)
    y = float(np.sum(grid.radius_sq * rho)) * dv

    spec = _fft.fftn(field.values, workers=_WORKERS)
    acc = 0.0
    for axis in range(grid.dim):
        freq = grid.freq_mesh[axis]
        coord = grid.coord_mesh[axis]
        dpsi = _fft.ifftn(1j * freq * spec, workers=_WORKERS)
        acc += float(np.sum((np.conj(field.values) * coord * dpsi).imag))
    ydot = 2.0 * acc * dv
    return y, ydot


def spectral_tail_fraction(field: WaveField) -> float:
    """Fraction of spectral mass in the top frequency octave."""
    grid = field.grid
    spec_sq = np.abs(_fft.fftn(field.values, workers=_WORKERS)) ** 2
    total = float(np.sum(spec_sq))
    if total == 0.0:
        return 0.0
    return float(np.sum(spec_sq[grid.top_octave_mask])) / total


def field_std(field: WaveField) -> tuple[float, ...]:
    """Per-axis standard deviation of the position density."""
    grid = field.grid
    rho = density(field)
    total = float(np.sum(rho))
    if total == 0.0:
        return tuple(0.0 for _ in range(grid.dim))
    out = []
    for axis in range(grid.dim):
        coord = grid.coord_mesh[axis]
        mean = float(np.sum(coord * rho)) / total
        var = float(np.sum((coord - mean) ** 2 * rho)) / total
        out.append(math.sqrt(max(var, 0.0)))
    return tuple(out)


def check_resolution(field: WaveField, tail_warn: float = 1e-6) -> None:
    """Warn when the box or the lattice look too small for the state.

    The box should span at least 8 standard deviations per axis so the
    periodic images stay negligible, and no more than tail_warn of the
    spectral mass should sit in the top frequency octave.
    """
    grid = field.grid
    sigma = field_std(field)
    for axis, (L, s) in enumerate(zip(grid.extents, sigma)):
        if s > 0.0 and L < 8.0 * s:
            warnings.warn(
                f"box extent {L:g} on axis {axis} is below 8 standard deviations "
                f"({8.0 * s:g}); periodic truncation error may be significant",
                RuntimeWarning,
                stacklevel=2,
            )
    tail = spectral_tail_fraction(field)
    if tail > tail_warn:
        warnings.warn(
            f"spectral tail fraction {tail:.3e} exceeds {tail_warn:g}; "
            "the state is marginally resolved",
            RuntimeWarning,
            stacklevel=2,
        )


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    mass: float
    E: float
    Ekin: float
    Epot: float
    Ecubic: float
    Edip: float
    y: float
    ydot: float
    maxpsi: float
    gradsq: float

    def __post_init__(self) -> None:
        parts = self.Ekin + self.Epot + self.Ecubic + self.Edip
        scale = max(abs(self.E), abs(parts), 1e-300)
        if abs(self.E - parts) > 1e-12 * scale:
            raise ValueError(
                f"energy parts sum to {parts!r} but total is {self.E!r}"
            )


def record_observables(
    field: WaveField,
    params: PhysicalParams,
    symbol: "KernelSymbol | None" = None,
    potential_mesh: "np.ndarray | None" = None,
) -> ObservableRecord:
    e = energy(field, params, symbol, potential_mesh=potential_mesh)
    y, ydot = variance_and_rate(field)
    return ObservableRecord(
        t=field.t,
        mass=mass(field),
        E=e.total,
        Ekin=e.kinetic,
        Epot=e.potential,
        Ecubic=e.cubic,
        Edip=e.dipolar,
        y=y,
        ydot=ydot,
        maxpsi=max_abs(field),
        gradsq=2.0 * e.kinetic,
    )


@dataclass
class ObservableSeries:
    records: list[ObservableRecord] = dataclass_field(default_factory=list)

    def append(self, record: ObservableRecord) -> None:
        if self.records and record.t <= self.records[-1].t:
            raise ValueError(
                f"record times must increase strictly: {record.t} after {self.records[-1].t}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path: "str | Path") -> None:
        lines = [CSV_HEADER]
        for r in self.records:
            lines.append(
                ",".join(
                    "%.17g" % getattr(r, name) for name in CSV_HEADER.split(",")
                )
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: "str | Path") -> "ObservableSeries":
        text = Path(path).read_text().strip().splitlines()
        if not text or text[0].strip() != CSV_HEADER:
            raise ValueError(f"unrecognized series header in {path}")
        series = cls()
        names = CSV_HEADER.split(",")
        for line in text[1:]:
            fields = line.split(",")
            if len(fields) != len(names):
                raise ValueError(f"malformed series row: {line!r}")
            series.append(
                ObservableRecord(**{n: float(v) for n, v in zip(names, fields)})
            )
        return series
