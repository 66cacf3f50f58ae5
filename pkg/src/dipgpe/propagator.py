"""Strang-splitting time integrator with collapse-aware termination.

One step is A(dt/2) B(dt) A(dt/2): A is the exact kinetic flow, a
frequency-space phase exp(-i dt |xi|^2 / 4) for a half step, and B is
the exact potential-plus-nonlinear flow, a physical-space phase
exp(-i dt (V + lambda1 rho + lambda2 K*rho)) evaluated once from the
entering density, which pure phase multiplication leaves invariant.
Both substeps preserve the pointwise modulus or the spectral modulus,
so mass is conserved to roundoff and the step is time-symmetric.

Across consecutive steps the two adjacent kinetic half-steps fuse into
one full step, so the integrator carries the pre-B state and only
materializes the physical field at sampling times.

Blow-up cannot be followed on a fixed lattice.  The monitor reports
under-resolution consistent with collapse when the gradient norm or the
top-octave spectral fraction crosses its threshold, and the run ends
with a CollapseReport instead of an exception.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import fft as _fft

from .grid import GridError, SpectralGrid, make_grid
from .kernel import KernelSymbol, _apply_symbol_real
from .state import (
    ObservableSeries,
    PhysicalParams,
    WaveField,
    density,
    gradient_norm_sq,
    record_observables,
    spectral_tail_fraction,
    check_resolution,
)

_WORKERS = -1


class NonFiniteStateError(ArithmeticError):
    """The field left the representable range (overflow or nan)."""

    def __init__(self, message: str, t: float, step: int) -> None:
        super().__init__(message)
        self.t = t
        self.step = step


@dataclass(frozen=True)
class MonitorSpec:
    """Sampling stride and collapse thresholds for evolve.

    grad_threshold overrides the default grad_factor * (initial gradient
    norm squared) when set.  spectral_tail is the top-octave mass
    fraction above which the state counts as under-resolved.
    """

    stride: int = 10
    grad_factor: float = 1e4
    grad_threshold: "float | None" = None
    spectral_tail: float = 1e-3

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError("stride must be a positive integer")


@dataclass(frozen=True)
class CollapseReport:
    """Terminal record of a run stopped by the collapse monitor."""

    t_stop: float
    step: int
    reason: str
    grad_sq: float
    tail_fraction: float
    field: WaveField

    def describe(self) -> str:
        return (
            f"under-resolution consistent with collapse at t = {self.t_stop:.6g} "
            f"(step {self.step}, {self.reason}: grad_sq = {self.grad_sq:.6g}, "
            f"top-octave fraction = {self.tail_fraction:.3e})"
        )


def linear_eigenstate(grid: SpectralGrid, omega: Sequence[float]) -> tuple[WaveField, float]:
    """Ground state of the linear trapped problem and its frequency.

    Product Gaussian with per-axis width 1/sqrt(omega_j), renormalized
    to unit lattice mass; the frequency is sum(omega_j) / 2.
    """
    omega = tuple(float(w) for w in omega)
    if len(omega) != grid.dim:
        raise GridError(
            f"expected {grid.dim} trap frequencies, got {len(omega)}"
        )
    if any(w <= 0.0 for w in omega):
        raise ValueError("linear eigenstate requires all trap frequencies positive")
    values = np.ones(grid.shape, dtype=complex)
    for w, c in zip(omega, grid.coord_mesh):
        values = values * ((w / math.pi) ** 0.25 * np.exp(-0.5 * w * c * c))
    norm_sq = float(np.sum(values.real**2 + values.imag**2)) * grid.cell_volume
    values /= math.sqrt(norm_sq)
    mu = 0.5 * sum(omega)
    return WaveField(values=values, grid=grid, t=0.0), mu


def _nonlinear_phase(
    values: np.ndarray,
    dt: float,
    params: PhysicalParams,
    symbol: "KernelSymbol | None",
    potential_mesh: np.ndarray,
) -> np.ndarray:
    """Apply the exact potential-plus-nonlinear substep to values."""
    rho = values.real * values.real + values.imag * values.imag
    phase = potential_mesh + params.lambda1 * rho
    if params.lambda2 != 0.0:
        if symbol is None:
            raise ValueError("a kernel symbol is required when lambda2 != 0")
        phase = phase + params.lambda2 * _apply_symbol_real(symbol, rho)
    return values * np.exp(-1j * dt * phase)


def strang_step(
    field: WaveField,
    dt: float,
    params: PhysicalParams,
    symbol: "KernelSymbol | None" = None,
    potential_mesh: "np.ndarray | None" = None,
) -> WaveField:
    """One splitting step; dt may be negative to run backwards."""
    if dt == 0.0:
        raise ValueError("dt must be nonzero")
    grid = field.grid
    if potential_mesh is None:
        potential_mesh = params.potential(grid)
    khalf = np.exp(-0.25j * dt * grid.ksq)
    spec = _fft.fftn(field.values, workers=_WORKERS)
    spec *= khalf
    mid = _fft.ifftn(spec, workers=_WORKERS)
    mid = _nonlinear_phase(mid, dt, params, symbol, potential_mesh)
    spec = _fft.fftn(mid, workers=_WORKERS)
    spec *= khalf
    out = _fft.ifftn(spec, workers=_WORKERS)
    if not np.all(np.isfinite(out.view(float))):
        raise NonFiniteStateError(
            f"non-finite field after step at t = {field.t:.6g}", field.t, -1
        )
    return WaveField(values=out, grid=grid, t=field.t + dt)


def evolve(
    field0: WaveField,
    params: PhysicalParams,
    symbol: "KernelSymbol | None" = None,
    *,
    dt: float,
    T: float,
    monitor: MonitorSpec = MonitorSpec(),
    callback: "Callable[[WaveField], None] | None" = None,
    sample_times: "Sequence[float] | None" = None,
    warn_resolution: bool = True,
) -> tuple[ObservableSeries, "WaveField | CollapseReport"]:
    """Propagate to time T, recording observables every monitor.stride steps.

    Consecutive kinetic half-steps are fused; the physical field is
    materialized only at sampling points, where the collapse monitor
    also runs.  When sample_times is given, each entry must coincide
    with a step time (the caller arranges divisibility) and callback
    fires there with the materialized field; otherwise callback fires at
    every stride sample.

    Returns the series together with the final field, or with a
    CollapseReport if a threshold tripped first.
    """
    if T <= 0.0:
        raise ValueError("T must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    grid = field0.grid
    field0.validate_finite()
    potential_mesh = params.potential(grid)

    n_steps = max(1, math.ceil(T / dt - 1e-12))
    last_dt = T - (n_steps - 1) * dt
    if last_dt <= 0.0:
        n_steps -= 1
        last_dt = T - (n_steps - 1) * dt

    callback_steps: set[int] = set()
    if sample_times is not None:
        for t_req in sample_times:
            k = int(round(t_req / dt))
            t_k = k * dt if k < n_steps else (n_steps - 1) * dt + last_dt
            if abs(t_k - t_req) > 1e-6 * dt + 1e-12:
                raise ValueError(
                    f"sample time {t_req!r} does not lie on the step lattice (dt = {dt!r})"
                )
            if k < 1 or k > n_steps:
                raise ValueError(f"sample time {t_req!r} outside (0, T]")
            callback_steps.add(k)

    sample_steps = set(range(monitor.stride, n_steps, monitor.stride))
    sample_steps.add(n_steps)
    sample_steps |= callback_steps

    rho0 = density(field0)
    grad0 = gradient_norm_sq(field0)
    grad_threshold = (
        monitor.grad_threshold
        if monitor.grad_threshold is not None
        else monitor.grad_factor * max(grad0, 1e-300)
    )

    if warn_resolution:
        check_resolution(field0)
        phase_scale = float(np.max(np.abs(potential_mesh + params.lambda1 * rho0)))
        if params.lambda2 != 0.0 and symbol is not None:
            phi0 = _apply_symbol_real(symbol, rho0)
            phase_scale = float(
                np.max(np.abs(potential_mesh + params.lambda1 * rho0 + params.lambda2 * phi0))
            )
        if dt * phase_scale >= math.pi:
            warnings.warn(
                f"dt * max|V + nonlinear potential| = {dt * phase_scale:.3g} >= pi; "
                "the nonlinear phase per step is under-resolved",
                RuntimeWarning,
                stacklevel=2,
            )

    series = ObservableSeries()
    series.append(record_observables(field0, params, symbol, potential_mesh=potential_mesh))
    if callback is not None and sample_times is None:
        callback(field0)

    ksq = grid.ksq
    khalf = np.exp(-0.25j * dt * ksq)
    kfull = khalf * khalf
    t0 = field0.t

    # pre-B state: initial half kinetic step
    spec = _fft.fftn(field0.values, workers=_WORKERS)
    y = _fft.ifftn(khalf * spec, workers=_WORKERS)

    for step in range(1, n_steps + 1):
        step_dt = dt if step < n_steps else last_dt
        if step == n_steps and abs(last_dt - dt) > 1e-15 * max(dt, 1.0):
            khalf = np.exp(-0.25j * step_dt * ksq)
            kfull = khalf * khalf
            # re-split the carried half step: the stored y already includes
            # a dt/2 kinetic phase, so advance by the difference first
            delta = np.exp(-0.25j * (step_dt - dt) * ksq)
            y = _fft.ifftn(delta * _fft.fftn(y, workers=_WORKERS), workers=_WORKERS)
        w = _nonlinear_phase(y, step_dt, params, symbol, potential_mesh)
        t_now = t0 + (step - 1) * dt + step_dt if step == n_steps else t0 + step * dt

        if step in sample_steps:
            w_spec = _fft.fftn(w, workers=_WORKERS)
            psi_values = _fft.ifftn(khalf * w_spec, workers=_WORKERS)
            if not np.all(np.isfinite(psi_values.view(float))):
                raise NonFiniteStateError(
                    f"non-finite field at t = {t_now:.6g}", t_now, step
                )
            psi = WaveField(values=psi_values, grid=grid, t=t_now)
            record = record_observables(psi, params, symbol, potential_mesh=potential_mesh)
            series.append(record)
            tail = spectral_tail_fraction(psi)
            if callback is not None and (
                step in callback_steps if sample_times is not None else True
            ):
                callback(psi)
            if record.gradsq > grad_threshold or tail > monitor.spectral_tail:
                reason = (
                    "gradient-threshold"
                    if record.gradsq > grad_threshold
                    else "spectral-tail"
                )
                report = CollapseReport(
                    t_stop=t_now,
                    step=step,
                    reason=reason,
                    grad_sq=record.gradsq,
                    tail_fraction=tail,
                    field=psi,
                )
                return series, report
            if step == n_steps:
                return series, psi
            y = _fft.ifftn(kfull * w_spec, workers=_WORKERS)
        else:
            y = _fft.ifftn(kfull * _fft.fftn(w, workers=_WORKERS), workers=_WORKERS)

    raise AssertionError("unreachable: loop must return at the final step")


def write_snapshot(field: WaveField, path: "str | Path") -> None:
    """Binary field snapshot; see read_snapshot for the inverse."""
    grid = field.grid
    header = " ".join(
        ["GPEF", "v1", str(grid.dim)]
        + [str(n) for n in grid.shape]
        + ["%.17g" % L for L in grid.extents]
        + ["%.17g" % field.t]
    )
    payload = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(payload)


def read_snapshot(path: "str | Path", grid: "SpectralGrid | None" = None) -> WaveField:
    """Read a field snapshot, rebuilding its grid from the header.

    When a grid is supplied it must match the header exactly and is
    reused (so symbols and meshes stay shared).
    """
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if len(header) < 4 or header[0] != "GPEF" or header[1] != "v1":
        raise ValueError(f"not a field snapshot: {path}")
    dim = int(header[2])
    tokens = header[3:]
    if len(tokens) != 2 * dim + 1:
        raise ValueError(f"malformed snapshot header in {path}")
    shape = tuple(int(v) for v in tokens[:dim])
    extents = tuple(float(v) for v in tokens[dim : 2 * dim])
    t = float(tokens[2 * dim])
    if grid is None:
        grid = make_grid(dim, extents, shape)
    elif grid.dim != dim or grid.shape != shape or grid.extents != extents:
        raise GridError(f"snapshot geometry does not match the supplied grid")
    values = np.frombuffer(payload, dtype="<c16")
    if values.size != grid.size:
        raise ValueError(
            f"snapshot payload has {values.size} values, expected {grid.size}"
        )
    return WaveField(values=values.reshape(grid.shape).copy(), grid=grid, t=t)
