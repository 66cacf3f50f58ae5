"""Effective lower-dimensional models and the reduction-error study.

A cigar-shaped trap squeezes the transverse confinement by 1/eps^2; in
the frame where the transverse variables are stretched back to order
one, the solution factorizes to leading order as a fast transverse
phase times the transverse harmonic ground state chi0 times a slow
longitudinal modulation u.  The modulation solves a one-dimensional
equation with a contact coupling averaged over chi0^2 and a nonlocal
term driven by an effective axial symbol.  A pancake trap gives the
analogous two-dimensional model.

This module builds those reduced models, runs the companion full 3D
simulation in the original (unstretched) frame where the standard
dipolar symbol applies verbatim, and measures the modulation error

    err(t) = || psi_eps(t) - exp(-i mu0 t / eps^2) chi0 u(t) ||_L2

together with the transverse excitation fraction.  The frame change is
resampling-free: matching point counts on boxes scaled by eps make the
stretched-frame field and the original-frame field the same array under
two grids.

The stiff transverse phase rotates at mu0 / eps^2, so the 3D time step
is clamped to eps^2 / (20 mu0) to keep at least 20 samples per cycle.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import GridError, SpectralGrid, make_grid
from .kernel import Analytic3D, Effective1D, Effective2D, KernelSymbol, build_symbol
from .propagator import CollapseReport, MonitorSpec, evolve
from .state import ObservableSeries, PhysicalParams, WaveField, mass

SWEEP_HEADER = "epsilon,T,sup_err,slope_partner,excitation_sq"


def effective_coupling(lambda1: float, transverse_omegas: Sequence[float]) -> float:
    """Contact coupling averaged over the transverse ground-state density.

    For two tight axes: lambda1 * sqrt(omega1 omega2) / (2 pi).  For one
    tight axis: lambda1 * sqrt(omega3 / (2 pi)).  Both follow from the
    quartic integral of the normalized Gaussian ground state.
    """
    omegas = tuple(float(w) for w in transverse_omegas)
    if any(w <= 0.0 for w in omegas):
        raise ValueError("transverse trap frequencies must be positive")
    if len(omegas) == 2:
        return lambda1 * math.sqrt(omegas[0] * omegas[1]) / (2.0 * math.pi)
    if len(omegas) == 1:
        return lambda1 * math.sqrt(omegas[0] / (2.0 * math.pi))
    raise ValueError(f"expected 1 or 2 transverse frequencies, got {len(omegas)}")


@dataclass(eq=False)
class ReductionSetup:
    """Geometry and couplings of one reduction experiment.

    omega holds the three physical trap frequencies (omega1, omega2,
    omega3).  For the "1d" target the first two are the tight transverse
    pair; for the "2d" target the third is tight.  u0 is the initial
    longitudinal modulation on its own 1D or 2D grid.
    """

    epsilon: float
    omega: tuple[float, float, float]
    lambda1: float
    lambda2: float
    u0: WaveField
    target: str = "1d"

    def __post_init__(self) -> None:
        if self.target not in ("1d", "2d"):
            raise ValueError(f"target must be '1d' or '2d', got {self.target!r}")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        self.omega = tuple(float(w) for w in self.omega)
        if len(self.omega) != 3:
            raise ValueError("omega must have three components")
        if any(w <= 0.0 for w in self.transverse_omegas):
            raise ValueError("transverse trap frequencies must be positive")
        expected_dim = 1 if self.target == "1d" else 2
        if self.u0.grid.dim != expected_dim:
            raise GridError(
                f"u0 must be {expected_dim}-dimensional for target {self.target!r}"
            )

    @property
    def transverse_omegas(self) -> tuple[float, ...]:
        return self.omega[:2] if self.target == "1d" else (self.omega[2],)

    @property
    def longitudinal_omegas(self) -> tuple[float, ...]:
        return (self.omega[2],) if self.target == "1d" else self.omega[:2]

    @cached_property
    def mu0(self) -> float:
        """Transverse ground-state frequency: sum of tight omega halves."""
        return 0.5 * sum(self.transverse_omegas)

    @cached_property
    def kappa(self) -> float:
        return effective_coupling(self.lambda1, self.transverse_omegas)

    def in_stable_regime(self) -> bool:
        return self.lambda2 >= 0.0 and self.lambda1 >= (4.0 * math.pi / 3.0) * self.lambda2


def reduced_params(setup: ReductionSetup) -> PhysicalParams:
    return PhysicalParams(
        dim=setup.u0.grid.dim,
        omega=setup.longitudinal_omegas,
        lambda1=setup.kappa,
        lambda2=setup.lambda2,
    )


def reduced_symbol(
    setup: ReductionSetup,
    cache_dir: "str | None" = None,
    use_cache: bool = True,
) -> "KernelSymbol | None":
    if setup.lambda2 == 0.0:
        return None
    if setup.target == "1d":
        provenance = Effective1D(setup.omega[0], setup.omega[1])
    else:
        provenance = Effective2D(setup.omega[2])
    return build_symbol(setup.u0.grid, provenance, cache_dir=cache_dir, use_cache=use_cache)


def evolve_reduced(
    setup: ReductionSetup,
    dt: float,
    T: float,
    monitor: MonitorSpec = MonitorSpec(),
    callback=None,
    sample_times: "Sequence[float] | None" = None,
    cache_dir: "str | None" = None,
) -> tuple[ObservableSeries, "WaveField | CollapseReport"]:
    """Run the effective lower-dimensional model."""
    symbol = reduced_symbol(setup, cache_dir=cache_dir)
    return evolve(
        setup.u0,
        reduced_params(setup),
        symbol,
        dt=dt,
        T=T,
        monitor=monitor,
        callback=callback,
        sample_times=sample_times,
    )


def _tight_profile(coords: Sequence[np.ndarray], omegas: Sequence[float]) -> np.ndarray:
    """Normalized transverse harmonic ground state on the given axes."""
    out = np.ones(1)
    for w, c in zip(omegas, coords):
        out = out * ((w / math.pi) ** 0.25 * np.exp(-0.5 * w * c * c))
    return out


def well_prepared_data(setup: ReductionSetup, ref_grid3d: SpectralGrid) -> np.ndarray:
    """Stretched-frame array chi0 (tight axes) times u0 (slow axes)."""
    if ref_grid3d.dim != 3:
        raise GridError("the reference grid must be three-dimensional")
    x1, x2, x3 = ref_grid3d.coords
    if setup.target == "1d":
        if ref_grid3d.shape[2] != setup.u0.grid.shape[0] or not math.isclose(
            ref_grid3d.extents[2], setup.u0.grid.extents[0]
        ):
            raise GridError("reference grid's third axis must match u0's grid")
        chi = _tight_profile((x1[:, None], x2[None, :]), setup.transverse_omegas)
        return chi[:, :, None] * setup.u0.values[None, None, :]
    if (
        ref_grid3d.shape[0] != setup.u0.grid.shape[0]
        or ref_grid3d.shape[1] != setup.u0.grid.shape[1]
        or not math.isclose(ref_grid3d.extents[0], setup.u0.grid.extents[0])
        or not math.isclose(ref_grid3d.extents[1], setup.u0.grid.extents[1])
    ):
        raise GridError("reference grid's first two axes must match u0's grid")
    chi = _tight_profile((x3,), setup.transverse_omegas)
    return setup.u0.values[:, :, None] * chi[None, None, :]


def _run_geometry(
    setup: ReductionSetup, ref_grid3d: SpectralGrid
) -> tuple[SpectralGrid, PhysicalParams]:
    """Original-frame grid and parameters realizing the squeezed trap.

    Shrinking the tight axes' extents by eps with unchanged point counts
    maps each stretched-frame lattice point to an original-frame one, so
    fields transfer between the frames without resampling, and the
    original-frame lattice frequencies are the stretched-frame ones
    divided by eps exactly as the coordinate change requires.
    """
    eps = setup.epsilon
    if setup.target == "1d":
        extents = (
            eps * ref_grid3d.extents[0],
            eps * ref_grid3d.extents[1],
            ref_grid3d.extents[2],
        )
        omega = (
            setup.omega[0] / eps**2,
            setup.omega[1] / eps**2,
            setup.omega[2],
        )
    else:
        extents = (
            ref_grid3d.extents[0],
            ref_grid3d.extents[1],
            eps * ref_grid3d.extents[2],
        )
        omega = (setup.omega[0], setup.omega[1], setup.omega[2] / eps**2)
    grid = make_grid(3, extents, ref_grid3d.shape)
    params = PhysicalParams(dim=3, omega=omega, lambda1=setup.lambda1, lambda2=setup.lambda2)
    return grid, params


def _snap_step(dt_ceiling: float, T: float, n_samples: int) -> float:
    """Largest step <= dt_ceiling such that samples j*T/n_samples land on steps."""
    n = n_samples * max(1, math.ceil(T / (dt_ceiling * n_samples) - 1e-12))
    return T / n


def _check_sample_times(sample_times: Sequence[float], T: float) -> list[float]:
    times = [float(t) for t in sample_times]
    if not times:
        raise ValueError("at least one sample time is required")
    m = len(times)
    for j, t in enumerate(times, start=1):
        if abs(t - j * T / m) > 1e-9 * T:
            raise ValueError(
                "sample times must be evenly spaced as j*T/m so both runs "
                f"can land steps on them; got {t!r} at position {j}"
            )
    return times


def evolve_rescaled_3d(
    setup: ReductionSetup,
    ref_grid3d: SpectralGrid,
    dt: float,
    T: float,
    sample_times: Sequence[float],
    monitor: "MonitorSpec | None" = None,
    cache_dir: "str | None" = None,
) -> tuple[ObservableSeries, list[tuple[float, WaveField]]]:
    """Run the companion 3D problem; return stretched-frame snapshots.

    The evolution happens in the original frame (standard symbol, tight
    trap omega_perp / eps^2, box shrunk by eps on the tight axes); each
    requested snapshot is re-labeled onto the reference grid, which is
    the exact frame change for matched point counts.  The step is
    clamped to eps^2 / (20 mu0) and snapped so samples land on steps.
    """
    times = _check_sample_times(sample_times, T)
    grid, params = _run_geometry(setup, ref_grid3d)
    symbol = build_symbol(grid, Analytic3D()) if setup.lambda2 != 0.0 else None
    values = well_prepared_data(setup, ref_grid3d)
    field0 = WaveField(values=values, grid=grid, t=0.0)

    dt_clamp = min(dt, setup.epsilon**2 / (20.0 * setup.mu0))
    dt_eff = _snap_step(dt_clamp, T, len(times))
    n_total = int(round(T / dt_eff))
    stride = max(1, n_total // 200)
    if monitor is None:
        monitor = MonitorSpec(stride=stride)

    snapshots: list[tuple[float, WaveField]] = []

    def grab(field: WaveField) -> None:
        snapshots.append(
            (field.t, WaveField(values=field.values.copy(), grid=ref_grid3d, t=field.t))
        )

    series, outcome = evolve(
        field0,
        params,
        symbol,
        dt=dt_eff,
        T=T,
        monitor=monitor,
        callback=grab,
        sample_times=times,
        warn_resolution=False,
    )
    if isinstance(outcome, CollapseReport):
        raise RuntimeError(
            "companion 3D run tripped the collapse monitor: " + outcome.describe()
        )
    return series, snapshots


def ground_state_projection(
    field3d: WaveField, transverse_omegas: Sequence[float]
) -> WaveField:
    """Project a stretched-frame 3D field onto the tight ground state.

    Two tight frequencies integrate out the first two axes and return
    the axial modulation; one tight frequency integrates out the third
    axis and returns the planar modulation.
    """
    omegas = tuple(float(w) for w in transverse_omegas)
    grid = field3d.grid
    if grid.dim != 3:
        raise GridError("projection expects a three-dimensional field")
    if len(omegas) == 2:
        x1, x2 = grid.coords[0], grid.coords[1]
        chi = _tight_profile((x1[:, None], x2[None, :]), omegas)
        area = grid.steps[0] * grid.steps[1]
        values = np.tensordot(chi, field3d.values, axes=([0, 1], [0, 1])) * area
        out_grid = make_grid(1, (grid.extents[2],), (grid.shape[2],))
        return WaveField(values=values, grid=out_grid, t=field3d.t)
    if len(omegas) == 1:
        chi = _tight_profile((grid.coords[2],), omegas)
        values = np.tensordot(field3d.values, chi, axes=([2], [0])) * grid.steps[2]
        out_grid = make_grid(2, grid.extents[:2], grid.shape[:2])
        return WaveField(values=values, grid=out_grid, t=field3d.t)
    raise ValueError(f"expected 1 or 2 transverse frequencies, got {len(omegas)}")


@dataclass(frozen=True)
class ReductionStudy:
    """Everything measured while comparing one eps against the reduced model."""

    epsilon: float
    T: float
    samples: list  # (t, err) pairs
    sup_err: float
    excitation_sq: float


def _study(
    setup: ReductionSetup,
    ref_grid3d: SpectralGrid,
    dt: float,
    T: float,
    n_samples: int = 8,
    allow_unstable: bool = False,
    cache_dir: "str | None" = None,
    reduced_snapshots: "list[tuple[float, WaveField]] | None" = None,
) -> ReductionStudy:
    if T <= 0.0:
        raise ValueError("T must be positive")
    if not setup.in_stable_regime() and not allow_unstable:
        raise ValueError(
            "reduction study outside the stable regime; the O(eps) statement "
            "assumes lambda1 >= (4 pi / 3) lambda2 >= 0 "
            "(pass allow_unstable=True to explore anyway)"
        )
    times = [j * T / n_samples for j in range(1, n_samples + 1)]

    if reduced_snapshots is None:
        reduced_snapshots = run_reduced_snapshots(
            setup, dt, T, n_samples, cache_dir=cache_dir
        )

    _, snaps3d = evolve_rescaled_3d(
        setup, ref_grid3d, dt, T, times, cache_dir=cache_dir
    )

    x1, x2, x3 = ref_grid3d.coords
    if setup.target == "1d":
        chi = _tight_profile((x1[:, None], x2[None, :]), setup.transverse_omegas)
    else:
        chi = _tight_profile((x3,), setup.transverse_omegas)

    dv = ref_grid3d.cell_volume
    samples = []
    excitation = 0.0
    for (t3, psi_eps), (tr, u_t) in zip(snaps3d, reduced_snapshots):
        if abs(t3 - tr) > 1e-9 * max(T, 1.0):
            raise AssertionError("sample times of the two runs diverged")
        phase = np.exp(-1j * setup.mu0 * t3 / setup.epsilon**2)
        if setup.target == "1d":
            model = phase * chi[:, :, None] * u_t.values[None, None, :]
        else:
            model = phase * u_t.values[:, :, None] * chi[None, None, :]
        err = math.sqrt(float(np.sum(np.abs(psi_eps.values - model) ** 2)) * dv)
        samples.append((t3, err))

        projected = ground_state_projection(psi_eps, setup.transverse_omegas)
        excitation = max(excitation, mass(psi_eps) - mass(projected))

    return ReductionStudy(
        epsilon=setup.epsilon,
        T=T,
        samples=samples,
        sup_err=max(err for _, err in samples),
        excitation_sq=excitation,
    )


def run_reduced_snapshots(
    setup: ReductionSetup,
    dt: float,
    T: float,
    n_samples: int,
    cache_dir: "str | None" = None,
) -> list[tuple[float, WaveField]]:
    """Reduced-model trajectory sampled at j*T/n_samples."""
    times = [j * T / n_samples for j in range(1, n_samples + 1)]
    dt_red = _snap_step(dt, T, n_samples)
    collected: list[tuple[float, WaveField]] = []

    def grab(field: WaveField) -> None:
        collected.append((field.t, field.copy()))

    _, outcome = evolve_reduced(
        setup,
        dt_red,
        T,
        callback=grab,
        sample_times=times,
        cache_dir=cache_dir,
    )
    if isinstance(outcome, CollapseReport):
        raise RuntimeError(
            "reduced run tripped the collapse monitor: " + outcome.describe()
        )
    return collected


def reduction_error(
    setup: ReductionSetup,
    ref_grid3d: SpectralGrid,
    dt: float,
    T: float,
    n_samples: int = 8,
    allow_unstable: bool = False,
    cache_dir: "str | None" = None,
) -> list[tuple[float, float]]:
    """Modulation error against the reduced model at each sample time."""
    study = _study(
        setup,
        ref_grid3d,
        dt,
        T,
        n_samples=n_samples,
        allow_unstable=allow_unstable,
        cache_dir=cache_dir,
    )
    return study.samples


def epsilon_sweep(
    setup: ReductionSetup,
    epsilons: Sequence[float],
    ref_grid3d: SpectralGrid,
    dt: float,
    T: float,
    n_samples: int = 8,
    allow_unstable: bool = False,
    cache_dir: "str | None" = None,
    max_workers: "int | None" = None,
) -> list[dict]:
    """Run the error study across eps values concurrently.

    The reduced trajectory does not depend on eps, so it is computed
    once and shared.  Rows come back in input order with the pairwise
    log-log slope against the previous eps (nan on the first row).
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ValueError("need at least one eps value")
    reduced = run_reduced_snapshots(setup, dt, T, n_samples, cache_dir=cache_dir)

    def member(eps: float) -> ReductionStudy:
        member_setup = ReductionSetup(
            epsilon=eps,
            omega=setup.omega,
            lambda1=setup.lambda1,
            lambda2=setup.lambda2,
            u0=setup.u0,
            target=setup.target,
        )
        return _study(
            member_setup,
            ref_grid3d,
            dt,
            T,
            n_samples=n_samples,
            allow_unstable=allow_unstable,
            cache_dir=cache_dir,
            reduced_snapshots=reduced,
        )

    if len(epsilons) == 1 or max_workers == 1:
        studies = [member(e) for e in epsilons]
    else:
        with ThreadPoolExecutor(max_workers=max_workers or len(epsilons)) as pool:
            studies = list(pool.map(member, epsilons))

    rows = []
    for i, study in enumerate(studies):
        if i == 0:
            slope = math.nan
        else:
            prev = studies[i - 1]
            slope = math.log(study.sup_err / prev.sup_err) / math.log(
                study.epsilon / prev.epsilon
            )
        rows.append(
            {
                "epsilon": study.epsilon,
                "T": study.T,
                "sup_err": study.sup_err,
                "slope_partner": slope,
                "excitation_sq": study.excitation_sq,
            }
        )
    return rows


def fitted_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


def sweep_to_csv(rows: Sequence[dict], path) -> None:
    lines = [SWEEP_HEADER]
    for row in rows:
        lines.append(
            ",".join("%.17g" % row[name] for name in SWEEP_HEADER.split(","))
        )
    Path(path).write_text("\n".join(lines) + "\n")
