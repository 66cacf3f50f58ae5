import math

import numpy as np
import pytest

from dipgpe import (
    Analytic3D,
    CollapseReport,
    GridError,
    MonitorSpec,
    NonFiniteStateError,
    PhysicalParams,
    WaveField,
    build_symbol,
    evolve,
    linear_eigenstate,
    make_grid,
    mass,
    read_snapshot,
    strang_step,
    write_snapshot,
)


def gaussian(grid, sigma):
    r2 = sum(c**2 for c in grid.coord_mesh)
    amp = (math.pi * sigma**2) ** (-grid.dim / 4.0)
    return WaveField(amp * np.exp(-r2 / (2.0 * sigma**2)), grid)


def test_linear_eigenstate_energies():
    g2 = make_grid(2, [14.0, 14.0], [32, 32])
    f, mu = linear_eigenstate(g2, (1.0, 1.0))
    assert mu == pytest.approx(1.0)
    assert mass(f) == pytest.approx(1.0, abs=1e-13)
    g3 = make_grid(3, [14.0, 12.0, 10.0], [32, 32, 32])
    f3, mu3 = linear_eigenstate(g3, (1.0, 2.0, 3.0))
    assert mu3 == pytest.approx(3.0)
    assert mass(f3) == pytest.approx(1.0, abs=1e-13)


def test_linear_eigenstate_validation():
    g = make_grid(1, [12.0], [32])
    with pytest.raises(ValueError):
        linear_eigenstate(g, (0.0,))
    with pytest.raises(GridError):
        linear_eigenstate(g, (1.0, 1.0))


def test_monitor_spec_validation():
    with pytest.raises(ValueError):
        MonitorSpec(stride=0)
    m = MonitorSpec()
    assert m.stride == 10
    assert m.grad_factor == 1e4
    assert m.spectral_tail == 1e-3


def test_strang_step_preserves_mass_exactly():
    g = make_grid(2, [14.0, 14.0], [48, 48])
    p = PhysicalParams(2, (1.0, 1.0), 1.0, 0.0)
    f = gaussian(g, 1.2)
    m0 = mass(f)
    out = f
    for _ in range(50):
        out = strang_step(out, 1e-2, p)
    assert mass(out) == pytest.approx(m0, rel=1e-13)
    assert out.t == pytest.approx(0.5, rel=1e-12)


def test_strang_step_time_reversible():
    g = make_grid(3, [14.0, 14.0, 14.0], [24, 24, 24])
    p = PhysicalParams(3, (1.0, 1.0, 1.0), 1.0, 0.3)
    sym = build_symbol(g, Analytic3D())
    f0 = gaussian(g, 1.1)
    fwd = f0
    for _ in range(100):
        fwd = strang_step(fwd, 1e-3, p, sym)
    back = fwd
    for _ in range(100):
        back = strang_step(back, -1e-3, p, sym)
    dev = np.max(np.abs(back.values - f0.values))
    assert dev < 1e-11
    assert back.t == pytest.approx(0.0, abs=1e-12)


def test_strang_step_rejects_zero_dt_and_nonfinite():
    g = make_grid(1, [12.0], [32])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f = gaussian(g, 1.0)
    with pytest.raises(ValueError):
        strang_step(f, 0.0, p)
    f.values[5] = np.inf
    with pytest.raises(NonFiniteStateError), np.errstate(invalid="ignore"):
        strang_step(f, 1e-3, p)


def test_evolve_ground_state_accumulates_only_phase():
    g = make_grid(3, [12.0, 12.0, 12.0], [32, 32, 32])
    p = PhysicalParams(3, (1.0, 1.0, 1.0), 0.0, 0.0)
    f0, mu = linear_eigenstate(g, (1.0, 1.0, 1.0))
    series, out = evolve(f0.copy(), p, dt=1e-3, T=0.25, monitor=MonitorSpec(stride=50))
    assert isinstance(out, WaveField)
    overlap = np.vdot(f0.values, out.values) * g.cell_volume
    assert abs(overlap * np.exp(1j * mu * 0.25) - 1.0) < 1e-6
    masses = series.column("mass")
    assert np.max(np.abs(masses - masses[0])) < 1e-12


def test_evolve_energy_drift_is_second_order():
    g = make_grid(2, [14.0, 14.0], [64, 64])
    p = PhysicalParams(2, (1.0, 1.0), 1.0, 0.0)
    f0 = gaussian(g, 1.2)
    drifts = []
    for dt in (2e-3, 1e-3):
        series, _ = evolve(f0.copy(), p, dt=dt, T=0.5, monitor=MonitorSpec(stride=25))
        e = series.column("E")
        drifts.append(np.max(np.abs(e - e[0])))
    ratio = drifts[0] / drifts[1]
    assert 3.2 <= ratio <= 4.8


def test_evolve_mass_conserved_over_many_steps():
    g = make_grid(2, [12.0, 12.0], [32, 32])
    p = PhysicalParams(2, (1.0, 1.0), 1.0, 0.0)
    f0 = gaussian(g, 1.0)
    series, out = evolve(f0, p, dt=1e-3, T=1.0, monitor=MonitorSpec(stride=100))
    m = series.column("mass")
    assert np.max(np.abs(m - m[0])) <= 1e-10 * m[0]
    assert out.t == pytest.approx(1.0)


def test_evolve_partial_final_step():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.5, 0.0)
    f0 = gaussian(g, 1.0)
    series, out = evolve(f0, p, dt=3e-3, T=0.5, monitor=MonitorSpec(stride=50))
    assert out.t == 0.5
    e = series.column("E")
    assert np.max(np.abs(e - e[0])) < 1e-7
    assert series.column("t")[-1] == 0.5
    m = series.column("mass")
    assert np.max(np.abs(m - m[0])) < 1e-13


def test_evolve_records_initial_state_first():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    series, _ = evolve(f0, p, dt=1e-2, T=0.1, monitor=MonitorSpec(stride=2))
    t = series.column("t")
    assert t[0] == 0.0
    assert np.all(np.diff(t) > 0)
    assert t[-1] == pytest.approx(0.1)


def test_evolve_callback_every_stride_by_default():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    seen = []
    evolve(
        f0, p, dt=1e-2, T=0.1, monitor=MonitorSpec(stride=5),
        callback=lambda f: seen.append(f.t),
    )
    assert seen == pytest.approx([0.0, 0.05, 0.1])


def test_evolve_sample_times_gate_callback():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    seen = []
    series, _ = evolve(
        f0, p, dt=1e-2, T=0.2, monitor=MonitorSpec(stride=7),
        callback=lambda f: seen.append(f.t),
        sample_times=[0.1, 0.2],
    )
    assert seen == pytest.approx([0.1, 0.2])
    # the series still carries the stride samples
    assert np.isclose(series.column("t"), 0.07).any()


def test_evolve_rejects_off_lattice_sample_times():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    with pytest.raises(ValueError):
        evolve(f0, p, dt=1e-2, T=0.2, sample_times=[0.105])
    with pytest.raises(ValueError):
        evolve(f0, p, dt=1e-2, T=0.2, sample_times=[0.3])
    with pytest.raises(ValueError):
        evolve(f0, p, dt=1e-2, T=0.2, sample_times=[0.0])


def test_evolve_validates_dt_and_T():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    with pytest.raises(ValueError):
        evolve(f0, p, dt=-1e-3, T=1.0)
    with pytest.raises(ValueError):
        evolve(f0, p, dt=1e-3, T=0.0)


def test_evolve_warns_on_coarse_phase_step():
    g = make_grid(1, [16.0], [128])
    p = PhysicalParams(1, (5.0,), 0.0, 0.0)
    f0 = gaussian(g, 0.5)
    with pytest.warns(RuntimeWarning, match="nonlinear phase"):
        evolve(f0, p, dt=5e-3, T=0.05, monitor=MonitorSpec(stride=10))


def test_evolve_stops_with_collapse_report():
    # supercritical focusing cubic problem in 2D
    g = make_grid(2, [12.0, 12.0], [64, 64])
    p = PhysicalParams(2, (1.0, 1.0), -8.0, 0.0)
    f0 = gaussian(g, 1.0)
    f0 = WaveField(2.0 * f0.values, g)
    series, out = evolve(
        f0, p, dt=5e-4, T=3.0, monitor=MonitorSpec(stride=5), warn_resolution=False
    )
    assert isinstance(out, CollapseReport)
    assert out.reason in ("gradient-threshold", "spectral-tail")
    assert 0.0 < out.t_stop < 0.5
    assert out.field.t == pytest.approx(out.t_stop)
    assert "collapse" in out.describe()
    assert series.column("t")[-1] == pytest.approx(out.t_stop)


def test_evolve_gradient_threshold_stops_run():
    g = make_grid(2, [12.0, 12.0], [64, 64])
    p = PhysicalParams(2, (1.0, 1.0), -8.0, 0.0)
    f0 = gaussian(g, 1.0)
    f0 = WaveField(2.0 * f0.values, g)
    series, out = evolve(
        f0, p, dt=5e-4, T=3.0,
        monitor=MonitorSpec(stride=2, grad_threshold=50.0, spectral_tail=1.0),
        warn_resolution=False,
    )
    assert isinstance(out, CollapseReport)
    assert out.reason == "gradient-threshold"
    assert out.grad_sq >= 50.0


def test_evolve_rejects_nonfinite_initial_data():
    g = make_grid(1, [16.0], [64])
    p = PhysicalParams(1, (1.0,), 0.0, 0.0)
    f0 = gaussian(g, 1.0)
    f0.values[0] = np.nan
    with pytest.raises(ValueError):
        evolve(f0, p, dt=1e-3, T=0.1)


def test_snapshot_roundtrip(tmp_path):
    g = make_grid(2, [14.0, 10.0], [32, 16])
    f = gaussian(g, 1.1)
    f.t = 0.75
    path = tmp_path / "state.gpef"
    write_snapshot(f, path)
    raw = path.read_bytes()
    assert raw.startswith(b"GPEF v1 2 32 16 14 10 0.75\n")
    back = read_snapshot(path)
    assert back.t == 0.75
    assert back.grid.shape == (32, 16)
    assert back.grid.extents == (14.0, 10.0)
    assert np.array_equal(back.values, f.values)


def test_snapshot_grid_check(tmp_path):
    g = make_grid(1, [16.0], [64])
    f = gaussian(g, 1.0)
    path = tmp_path / "state.gpef"
    write_snapshot(f, path)
    back = read_snapshot(path, grid=g)
    assert back.grid is g
    other = make_grid(1, [12.0], [64])
    with pytest.raises(GridError):
        read_snapshot(path, grid=other)


def test_snapshot_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.gpef"
    path.write_bytes(b"HELLO v9 nonsense\n\x00\x01")
    with pytest.raises(ValueError):
        read_snapshot(path)
