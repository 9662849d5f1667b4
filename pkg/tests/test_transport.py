"""Tests for the finite-volume transport solver.

The operator oracle is analytic: for F = x^3 exp(-x/2) at unit
temperature the flux divergence is exp(-x/2)(4x^3 + 2x^4 - x^5/4),
obtained by differentiating the flux x^4 exp(-x/2)(1 + x/2) by hand.
The discrete operator must approach it at second order in the cell
width.  The detailed-balance structure of the interface weights makes
the sampled equilibrium profile an exact stationary state, which is
tested directly.
"""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compfrac.spectra import (
    COMPTONIZATION,
    Bremsstrahlung,
    GaussianPulse,
    Monoenergetic,
    equilibrium_spectrum,
)
from compfrac.transport import (
    Grid,
    NonPositiveTemperature,
    SnapshotMissing,
    StepSizeUnderflow,
    TemperatureFn,
    _assemble,
    _lambda_minus,
    drift_diffusion,
    grid_moment,
    initial_cell_values,
    solve_transport,
    write_run_manifest,
    write_snapshot_csv,
)

from conftest import RUN_SNAPSHOTS


def apply_operator(grid, F, theta=1.0):
    lower, diag, upper = _assemble(grid, theta, COMPTONIZATION)
    AF = diag * F
    AF[:-1] += upper[1:] * F[1:]
    AF[1:] += lower[:-1] * F[:-1]
    return AF


# ---------------------------------------------------------------------------
# grid


def test_log_grid_shape():
    grid = Grid.log_spaced(cells=100, x_min=1e-2, x_max=10.0, y_end=1.5, snapshots=4)
    assert grid.cells == 100
    assert grid.edges[0] == pytest.approx(1e-2)
    assert grid.edges[-1] == pytest.approx(10.0)
    assert np.allclose(
        grid.centers, np.sqrt(np.asarray(grid.edges[:-1]) * np.asarray(grid.edges[1:]))
    )
    assert np.sum(grid.widths) == pytest.approx(10.0 - 1e-2)
    assert grid.snapshot_times == tuple(np.linspace(0.0, 1.5, 4))


def test_grid_snapshot_sequence_is_sorted():
    grid = Grid.log_spaced(snapshots=(2.0, 0.5, 1.0))
    assert grid.snapshot_times == (0.5, 1.0, 2.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(edges=(1.0, 2.0), y_end=1.0, snapshot_times=()),
        dict(edges=(0.0, 1.0, 2.0), y_end=1.0, snapshot_times=()),
        dict(edges=(1.0, 1.0, 2.0), y_end=1.0, snapshot_times=()),
        dict(edges=(1.0, 2.0, 3.0), y_end=-1.0, snapshot_times=()),
        dict(edges=(1.0, 2.0, 3.0), y_end=1.0, snapshot_times=(0.2, 0.1)),
        dict(edges=(1.0, 2.0, 3.0), y_end=1.0, snapshot_times=(1.5,)),
    ],
)
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        Grid(**kwargs)


# ---------------------------------------------------------------------------
# interface weights and the discrete operator


@settings(max_examples=80, deadline=None)
@given(w=st.floats(min_value=-700.0, max_value=700.0, allow_nan=False))
def test_lambda_identity(w):
    arr = np.asarray([w])
    minus = float(_lambda_minus(arr)[0])
    plus = float(_lambda_minus(-arr)[0])
    # lambda(-w) = lambda(w) + w on the whole line
    assert plus == pytest.approx(minus + w, rel=1e-10, abs=1e-12)


def test_lambda_limits():
    assert float(_lambda_minus(np.asarray([0.0]))[0]) == 1.0
    assert float(_lambda_minus(np.asarray([600.0]))[0]) == pytest.approx(0.0, abs=1e-250)
    assert float(_lambda_minus(np.asarray([-600.0]))[0]) == 600.0


def test_operator_second_order_convergence():
    errs = []
    for cells in (200, 400, 800):
        grid = Grid.log_spaced(cells=cells, x_min=1e-3, x_max=50.0, snapshots=())
        x = grid.centers
        F = x**3 * np.exp(-x / 2.0)
        AF = apply_operator(grid, F)
        exact = np.exp(-x / 2.0) * (4.0 * x**3 + 2.0 * x**4 - 0.25 * x**5)
        errs.append(np.max(np.abs(AF - exact)) / np.max(np.abs(exact)))
    assert errs[0] == pytest.approx(7.4107e-3, rel=1e-3)
    assert errs[1] == pytest.approx(1.8612e-3, rel=1e-3)
    assert errs[2] == pytest.approx(4.6581e-4, rel=1e-3)
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_drift_diffusion_rates():
    drift, diff = drift_diffusion(COMPTONIZATION, 1.0, 1.0)
    assert (drift, diff) == (3.0, 2.0)
    # the drift changes sign at x = (i + k) theta
    theta = 4.0 / 3.0
    balanced, _ = drift_diffusion(COMPTONIZATION, theta, 4.0 * theta)
    assert balanced == pytest.approx(0.0, abs=1e-12)
    below, _ = drift_diffusion(COMPTONIZATION, theta, 4.0 * theta - 0.5)
    above, _ = drift_diffusion(COMPTONIZATION, theta, 4.0 * theta + 0.5)
    assert below > 0 > above


def test_diffusion_rate_ignores_temperature():
    x = np.geomspace(1e-2, 40, 17)
    _, d_cold = drift_diffusion(COMPTONIZATION, 0.5, x)
    _, d_hot = drift_diffusion(COMPTONIZATION, 7.0, x)
    assert np.array_equal(d_cold, d_hot)
    assert np.allclose(d_cold, 2.0 * x**2, rtol=1e-15)


def test_operator_conserves_number_exactly():
    grid = Grid.log_spaced(cells=300, snapshots=())
    x = grid.centers
    for F in (x**3 * np.exp(-x / 2.0), np.ones_like(x), 1.0 / (1.0 + x**2)):
        AF = apply_operator(grid, F, theta=0.7)
        scale = np.max(np.abs(AF)) * np.max(grid.widths)
        assert abs(np.sum(AF * grid.widths)) <= 1e-12 * max(scale, 1e-300)


def test_stationary_equilibrium_state(wien_run):
    start = wien_run.snapshot(0.0)
    end = wien_run.snapshot(2.0)
    assert np.max(np.abs(end - start)) <= 1e-10 * np.max(start)


# ---------------------------------------------------------------------------
# full solves


def test_number_conserved_along_traces(mono_run, brems_run, negctl_run):
    for sol in (mono_run, brems_run, negctl_run):
        n = sol.trace_number
        assert np.max(np.abs(n - n[0])) <= 1e-12 * abs(n[0])


def test_snapshot_lookup(mono_run):
    assert tuple(t for t, _ in mono_run.snapshots) == RUN_SNAPSHOTS
    assert mono_run.snapshot(0.5) is not None
    with pytest.raises(SnapshotMissing):
        mono_run.snapshot(0.123)


def test_spectrum_views(mono_run):
    x = mono_run.grid.centers
    F = mono_run.snapshot(1.0)
    assert np.allclose(mono_run.photon_spectrum(1.0), F / x**2)
    assert np.allclose(mono_run.energy_spectrum(1.0), F * x)
    got = mono_run.moment(3, 1.0)
    assert got == grid_moment(mono_run.grid, F, 3, COMPTONIZATION)


def test_initial_energy_integral_matches_line(mono_run):
    # quadrature of x^3 f at y = 0 recovers the line's I_3 = 4 up to the
    # midpoint-rule error of the narrow replacement pulse
    assert mono_run.moment(3, 0.0) == pytest.approx(4.0, rel=1e-4)


def test_energy_spectrum_nonnegative(mono_run, brems_run):
    for sol in (mono_run, brems_run):
        for t, _ in sol.snapshots:
            assert float(np.min(sol.energy_spectrum(t))) >= 0.0


def test_monoenergetic_replaced_by_narrow_pulse():
    grid = Grid.log_spaced(cells=200, snapshots=())
    F, actual = initial_cell_values(Monoenergetic(), grid, COMPTONIZATION)
    assert isinstance(actual, GaussianPulse)
    assert actual.mean == Fraction(4)
    assert actual.variance == Fraction(1, 100)
    assert actual.n0 == Fraction(1)
    x = grid.centers
    assert np.argmax(F / x**2) == np.argmin(np.abs(x - 4.0))


def test_negative_temperature_rejected():
    grid = Grid.log_spaced(cells=16, snapshots=())
    with pytest.raises(NonPositiveTemperature):
        solve_transport(Bremsstrahlung(), TemperatureFn.constant(-1.0), grid)


def test_temperature_crossing_zero_rejected(mono_table):
    # the order-2 Taylor sum 1 + 2y - 6y^2 turns negative inside [0, 2]
    theta = TemperatureFn.from_table(mono_table, 2)
    grid = Grid.log_spaced(cells=16, snapshots=())
    with pytest.raises(NonPositiveTemperature):
        solve_transport(Monoenergetic(), theta, grid)


def test_step_budget_enforced():
    grid = Grid.log_spaced(cells=40, snapshots=())
    with pytest.raises(StepSizeUnderflow):
        solve_transport(
            Monoenergetic(), TemperatureFn.constant(1.0), grid, max_steps=3
        )


def test_solver_stats(mono_run):
    stats = mono_run.stats
    assert stats["steps_accepted"] > 0
    assert stats["rtol"] == 1e-6
    assert stats["dy_min"] <= stats["dy_max"]
    assert "pulse" in stats["spectrum"] or "gaussian" in stats["spectrum"].lower()


def test_snapshot_csv_round_trip(tmp_path, mono_run):
    path = tmp_path / "snap.csv"
    write_snapshot_csv(mono_run, 2.0, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    header = path.read_text().splitlines()[0]
    assert header == "x,F,f,G"
    assert rows.shape == (400, 4)
    x, F, f, G = rows.T
    assert np.allclose(x, mono_run.grid.centers)
    assert np.allclose(F, mono_run.snapshot(2.0), rtol=1e-10, atol=1e-295)
    assert np.allclose(f * x**2, F, rtol=1e-10, atol=1e-295)
    assert np.allclose(G, F * x, rtol=1e-10, atol=1e-295)


def test_run_manifest(tmp_path, mono_run):
    path = tmp_path / "run.json"
    write_run_manifest(mono_run, path, snapshot_files={"2.0": "snap.csv"})
    data = json.loads(path.read_text())
    assert data["schema"] == "compfrac.run-manifest/1"
    assert data["grid"]["cells"] == 400
    assert data["snapshot_files"] == {"2.0": "snap.csv"}
    assert "written_at" not in data
    assert data["conservation"]["y"][0] == 0.0
    assert len(data["conservation"]["number"]) == len(data["conservation"]["y"])
