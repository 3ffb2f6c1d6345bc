import numpy as np
import pytest
from scipy.stats import chi

from extgraph.experiments import (
    SweepCell,
    drift_setup,
    drift_study,
    rotation_error_budget,
    run_trial,
    sweep,
)


def test_sweep_noise_free_cells_are_zero():
    cells = sweep([0.0], [10], trials=2, seed=4)
    assert [c.method for c in cells] == ["egraph", "chain"]
    for c in cells:
        assert c.are_median <= 1e-9 and c.ate_median <= 1e-9 and c.failures == 0


def test_sweep_single_trial_rows():
    (cell,) = sweep([0.1], [8], trials=1, methods=["egraph"])
    assert cell.trials == 1
    assert cell.are_q25 == cell.are_median == cell.are_q75 == cell.are_q90
    assert cell.ate_q25 == cell.ate_median == cell.ate_q90
    assert len(cell.row()) == len(SweepCell.header())


@pytest.mark.parametrize("kwargs", [
    dict(noise_grid=[], lengths=[5], trials=1),
    dict(noise_grid=[-0.1], lengths=[5], trials=1),
    dict(noise_grid=[0.0], lengths=[1], trials=1),
    dict(noise_grid=[0.0], lengths=[5], trials=0),
    dict(noise_grid=[0.0], lengths=[5], trials=1, methods=["bundle"]),
])
def test_sweep_rejects_bad_inputs(kwargs):
    with pytest.raises(ValueError):
        sweep(**kwargs)


def test_sweep_is_deterministic():
    a = sweep([0.2], [6], trials=2, seed=11, methods=["egraph"])
    b = sweep([0.2], [6], trials=2, seed=11, methods=["egraph"])
    assert a == b


def test_run_trial_methods_share_measurements():
    are_e, ate_e, _ = run_trial("manhattan", 5, 0.0, 0.0, "egraph", 3)
    are_c, ate_c, _ = run_trial("manhattan", 5, 0.0, 0.0, "chain", 3)
    assert max(are_e, are_c, ate_e, ate_c) <= 1e-9


def test_drift_setup_has_no_points():
    s = drift_setup(12)
    assert s.scene.point_count == 0 and all(p.points == 0 for p in s.scene.planes)
    assert s.trajectory.frame_count == 12


def test_drift_trend_small():
    d = drift_study(trials=30, keyframes=20, sigma_deg=0.2, seed=1)
    assert d.direct.shape == (30, 20)
    assert np.all(d.direct[:, 0] == 0) and np.all(d.chained[:, 0] == 0)
    assert d.median_direct(20) <= 1.5 * d.median_direct(5)
    assert d.median_chained(20) >= 3 * d.median_direct(20)
    assert d.median_chained(20) > d.median_chained(5)


def test_drift_noise_free_is_exact():
    d = drift_study(trials=1, keyframes=6, sigma_deg=0.0)
    assert np.nanmax(d.direct) <= 1e-12 and np.nanmax(d.chained) <= 1e-12


def test_budget_values():
    b = rotation_error_budget(0.2)
    assert b["rms_deg"] == pytest.approx(np.sqrt(3) * 0.2, rel=1e-12)
    # median / RMS of a 3D isotropic Gaussian norm, from the chi(3) distribution
    assert b["median_deg"] / b["rms_deg"] == pytest.approx(chi.median(3) / np.sqrt(3), abs=1e-3)
    deep = rotation_error_budget(0.2, depth=4)
    assert deep["rms_deg"] == pytest.approx(2 * b["rms_deg"], rel=1e-12)


def test_budget_bounds_observed_direct_edges():
    d = drift_study(trials=10, keyframes=8, sigma_deg=0.2, seed=2)
    observed = np.degrees(np.nanmedian(d.direct[:, 1:]))
    assert observed <= rotation_error_budget(0.2)["median_deg"]
