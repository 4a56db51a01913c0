import numpy as np
import pytest

from multibohm.hardy import (
    FRAMES,
    DetectorSpec,
    HardyGeometry,
    build_scenario,
    run_hardy,
    run_start,
    slice_spin_coefficients,
)

R12 = np.sqrt(12.0)


def test_track_separation_guard():
    with pytest.raises(ValueError, match="track separation"):
        HardyGeometry(separation=5.0)
    # narrow packets spread quickly with hbar = m = 1
    with pytest.raises(ValueError, match="track separation"):
        HardyGeometry(sigma=0.05, separation=1.0)


def test_offset_must_fit_hold():
    g = HardyGeometry()
    with pytest.raises(ValueError):
        run_start(g, 5.0)


def test_slice_coefficients(scenario):
    c1 = slice_spin_coefficients(scenario, scenario.slice("I(t1)"))
    want = {"a:+x b:+x": 1, "a:+x b:-x": -1, "a:-x b:+x": -1, "a:-x b:-x": -3}
    for k, v in want.items():
        assert abs(c1[k] - v / R12) < 1e-9
    c2 = slice_spin_coefficients(scenario, scenario.slice("II"))
    assert abs(c2["a:+z b:+x"]) < 1e-9
    c3 = slice_spin_coefficients(scenario, scenario.slice("III"))
    assert abs(c3["a:+x b:+z"]) < 1e-9
    c4 = slice_spin_coefficients(scenario, scenario.slice("I(t2)"))
    assert abs(c4["a:-z b:-z"]) < 1e-9


@pytest.mark.parametrize("h", [-1.0, 1.0])
def test_courses_small_run(scenario, h):
    rep = run_hardy(scenario, h, 1500, 3)
    assert rep.flagged_fraction() < 0.01
    sub = rep.sub_ensemble(1, 1)
    assert sub.sum() > 60
    want = (-1, 1) if h < 0 else (1, -1)
    ends = np.column_stack([rep.channels["a_z"][sub], rep.channels["b_z"][sub]])
    assert np.all(ends == want)
    assert set(rep.tables) == set(FRAMES)


def test_detector_leaves_earlier_segments_untouched(scenario):
    ta, tb = run_start(scenario.geometry, -1.0)
    det = DetectorSpec("a", "+x", ta + 0.1)
    s_det = det.time - ta
    with_det = run_hardy(scenario, -1.0, 800, 8, detectors=[det], checkpoints=[0.05])
    plain = run_hardy(scenario, -1.0, 800, 8, checkpoints=[0.05, s_det])
    for sp in (0.0, 0.05, s_det):
        assert np.array_equal(with_det.snapshots[sp], plain.snapshots[sp], equal_nan=True)
    fired = with_det.fired[0]
    assert fired.sum() > 50
    assert np.all(with_det.channels["b_z"][fired] == -1)


def test_detector_validation():
    with pytest.raises(ValueError):
        DetectorSpec("c", "+x", 1.0)
    with pytest.raises(ValueError):
        DetectorSpec("a", "+y", 1.0)
