import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from multibohm.measurement import (
    SIGMA,
    MeasurementEvent,
    collapse,
    conditional_probability,
    hardy_model,
    joint_probability,
    no_signaling_gap,
    projector,
    random_events,
    random_model,
    shift_events,
)

I2 = np.eye(2)


def ev(sub, t, axis, out):
    return MeasurementEvent(sub, t, axis, out)


def test_hardy_predictions():
    m = hardy_model()
    assert abs(joint_probability(m, [ev("a", 0, "x", 1), ev("b", 0, "x", 1)]) - 1 / 12) < 1e-12
    for e in (
        [ev("a", 0, "x", 1), ev("b", 0, "z", 1)],
        [ev("a", 0, "z", 1), ev("b", 0, "x", 1)],
        [ev("a", 0, "z", -1), ev("b", 0, "z", -1)],
    ):
        assert joint_probability(m, e) < 1e-12


def test_collapse_after_ax_plus():
    m = hardy_model()
    psi = collapse(m, [ev("a", 0, "x", 1)])
    want = np.kron(np.array([1, 1]) / np.sqrt(2), [0, 1])
    assert abs(abs(np.vdot(want, psi)) - 1) < 1e-12
    assert abs(conditional_probability(m, [ev("a", 0, "x", 1)], [ev("b", 1, "z", -1)]) - 1) < 1e-12


def _schroedinger_oracle(model, events):
    """Sequential evolution per subsystem: apply a's history, then b's."""
    psi = model.psi0.copy()
    for sub, H in (("a", model.H_a), ("b", model.H_b)):
        t_now = 0.0
        for e in sorted((e for e in events if e.subsystem == sub), key=lambda e: e.time):
            U = expm(-1j * H * (e.time - t_now))
            w, v = np.linalg.eigh(SIGMA[e.axis])
            col = v[:, np.argmin(np.abs(w - e.outcome))]
            P = np.outer(col, col.conj())
            op = U
            op = P @ op
            full = np.kron(op, I2) if sub == "a" else np.kron(I2, op)
            psi = full @ psi
            t_now = e.time
        back = expm(1j * H * t_now)
        psi = (np.kron(back, I2) if sub == "a" else np.kron(I2, back)) @ psi
    return float(np.vdot(psi, psi).real)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_heisenberg_formula_matches_schroedinger_oracle(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    events = random_events(rng, 4)
    assert abs(joint_probability(m, events) - _schroedinger_oracle(m, events)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    events = random_events(rng, 3)
    tau = tuple(rng.uniform(-3, 3, 2))
    m2, e2 = shift_events(m, events, tau)
    assert abs(joint_probability(m2, e2) - joint_probability(m, events)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_no_signaling(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    a_set = [(-1.0, "x"), (0.5, "z")]
    assert no_signaling_gap(m, a_set, [(0.3, "y")], [(1.7, "x")]) < 1e-12


def test_projectors_of_different_subsystems_commute():
    rng = np.random.default_rng(1)
    m = random_model(rng)
    pa = projector(m, ev("a", 0.7, "y", 1))
    pb = projector(m, ev("b", -0.4, "x", -1))
    assert np.allclose(pa @ pb, pb @ pa, atol=1e-13)
    assert np.allclose(pa @ pa, pa, atol=1e-13) and np.allclose(pa, pa.conj().T, atol=1e-13)


def test_event_validation_and_ordering():
    with pytest.raises(ValueError):
        ev("a", 0, "w", 1)
    with pytest.raises(ValueError):
        ev("a", 0, "x", 0)
    with pytest.raises(ValueError):
        joint_probability(hardy_model(), [ev("a", 1, "x", 1), ev("a", 0, "z", 1)])
