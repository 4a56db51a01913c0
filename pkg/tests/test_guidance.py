import numpy as np
import pytest
from scipy.integrate import solve_ivp

from multibohm.equilibrium import SliceSpec, sample_equilibrium
from multibohm.gaussian import GaussianPacket
from multibohm.guidance import (
    GuidanceField,
    IntegratorConfig,
    NodeProximityError,
    SynchronizedPoint,
    crossing,
    integrate,
    integrate_ensemble,
    velocity,
)
from multibohm.hardy import run_start
from multibohm.wavefunction import amplitude, eigenspinor, evolve_to, product_state, superpose


def _fd_velocity(state, qa, qb, eps=1e-5):
    psi = amplitude(state, qa, qb)
    dens = np.vdot(psi, psi).real
    da = (amplitude(state, qa + eps, qb) - amplitude(state, qa - eps, qb)) / (2 * eps)
    db = (amplitude(state, qa, qb + eps) - amplitude(state, qa, qb - eps)) / (2 * eps)
    return np.vdot(psi, da).imag / dens, np.vdot(psi, db).imag / dens


@pytest.mark.parametrize("ta,tb,qa,qb", [(0.9, 0.4, 1.3, -0.7), (2.3, 2.0, 3.0, 9.5), (2.6, 1.1, 10.2, 0.4)])
def test_velocity_matches_finite_differences(scenario, ta, tb, qa, qb):
    s = evolve_to(scenario.state, ta, tb)
    psi = amplitude(s, qa, qb)
    if np.vdot(psi, psi).real < 1e-8:
        qa, qb = s.branches[0].packet_a.x0, s.branches[0].packet_b.x0
    v = velocity(s, qa, qb)
    ref = _fd_velocity(s, qa, qb)
    for a, b in zip(v, ref):
        assert abs(a - b) <= 1e-6 * max(1.0, abs(b))


def test_node_raises():
    up = eigenspinor("z", 1)
    g = GaussianPacket.fresh(0.0, 0.0, 1.0)
    s1 = product_state(up, GaussianPacket.fresh(-1.0, 0.0, 0.5), up, g)
    s2 = product_state(up, GaussianPacket.fresh(1.0, 0.0, 0.5), up, g)
    s = superpose([(1.0, s1), (-1.0, s2)]).normalized()
    with pytest.raises(NodeProximityError):
        velocity(s, 0.0, 0.0)


def test_static_state_keeps_positions():
    up = eigenspinor("z", 1)
    s = product_state(up, GaussianPacket.fresh(0.0, 0.0, 1e4), up, GaussianPacket.fresh(0.0, 0.0, 1e4))
    p = integrate(s, SynchronizedPoint(0.0, 3.0, 0.5, -2.0), 2.0)
    qa, qb = crossing(p, SliceSpec(1.5, 1.7))
    assert abs(qa - 3.0) < 1e-9 and abs(qb + 2.0) < 1e-9


def test_path_matches_solve_ivp(scenario):
    ta, tb = run_start(scenario.geometry, -1.0)
    fld = GuidanceField(scenario.origin_state)
    start = SynchronizedPoint(ta, -9.5, tb, -10.3)
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-11)
    p = integrate(scenario.origin_state, start, 1.3, cfg, fld)

    def rhs(s, y):
        va, vb, _ = fld.velocity(ta + s, tb + s, [y[0]], [y[1]])
        return [va[0], vb[0]]

    bps = sorted({b - ta for b in fld.boundaries()[0] if 0 < b - ta < 1.3} | {b - tb for b in fld.boundaries()[1] if 0 < b - tb < 1.3})
    y, s0 = np.array([-9.5, -10.3]), 0.0
    for s1 in bps + [1.3]:
        y = solve_ivp(rhs, (s0, s1), y, method="DOP853", rtol=1e-12, atol=1e-12).y[:, -1]
        s0 = s1
    assert np.max(np.abs(p.Q[-1] - y)) < 1e-6


def test_crossing_interpolation_is_accurate(scenario):
    ta, tb = run_start(scenario.geometry, 1.0)
    p = integrate(scenario.origin_state, SynchronizedPoint(ta, 10.4, tb, -9.7), 1.0)
    fine = integrate(scenario.origin_state, SynchronizedPoint(ta, 10.4, tb, -9.7), 0.4321)
    qa, _ = crossing(p, SliceSpec(ta + 0.4321, tb + 0.4321))
    assert abs(qa - fine.Q[-1, 0]) < 1e-6


def test_ensemble_is_independent_of_worker_count(scenario, monkeypatch):
    ta, tb = run_start(scenario.geometry, 0.0)
    q0 = sample_equilibrium(scenario.state, SliceSpec(ta, tb), 64, 3).points
    sl = [SliceSpec(ta + 0.5, tb + 0.5, "x")]
    monkeypatch.setenv("MULTIBOHM_WORKERS", "1")
    r1 = integrate_ensemble(scenario.origin_state, ta, tb, q0, sl, chunk=16)
    monkeypatch.setenv("MULTIBOHM_WORKERS", "4")
    r4 = integrate_ensemble(scenario.origin_state, ta, tb, q0, sl, chunk=16)
    assert np.all(np.isfinite(r1.crossing(sl[0])))
    assert np.array_equal(r1.crossing(sl[0]), r4.crossing(sl[0]))
