import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multibohm.dirac import (
    ALPHA,
    GAMMA0,
    GAMMA1,
    DiracGridState,
    MultitimeDiracState,
    MultitimeField,
    SpectralField,
    FineGridField,
    density_bins,
    dirac_current,
    dirac_evolve,
    gaussian_packet,
    integrate_dirac_ensemble,
    integrate_dirac_path,
    integrate_multitime_paths,
    multitime_velocity,
    path_set_distance,
    plane_wave,
    quantile_edges,
    sample_density,
)

L, N = 80.0, 256


def packet(x0=-3.0, k0=1.0, w=2.0, n=N):
    return gaussian_packet(L, n, 1.0, x0, k0, w)


def test_representation():
    assert np.allclose(GAMMA0 @ GAMMA0, np.eye(2))
    assert np.allclose(GAMMA1 @ GAMMA1, -np.eye(2))
    assert np.allclose(GAMMA0 @ GAMMA1 + GAMMA1 @ GAMMA0, 0)
    assert np.allclose(ALPHA, [[0, 1], [1, 0]])


def test_plane_wave_is_an_eigenmode():
    pw = plane_wave(L, N, 1.0, 5)
    k = 2 * np.pi * 5 / L
    E = np.sqrt(k * k + 1)
    out = dirac_evolve(pw, 0.37)
    assert np.max(np.abs(out.field - np.exp(-1j * E * 0.37) * pw.field)) < 1e-12
    j0, j1 = dirac_current(pw)
    assert np.allclose(j1 / j0, k / E, atol=1e-12)


def test_norm_drift_over_many_steps():
    s = packet()
    for _ in range(1000):
        s = dirac_evolve(s, 0.01)
    assert abs(s.norm() - 1) < 1e-8


def test_self_convergence_against_halved_grid():
    fine = dirac_evolve(packet(n=512), 8.0)
    coarse = dirac_evolve(packet(n=256), 8.0)
    assert np.max(np.abs(fine.field[::2] - coarse.field)) < 1e-6


def test_backward_evolution_inverts():
    s = packet()
    back = dirac_evolve(dirac_evolve(s, 3.3), -3.3)
    assert np.max(np.abs(back.field - s.field)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_current_is_timelike_for_any_state(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(64, 2)) + 1j * rng.normal(size=(64, 2))
    f /= np.sqrt(np.sum(np.abs(f) ** 2) * (L / 64))
    s = DiracGridState(L, 1.0, f)
    j0, j1 = dirac_current(dirac_evolve(s, rng.uniform(0, 5)))
    assert np.all(j0 >= 0)
    assert np.min(j0 * j0 - j1 * j1) >= -1e-12


def test_grid_must_be_power_of_two():
    with pytest.raises(ValueError):
        DiracGridState(L, 1.0, np.zeros((100, 2)))


def test_spectral_and_fine_grid_evaluators_agree():
    s = packet()
    xs = np.linspace(-10, 10, 37)
    exact = SpectralField(s).at(2.5, xs)
    approx = FineGridField(s).at(2.5, xs)
    assert np.max(np.abs(exact - approx)) < 1e-6
    grid = dirac_evolve(s, 2.5)
    assert np.max(np.abs(SpectralField(s).at(2.5, grid.x[:16]) - grid.field[:16])) < 1e-12


def test_rest_packet_path_stays_at_center():
    s = gaussian_packet(L, N, 1.0, 0.0, 0.0, 2.0)
    p = integrate_dirac_path(s, 0.0, 5.0)
    assert np.max(np.abs(p.x)) < 1e-9


def test_path_speed_bounded():
    p = integrate_dirac_path(packet(k0=3.0), -2.0, 6.0)
    assert p.max_speed() <= 1 + 1e-9


def test_ensemble_equivariance_small():
    s = packet()
    x0 = sample_density(s, 20000, 3)
    xe, vmax = integrate_dirac_ensemble(s, x0, 4.0)
    assert vmax <= 1 + 1e-9
    final = dirac_evolve(s, 4.0)
    edges = quantile_edges(final, 16)
    p = density_bins(final, edges)
    emp = np.histogram(xe, edges)[0] / len(xe)
    assert abs(p.sum() - 1) < 1e-12
    assert 0.5 * np.abs(p - emp).sum() < 0.03


def _entangled():
    a, b = packet(-3.0, 1.0), packet(3.0, -0.5)
    c, d = packet(-1.0, -1.0), packet(2.0, 0.8)
    return MultitimeDiracState((1.0, 1.0), ((a, b), (c, d))).normalized()


def test_multitime_norm():
    assert abs(_entangled().norm() - 1) < 1e-9


def test_covariant_reduces_to_current_for_one_particle():
    a = packet()
    one = MultitimeDiracState((1.0,), ((a,),))
    (v0, v1), = multitime_velocity(one, "covariant", [0.7], [-2.5])
    psi = SpectralField(a).at(0.7, [-2.5])
    j0, j1 = dirac_current(psi)
    assert abs(v0 - j0[0]) < 1e-14 and abs(v1 - j1[0]) < 1e-14


def test_product_state_direction_independent_of_other_position():
    a, b = packet(-3.0, 1.0), packet(3.0, -0.5)
    prod = MultitimeDiracState((1.0,), ((a, b),))
    fld = MultitimeField(prod)
    dirs = []
    for x2 in (1.0, 2.5, 4.0):
        (v0, v1), _ = multitime_velocity(prod, "covariant", [0.3, 0.9], [-2.0, x2], fld)
        dirs.append(v1 / v0)
    assert np.ptp(dirs) < 1e-12


def test_shbd_and_multibd_are_parallel():
    st_ = _entangled()
    fld = MultitimeField(st_)
    for pt in ([0.1, 0.4], [-2.0, 3.1]), ([0.0, 0.0], [-0.5, 1.5]):
        s = multitime_velocity(st_, "shbd", *pt, fld)
        m = multitime_velocity(st_, "multibd", *pt, fld)
        psi = fld.psi(*pt)
        rho = np.vdot(psi, psi).real
        for (s0, s1), (m0, m1) in zip(s, m):
            assert abs(s0 - rho * m0) < 1e-14 and abs(s1 - rho * m1) < 1e-14


def test_shbd_and_multibd_trace_the_same_paths():
    st_ = _entangled()
    start = [(0.0, -3.2), (0.0, 2.5)]
    pm = integrate_multitime_paths(st_, "multibd", start, 4.0)
    ps = integrate_multitime_paths(st_, "shbd", start, 1e9, t_stop=4.0)
    assert path_set_distance(pm, ps) < 1e-6
    assert np.ptp(pm.T[1] - pm.T[0]) < 1e-12


def test_multibd_product_state_matches_single_particle_paths():
    a, b = packet(-3.0, 1.0), packet(3.0, -0.5)
    prod = MultitimeDiracState((1.0,), ((a, b),))
    pm = integrate_multitime_paths(prod, "multibd", [(0.0, -3.2), (0.0, 2.5)], 5.0)
    ra = integrate_dirac_path(a, -3.2, 5.0)
    rb = integrate_dirac_path(b, 2.5, 5.0)
    assert np.max(np.abs(ra.dense(pm.T[0])[0] - pm.Q[0])) < 1e-6
    assert np.max(np.abs(rb.dense(pm.T[1])[0] - pm.Q[1])) < 1e-6


def test_covariant_time_offset_drifts_for_entangled_state():
    st_ = _entangled()
    pc = integrate_multitime_paths(st_, "covariant", [(0.0, -3.2), (0.0, 2.5)], 2.0)
    assert np.ptp(pc.T[1] - pc.T[0]) > 1e-4


def test_unknown_variant():
    with pytest.raises(ValueError):
        multitime_velocity(_entangled(), "other", [0, 0], [0, 0])
