"""Two-time Heisenberg measurement formalism on spin (x) spin.

Probabilities are norms of ordered products of Heisenberg projectors,
pi(t) = U_{-t} pi U_t with U_t = exp(-i H t) acting on one factor only;
all b-projectors stand to the left of all a-projectors.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .wavefunction import PAULI as _PAULI_XZ

I2 = np.eye(2, dtype=complex)
SIGMA = {**_PAULI_XZ, "y": np.array([[0, -1j], [1j, 0]], dtype=complex)}


@dataclass(frozen=True)
class HeisenbergModel:
    psi0: np.ndarray
    H_a: np.ndarray
    H_b: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi0, dtype=complex).reshape(4)
        if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
            raise ValueError("psi0 must be normalized")
        for name in ("H_a", "H_b"):
            H = np.asarray(getattr(self, name), dtype=complex)
            if H.shape != (2, 2) or np.max(np.abs(H - H.conj().T)) > 1e-12:
                raise ValueError(f"{name} must be a Hermitian 2x2 matrix")
            object.__setattr__(self, name, H)
        object.__setattr__(self, "psi0", psi)

    def U(self, subsystem: str, t: float) -> np.ndarray:
        """exp(-i H_sub t) embedded in the 4-dim space."""
        H = self.H_a if subsystem == "a" else self.H_b
        u = expm(-1j * H * t)
        return np.kron(u, I2) if subsystem == "a" else np.kron(I2, u)

    def U_tau(self, tau) -> np.ndarray:
        return self.U("a", tau[0]) @ self.U("b", tau[1])


@dataclass(frozen=True)
class MeasurementEvent:
    subsystem: str
    time: float
    axis: str
    outcome: int

    def __post_init__(self):
        if self.subsystem not in ("a", "b"):
            raise ValueError("subsystem must be 'a' or 'b'")
        if self.axis not in SIGMA:
            raise ValueError(f"axis must be one of {tuple(SIGMA)}")
        if self.outcome not in (1, -1):
            raise ValueError("outcome must be +1 or -1")


def spectral_projector(M: np.ndarray, value: float, tol: float = 1e-9) -> np.ndarray:
    """Projector onto the eigenspace of Hermitian M for ``value``."""
    w, v = np.linalg.eigh(M)
    cols = v[:, np.abs(w - value) < tol]
    return cols @ cols.conj().T


def projector(model: HeisenbergModel, event: MeasurementEvent) -> np.ndarray:
    """Heisenberg projector pi(t) = U_{-t} pi U_t on the 4-dim space."""
    p = spectral_projector(SIGMA[event.axis], event.outcome)
    P = np.kron(p, I2) if event.subsystem == "a" else np.kron(I2, p)
    U = model.U(event.subsystem, event.time)
    return U.conj().T @ P @ U


def _check_order(events):
    last = {"a": -np.inf, "b": -np.inf}
    for e in events:
        if not e.time > last[e.subsystem]:
            raise ValueError(f"events of subsystem {e.subsystem} must have strictly increasing times")
        last[e.subsystem] = e.time


def _apply(model: HeisenbergModel, events, psi=None) -> np.ndarray:
    _check_order(events)
    v = model.psi0 if psi is None else psi
    for sub in ("a", "b"):
        for e in events:
            if e.subsystem == sub:
                v = projector(model, e) @ v
    return v


def joint_probability(model: HeisenbergModel, events) -> float:
    v = _apply(model, list(events))
    return float(np.real(np.vdot(v, v)))


def shift_events(model: HeisenbergModel, events, tau):
    """The same experiment described after the multitime translation tau.

    The state becomes U_tau psi0 and every event time t becomes t - tau
    for its subsystem; joint probabilities are unchanged.
    """
    psi = model.U_tau(tau) @ model.psi0
    psi = psi / np.linalg.norm(psi)
    new = HeisenbergModel(psi, model.H_a, model.H_b)
    shifted = [
        MeasurementEvent(e.subsystem, e.time - (tau[0] if e.subsystem == "a" else tau[1]), e.axis, e.outcome)
        for e in events
    ]
    return new, shifted


def collapse(model: HeisenbergModel, prior) -> np.ndarray:
    """Normalized projected Heisenberg state after the prior results."""
    prior = list(prior)
    if not prior:
        raise ValueError("collapse needs at least one prior event")
    v = _apply(model, prior)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("conditioning on a zero-probability result")
    return v / n


def conditional_probability(model: HeisenbergModel, prior, further) -> float:
    """P(further | prior) evaluated with the collapsed state."""
    psi_eff = collapse(model, prior)
    order_check = list(prior) + list(further)
    _check_order(sorted(order_check, key=lambda e: (e.subsystem, e.time)))
    v = _apply(model, list(further), psi=psi_eff)
    return float(np.real(np.vdot(v, v)))


def outcome_patterns(settings, subsystem: str):
    """All outcome assignments for a list of (time, axis) settings."""
    for outs in itertools.product((1, -1), repeat=len(settings)):
        yield [MeasurementEvent(subsystem, t, ax, o) for (t, ax), o in zip(settings, outs)]


def no_signaling_gap(model: HeisenbergModel, a_settings, b_setting_1, b_setting_2) -> float:
    """Largest change of any a-side marginal when b switches between two settings."""
    gap = 0.0
    for a_ev in outcome_patterns(a_settings, "a"):
        ps = []
        for bs in (b_setting_1, b_setting_2):
            ps.append(sum(joint_probability(model, a_ev + b_ev) for b_ev in outcome_patterns(bs, "b")))
        gap = max(gap, abs(ps[0] - ps[1]))
    return gap


def hardy_model(H_a=None, H_b=None) -> HeisenbergModel:
    """Spin part of the Hardy state, z(x)z components (++, +-, -+, --)."""
    psi = np.array([-1.0, 1.0, 1.0, 0.0], dtype=complex) / np.sqrt(3.0)
    zero = np.zeros((2, 2))
    return HeisenbergModel(psi, zero if H_a is None else H_a, zero if H_b is None else H_b)


def random_hermitian(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return scale * 0.5 * (m + m.conj().T)


def random_model(rng: np.random.Generator) -> HeisenbergModel:
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    return HeisenbergModel(psi / np.linalg.norm(psi), random_hermitian(rng), random_hermitian(rng))


def random_events(rng: np.random.Generator, k: int = 3) -> list[MeasurementEvent]:
    subs = rng.choice(["a", "b"], size=k)
    out = []
    for sub in ("a", "b"):
        m = int(np.sum(subs == sub))
        times = np.sort(rng.uniform(-2, 2, size=m))
        for t in times:
            out.append(MeasurementEvent(sub, float(t), str(rng.choice(["x", "y", "z"])), int(rng.choice([1, -1]))))
    return out
