"""Two-time spin-1/2 x spin-1/2 wave functions as sums of Gaussian product branches.

Each particle moves in one dimension. A Stern-Gerlach magnet is a time
window with the spin-dependent potential ``V = -F sigma_axis q``; inside a
window every branch is an eigenbranch of ``sigma_axis`` and feels the force
``+F`` or ``-F``. Everything stays Gaussian, so evolution is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .gaussian import GaussianPacket, interval_overlap, overlap, packet_values, propagate_params

AXES = ("x", "z")
SUBSYSTEMS = ("a", "b")

_S2 = 1.0 / np.sqrt(2.0)
_EIGEN = {
    ("z", 1): np.array([1.0, 0.0], dtype=complex),
    ("z", -1): np.array([0.0, 1.0], dtype=complex),
    ("x", 1): np.array([_S2, _S2], dtype=complex),
    ("x", -1): np.array([_S2, -_S2], dtype=complex),
}
PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Branch coefficients below this (relative to the input weight) are exact
# cancellations up to rounding and are dropped.
_ZERO = 1e-13
MERGE_TOL = 1e-10


def eigenspinor(axis: str, sign: int) -> np.ndarray:
    """Canonical eigenvector of sigma_axis with eigenvalue sign (+1/-1)."""
    return _EIGEN[(_check_axis(axis), int(sign))].copy()


def _check_axis(axis: str) -> str:
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
    return axis


def _check_subsystem(sub: str) -> str:
    if sub not in SUBSYSTEMS:
        raise ValueError(f"unknown subsystem {sub!r}; expected 'a' or 'b'")
    return sub


def canonical_spinor(w) -> tuple[complex, np.ndarray]:
    """Split w = scale * u with |u| = 1 and the largest component of u real positive."""
    w = np.asarray(w, dtype=complex)
    n = np.linalg.norm(w)
    if n == 0:
        raise ValueError("zero spinor")
    i = int(np.argmax(np.abs(w)))
    phase = w[i] / abs(w[i])
    return complex(n * phase), w / (n * phase)


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Window:
    t_start: float
    t_end: float
    axis: str
    force: float

    def __post_init__(self):
        _check_axis(self.axis)
        if not self.t_start < self.t_end:
            raise ValueError(f"window needs t_start < t_end, got {self.t_start}, {self.t_end}")


@dataclass(frozen=True)
class PotentialSchedule:
    """Magnet windows for one subsystem, active on half-open [t_start, t_end)."""

    windows: tuple[Window, ...] = ()

    def __post_init__(self):
        ws = tuple(sorted(self.windows, key=lambda w: w.t_start))
        for w0, w1 in zip(ws, ws[1:]):
            if w1.t_start < w0.t_end:
                raise ValueError("schedule windows overlap")
        object.__setattr__(self, "windows", ws)

    def window_at(self, t: float) -> Window | None:
        for w in self.windows:
            if w.t_start <= t < w.t_end:
                return w
        return None

    def boundaries(self) -> list[float]:
        return sorted({b for w in self.windows for b in (w.t_start, w.t_end)})

    def shifted(self, dt: float) -> "PotentialSchedule":
        return PotentialSchedule(
            tuple(Window(w.t_start + dt, w.t_end + dt, w.axis, w.force) for w in self.windows)
        )


# --------------------------------------------------------------------------
# single-particle propagation of a spinor-valued packet


def _enter(pieces, window):
    """Attach forces for the coming interval, splitting into eigenbranches."""
    if window is None:
        return [(w, p, 0.0) for w, p in pieces]
    out = []
    for w, p in pieces:
        ref = np.linalg.norm(w)
        for sign in (1, -1):
            e = _EIGEN[(window.axis, sign)]
            c = np.vdot(e, w)
            if abs(c) > _ZERO * ref:
                out.append((e * c, p, sign * window.force))
    return out


def merge_pieces(pieces):
    """Combine spinor-valued pieces whose packets differ only by a phase."""
    out: list[tuple[np.ndarray, GaussianPacket]] = []
    for w, p in pieces:
        for i, (w0, p0) in enumerate(out):
            if p0.same_shape(p, MERGE_TOL):
                out[i] = (w0 + w * np.exp(1j * (p.theta - p0.theta)), p0)
                break
        else:
            out.append((np.asarray(w, dtype=complex), p))
    scale = max((np.linalg.norm(w) for w, _ in out), default=0.0)
    return [(w, p) for w, p in out if np.linalg.norm(w) > _ZERO * scale]


def propagate_spinor_packet(w, packet: GaussianPacket, schedule: PotentialSchedule, t0: float, t1: float):
    """Evolve the single-particle state w (x) packet from time t0 to t1.

    Returns a list of (spinor, packet) pieces. t1 < t0 runs the unitary
    inverse.
    """
    pieces = [(np.asarray(w, dtype=complex), packet)]
    if t1 == t0:
        return pieces
    inner = [b for b in schedule.boundaries() if min(t0, t1) < b < max(t0, t1)]
    if t1 > t0:
        marks = [t0, *inner, t1]
    else:
        marks = [t0, *reversed(inner), t1]
    for u, v in zip(marks, marks[1:]):
        window = schedule.window_at(min(u, v))
        forced = _enter(pieces, window)
        pieces = merge_pieces([(w_, p.propagate(v - u, f)) for w_, p, f in forced])
    return pieces


class SpinorTrack:
    """Piecewise-analytic single-particle spinor field t -> psi(t, .) for t >= t0.

    Precomputes the branch pieces at every schedule boundary so that the
    field can be evaluated at any later time without re-propagating.
    """

    def __init__(self, w, packet: GaussianPacket, schedule: PotentialSchedule, t0: float):
        self.t0 = float(t0)
        starts = [self.t0] + [b for b in schedule.boundaries() if b > self.t0]
        self.starts = np.array(starts)
        self.segments = []
        pieces = [(np.asarray(w, dtype=complex), packet)]
        for j, start in enumerate(starts):
            forced = _enter(pieces, schedule.window_at(start))
            self.segments.append(self._pack(forced))
            if j + 1 < len(starts):
                dt = starts[j + 1] - start
                pieces = merge_pieces([(w_, p.propagate(dt, f)) for w_, p, f in forced])

    @staticmethod
    def _pack(forced):
        W = np.array([w for w, _, _ in forced], dtype=complex).reshape(-1, 2)
        x0 = np.array([p.x0 for _, p, _ in forced])
        k = np.array([p.k for _, p, _ in forced])
        alpha = np.array([p.alpha for _, p, _ in forced], dtype=complex)
        theta = np.array([p.theta for _, p, _ in forced])
        force = np.array([f for _, _, f in forced])
        return W, x0, k, alpha, theta, force

    def _segment(self, t: float):
        if t < self.t0 - 1e-12:
            raise ValueError(f"time {t} precedes the track start {self.t0}")
        j = max(int(np.searchsorted(self.starts, t, side="right")) - 1, 0)
        return j, t - self.starts[j]

    def params(self, t: float):
        j, dt = self._segment(t)
        W, x0, k, alpha, theta, force = self.segments[j]
        x, kk, al, th = propagate_params(x0, k, alpha, theta, dt, force)
        return W, x, kk, al, th

    def evaluate(self, t: float, q):
        """Return (psi, dpsi/dq), each of shape (2, len(q))."""
        W, x, kk, al, th = self.params(t)
        q = np.asarray(q, dtype=float)
        g = packet_values(x[:, None], kk[:, None], al[:, None], th[:, None], q[None, :])
        dg = g * (-al[:, None] * (q[None, :] - x[:, None]) + 1j * kk[:, None])
        return W.T @ g, W.T @ dg

    def peak_density(self, t: float) -> float:
        W, x, kk, al, th = self.params(t)
        return float(np.max(np.sum(np.abs(W) ** 2, axis=1) * np.sqrt(al.real / np.pi)))


# --------------------------------------------------------------------------
# two-particle state


@dataclass(frozen=True)
class Branch:
    coeff: complex
    spin_a: np.ndarray
    spin_b: np.ndarray
    packet_a: GaussianPacket
    packet_b: GaussianPacket

    def spin(self, sub: str) -> np.ndarray:
        return self.spin_a if sub == "a" else self.spin_b

    def packet(self, sub: str) -> GaussianPacket:
        return self.packet_a if sub == "a" else self.packet_b

    def with_part(self, sub: str, coeff: complex, spin, packet) -> "Branch":
        if sub == "a":
            return Branch(coeff, spin, self.spin_b, packet, self.packet_b)
        return Branch(coeff, self.spin_a, spin, self.packet_a, packet)


def make_branch(coeff, w_a, w_b, packet_a, packet_b) -> Branch:
    """Branch from unnormalized spinors; their norms and phases move into coeff."""
    sa, ua = canonical_spinor(w_a)
    sb, ub = canonical_spinor(w_b)
    return Branch(complex(coeff) * sa * sb, ua, ub, packet_a, packet_b)


@dataclass(frozen=True)
class TwoTimeState:
    branches: tuple[Branch, ...]
    t_a: float = 0.0
    t_b: float = 0.0
    schedule_a: PotentialSchedule = field(default_factory=PotentialSchedule)
    schedule_b: PotentialSchedule = field(default_factory=PotentialSchedule)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))

    def time(self, sub: str) -> float:
        return self.t_a if _check_subsystem(sub) == "a" else self.t_b

    def schedule(self, sub: str) -> PotentialSchedule:
        return self.schedule_a if _check_subsystem(sub) == "a" else self.schedule_b

    def gram(self) -> np.ndarray:
        """Gram matrix <branch_n | branch_m> including spin and packet overlaps."""
        bs = self.branches
        n = len(bs)
        G = np.empty((n, n), dtype=complex)
        for i, p in enumerate(bs):
            for j, r in enumerate(bs):
                G[i, j] = (
                    np.conj(p.coeff) * r.coeff
                    * np.vdot(p.spin_a, r.spin_a) * np.vdot(p.spin_b, r.spin_b)
                    * overlap(p.packet_a, r.packet_a) * overlap(p.packet_b, r.packet_b)
                )
        return G

    def norm(self) -> float:
        return float(np.sqrt(max(np.real(self.gram().sum()), 0.0)))

    def normalized(self) -> "TwoTimeState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero state")
        return replace(self, branches=[replace(b, coeff=b.coeff / n) for b in self.branches])

    def scaled(self, c: complex) -> "TwoTimeState":
        return replace(self, branches=[replace(b, coeff=b.coeff * c) for b in self.branches])

    def check(self, tol: float = 1e-9) -> None:
        for b in self.branches:
            for s in (b.spin_a, b.spin_b):
                if abs(np.linalg.norm(s) - 1) > 1e-12:
                    raise ValueError("branch spinors must be unit norm")
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"state norm {self.norm()} differs from 1")


def merge_branches(branches: Iterable[Branch]) -> list[Branch]:
    """Merge branches whose spins and packets coincide up to phases."""
    out: list[Branch] = []
    for b in branches:
        for i, o in enumerate(out):
            oa = np.vdot(o.spin_a, b.spin_a)
            ob = np.vdot(o.spin_b, b.spin_b)
            if (
                abs(abs(oa) - 1) < MERGE_TOL
                and abs(abs(ob) - 1) < MERGE_TOL
                and o.packet_a.same_shape(b.packet_a, MERGE_TOL)
                and o.packet_b.same_shape(b.packet_b, MERGE_TOL)
            ):
                rel = oa * ob * np.exp(
                    1j * (b.packet_a.theta - o.packet_a.theta + b.packet_b.theta - o.packet_b.theta)
                )
                out[i] = replace(o, coeff=o.coeff + b.coeff * rel)
                break
        else:
            out.append(b)
    scale = max((abs(b.coeff) for b in out), default=0.0)
    return [b for b in out if abs(b.coeff) > _ZERO * scale]


def hardy_state(
    sigma: float,
    centers: tuple[float, float] = (0.0, 0.0),
    schedule_a: PotentialSchedule | None = None,
    schedule_b: PotentialSchedule | None = None,
    t: tuple[float, float] = (0.0, 0.0),
) -> TwoTimeState:
    """(|+z>|-z> - sqrt2 |-x>|+z>)/sqrt3 with both particles in fresh packets at rest."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ga = GaussianPacket.fresh(centers[0], 0.0, sigma)
    gb = GaussianPacket.fresh(centers[1], 0.0, sigma)
    branches = [
        Branch(1 / np.sqrt(3), eigenspinor("z", 1), eigenspinor("z", -1), ga, gb),
        Branch(-np.sqrt(2) / np.sqrt(3), eigenspinor("x", -1), eigenspinor("z", 1), ga, gb),
    ]
    return TwoTimeState(
        tuple(branches), t[0], t[1], schedule_a or PotentialSchedule(), schedule_b or PotentialSchedule()
    )


def product_state(
    spin_a, packet_a: GaussianPacket, spin_b, packet_b: GaussianPacket,
    schedule_a: PotentialSchedule | None = None, schedule_b: PotentialSchedule | None = None,
    t: tuple[float, float] = (0.0, 0.0),
) -> TwoTimeState:
    b = make_branch(1.0, spin_a, spin_b, packet_a, packet_b)
    return TwoTimeState(
        (b,), t[0], t[1], schedule_a or PotentialSchedule(), schedule_b or PotentialSchedule()
    ).normalized()


def rebasis(state: TwoTimeState, subsystem: str, axis: str) -> TwoTimeState:
    """Rewrite every spin factor of one subsystem in the eigenbasis of sigma_axis."""
    _check_subsystem(subsystem)
    _check_axis(axis)
    out = []
    for b in state.branches:
        s = b.spin(subsystem)
        for sign in (1, -1):
            e = eigenspinor(axis, sign)
            c = np.vdot(e, s)
            if abs(c) > _ZERO:
                out.append(b.with_part(subsystem, b.coeff * c, e, b.packet(subsystem)))
    return replace(state, branches=merge_branches(out))


def evolve_subsystem(state: TwoTimeState, subsystem: str, dt: float, inverse: bool = False) -> TwoTimeState:
    """Advance one subsystem's time by dt (negative dt only with inverse=True)."""
    _check_subsystem(subsystem)
    if dt < 0 and not inverse:
        raise ValueError("negative time step; pass inverse=True to run the unitary inverse")
    if dt == 0:
        return state
    t0 = state.time(subsystem)
    sched = state.schedule(subsystem)
    out = []
    for b in state.branches:
        for w, p in propagate_spinor_packet(b.spin(subsystem), b.packet(subsystem), sched, t0, t0 + dt):
            scale, u = canonical_spinor(w)
            out.append(b.with_part(subsystem, b.coeff * scale, u, p))
    new_t = {"t_a": state.t_a, "t_b": state.t_b}
    new_t["t_" + subsystem] = t0 + dt
    return replace(state, branches=merge_branches(out), **new_t)


def multitime_shift(state: TwoTimeState, tau: tuple[float, float]) -> TwoTimeState:
    """U_tau psi = U^a_{tau_a} U^b_{tau_b} psi."""
    s = evolve_subsystem(state, "b", tau[1], inverse=True)
    return evolve_subsystem(s, "a", tau[0], inverse=True)


def evolve_to(state: TwoTimeState, t_a: float, t_b: float) -> TwoTimeState:
    return multitime_shift(state, (t_a - state.t_a, t_b - state.t_b))


def relabel_times(state: TwoTimeState, tau: tuple[float, float]) -> TwoTimeState:
    """psi' = psi o L_tau^{-1}: the same wave function on clocks shifted by -tau."""
    return replace(
        state,
        t_a=state.t_a - tau[0],
        t_b=state.t_b - tau[1],
        schedule_a=state.schedule_a.shifted(-tau[0]),
        schedule_b=state.schedule_b.shifted(-tau[1]),
    )


def superpose(terms: Sequence[tuple[complex, TwoTimeState]]) -> TwoTimeState:
    """Linear combination of states living on the same clocks and schedules."""
    first = terms[0][1]
    branches = []
    for c, s in terms:
        if (s.t_a, s.t_b, s.schedule_a, s.schedule_b) != (first.t_a, first.t_b, first.schedule_a, first.schedule_b):
            raise ValueError("superposed states must share times and schedules")
        branches.extend(replace(b, coeff=b.coeff * c) for b in s.branches)
    return replace(first, branches=merge_branches(branches))


def amplitude(state: TwoTimeState, q_a, q_b) -> np.ndarray:
    """psi(t_a, q_a, t_b, q_b) as z(x)z components (++, +-, -+, --), shape (..., 4)."""
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    shape = np.broadcast(q_a, q_b).shape
    out = np.zeros(shape + (4,), dtype=complex)
    for b in state.branches:
        ga = b.packet_a(q_a)
        gb = b.packet_b(q_b)
        spin = np.kron(b.spin_a, b.spin_b)
        out += (b.coeff * ga * gb)[..., None] * spin
    return out


def region_probability(state: TwoTimeState, region_a, region_b) -> float:
    """Integral of |psi|^2 over the product of two intervals, cross terms included."""
    lo_a, hi_a = region_a
    lo_b, hi_b = region_b
    total = 0.0 + 0.0j
    bs = state.branches
    for i, p in enumerate(bs):
        for j in range(i, len(bs)):
            r = bs[j]
            spin = np.vdot(p.spin_a, r.spin_a) * np.vdot(p.spin_b, r.spin_b)
            if abs(spin) < 1e-15:
                continue
            term = (
                np.conj(p.coeff) * r.coeff * spin
                * interval_overlap(p.packet_a, r.packet_a, lo_a, hi_a)
                * interval_overlap(p.packet_b, r.packet_b, lo_b, hi_b)
            )
            total += term if i == j else 2 * term.real
    return float(np.real(total))


def marginal_cdf(state: TwoTimeState, subsystem: str, x) -> np.ndarray:
    """P(q_sub <= x) for an array of x."""
    x = np.asarray(x, dtype=float)
    inf = (-np.inf, np.inf)
    out = np.zeros(x.shape)
    bs = state.branches
    for i, p in enumerate(bs):
        for j in range(i, len(bs)):
            r = bs[j]
            spin = np.vdot(p.spin_a, r.spin_a) * np.vdot(p.spin_b, r.spin_b)
            if abs(spin) < 1e-15:
                continue
            if subsystem == "a":
                t = interval_overlap(p.packet_a, r.packet_a, -np.inf, x) * overlap(p.packet_b, r.packet_b)
            else:
                t = overlap(p.packet_a, r.packet_a) * interval_overlap(p.packet_b, r.packet_b, -np.inf, x)
            t = np.conj(p.coeff) * r.coeff * spin * t
            out += np.real(t) if i == j else 2 * np.real(t)
    return out


def project(state: TwoTimeState, subsystem: str, region, inside: bool = True) -> TwoTimeState:
    """Keep branches whose packet center (for subsystem) lies in / outside region."""
    lo, hi = region
    keep = [b for b in state.branches if (lo <= b.packet(subsystem).x0 <= hi) == inside]
    if not keep:
        raise ValueError("projection annihilates the state")
    return replace(state, branches=keep)


def spin_vector(state: TwoTimeState) -> np.ndarray:
    """Spin-only 4-vector: sum of coeff * e^{i theta_a + i theta_b} * spin_a (x) spin_b.

    Meaningful when the configurational parts only differ by their
    (phase-stripped) supports.
    """
    v = np.zeros(4, dtype=complex)
    for b in state.branches:
        v += b.coeff * np.exp(1j * (b.packet_a.theta + b.packet_b.theta)) * np.kron(b.spin_a, b.spin_b)
    return v
