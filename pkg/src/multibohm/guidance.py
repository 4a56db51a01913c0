"""Multitime guidance: velocity fields and synchronized two-paths.

A synchronized path is Z(s) = (T_a(s), Q_a(s), T_b(s), Q_b(s)) with
dT_k/ds = 1 and dQ_k/ds = Im(psi^dag d_k psi) / psi^dag psi, so
T_b(s) - T_a(s) = h is constant along it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussian import propagate_params
from .wavefunction import SpinorTrack, TwoTimeState

NODE = 1
UNDERFLOW = 2
HOP = 4
OUTSIDE = 8


class NodeProximityError(RuntimeError):
    pass


class _SubsystemField:
    """All distinct packet shapes of one subsystem, per schedule segment.

    Pieces of different tracks that share shape and force evolve with the
    same phase increment, so each shape is evaluated once and every track
    becomes a fixed (shape x spin) weight matrix within a segment.
    """

    def __init__(self, tracks: list[SpinorTrack]):
        self.tracks = tracks
        self.starts = tracks[0].starts
        for tr in tracks[1:]:
            if not np.array_equal(tr.starts, self.starts):
                raise ValueError("tracks of one subsystem must share their segment grid")
        self.segments = []
        for j in range(len(self.starts)):
            reps: list[tuple] = []
            rows = []
            for ti, tr in enumerate(tracks):
                W, x0, k, alpha, theta, force = tr.segments[j]
                for p in range(len(x0)):
                    for gi, (rx, rk, ra, rth, rf) in enumerate(reps):
                        if (
                            rf == force[p]
                            and abs(rx - x0[p]) <= 1e-12 * max(1.0, abs(rx))
                            and abs(rk - k[p]) <= 1e-12 * max(1.0, abs(rk))
                            and abs(ra - alpha[p]) <= 1e-12 * max(1.0, abs(ra))
                        ):
                            break
                    else:
                        gi = len(reps)
                        reps.append((x0[p], k[p], alpha[p], theta[p], force[p]))
                    rows.append((ti, gi, W[p] * np.exp(1j * (theta[p] - reps[gi][3]))))
            Wt = np.zeros((len(tracks), len(reps), 2), dtype=complex)
            for ti, gi, w in rows:
                Wt[ti, gi] += w
            rep = np.array(reps, dtype=complex)
            self.segments.append((Wt, rep[:, 0].real, rep[:, 1].real, rep[:, 2], rep[:, 3].real, rep[:, 4].real))

    def evaluate(self, t, q):
        """Per-track (psi, dpsi/dq), each of shape (tracks, 2, M).

        t is a scalar or one time per point.
        """
        q = np.asarray(q, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), q.shape)
        if np.any(t < self.starts[0] - 1e-12):
            raise ValueError(f"time precedes the field's start {self.starts[0]}")
        js = np.maximum(np.searchsorted(self.starts, t, side="right") - 1, 0)
        T = len(self.tracks)
        psi = np.empty((T * 2, q.size), dtype=complex)
        dpsi = np.empty((T * 2, q.size), dtype=complex)
        for j in np.unique(js):
            sel = js == j
            whole = bool(sel.all())
            Wt, x0, k, alpha, theta, force = self.segments[j]
            dt = (t if whole else t[sel]) - self.starts[j]
            qq = q if whole else q[sel]
            x, kk, al, th = propagate_params(
                x0[:, None], k[:, None], alpha[:, None], theta[:, None], dt[None, :], force[:, None]
            )
            u = qq[None, :] - x
            ar = al.real
            mag = np.exp(0.25 * np.log(ar / np.pi) - 0.5 * ar * u * u)
            ph = (-0.5 * al.imag * u + kk) * u + th
            g = np.empty(u.shape, dtype=complex)
            g.real = mag * np.cos(ph)
            g.imag = mag * np.sin(ph)
            dg = g * (-al * u + 1j * kk)
            Wm = Wt.transpose(0, 2, 1).reshape(T * 2, -1)
            if whole:
                psi, dpsi = Wm @ g, Wm @ dg
            else:
                psi[:, sel] = Wm @ g
                dpsi[:, sel] = Wm @ dg
        return psi.reshape(T, 2, -1), dpsi.reshape(T, 2, -1)


class GuidanceField:
    """Fast evaluator of psi and its spatial derivatives at arbitrary (t_a, t_b).

    Built once from a state at (t_a0, t_b0); valid for t_a >= t_a0 and
    t_b >= t_b0. Each product branch's factors are propagated independently,
    which is exactly the two-time Schroedinger evolution.
    """

    def __init__(self, state: TwoTimeState):
        self.state = state
        self.t_a0 = state.t_a
        self.t_b0 = state.t_b
        self.coeffs = np.array([b.coeff for b in state.branches], dtype=complex)
        self.fields = {}
        self.index = {}
        for sub in ("a", "b"):
            keys, tracks, idx = [], [], []
            for b in state.branches:
                key = (tuple(np.asarray(b.spin(sub))), b.packet(sub))
                if key not in keys:
                    keys.append(key)
                    tracks.append(SpinorTrack(b.spin(sub), b.packet(sub), state.schedule(sub), state.time(sub)))
                idx.append(keys.index(key))
            self.fields[sub] = _SubsystemField(tracks)
            self.index[sub] = np.array(idx)
        self.reference_peak = self.peak_density(self.t_a0, self.t_b0)

    @property
    def tracks_a(self) -> list[SpinorTrack]:
        return [self.fields["a"].tracks[i] for i in self.index["a"]]

    @property
    def tracks_b(self) -> list[SpinorTrack]:
        return [self.fields["b"].tracks[i] for i in self.index["b"]]

    def evaluate(self, t_a: float, t_b: float, q_a, q_b):
        """psi, d psi/dq_a, d psi/dq_b at the points, each of shape (4, M)."""
        q_a = np.atleast_1d(np.asarray(q_a, dtype=float))
        q_b = np.atleast_1d(np.asarray(q_b, dtype=float))
        A, dA = self.fields["a"].evaluate(t_a, q_a)
        B, dB = self.fields["b"].evaluate(t_b, q_b)
        ia, ib = self.index["a"], self.index["b"]
        c = self.coeffs[:, None, None]
        cA = c * A[ia]  # (n, 2, M)
        cdA = c * dA[ia]
        Bn, dBn = B[ib], dB[ib]
        psi = (cA[:, :, None, :] * Bn[:, None, :, :]).sum(axis=0).reshape(4, -1)
        da = (cdA[:, :, None, :] * Bn[:, None, :, :]).sum(axis=0).reshape(4, -1)
        db = (cA[:, :, None, :] * dBn[:, None, :, :]).sum(axis=0).reshape(4, -1)
        return psi, da, db

    def peak_density(self, t_a: float, t_b: float) -> float:
        return max(
            abs(c) ** 2 * ta.peak_density(t_a) * tb.peak_density(t_b)
            for c, ta, tb in zip(self.coeffs, self.tracks_a, self.tracks_b)
        )

    def velocity(self, t_a: float, t_b: float, q_a, q_b):
        """(v_a, v_b, density) at the points; velocities are nan where density is 0."""
        psi, da, db = self.evaluate(t_a, t_b, q_a, q_b)
        dens = np.sum(psi.real**2 + psi.imag**2, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            va = np.sum(psi.real * da.imag - psi.imag * da.real, axis=0) / dens
            vb = np.sum(psi.real * db.imag - psi.imag * db.real, axis=0) / dens
        return va, vb, dens

    def boundaries(self) -> tuple[list[float], list[float]]:
        return self.state.schedule_a.boundaries(), self.state.schedule_b.boundaries()


def velocity(state: TwoTimeState, q_a, q_b, node_floor: float = 1e-12):
    """Bohmian velocities at the state's current times.

    node_floor is relative to the peak density; points below it raise
    NodeProximityError.
    """
    fld = GuidanceField(state)
    va, vb, dens = fld.velocity(state.t_a, state.t_b, q_a, q_b)
    floor = node_floor * fld.peak_density(state.t_a, state.t_b)
    if np.any(~(dens > floor)):
        raise NodeProximityError("density below node floor at requested point")
    if np.ndim(q_a) == 0 and np.ndim(q_b) == 0:
        return float(va[0]), float(vb[0])
    return va, vb


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class SynchronizedPoint:
    T_a: float
    Q_a: float
    T_b: float
    Q_b: float

    @property
    def h(self) -> float:
        return self.T_b - self.T_a


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-9
    max_step: float = 0.05
    node_floor: float = 1e-12
    first_step: float = 1e-3
    min_step: float = 1e-10

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "node_floor", "first_step", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SynchronizedPath:
    """Samples of one synchronized two-path with derivatives for cubic dense output."""

    h: float
    T_a0: float
    s: np.ndarray
    Q: np.ndarray  # (n, 2)
    dQ: np.ndarray  # (n, 2)
    flags: int = 0

    @property
    def T_a(self) -> np.ndarray:
        return self.T_a0 + self.s

    @property
    def T_b(self) -> np.ndarray:
        return self.T_a0 + self.h + self.s

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.T_a, self.Q[:, 0], self.T_b, self.Q[:, 1]])

    def at(self, s_query, component: int):
        return hermite_lookup(self.s, self.Q[:, component], self.dQ[:, component], s_query)


def hermite_lookup(s, y, dy, s_query):
    s_query = np.asarray(s_query, dtype=float)
    order = np.argsort(s)
    s, y, dy = s[order], y[order], dy[order]
    if np.any(s_query < s[0] - 1e-12) or np.any(s_query > s[-1] + 1e-12):
        raise ValueError("query outside the path's span")
    i = np.clip(np.searchsorted(s, s_query, side="right") - 1, 0, len(s) - 2)
    ds = s[i + 1] - s[i]
    th = (s_query - s[i]) / ds
    return _hermite(th, ds, y[i], y[i + 1], dy[i], dy[i + 1])


def _hermite(th, ds, y0, y1, f0, f1):
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h01 = th * th * (3 - 2 * th)
    h10 = th * (1 - th) ** 2
    h11 = th * th * (th - 1)
    return h00 * y0 + h01 * y1 + ds * (h10 * f0 + h11 * f1)


def crossing(path: SynchronizedPath, slice_) -> tuple[float, float]:
    """Where the path crosses the slice (t_a*, t_b*): Q_a at T_a = t_a*, Q_b at T_b = t_b*."""
    sa = slice_.t_a - path.T_a0
    sb = slice_.t_b - path.T_a0 - path.h
    return float(path.at(sa, 0)), float(path.at(sb, 1))


# --------------------------------------------------------------------------
# batched Dormand-Prince 5(4)

_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class SegmentResult:
    y: np.ndarray
    flags: np.ndarray
    probes: dict = field(default_factory=dict)
    samples: list | None = None
    steps: int = 0


def _rhs(fld: GuidanceField, T_a0, T_b0, s, y, floor_rel):
    va, vb, dens = fld.velocity(T_a0 + s, T_b0 + s, y[:, 0], y[:, 1])
    ok = (dens > floor_rel * fld.reference_peak) & np.isfinite(va) & np.isfinite(vb)
    return np.column_stack([va, vb]), ok


def integrate_segment(
    fld: GuidanceField,
    T_a0: float,
    T_b0: float,
    s_from: float,
    s_to: float,
    y0,
    cfg: IntegratorConfig,
    probes: dict | None = None,
    breakpoints=(),
    record: bool = False,
    flags=None,
) -> SegmentResult:
    """Integrate a batch of paths sharing (T_a0, T_b0) from s_from to s_to.

    Every path carries its own adaptive step size, so a path's result does
    not depend on which other paths share the batch. probes maps
    key -> (component, s); values come from cubic Hermite interpolation
    inside the covering step. Steps never straddle a breakpoint.
    """
    y = np.array(y0, dtype=float, copy=True).reshape(-1, 2)
    n = y.shape[0]
    flags = np.zeros(n, dtype=np.int64) if flags is None else np.array(flags, dtype=np.int64)
    direction = 1.0 if s_to >= s_from else -1.0
    probes = dict(probes or {})
    out = {key: np.full(n, np.nan) for key in probes}
    keys = list(probes)
    p_comp = np.array([probes[k][0] for k in keys], dtype=int)
    p_s = np.array([probes[k][1] for k in keys], dtype=float)
    if np.any((p_s - s_from) * direction < -1e-12) or np.any((p_s - s_to) * direction > 1e-12):
        raise ValueError(f"probe outside [{s_from}, {s_to}]")
    pending = np.ones((len(keys), n), dtype=bool)
    bps = np.array(
        sorted(
            {b for b in breakpoints if (b - s_from) * direction > 1e-12 and (s_to - b) * direction > 1e-12}
            | {s_to},
            key=lambda b: (b - s_from) * direction,
        )
    )
    s = np.full(n, float(s_from))
    f = np.zeros_like(y)
    h = np.full(n, min(cfg.first_step, cfg.max_step))
    bp_i = np.zeros(n, dtype=int)
    active = flags == 0
    if active.any():
        fa, ok = _rhs(fld, T_a0, T_b0, s[active], y[active], cfg.node_floor)
        f[active] = fa
        idx = np.flatnonzero(active)
        flags[idx[~ok]] |= NODE
        active[idx[~ok]] = False

    def fill_exact(idx, at):
        # probes sitting (within rounding) on the current s
        for pk in range(len(keys)):
            m = pending[pk, idx] & (np.abs(p_s[pk] - at) <= 1e-12)
            if m.any():
                out[keys[pk]][idx[m]] = y[idx[m], p_comp[pk]]
                pending[pk, idx[m]] = False

    fill_exact(np.flatnonzero(active), s[active])
    samples = [[(s[i], y[i].copy(), f[i].copy())] for i in range(n)] if record else None
    steps = np.zeros(n, dtype=np.int64)
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        target = bps[bp_i[idx]]
        remaining = (target - s[idx]) * direction
        arrived = remaining <= 1e-12
        if arrived.any():
            ia = idx[arrived]
            fill_exact(ia, target[arrived])
            s[ia] = target[arrived]
            bp_i[ia] += 1
            done = ia[bp_i[ia] >= len(bps)]
            active[done] = False
            continue
        hh = np.minimum(np.minimum(h[idx], cfg.max_step), remaining)
        last = hh >= remaining - 1e-12
        dt = direction * np.where(last, remaining, hh)
        si = s[idx]
        ya = y[idx]
        K = [f[idx]]
        good = np.ones(idx.size, dtype=bool)
        for st in range(1, 7):
            yi = ya + dt[:, None] * sum(a * k for a, k in zip(_A[st], K))
            ki, ok = _rhs(fld, T_a0, T_b0, si + _C[st] * dt, yi, cfg.node_floor)
            good &= ok
            K.append(np.where(ok[:, None], ki, 0.0))
        y5 = ya + dt[:, None] * sum(b * k for b, k in zip(_B, K) if b != 0)
        err = dt[:, None] * sum(e * k for e, k in zip(_E, K) if e != 0)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(ya), np.abs(y5))
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        en = np.where(good, en, 0.0)
        acc = en <= 1.0
        # node hits end the path wherever they occur
        bad = idx[~good]
        flags[bad] |= NODE
        active[bad] = False
        y[bad] = np.nan
        acc &= good
        ok_idx = idx[acc]
        if ok_idx.size:
            s_new = np.where(last[acc], target[acc], si[acc] + dt[acc])
            y0a, y1a = ya[acc], y5[acc]
            f0a, f1a = K[0][acc], K[6][acc]
            ds = s_new - si[acc]
            for pk in range(len(keys)):
                m = pending[pk, ok_idx]
                if not m.any():
                    continue
                sp = p_s[pk]
                inside = m & ((sp - si[acc]) * direction >= -1e-12) & ((s_new - sp) * direction >= -1e-12)
                if inside.any():
                    c = p_comp[pk]
                    th = (sp - si[acc][inside]) / ds[inside]
                    out[keys[pk]][ok_idx[inside]] = _hermite(
                        th, ds[inside], y0a[inside, c], y1a[inside, c], f0a[inside, c], f1a[inside, c]
                    )
                    pending[pk, ok_idx[inside]] = False
            y[ok_idx] = y1a
            f[ok_idx] = f1a
            s[ok_idx] = s_new
            steps[ok_idx] += 1
            E = en[acc]
            fac = np.where(E == 0, 5.0, np.clip(0.9 * np.maximum(E, 1e-300) ** -0.2, 0.2, 5.0))
            hn = np.abs(dt[acc]) * fac
            h[ok_idx] = np.where(last[acc], np.maximum(h[ok_idx], hn), hn)
            fin = ok_idx[last[acc]]
            bp_i[fin] += 1
            active[fin[bp_i[fin] >= len(bps)]] = False
            if record:
                for i in ok_idx:
                    samples[i].append((s[i], y[i].copy(), f[i].copy()))
        rej = idx[good & ~acc]
        if rej.size:
            E = en[good & ~acc]
            h[rej] = np.abs(dt[good & ~acc]) * np.maximum(0.2, 0.9 * E**-0.25)
            small = rej[h[rej] < cfg.min_step]
            flags[small] |= UNDERFLOW
            active[small] = False
    res = {k: np.where(flags == 0, out[k], np.nan) for k in keys}
    return SegmentResult(y, flags, res, samples, int(steps.max(initial=0)))


def _breakpoints_in_s(fld: GuidanceField, T_a0: float, T_b0: float):
    ba, bb = fld.boundaries()
    return [b - T_a0 for b in ba] + [b - T_b0 for b in bb]


def integrate(
    state: TwoTimeState,
    start: SynchronizedPoint,
    s_end: float,
    cfg: IntegratorConfig | None = None,
    fld: GuidanceField | None = None,
) -> SynchronizedPath:
    """Integrate one synchronized path from s = 0 (the start point) to s_end."""
    cfg = cfg or IntegratorConfig()
    fld = fld or GuidanceField(state)
    if start.T_a < fld.t_a0 - 1e-12 or start.T_b < fld.t_b0 - 1e-12:
        raise ValueError("start point precedes the state's times")
    if s_end < 0 and (start.T_a + s_end < fld.t_a0 - 1e-12 or start.T_b + s_end < fld.t_b0 - 1e-12):
        raise ValueError("backward integration would leave the state's time domain")
    res = integrate_segment(
        fld, start.T_a, start.T_b, 0.0, s_end, [[start.Q_a, start.Q_b]], cfg,
        breakpoints=_breakpoints_in_s(fld, start.T_a, start.T_b), record=True,
    )
    rec = res.samples[0]
    s = np.array([r[0] for r in rec])
    Q = np.array([r[1] for r in rec])
    dQ = np.array([r[2] for r in rec])
    keep = np.all(np.isfinite(Q), axis=1)
    return SynchronizedPath(start.h, start.T_a, s[keep], Q[keep], dQ[keep], int(res.flags[0]))


@dataclass
class EnsembleResult:
    """A batch of synchronized paths reduced to what statistics need."""

    T_a0: float
    T_b0: float
    q0: np.ndarray
    flags: np.ndarray
    probes: dict
    steps: int = 0

    @property
    def h(self) -> float:
        return self.T_b0 - self.T_a0

    def crossing(self, slice_) -> np.ndarray:
        """(n, 2) crossing points of a slice recorded during integration."""
        key = slice_key(slice_)
        if key + ":a" not in self.probes:
            raise KeyError(f"slice {slice_!r} was not probed during integration")
        return np.column_stack([self.probes[key + ":a"], self.probes[key + ":b"]])


def slice_key(slice_) -> str:
    return f"{slice_.label}@{slice_.t_a!r},{slice_.t_b!r}"


def integrate_ensemble(
    state: TwoTimeState,
    T_a0: float,
    T_b0: float,
    q0,
    slices=(),
    s_span: tuple[float, float] | None = None,
    cfg: IntegratorConfig | None = None,
    chunk: int = 4096,
    fld: GuidanceField | None = None,
    extra_probes: dict | None = None,
) -> EnsembleResult:
    """Integrate many paths from common start times and record slice crossings.

    s_span defaults to the smallest interval containing s = 0 and every
    slice time. Chunks are fixed-size so results do not depend on how the
    work is scheduled.
    """
    from .parallel import map_chunks

    cfg = cfg or IntegratorConfig()
    fld = fld or GuidanceField(state)
    q0 = np.asarray(q0, dtype=float).reshape(-1, 2)
    probes = dict(extra_probes or {})
    for sl in slices:
        key = slice_key(sl)
        probes[key + ":a"] = (0, sl.t_a - T_a0)
        probes[key + ":b"] = (1, sl.t_b - T_b0)
    ps = [sp for _, sp in probes.values()]
    lo, hi = s_span if s_span is not None else (min([0.0, *ps]), max([0.0, *ps]))
    if lo > 0 or hi < 0:
        raise ValueError("s span must contain 0")
    if T_a0 + lo < fld.t_a0 - 1e-12 or T_b0 + lo < fld.t_b0 - 1e-12:
        raise ValueError("slice precedes the state's time domain")
    bps = _breakpoints_in_s(fld, T_a0, T_b0)
    fwd = {k: v for k, v in probes.items() if v[1] >= 0}
    bwd = {k: v for k, v in probes.items() if v[1] < 0}

    def work(block):
        r1 = integrate_segment(fld, T_a0, T_b0, 0.0, hi, block, cfg, fwd, bps)
        r2 = integrate_segment(fld, T_a0, T_b0, 0.0, lo, block, cfg, bwd, bps)
        return r1.flags | r2.flags, {**r1.probes, **r2.probes}, r1.steps + r2.steps

    results = map_chunks(work, q0, chunk)
    flags = np.concatenate([r[0] for r in results]) if results else np.zeros(0, np.int64)
    out = {k: np.concatenate([r[1][k] for r in results]) for k in probes}
    steps = max((r[2] for r in results), default=0)
    return EnsembleResult(T_a0, T_b0, q0, flags, out, steps)
