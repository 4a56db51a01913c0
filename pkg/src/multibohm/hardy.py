"""Hardy experiment: magnet schedules, frame slices, trajectory runs with detectors.

Each particle passes, on its own clock, an x-splitter (push then brake),
an x-hold stretch, the reversed x-splitter that recombines the tracks, a
z-splitter and a final z-hold. Frames are realized as offsets between the
two clocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    SliceSpec,
    TrackRegion,
    cell_fractions,
    cell_probabilities,
    grid_partition,
    sample_equilibrium,
    table_from_points,
    total_variation,
)
from .guidance import HOP, OUTSIDE, GuidanceField, IntegratorConfig, integrate_ensemble, integrate_segment
from .parallel import map_chunks
from .wavefunction import (
    PotentialSchedule,
    TwoTimeState,
    Window,
    eigenspinor,
    evolve_to,
    hardy_state,
    project,
    rebasis,
    spin_vector,
)

FRAMES = ("I(t1)", "II", "III", "I(t2)")
CHANNELS = ("+x", "-x", "+z", "-z")


@dataclass(frozen=True)
class HardyGeometry:
    """Timing and length scales of the Hardy apparatus (hbar = m = 1).

    ``window`` is the duration of each half of a splitter; the force is
    fixed by requiring the two outputs to end at rest a distance
    ``separation`` apart.
    """

    theta: float = 1.0
    sigma: float = float(np.sqrt(2.0))
    separation: float = 20.0
    window: float = 0.15
    x_hold: float = 1.6
    exit_delay: float = 0.5
    origin: float = -1.0
    min_separation_sigmas: float = 8.0

    def __post_init__(self):
        for name in ("theta", "sigma", "separation", "window", "x_hold", "exit_delay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"geometry field {name} must be positive")
        if self.origin > 0:
            raise ValueError("geometry field origin must be <= 0 (the preparation time)")
        lo, hi = self.frame_window("II")
        if not lo < hi:
            raise ValueError(
                "geometry field x_hold too short: no slice with one particle after its z-splitter "
                f"and the other in its x-hold at offset {self.theta}"
            )
        s_max = self.sigma_at(self.t_exit)
        if self.separation < self.min_separation_sigmas * s_max:
            raise ValueError(
                f"track separation {self.separation:g} is below {self.min_separation_sigmas:g} sigma "
                f"(sigma = {s_max:.4g} at t = {self.t_exit:g})"
            )

    # apparatus timing, identical on both clocks
    @property
    def force(self) -> float:
        return self.separation / (2.0 * self.window**2)

    @property
    def x_hold_start(self) -> float:
        return 2 * self.window

    @property
    def x_hold_end(self) -> float:
        return 2 * self.window + self.x_hold

    @property
    def z_hold_start(self) -> float:
        return 6 * self.window + self.x_hold

    @property
    def t_exit(self) -> float:
        return self.z_hold_start + self.exit_delay

    def sigma_at(self, t: float) -> float:
        """Packet width at clock time t (all tracks spread alike)."""
        s0 = self.sigma
        return float(s0 * np.sqrt(1.0 + (t / (2 * s0 * s0)) ** 2))

    def schedule(self) -> PotentialSchedule:
        T, F = self.window, self.force
        t1 = self.x_hold_end
        t2 = self.z_hold_start - 2 * T
        return PotentialSchedule(
            (
                Window(0.0, T, "x", F),
                Window(T, 2 * T, "x", -F),
                Window(t1, t1 + T, "x", -F),
                Window(t1 + T, t1 + 2 * T, "x", F),
                Window(t2, t2 + T, "z", F),
                Window(t2 + T, t2 + 2 * T, "z", -F),
            )
        )

    def frame_window(self, frame: str) -> tuple[float, float]:
        """Interval of the leading particle's time for the tilted frames."""
        if frame not in ("II", "III"):
            raise ValueError(frame)
        lo = max(self.z_hold_start, self.x_hold_start + self.theta)
        hi = min(self.x_hold_end + self.theta, self.t_exit + self.theta)
        return lo, hi


@dataclass(frozen=True)
class DetectorSpec:
    subsystem: str
    region: str  # track label such as "+x"
    time: float  # subsystem time of the detection

    def __post_init__(self):
        if self.subsystem not in ("a", "b"):
            raise ValueError(f"detector subsystem must be 'a' or 'b', got {self.subsystem!r}")
        if self.region not in CHANNELS:
            raise ValueError(f"detector region must be one of {CHANNELS}, got {self.region!r}")


@dataclass
class Scenario:
    geometry: HardyGeometry
    state: TwoTimeState  # at the preparation time (0, 0)
    origin_state: TwoTimeState  # the same wave function at (origin, origin)

    @property
    def schedule(self) -> PotentialSchedule:
        return self.state.schedule_a

    def slice(self, frame: str) -> SliceSpec:
        return frame_slices(self.geometry, frame)

    def track_center(self, channel: str) -> float:
        return (0.5 if channel[0] == "+" else -0.5) * self.geometry.separation

    def region(self, channel: str, t: float) -> TrackRegion:
        c = self.track_center(channel)
        w = 4.0 * self.geometry.sigma_at(t)
        return TrackRegion(channel, c - w, c + w)

    def regions(self, axis: str, t: float) -> list[TrackRegion]:
        return [self.region("+" + axis, t), self.region("-" + axis, t)]

    def hold_axis(self, t: float) -> str | None:
        g = self.geometry
        if g.x_hold_start <= t <= g.x_hold_end:
            return "x"
        if t >= g.z_hold_start:
            return "z"
        return None

    def slice_regions(self, slice_: SliceSpec):
        ra = self.regions(self.hold_axis(slice_.t_a), slice_.t_a)
        rb = self.regions(self.hold_axis(slice_.t_b), slice_.t_b)
        return ra, rb


def build_scenario(geometry: HardyGeometry | None = None) -> Scenario:
    g = geometry or HardyGeometry()
    sched = g.schedule()
    st = hardy_state(g.sigma, schedule_a=sched, schedule_b=sched)
    origin = evolve_to(st, g.origin, g.origin)
    return Scenario(g, st, origin)


def frame_slices(geometry: HardyGeometry, frame: str) -> SliceSpec:
    g = geometry
    if frame == "I(t1)":
        t = 0.5 * (g.x_hold_start + g.x_hold_end)
        return SliceSpec(t, t, frame)
    if frame == "I(t2)":
        return SliceSpec(g.t_exit, g.t_exit, frame)
    lo, hi = g.frame_window(frame)
    lead = 0.5 * (lo + hi)
    if frame == "II":
        return SliceSpec(lead, lead - g.theta, frame)
    return SliceSpec(lead - g.theta, lead, frame)


def run_start(geometry: HardyGeometry, h: float) -> tuple[float, float]:
    """Clock readings at s = 0 for offset h: both particles inside their x-hold."""
    g = geometry
    mid = 0.5 * (g.x_hold_start + g.x_hold_end)
    ta = mid - 0.5 * h
    tb = mid + 0.5 * h
    for t in (ta, tb):
        if not g.x_hold_start < t < g.x_hold_end:
            raise ValueError(f"offset h={h} does not fit both start times in the x-hold")
    return float(ta), float(tb)


def slice_state(scenario: Scenario, slice_: SliceSpec) -> TwoTimeState:
    return evolve_to(scenario.state, slice_.t_a, slice_.t_b)


def slice_spin_coefficients(scenario: Scenario, slice_: SliceSpec) -> dict:
    """Spin coefficients of the slice wave function in each particle's hold basis."""
    st = slice_state(scenario, slice_)
    ax_a = scenario.hold_axis(slice_.t_a)
    ax_b = scenario.hold_axis(slice_.t_b)
    st = rebasis(rebasis(st, "a", ax_a), "b", ax_b)
    v = spin_vector(st)
    out = {}
    for sa in (1, -1):
        for sb in (1, -1):
            e = np.kron(eigenspinor(ax_a, sa), eigenspinor(ax_b, sb))
            key = f"a:{'+' if sa > 0 else '-'}{ax_a} b:{'+' if sb > 0 else '-'}{ax_b}"
            out[key] = complex(np.vdot(e, v))
    # fix the global phase: first non-negligible coefficient real positive
    lead = next((c for c in out.values() if abs(c) > 1e-9), 1.0)
    ph = np.conj(lead) / abs(lead)
    return {k: complex(c * ph) for k, c in out.items()}


# --------------------------------------------------------------------------
# runs


@dataclass
class HardyReport:
    h: float
    start: tuple[float, float]
    points0: np.ndarray
    flags: np.ndarray
    channels: dict  # "a_x", "b_x", "a_z", "b_z" -> int arrays in {+1, -1, 0}
    crossings: dict  # frame label -> (n, 2)
    tables: dict  # frame label -> CrossingTable
    snapshots: dict  # s -> (n, 2) positions
    fired: dict = field(default_factory=dict)  # detector index -> bool array
    acceptance: float = 1.0
    steps: int = 0

    @property
    def n(self) -> int:
        return len(self.flags)

    def sub_ensemble(self, a_x: int, b_x: int) -> np.ndarray:
        return (self.channels["a_x"] == a_x) & (self.channels["b_x"] == b_x) & (self.flags == 0)

    def flagged_fraction(self) -> float:
        return float(np.count_nonzero(self.flags)) / max(self.n, 1)


def _check_times(g: HardyGeometry) -> list[float]:
    return [g.x_hold_start + 0.05 * g.x_hold, g.x_hold_end - 0.05 * g.x_hold, g.z_hold_start + 0.05 * g.exit_delay, g.t_exit]


def run_hardy(
    scenario: Scenario,
    h: float,
    n: int,
    seed: int,
    detectors=(),
    cfg: IntegratorConfig | None = None,
    checkpoints=(),
    chunk: int = 4096,
    start: tuple[float, float] | None = None,
    extra_slices=(),
) -> HardyReport:
    """Sample |psi^h|^2 at s = 0 and follow every synchronized path.

    Detectors split the ensemble at their detection parameter: paths whose
    particle is in the detector's track continue under the state projected
    onto that track, the rest under the complementary projection. The
    integration is always broken at detector times and ``checkpoints``, so
    segments before a detection are computed identically with or without
    the detector when the same checkpoints are supplied.
    """
    g = scenario.geometry
    cfg = cfg or IntegratorConfig()
    T_a0, T_b0 = start if start is not None else run_start(g, h)
    if abs((T_b0 - T_a0) - h) > 1e-12:
        raise ValueError("start times inconsistent with h")
    s0 = SliceSpec(T_a0, T_b0, "start")
    sample = sample_equilibrium(scenario.state, s0, n, seed)
    q0 = sample.points

    slices = [scenario.slice(f) for f in FRAMES] + list(extra_slices)
    checks = _check_times(g)
    probes = {}
    for sl in slices:
        probes[f"{sl.label}:a"] = (0, sl.t_a - T_a0)
        probes[f"{sl.label}:b"] = (1, sl.t_b - T_b0)
    for t in checks:
        probes[f"check{t!r}:a"] = (0, t - T_a0)
        probes[f"check{t!r}:b"] = (1, t - T_b0)
    det_s = []
    for i, d in enumerate(detectors):
        s_det = d.time - (T_a0 if d.subsystem == "a" else T_b0)
        if s_det <= 0:
            raise ValueError("detectors must act after s = 0")
        det_s.append(s_det)
    snaps = sorted({0.0, *[float(c) for c in checkpoints], *det_s})
    for sp in snaps:
        probes[f"snap{sp!r}:a"] = (0, sp)
        probes[f"snap{sp!r}:b"] = (1, sp)
    ps = [sp for _, sp in probes.values()]
    lo, hi = min(ps), max(ps)
    if T_a0 + lo < g.origin or T_b0 + lo < g.origin:
        raise ValueError("run reaches before the scenario origin; lower geometry.origin")

    base_field = GuidanceField(scenario.origin_state)
    bps_all = [b - T_a0 for b in scenario.schedule.boundaries()] + [b - T_b0 for b in scenario.schedule.boundaries()]
    bps_all += [float(c) for c in checkpoints] + det_s
    fwd_stops = sorted({sp for sp in snaps if sp > 0} | {hi})
    det_at = {}
    for i, sd in enumerate(det_s):
        det_at.setdefault(sd, []).append(i)

    out_probes = {k: np.full(n, np.nan) for k in probes}
    flags = np.zeros(n, dtype=np.int64)
    fired = {i: np.zeros(n, dtype=bool) for i in range(len(detectors))}

    def run_group(fld, idx, y, fl, s_from, s_to, direction_probes):
        def work(block):
            ii = block
            r = integrate_segment(fld, T_a0, T_b0, s_from, s_to, y[ii], cfg, direction_probes, bps_all, flags=fl[ii])
            return ii, r

        res = map_chunks(work, np.arange(len(idx)), chunk)
        y_new = np.array(y, copy=True)
        fl_new = np.array(fl, copy=True)
        steps = 0
        for ii, r in res:
            y_new[ii] = r.y
            fl_new[ii] = r.flags
            for k, v in r.probes.items():
                out_probes[k][idx[ii]] = v
            steps = max(steps, r.steps)
        return y_new, fl_new, steps

    # backward part
    bwd = {k: v for k, v in probes.items() if v[1] < 0}
    all_idx = np.arange(n)
    _, fl_b, st_b = run_group(base_field, all_idx, q0, flags, 0.0, lo, bwd)
    flags |= fl_b

    # forward part, group by group
    for k, (comp, sp) in probes.items():
        if sp == 0:
            out_probes[k][:] = q0[:, comp]
    groups = [(scenario.state, base_field, all_idx, q0.copy(), flags.copy())]
    s_cur = 0.0
    steps = st_b
    for stop in fwd_stops:
        seg_probes = {k: v for k, v in probes.items() if s_cur < v[1] <= stop}
        new_groups = []
        for st, fld, idx, y, fl in groups:
            if len(idx):
                y, fl, stp = run_group(fld, idx, y, fl, s_cur, stop, seg_probes)
                steps += stp
            new_groups.append((st, fld, idx, y, fl))
        groups = new_groups
        s_cur = stop
        for di in det_at.get(stop, []):
            d = detectors[di]
            split = []
            for st, fld, idx, y, fl in groups:
                t_a, t_b = T_a0 + stop, T_b0 + stop
                comp = 0 if d.subsystem == "a" else 1
                t_det = t_a if comp == 0 else t_b
                reg = scenario.region(d.region, t_det)
                hit = reg.contains(y[:, comp]) & (fl == 0)
                fired[di][idx[hit]] = True
                here = evolve_to(st, t_a, t_b)
                for mask, inside in ((hit, True), (~hit, False)):
                    if not mask.any():
                        continue
                    try:
                        new_st = project(here, d.subsystem, reg.interval, inside=inside).normalized()
                        new_fld = GuidanceField(new_st)
                    except ValueError:
                        new_st, new_fld = st, fld
                    split.append((new_st, new_fld, idx[mask], y[mask], fl[mask]))
            groups = split
    for _, _, idx, _, fl in groups:
        flags[idx] |= fl

    crossings = {sl.label: np.column_stack([out_probes[f"{sl.label}:a"], out_probes[f"{sl.label}:b"]]) for sl in slices}

    # track bookkeeping: x channel at the start, z channel at exit, no hopping in holds
    def channel(q, axis, t):
        plus = scenario.region("+" + axis, t).contains(q)
        minus = scenario.region("-" + axis, t).contains(q)
        return np.where(plus, 1, np.where(minus, -1, 0))

    chans = {}
    t_x1, t_x2, t_z1, t_z2 = checks
    for sub, comp in (("a", 0), ("b", 1)):
        cx1 = channel(out_probes[f"check{t_x1!r}:{sub}"], "x", t_x1)
        cx2 = channel(out_probes[f"check{t_x2!r}:{sub}"], "x", t_x2)
        cz1 = channel(out_probes[f"check{t_z1!r}:{sub}"], "z", t_z1)
        cz2 = channel(out_probes[f"check{t_z2!r}:{sub}"], "z", t_z2)
        bad = (cx1 == 0) | (cz2 == 0)
        flags[bad & (flags == 0)] |= OUTSIDE
        hop = ((cx1 != cx2) | (cz1 != cz2)) & ~bad
        flags[hop] |= HOP
        chans[f"{sub}_x"] = cx1
        chans[f"{sub}_z"] = cz2
    tables = {}
    for sl in slices:
        ra, rb = scenario.slice_regions(sl)
        tables[sl.label] = table_from_points(crossings[sl.label], sl, ra, rb)
    snapshots = {sp: np.column_stack([out_probes[f"snap{sp!r}:a"], out_probes[f"snap{sp!r}:b"]]) for sp in snaps}
    return HardyReport(
        h, (T_a0, T_b0), q0, flags, chans, crossings, tables, snapshots, fired, sample.acceptance, steps
    )


@dataclass
class EquivarianceRow:
    h: float
    s: float
    tv: float
    flagged: int
    cells: int


def equivariance_scan(
    scenario: Scenario, h: float, n: int, seed: int, s_values, cfg: IntegratorConfig | None = None, chunk: int = 4096
) -> list[EquivarianceRow]:
    """Sample at s = 0, transport, and compare crossing cells with |psi^h|^2 at each s."""
    T_a0, T_b0 = run_start(scenario.geometry, h)
    q0 = sample_equilibrium(scenario.state, SliceSpec(T_a0, T_b0, "start"), n, seed).points
    slices = [SliceSpec(T_a0 + s, T_b0 + s, f"s={s!r}") for s in s_values]
    ens = integrate_ensemble(scenario.origin_state, T_a0, T_b0, q0, slices, cfg=cfg, chunk=chunk)
    rows = []
    for s, sl in zip(s_values, slices):
        here = slice_state(scenario, sl)
        ea, eb = grid_partition(here, 8, 4)
        p = cell_probabilities(here, ea, eb)
        f = cell_fractions(ens.crossing(sl), ea, eb)
        rows.append(EquivarianceRow(float(h), float(s), total_variation(p, f), int(np.count_nonzero(ens.flags)), p.size))
    return rows
