"""Quantum-equilibrium sampling and crossing statistics on slices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .parallel import stream
from .wavefunction import TwoTimeState, amplitude, evolve_to, region_probability


@dataclass(frozen=True)
class SliceSpec:
    """A pair of subsystem times (t_a*, t_b*) read as one simultaneity slice."""

    t_a: float
    t_b: float
    label: str = ""

    @property
    def offset(self) -> float:
        return self.t_b - self.t_a


@dataclass(frozen=True)
class TrackRegion:
    label: str
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"region {self.label!r} needs lo < hi")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def contains(self, q):
        q = np.asarray(q)
        return (q >= self.lo) & (q <= self.hi)


@dataclass(frozen=True)
class CrossingCell:
    region_a: str
    region_b: str
    count: int
    fraction: float
    sigma: float


@dataclass(frozen=True)
class CrossingTable:
    slice: SliceSpec
    total: int
    cells: tuple[CrossingCell, ...]

    def cell(self, region_a: str, region_b: str) -> CrossingCell:
        for c in self.cells:
            if c.region_a == region_a and c.region_b == region_b:
                return c
        raise KeyError((region_a, region_b))

    def as_dict(self) -> dict:
        return {
            "slice": {"label": self.slice.label, "t_a": self.slice.t_a, "t_b": self.slice.t_b},
            "total": self.total,
            "cells": [
                {"a": c.region_a, "b": c.region_b, "count": c.count, "fraction": c.fraction, "sigma": c.sigma}
                for c in self.cells
            ],
        }


def binomial_sigma(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1 - p), 1.0 / n) / n)) if n else float("nan")


# --------------------------------------------------------------------------
# sampling


@dataclass
class SampleResult:
    points: np.ndarray  # (n, 2)
    acceptance: float
    envelope: float


def density(state: TwoTimeState, q_a, q_b) -> np.ndarray:
    return np.sum(np.abs(amplitude(state, q_a, q_b)) ** 2, axis=-1)


def _proposal(state: TwoTimeState):
    """Gaussian mixture over distinct packet pairs, weighted by spinor mass."""
    groups: list[list] = []
    for b in state.branches:
        for g in groups:
            if g[0].packet_a.same_shape(b.packet_a) and g[0].packet_b.same_shape(b.packet_b):
                g.append(b)
                break
        else:
            groups.append([b])
    comps = []
    for g in groups:
        chi = sum(
            b.coeff * np.exp(1j * (b.packet_a.theta + b.packet_b.theta)) * np.kron(b.spin_a, b.spin_b)
            for b in g
        )
        w = float(np.sum(np.abs(chi) ** 2))
        if w > 0:
            pa, pb = g[0].packet_a, g[0].packet_b
            comps.append((w, pa.x0, pa.sigma, pb.x0, pb.sigma))
    comps = np.array(comps)
    comps[:, 0] /= comps[:, 0].sum()
    return comps


def _proposal_density(comps, q_a, q_b):
    w, xa, sa, xb, sb = (comps[:, i][:, None] for i in range(5))
    za = (q_a[None, :] - xa) / sa
    zb = (q_b[None, :] - xb) / sb
    return np.sum(w * np.exp(-0.5 * (za**2 + zb**2)) / (2 * np.pi * sa * sb), axis=0)


def sample_equilibrium(
    state: TwoTimeState,
    slice_: SliceSpec | None,
    n: int,
    seed: int,
    envelope: float = 2.0,
    batch: int = 16,
    first_index: int = 0,
) -> SampleResult:
    """i.i.d. draws from |psi(t_a*, ., t_b*, .)|^2 by rejection from a branch mixture.

    Item i uses its own counter-based stream keyed by (seed, first_index + i).
    If some candidate exceeds the envelope, the whole draw restarts with a
    doubled envelope, so the result is still a pure function of the inputs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if slice_ is not None:
        state = evolve_to(state, slice_.t_a, slice_.t_b)
    comps = _proposal(state)
    cum = np.cumsum(comps[:, 0])
    cum[-1] = 1.0
    while True:
        gens = [stream(seed, first_index + i) for i in range(n)]
        out = np.full((n, 2), np.nan)
        pending = np.arange(n)
        tried = 0
        overflow = False
        while pending.size:
            draws = [(g.random(batch), g.standard_normal((batch, 2)), g.random(batch)) for g in (gens[i] for i in pending)]
            pick = np.searchsorted(cum, np.stack([d[0] for d in draws]), side="right")
            z = np.stack([d[1] for d in draws])
            u = np.stack([d[2] for d in draws])
            c = comps[pick]
            qa = c[..., 1] + c[..., 2] * z[..., 0]
            qb = c[..., 3] + c[..., 4] * z[..., 1]
            ratio = density(state, qa.ravel(), qb.ravel()).reshape(qa.shape) / _proposal_density(
                comps, qa.ravel(), qb.ravel()
            ).reshape(qa.shape)
            if np.any(ratio > envelope):
                overflow = True
                break
            acc = u * envelope < ratio
            tried += acc.shape[0] * batch
            got = acc.any(axis=1)
            first = np.argmax(acc, axis=1)
            rows = np.flatnonzero(got)
            out[pending[rows], 0] = qa[rows, first[rows]]
            out[pending[rows], 1] = qb[rows, first[rows]]
            # an accepted item only consumed draws up to its first success
            tried -= int(np.sum(batch - 1 - first[rows]))
            pending = pending[~got]
        if not overflow:
            break
        envelope *= 2.0
    rate = n / tried
    if rate < 0.01:
        warnings.warn(f"equilibrium sampler acceptance {rate:.3g} below 1%; check the geometry")
    return SampleResult(out, rate, envelope)


# --------------------------------------------------------------------------
# crossing statistics


def crossing_points(paths, slice_) -> np.ndarray:
    """(n, 2) crossings for an EnsembleResult or a sequence of SynchronizedPath."""
    if hasattr(paths, "crossing") and not isinstance(paths, (list, tuple)):
        return paths.crossing(slice_)
    from .guidance import crossing

    return np.array([crossing(p, slice_) for p in paths], dtype=float).reshape(-1, 2)


def crossing_statistics(paths, slice_: SliceSpec, regions_a, regions_b) -> CrossingTable:
    """Fractions of paths whose slice crossing falls in each region product.

    Paths with a missing crossing (flagged) count toward the total but land
    in no cell.
    """
    pts = crossing_points(paths, slice_)
    return table_from_points(pts, slice_, regions_a, regions_b)


def table_from_points(pts, slice_, regions_a, regions_b) -> CrossingTable:
    n = len(pts)
    cells = []
    for ra in regions_a:
        ina = ra.contains(pts[:, 0])
        for rb in regions_b:
            c = int(np.count_nonzero(ina & rb.contains(pts[:, 1])))
            f = c / n if n else 0.0
            cells.append(CrossingCell(ra.label, rb.label, c, f, binomial_sigma(f, n)))
    return CrossingTable(slice_, n, tuple(cells))


def quantum_table(state: TwoTimeState, slice_: SliceSpec, regions_a, regions_b) -> dict:
    """Region probabilities of |psi(t_a*, t_b*)|^2 keyed by (label_a, label_b)."""
    s = evolve_to(state, slice_.t_a, slice_.t_b)
    return {
        (ra.label, rb.label): region_probability(s, ra.interval, rb.interval)
        for ra in regions_a
        for rb in regions_b
    }


# --------------------------------------------------------------------------
# partitions and distances


def grid_partition(state_at_slice: TwoTimeState, bins_a: int = 8, bins_b: int = 4, pad: float = 3.0):
    """Cell edges covering the branch packets; the outer edges extend to +-inf."""
    edges = []
    for sub, nb in (("a", bins_a), ("b", bins_b)):
        ps = [b.packet(sub) for b in state_at_slice.branches]
        lo = min(p.x0 - pad * p.sigma for p in ps)
        hi = max(p.x0 + pad * p.sigma for p in ps)
        e = np.linspace(lo, hi, nb + 1)
        e[0], e[-1] = -np.inf, np.inf
        edges.append(e)
    return edges[0], edges[1]


def cell_probabilities(state_at_slice: TwoTimeState, edges_a, edges_b) -> np.ndarray:
    return np.array(
        [
            [region_probability(state_at_slice, (edges_a[i], edges_a[i + 1]), (edges_b[j], edges_b[j + 1])) for j in range(len(edges_b) - 1)]
            for i in range(len(edges_a) - 1)
        ]
    )


def cell_fractions(pts, edges_a, edges_b) -> np.ndarray:
    """Empirical cell fractions; points with nan (flagged) count in no cell."""
    pts = np.asarray(pts, dtype=float)
    ok = np.all(np.isfinite(pts), axis=1)
    # finite edges only for digitize; outer cells are open
    ia = np.searchsorted(edges_a[1:-1], pts[ok, 0], side="right")
    ib = np.searchsorted(edges_b[1:-1], pts[ok, 1], side="right")
    counts = np.zeros((len(edges_a) - 1, len(edges_b) - 1))
    np.add.at(counts, (ia, ib), 1)
    return counts / len(pts)


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
