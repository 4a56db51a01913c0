"""Free 1+1D Dirac evolution, current-guided paths, multitime Bohm-Dirac laws.

Representation: gamma0 = diag(1, -1), gamma1 = [[0, 1], [-1, 0]], so that
alpha = gamma0 gamma1 = sigma_x and H_k = k sigma_x + m sigma_z in momentum
space. Each Fourier mode is evolved with its exact 2x2 exponential.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .parallel import stream

GAMMA0 = np.diag([1.0, -1.0]).astype(complex)
GAMMA1 = np.array([[0, 1], [-1, 0]], dtype=complex)
ALPHA = GAMMA0 @ GAMMA1
VARIANTS = ("covariant", "shbd", "multibd")


@dataclass(frozen=True)
class DiracGridState:
    """Periodic grid spinor field psi[j, s] at x_j = -L/2 + j L / N."""

    length: float
    mass: float
    field: np.ndarray  # (N, 2)
    t: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.field, dtype=complex)
        n = f.shape[0]
        if f.ndim != 2 or f.shape[1] != 2 or n < 2 or n & (n - 1):
            raise ValueError("field must have shape (N, 2) with N a power of two")
        if not self.length > 0 or self.mass < 0:
            raise ValueError("need length > 0 and mass >= 0")
        object.__setattr__(self, "field", f)

    @property
    def n(self) -> int:
        return self.field.shape[0]

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def x(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.field) ** 2) * self.dx)

    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.field, axis=0)


def _propagator(k, m, dt):
    """exp(-i H_k dt) for H_k = k sigma_x + m sigma_z, shape (len(k), 2, 2)."""
    E = np.sqrt(k * k + m * m)
    c = np.cos(E * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(E > 0, np.sin(E * dt) / E, dt)
    U = np.empty(k.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = c - 1j * s * m
    U[..., 1, 1] = c + 1j * s * m
    U[..., 0, 1] = -1j * s * k
    U[..., 1, 0] = -1j * s * k
    return U


def _evolve_spectrum(spec, k, m, dt):
    U = _propagator(k, m, dt)
    return np.einsum("kij,kj->ki", U, spec)


def dirac_evolve(state: DiracGridState, dt: float) -> DiracGridState:
    """Exact free evolution over dt (negative dt runs backward)."""
    if dt == 0:
        return state
    spec = _evolve_spectrum(state.spectrum(), state.k, state.mass, dt)
    return replace(state, field=np.fft.ifft(spec, axis=0), t=state.t + dt)


def dirac_current(state_or_field) -> tuple[np.ndarray, np.ndarray]:
    """(j0, j1) = (psi^dag psi, psi^dag alpha psi) on the grid."""
    f = state_or_field.field if isinstance(state_or_field, DiracGridState) else np.asarray(state_or_field)
    j0 = np.sum(np.abs(f) ** 2, axis=-1)
    j1 = 2.0 * np.real(np.conj(f[..., 0]) * f[..., 1])
    return j0, j1


def positive_energy_spinor(k, m):
    """Unit eigenvector of k sigma_x + m sigma_z with eigenvalue +sqrt(k^2 + m^2)."""
    k = np.asarray(k, dtype=float)
    E = np.sqrt(k * k + m * m)
    top = E + m
    # m = 0, k < 0: (E + m, k) vanishes, use the other column of the projector
    alt = np.abs(top) < 1e-300
    u = np.stack([np.where(alt, -k, top), np.where(alt, E - m, k)], axis=-1).astype(complex)
    return u / np.linalg.norm(u, axis=-1, keepdims=True)


def gaussian_packet(length: float, n: int, mass: float, x0: float, k0: float, sigma: float) -> DiracGridState:
    """Positive-energy packet with |psi|^2 of width about sigma, centered at x0."""
    dx = length / n
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    x_start = -0.5 * length
    amp = np.exp(-((k - k0) ** 2) * sigma**2) * np.exp(-1j * k * (x0 - x_start))
    spec = amp[:, None] * positive_energy_spinor(k, mass)
    f = np.fft.ifft(spec, axis=0)
    f /= np.sqrt(np.sum(np.abs(f) ** 2) * dx)
    return DiracGridState(length, mass, f, 0.0)


def plane_wave(length: float, n: int, mass: float, mode: int) -> DiracGridState:
    """Positive-energy eigenmode with wavenumber 2 pi mode / L."""
    x = -0.5 * length + length / n * np.arange(n)
    k = 2 * np.pi * mode / length
    u = positive_energy_spinor(k, mass)
    f = np.exp(1j * k * x)[:, None] * u[None, :] / np.sqrt(length)
    return DiracGridState(length, mass, f, 0.0)


class SpectralField:
    """Exact evaluation of an evolving grid state at arbitrary (t, x)."""

    def __init__(self, state: DiracGridState):
        self.state = state
        self.k = state.k
        self.spec0 = state.spectrum() / state.n
        self.x_start = -0.5 * state.length

    def at(self, t: float, x) -> np.ndarray:
        """psi(t, x) for an array of x, shape (M, 2)."""
        spec = _evolve_spectrum(self.spec0, self.k, self.state.mass, t - self.state.t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ph = np.exp(1j * np.outer(x - self.x_start, self.k))
        return ph @ spec


class FineGridField:
    """Zero-padded spectral refinement plus 4-point Lagrange interpolation.

    Used for large ensembles: one inverse FFT per requested time, cheap
    local interpolation per point.
    """

    def __init__(self, state: DiracGridState, refine: int = 8, cache: int = 8):
        self.state = state
        self.refine = refine
        self.k = state.k
        self.spec0 = state.spectrum()
        self.nf = state.n * refine
        self.dxf = state.length / self.nf
        self.x_start = -0.5 * state.length
        self._cache: dict = {}
        self._order: list = []
        self._cache_size = cache

    def grid(self, t: float) -> np.ndarray:
        if t in self._cache:
            return self._cache[t]
        spec = _evolve_spectrum(self.spec0, self.k, self.state.mass, t - self.state.t)
        n = self.state.n
        padded = np.zeros((self.nf, 2), dtype=complex)
        h = n // 2
        padded[:h] = spec[:h]
        padded[-h:] = spec[-h:]
        g = np.fft.ifft(padded, axis=0) * self.refine
        self._cache[t] = g
        self._order.append(t)
        if len(self._order) > self._cache_size:
            self._cache.pop(self._order.pop(0), None)
        return g

    def at(self, t: float, x) -> np.ndarray:
        g = self.grid(t)
        x = np.asarray(x, dtype=float)
        u = (x - self.x_start) / self.dxf
        i = np.floor(u).astype(int)
        f = u - i
        w = np.stack(
            [-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2, -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6],
            axis=-1,
        )
        idx = (i[:, None] + np.arange(-1, 3)[None, :]) % self.nf
        return np.einsum("mj,mjs->ms", w, g[idx])


# --------------------------------------------------------------------------
# single-particle paths


@dataclass
class DiracPath:
    t: np.ndarray
    x: np.ndarray

    def max_speed(self) -> float:
        return float(np.max(np.abs(np.diff(self.x) / np.diff(self.t)))) if len(self.t) > 1 else 0.0


def _ratio(psi):
    j0, j1 = dirac_current(psi)
    return j1 / j0, j0


def integrate_dirac_path(state: DiracGridState, x0: float, t_end: float, rtol: float = 1e-10, atol: float = 1e-12, n_out: int = 201):
    """dx/dt = j1/j0 from (state.t, x0) to t_end with exact spectral evaluation."""
    fld = SpectralField(state)
    j0 = dirac_current(fld.at(state.t, [x0]))[0][0]
    if not j0 > 0:
        raise ValueError("start point has zero density")

    def rhs(t, y):
        v, _ = _ratio(fld.at(t, y))
        return v

    t_eval = np.linspace(state.t, t_end, n_out)
    sol = solve_ivp(rhs, (state.t, t_end), [x0], method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval, dense_output=True)
    if not sol.success:
        raise RuntimeError(sol.message)
    path = DiracPath(sol.t, sol.y[0])
    path.dense = sol.sol
    return path


def sample_density(state: DiracGridState, n: int, seed: int, refine: int = 8) -> np.ndarray:
    """Draws from j0 by inverse transform on the refined grid (per-item streams)."""
    xs, cdf = _fine_cdf(state, refine)
    u = np.array([stream(seed, i).random() for i in range(n)])
    return np.interp(u, cdf, xs)


def integrate_dirac_ensemble(state: DiracGridState, x0, t_end: float, dt: float = 0.05, refine: int = 8):
    """Classic RK4 in t for many starts; velocities from interpolated spinors.

    Returns (final positions, largest per-step |dx/dt|). Each stage velocity
    is j1/j0 of an interpolated spinor, so |v| <= 1 holds stage by stage and
    the RK4 average inherits it.
    """
    fine = FineGridField(state, refine, cache=4)
    x = np.array(x0, dtype=float)
    t = state.t
    steps = int(np.ceil(abs(t_end - t) / dt - 1e-12))
    h = (t_end - t) / steps

    def v(tt, xx):
        return _ratio(fine.at(tt, xx))[0]

    vmax = 0.0
    for _ in range(steps):
        k1 = v(t, x)
        k2 = v(t + h / 2, x + h / 2 * k1)
        k3 = v(t + h / 2, x + h / 2 * k2)
        k4 = v(t + h, x + h * k3)
        step = (k1 + 2 * k2 + 2 * k3 + k4) / 6
        vmax = max(vmax, float(np.max(np.abs(step))))
        x = x + h * step
        t = t + h
    return x, vmax


def _fine_cdf(state: DiracGridState, refine: int):
    fine = FineGridField(state, refine)
    g = fine.grid(state.t)
    rho = np.sum(np.abs(g) ** 2, axis=1)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho + np.roll(rho, -1)))])
    cdf /= cdf[-1]
    xs = fine.x_start + fine.dxf * np.arange(len(cdf))
    return xs, cdf


def quantile_edges(state: DiracGridState, bins: int, refine: int = 8) -> np.ndarray:
    """Bin edges of equal j0 probability; the outer edges are +-inf."""
    xs, cdf = _fine_cdf(state, refine)
    inner = np.interp(np.arange(1, bins) / bins, cdf, xs)
    return np.concatenate([[-np.inf], inner, [np.inf]])


def density_bins(state: DiracGridState, edges, refine: int = 8) -> np.ndarray:
    """Probability of j0 in each bin; the outer bins absorb everything beyond."""
    xs, cdf = _fine_cdf(state, refine)
    c = np.interp(edges, xs, cdf)
    c[0], c[-1] = 0.0, 1.0
    return np.diff(c)


# --------------------------------------------------------------------------
# multitime states


@dataclass(frozen=True)
class MultitimeDiracState:
    """sum_n c_n phi_n^(1) (x) ... with one DiracGridState per particle per branch.

    All factors of particle k share a grid and a reference time.
    """

    coeffs: tuple
    factors: tuple  # factors[n][k] is particle k's field in branch n

    def __post_init__(self):
        if not self.factors:
            raise ValueError("need at least one branch")
        N = len(self.factors[0])
        if N not in (1, 2) or any(len(f) != N for f in self.factors):
            raise ValueError("each branch needs the same number (1 or 2) of particle factors")
        if len(self.coeffs) != len(self.factors):
            raise ValueError("one coefficient per branch")

    @property
    def particles(self) -> int:
        return len(self.factors[0])

    def norm(self) -> float:
        tot = 0.0 + 0.0j
        for ci, fi in zip(self.coeffs, self.factors):
            for cj, fj in zip(self.coeffs, self.factors):
                ov = 1.0 + 0.0j
                for a, b in zip(fi, fj):
                    ov *= np.sum(np.conj(a.field) * b.field) * a.dx
                tot += np.conj(ci) * cj * ov
        return float(np.sqrt(tot.real))

    def normalized(self) -> "MultitimeDiracState":
        nrm = self.norm()
        return replace(self, coeffs=tuple(c / nrm for c in self.coeffs))


class MultitimeField:
    def __init__(self, state: MultitimeDiracState):
        self.state = state
        self.fields = [[SpectralField(f) for f in branch] for branch in state.factors]

    def psi(self, times, xs) -> np.ndarray:
        """Spinor of the N-particle wave function, length 2**N."""
        out = 0
        for c, branch in zip(self.state.coeffs, self.fields):
            v = np.array([1.0 + 0j])
            for fld, t, x in zip(branch, times, xs):
                v = np.kron(v, fld.at(t, [x])[0])
            out = out + c * v
        return out


def _embed(op, k, N):
    mats = [np.eye(2, dtype=complex)] * N
    mats = list(mats)
    mats[k] = op
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def multitime_velocity(state: MultitimeDiracState, variant: str, times, xs, field: MultitimeField | None = None, node_floor: float = 0.0):
    """[(dT_k/ds, dQ_k/ds) for each particle k] under the chosen law."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    fld = field or MultitimeField(state)
    N = state.particles
    psi = fld.psi(times, xs)
    rho = float(np.real(np.vdot(psi, psi)))
    if not rho > node_floor:
        raise ValueError("node proximity: density vanishes at this point")
    out = []
    g0_all = np.eye(1, dtype=complex)
    for _ in range(N):
        g0_all = np.kron(g0_all, GAMMA0)
    for k in range(N):
        if variant == "covariant":
            bar = g0_all
            v0 = np.real(np.vdot(psi, bar @ _embed(GAMMA0, k, N) @ psi))
            v1 = np.real(np.vdot(psi, bar @ _embed(GAMMA1, k, N) @ psi))
        else:
            j = np.real(np.vdot(psi, _embed(ALPHA, k, N) @ psi))
            v0, v1 = (rho, j) if variant == "shbd" else (1.0, j / rho)
        out.append((float(v0), float(v1)))
    return out


@dataclass
class MultitimePaths:
    s: np.ndarray
    T: np.ndarray  # (N, len(s))
    Q: np.ndarray
    dense: object = None

    def at_time(self, k: int, t: float) -> tuple[float, np.ndarray]:
        """Parameter s where T_k(s) = t and the full point there (needs monotone T_k)."""
        N = self.T.shape[0]
        Tk = self.T[k]
        i = np.searchsorted(Tk, t) if Tk[-1] > Tk[0] else None
        if i is None or t < Tk[0] - 1e-12 or t > Tk[-1] + 1e-12:
            raise ValueError("time outside this path's span")
        lo = self.s[max(i - 1, 0)]
        hi = self.s[min(i, len(self.s) - 1)]
        if lo == hi:
            sv = lo
        else:
            sv = brentq(lambda u: self.dense(u)[2 * k] - t, lo, hi, xtol=1e-14, rtol=1e-14)
        return sv, self.dense(sv).reshape(N, 2)


def integrate_multitime_paths(
    state: MultitimeDiracState,
    variant: str,
    start,
    s_end: float,
    rtol: float = 1e-11,
    atol: float = 1e-12,
    n_out: int = 401,
    t_stop: float | None = None,
) -> MultitimePaths:
    """Integral curves of the chosen law; start = [(T_k, Q_k), ...].

    With ``t_stop`` the integration ends early once T_1 reaches it, which
    lets laws with different parametrizations cover the same time span.
    """
    fld = MultitimeField(state)
    N = state.particles

    def rhs(s, y):
        Y = y.reshape(N, 2)
        v = multitime_velocity(state, variant, Y[:, 0], Y[:, 1], fld)
        return np.array(v).ravel()

    events = None
    if t_stop is not None:

        def reached(s, y):
            return y[0] - t_stop

        reached.terminal = True
        events = reached
    y0 = np.array(start, dtype=float).ravel()
    sol = solve_ivp(rhs, (0.0, s_end), y0, method="DOP853", rtol=rtol, atol=atol, dense_output=True, events=events)
    if sol.status < 0:
        raise RuntimeError(sol.message)
    s = np.linspace(0.0, sol.t[-1], n_out)
    Y = sol.sol(s).reshape(N, 2, -1)
    return MultitimePaths(s, Y[:, 0], Y[:, 1], sol.sol)


def path_set_distance(p: MultitimePaths, q: MultitimePaths, k: int = 0, samples: int = 50) -> float:
    """Max distance between two synchronized paths compared at equal T_k."""
    lo = max(p.T[k][0], q.T[k][0])
    hi = min(p.T[k][-1], q.T[k][-1])
    worst = 0.0
    for t in np.linspace(lo, hi, samples):
        _, a = p.at_time(k, t)
        _, b = q.at_time(k, t)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst
