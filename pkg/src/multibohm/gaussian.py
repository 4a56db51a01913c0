"""Analytic 1D complex Gaussian packets (hbar = m = 1).

A packet is

    g(q) = (Re a / pi)^(1/4) exp(-a (q - x0)^2 / 2 + i k (q - x0) + i theta)

with complex inverse width ``a`` (Re a > 0). Free motion and motion in a
spatially uniform force field keep this form exactly; the phase ``theta``
carries the classical action plus the Gouy-type normalization phase.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import wofz

SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class GaussianPacket:
    x0: float
    k: float
    alpha: complex
    theta: float = 0.0

    def __post_init__(self):
        if not np.real(self.alpha) > 0:
            raise ValueError(f"packet needs Re(alpha) > 0, got {self.alpha!r}")
        for v in (self.x0, self.k, self.theta, self.alpha):
            if not np.isfinite(v):
                raise ValueError("packet parameters must be finite")

    @classmethod
    def fresh(cls, x0: float, k: float, sigma: float) -> "GaussianPacket":
        """Minimum-uncertainty packet whose |g|^2 has standard deviation sigma."""
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return cls(float(x0), float(k), complex(1.0 / (2.0 * sigma**2)), 0.0)

    @property
    def sigma(self) -> float:
        """Position standard deviation of |g|^2."""
        return float(1.0 / np.sqrt(2.0 * np.real(self.alpha)))

    @property
    def peak_density(self) -> float:
        return float(np.sqrt(np.real(self.alpha) / np.pi))

    def __call__(self, q):
        return packet_values(self.x0, self.k, self.alpha, self.theta, q)

    def derivative(self, q):
        q = np.asarray(q, dtype=float)
        return self(q) * (-self.alpha * (q - self.x0) + 1j * self.k)

    def propagate(self, dt: float, force: float = 0.0) -> "GaussianPacket":
        """Exact evolution for time dt under the potential V(q) = -force * q."""
        x0, k, alpha, theta = propagate_params(self.x0, self.k, self.alpha, self.theta, dt, force)
        return GaussianPacket(float(x0), float(k), complex(alpha), float(theta))

    def with_phase(self, theta: float) -> "GaussianPacket":
        return replace(self, theta=float(theta))

    def same_shape(self, other: "GaussianPacket", tol: float = 1e-10) -> bool:
        """True when the packets differ at most by a constant phase."""
        scale = max(1.0, abs(self.alpha))
        return (
            abs(self.x0 - other.x0) <= tol * max(1.0, abs(self.x0))
            and abs(self.k - other.k) <= tol * max(1.0, abs(self.k))
            and abs(self.alpha - other.alpha) <= tol * scale
        )


def packet_values(x0, k, alpha, theta, q):
    q = np.asarray(q, dtype=float)
    u = q - x0
    lognorm = 0.25 * np.log(np.real(alpha) / np.pi)
    return np.exp(lognorm - 0.5 * alpha * u * u + 1j * (k * u + theta))


def propagate_params(x0, k, alpha, theta, dt, force):
    """Closed-form parameters after time dt in a uniform force field.

    Works elementwise on arrays, and for negative dt (inverse evolution).
    """
    z = 1.0 + 1j * alpha * dt
    alpha_t = alpha / z
    x_t = x0 + k * dt + 0.5 * force * dt * dt
    k_t = k + force * dt
    action = 0.5 * k * k * dt + k * force * dt * dt + force * force * dt**3 / 3.0 + force * x0 * dt
    theta_t = theta + action - 0.5 * np.angle(z)
    return x_t, k_t, alpha_t, theta_t


def _pair_exponent(p: GaussianPacket, r: GaussianPacket):
    """conj(p(q)) r(q) = exp(-A q^2 + B q + C)."""
    ap = np.conj(p.alpha)
    ar = r.alpha
    A = 0.5 * (ap + ar)
    B = ap * p.x0 + ar * r.x0 - 1j * p.k + 1j * r.k
    C = (
        -0.5 * ap * p.x0**2
        - 0.5 * ar * r.x0**2
        + 1j * (p.k * p.x0 - r.k * r.x0)
        + 1j * (r.theta - p.theta)
        + 0.25 * np.log(np.real(p.alpha) / np.pi)
        + 0.25 * np.log(np.real(r.alpha) / np.pi)
    )
    return A, B, C


def overlap(p: GaussianPacket, r: GaussianPacket) -> complex:
    """<p|r> over the whole line."""
    A, B, C = _pair_exponent(p, r)
    return complex(np.sqrt(np.pi / A) * np.exp(C + B * B / (4.0 * A)))


def interval_overlap(p: GaussianPacket, r: GaussianPacket, lo, hi):
    """Integral of conj(p) r over [lo, hi]; lo/hi may be arrays or +-inf.

    Uses erfc(u) = exp(-u^2) w(iu) on the right half plane (w = Faddeeva)
    so that no exponentially large factor is ever formed.
    """
    A, B, C = _pair_exponent(p, r)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sqA = np.sqrt(A)
    q0 = B / (2.0 * A)
    peak = np.exp(C + B * B / (4.0 * A))

    def erfc_scaled(q):
        # returns (indicator Re u < 0, signed tail term) with
        # e^E erfc(u) = 2 e^E [Re u < 0] + tail
        q = np.asarray(q, dtype=float)
        fin = np.isfinite(q)
        qf = np.where(fin, q, 0.0)
        u = sqA * (qf - q0)
        integrand = np.exp(C + B * qf - A * qf * qf)
        left = np.real(u) < 0
        # w is evaluated in the upper half plane only, where it stays bounded
        arg = np.where(left, -1j * u, 1j * u)
        tail = np.where(left, -1.0, 1.0) * integrand * wofz(arg)
        tail = np.where(fin, tail, 0.0)
        left = np.where(fin, left, q < 0)
        return left, tail

    left_lo, tail_lo = erfc_scaled(lo)
    left_hi, tail_hi = erfc_scaled(hi)
    total = 2.0 * peak * (left_lo.astype(float) - left_hi.astype(float)) + tail_lo - tail_hi
    return SQRT_PI / (2.0 * sqA) * total
