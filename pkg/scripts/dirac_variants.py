"""Two-particle Bohm-Dirac paths under the three multitime laws from common starts.

Prints T_2 - T_1 along each path: constant for the two laws built on psi^dag psi,
position dependent for the covariant one.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from multibohm.dirac import VARIANTS, MultitimeDiracState, gaussian_packet, integrate_multitime_paths


@dataclass
class VariantConfig:
    length: float = 80.0
    points: int = 256
    mass: float = 1.0
    t_stop: float = 3.0  # stop when T_1 reaches this
    starts: tuple = ((-3.2, 2.5), (-2.0, 4.0), (-4.0, 1.5))


def main(cfg: VariantConfig) -> None:
    kw = dict(length=cfg.length, n=cfg.points, mass=cfg.mass)
    a = gaussian_packet(x0=-3.0, k0=1.0, sigma=2.0, **kw)
    b = gaussian_packet(x0=3.0, k0=-0.5, sigma=2.0, **kw)
    c = gaussian_packet(x0=-1.0, k0=-1.0, sigma=2.0, **kw)
    d = gaussian_packet(x0=2.0, k0=0.8, sigma=2.0, **kw)
    ent = MultitimeDiracState((1.0, 1.0), ((a, b), (c, d))).normalized()
    for x1, x2 in cfg.starts:
        print(f"start x1={x1:g} x2={x2:g}")
        for v in VARIANTS:
            p = integrate_multitime_paths(ent, v, [(0.0, x1), (0.0, x2)], 1e9, t_stop=cfg.t_stop)
            dt = p.T[1] - p.T[0]
            print(f"  {v:9s} end T1={p.T[0][-1]:.4f} Q=({p.Q[0][-1]:.4f}, {p.Q[1][-1]:.4f}) T2-T1 range={np.ptp(dt):.3e}")


if __name__ == "__main__":
    argparse.ArgumentParser().parse_args()
    main(VariantConfig())
