"""Total variation between transported samples and |psi^h|^2 along s, for several offsets."""
from __future__ import annotations

import argparse
from dataclasses import dataclass

from multibohm.hardy import HardyGeometry, build_scenario, equivariance_scan


@dataclass
class ScanConfig:
    n: int = 100_000
    seed: int = 1
    offsets: tuple = (-1.0, 0.0, 1.0)
    s_values: tuple = (0.2, 0.4, 0.6, 0.9, 1.2, 1.4)


def main(cfg: ScanConfig) -> None:
    sc = build_scenario(HardyGeometry())
    print("h s tv flagged")
    for i, h in enumerate(cfg.offsets):
        for r in equivariance_scan(sc, h, cfg.n, cfg.seed + i, cfg.s_values):
            print(f"{r.h:+g} {r.s:g} {r.tv:.5f} {r.flagged}")


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--n", type=int, default=ScanConfig.n)
    p.add_argument("--seed", type=int, default=ScanConfig.seed)
    a = p.parse_args()
    main(ScanConfig(n=a.n, seed=a.seed))
