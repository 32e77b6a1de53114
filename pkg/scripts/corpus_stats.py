"""Synthesis and simulation statistics over the seeded random corpus.

Reports the synthesis path, compensator orders, achieved radius against
lambda_bar, and how far the simulated error fell before reaching the
rounding floor set by the growing plant state.
"""

import argparse
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from distobs.corpus import detectable_instance
from distobs.numerics import spectral_radius
from distobs.simulation import error_floor, final_relative_error, simulate
from distobs.spectral import lambda_bar
from distobs.synthesis import synthesize, verify_design


@dataclass
class Config:
    seeds: int = 100
    verbose: bool = False


def run(cfg: Config):
    stages, rows = Counter(), []
    for seed in range(cfg.seeds):
        inst = detectable_instance(seed)
        d = synthesize(inst.graph, inst.w, inst.sys)
        assert verify_design(d, inst.graph, inst.sys).passed
        r = d.achieved_radius
        K = max(60, math.floor(math.log(1e-8) / math.log(r)) + 1)
        tr = simulate(inst.sys, d, K=K, seed=seed)
        rhoA = spectral_radius(inst.sys.A)
        floor_rel = error_floor(tr) / tr.err_norms[:, 0].max()
        stages[d.stage] += 1
        rows.append((seed, inst.graph.m, inst.sys.n, rhoA, lambda_bar(inst.graph, inst.w.alpha, rhoA), r,
                     sum(d.mu), final_relative_error(tr), floor_rel))
        if cfg.verbose:
            print("seed %3d m=%d n=%d rho(A)=%.3f lambda_bar=%.3f radius=%.3f sum(mu)=%2d rel=%.1e floor=%.1e"
                  % rows[-1])
    arr = np.array([row[3:] for row in rows])
    print(f"{cfg.seeds} instances, stages {dict(stages)}")
    print(f"radius: median {np.median(arr[:, 2]):.3f}, max {arr[:, 2].max():.3f}")
    print(f"radius - lambda_bar: median {np.median(arr[:, 2] - arr[:, 1]):+.3f}")
    print(f"sum(mu): median {np.median(arr[:, 3]):.0f}, max {arr[:, 3].max():.0f}")
    reached = np.sum(arr[:, 4] < np.maximum(1e-6, arr[:, 5]))
    print(f"relative error below max(1e-6, rounding floor): {reached}/{cfg.seeds}")
    print(f"instances whose floor exceeds 1e-6: {np.sum(arr[:, 5] > 1e-6)}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=Config.seeds)
    p.add_argument("--verbose", action="store_true")
    a = p.parse_args()
    run(Config(a.seeds, a.verbose))
