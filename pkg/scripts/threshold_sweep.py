"""Spectral threshold and alpha interval across graph families.

For each graph the script prints (lambda_2, lambda_m), the threshold on
rho(A), and for a grid of rho values the interval, pick_alpha and
lambda_bar. Path graphs lose margin quickly as they grow; complete graphs
have no threshold.
"""

import argparse
import math
from dataclasses import dataclass

import numpy as np

from distobs.graph import build_graph, spectral_gap
from distobs.spectral import alpha_interval, lambda_bar, pick_alpha, rho_threshold


@dataclass
class Config:
    sizes: tuple = (3, 4, 5, 6, 8)
    rhos: tuple = (0.9, 1.1, 1.3, 1.6, 2.0, 3.0)


def families(m):
    path = [(i, i + 1) for i in range(m - 1)]
    yield "path", build_graph(m, path)
    yield "cycle", build_graph(m, path + [(0, m - 1)])
    yield "star", build_graph(m, [(0, i) for i in range(1, m)])
    yield "complete", build_graph(m, [(i, j) for i in range(m) for j in range(i + 1, m)])


def run(cfg: Config):
    for m in cfg.sizes:
        for name, g in families(m):
            lam2, lam_m = spectral_gap(g)
            thr = rho_threshold(lam2, lam_m)
            print(f"{name:8s} m={m}: lambda_2={lam2:.4f} lambda_m={lam_m:.4f} threshold={thr:.4f}")
            for rho in cfg.rhos:
                iv = alpha_interval(rho, lam2, lam_m)
                if not iv.feasible:
                    print(f"    rho={rho:<4} infeasible")
                    continue
                a = pick_alpha(iv, g, rho)
                hi = iv.upper if math.isfinite(iv.upper) else np.inf
                print(f"    rho={rho:<4} alpha in ({max(iv.lower, 0):.4f}, {hi:.4f})  "
                      f"pick {a:.4f}  lambda_bar {lambda_bar(g, a, rho):.4f}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=list(Config.sizes))
    p.add_argument("--rhos", type=float, nargs="+", default=list(Config.rhos))
    a = p.parse_args()
    run(Config(tuple(a.sizes), tuple(a.rhos)))
