"""Seeded random problem instances for property checks and experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CommGraph, build_graph, spectral_gap
from .numerics import spectral_radius
from .spectral import WeightMatrix, alpha_interval, make_weight, pick_alpha, rho_threshold
from .sysmodel import LtiSystem, is_detectable


@dataclass
class Instance:
    graph: CommGraph
    w: WeightMatrix
    sys: LtiSystem
    seed: int


def random_connected_graph(m: int, rng, extra_edge_prob: float = 0.3) -> CommGraph:
    order = rng.permutation(m)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, m)}
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < extra_edge_prob:
                edges.add((i, j))
    return build_graph(m, edges)


def scaled_matrix(n: int, rho: float, rng) -> np.ndarray:
    A = rng.standard_normal((n, n))
    while spectral_radius(A) < 1e-6:
        A = rng.standard_normal((n, n))
    return A * (rho / spectral_radius(A))


def random_outputs(n: int, m: int, rng, zero_prob: float = 0.35):
    blocks = []
    for _ in range(m):
        r = int(rng.integers(1, 3))
        Ci = np.zeros((r, n)) if rng.random() < zero_prob else rng.standard_normal((r, n))
        blocks.append(Ci)
    return tuple(blocks)


def detectable_instance(seed: int, m_range=(3, 7), n_range=(1, 4), margin: float = 0.95) -> Instance:
    """Connected graph, detectable (A, C), rho(A) <= margin * threshold, alpha = pick_alpha.

    Most instances are open-loop unstable; the spectral radius is capped at 3
    when the graph is complete (infinite threshold).
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    g = random_connected_graph(m, rng)
    lam2, lam_m = spectral_gap(g)
    cap = min(margin * rho_threshold(lam2, lam_m), 3.0)
    lo = 1.0 if cap > 1.05 and rng.random() < 0.85 else 0.3
    rho = float(rng.uniform(lo, cap))
    A = scaled_matrix(n, rho, rng)
    while True:
        blocks = random_outputs(n, m, rng)
        if is_detectable(A, np.vstack(blocks)):
            break
    sys = LtiSystem(A, blocks)
    alpha = pick_alpha(alpha_interval(spectral_radius(A), lam2, lam_m), g, spectral_radius(A))
    return Instance(g, make_weight(g, alpha), sys, seed)


def undetectable_instance(seed: int, m_range=(3, 6), n_range=(2, 4)) -> Instance:
    """Connected graph and (A, C) with an unstable mode no output block sees.

    A = T diag(lam_u, B) T^-1 and every C_i annihilates T e_1, with |lam_u| >= 1.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(m_range[0], m_range[1] + 1))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    g = random_connected_graph(m, rng)
    lam2, lam_m = spectral_gap(g)
    cap = min(0.95 * rho_threshold(lam2, lam_m), 3.0)
    lam_u = float(rng.uniform(1.0, max(cap, 1.01))) * rng.choice([-1.0, 1.0])
    T = rng.standard_normal((n, n)) + n * np.eye(n)
    rest = scaled_matrix(n - 1, float(rng.uniform(0.1, abs(lam_u))), rng)
    D = np.zeros((n, n))
    D[0, 0] = lam_u
    D[1:, 1:] = rest
    A = T @ D @ np.linalg.inv(T)
    hidden = T[:, 0] / np.linalg.norm(T[:, 0])
    proj = np.eye(n) - np.outer(hidden, hidden)
    blocks = tuple(rng.standard_normal((int(rng.integers(1, 3)), n)) @ proj for _ in range(m))
    sys = LtiSystem(A, blocks)
    rhoA = spectral_radius(A)
    iv = alpha_interval(rhoA, lam2, lam_m)
    alpha = pick_alpha(iv, g, rhoA) if iv.feasible else 1.0 / lam_m
    return Instance(g, make_weight(g, alpha), sys, seed)
