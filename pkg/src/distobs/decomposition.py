"""Per-observer channel view of the collective error system and fixed-mode tests.

Observer i measures ``Cbar_i = e_i^T (x) C_i`` and injects into the error
states of its neighbours through ``Bbar_i = E_{N_i} (x) I_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import linalg

from .graph import CommGraph, neighbor_sets, spectral_gap
from .numerics import (DEFAULT_TOL, ToleranceConfig, as_matrix, eig, kron,
                       null_basis, range_basis, rank)
from .spectral import (InfeasibleInterval, WeightMatrix, alpha_interval,
                       unstable_clusters)
from .sysmodel import LtiSystem

MAX_ENUM_NODES = 12


@dataclass(frozen=True)
class ChannelTriple:
    index: int
    neighbors: tuple
    Bbar: np.ndarray = field(repr=False)
    Cbar: np.ndarray = field(repr=False)


def channel_triple(g: CommGraph, sys: LtiSystem, i: int) -> ChannelTriple:
    if not 0 <= i < g.m:
        raise IndexError(f"channel index {i} outside 0..{g.m - 1}")
    Ni = neighbor_sets(g)[i]
    E = np.eye(g.m)[:, Ni]
    Bbar = np.kron(E, np.eye(sys.n))
    e_i = np.zeros((1, g.m))
    e_i[0, i] = 1.0
    Cbar = np.kron(e_i, sys.C_blocks[i])
    return ChannelTriple(i, tuple(Ni), Bbar, Cbar)


def controllable_subspace(M, B, cfg: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the reachable subspace of (M, B).

    Grown one Krylov step at a time with re-orthonormalisation, which stays
    well conditioned where the raw [B, MB, ..., M^(N-1)B] would not.
    """
    N = M.shape[0]
    if B.size == 0:
        return np.zeros((N, 0))
    V = range_basis(B, cfg)
    while V.shape[1] < N:
        grown = range_basis(np.hstack([V, M @ V]), cfg)
        if grown.shape[1] == V.shape[1]:
            break
        V = grown
    return V


def observable_subspace(M, C, cfg: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of Range(O^T), the complement of the unobservable subspace."""
    return controllable_subspace(M.T, C.T, cfg)


@dataclass(frozen=True)
class CoSubsystem:
    """Minimal (controllable and observable) part of (M, B, C).

    ``basis`` spans the controllable subspace's component orthogonal to the
    unobservable directions; the reduced matrices act on those coordinates.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    basis: np.ndarray

    @property
    def order(self) -> int:
        return self.A.shape[0]


def co_subsystem(M, B, C, cfg: ToleranceConfig = DEFAULT_TOL) -> CoSubsystem:
    T = controllable_subspace(M, B, cfg)
    if T.shape[1] == 0:
        z = np.zeros((0, 0))
        return CoSubsystem(z, np.zeros((0, B.shape[1])), np.zeros((C.shape[0], 0)), T)
    Ac, Bc, Cc = T.T @ M @ T, T.T @ B, C @ T
    Vo = observable_subspace(Ac, Cc, cfg)
    return CoSubsystem(Vo.T @ Ac @ Vo, Vo.T @ Bc, Cc @ Vo, T @ Vo)


@dataclass(frozen=True)
class KalmanObsvDecomp:
    P: np.ndarray
    k: int
    A_NO: np.ndarray
    A_2: np.ndarray
    A_O: np.ndarray
    C_O: np.ndarray
    A_hat: np.ndarray = field(repr=False)


def kalman_obsv(A, C_i, cfg: ToleranceConfig = DEFAULT_TOL) -> KalmanObsvDecomp:
    """Orthogonal change of basis (unobservable | observable) for (A, C_i)."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    C_i = np.asarray(C_i, dtype=float).reshape(-1, n)
    obs = observable_subspace(A, C_i, cfg)
    unobs = null_basis(obs.T, cfg) if obs.shape[1] else np.eye(n)
    P = np.hstack([unobs, obs])
    k = unobs.shape[1]
    A_hat = P.T @ A @ P
    return KalmanObsvDecomp(P, k, A_hat[:k, :k], A_hat[:k, k:], A_hat[k:, k:], C_i @ P[:, k:], A_hat)


@dataclass
class NullCheck:
    holds: bool
    precondition_ok: bool
    null_dim: int
    null_basis: np.ndarray = field(repr=False)


def wbar_null_check(w: WeightMatrix, i: int, cfg: ToleranceConfig = DEFAULT_TOL) -> NullCheck:
    """Check Null(Wbar_i) is orthogonal to the all-ones vector, Wbar_i = (e_i, W e_i, ...)^T."""
    m = w.m
    vals = np.sort(linalg.eigvalsh(w.W))
    precondition_ok = (abs(vals[-1] - 1.0) <= cfg.eig_cluster_tol
                       and (m == 1 or abs(vals[-2]) < 1.0 - cfg.unit_circle_tol)
                       and abs(vals[0]) < 1.0 - cfg.unit_circle_tol)
    rows = [np.eye(m)[i]]
    for _ in range(m - 1):
        rows.append(w.W @ rows[-1])
    Wbar = np.vstack(rows)
    N = null_basis(Wbar, cfg)
    ones = np.ones(m)
    holds = all(abs(ones @ u) < 1e-8 * np.linalg.norm(u) * np.sqrt(m) for u in N.T)
    return NullCheck(holds, bool(precondition_ok), N.shape[1], N)


def _require_feasible(w: WeightMatrix, A):
    rhoA = float(np.max(np.abs(linalg.eigvals(A))))
    lam2, lam_m = spectral_gap(w.graph)
    iv = alpha_interval(rhoA, lam2, lam_m)
    if not iv.contains(w.alpha):
        raise InfeasibleInterval(
            f"alpha={w.alpha:.6g} is not inside the admissible interval "
            f"({iv.lower:.6g}, {iv.upper:.6g}){'; ' + iv.diagnosis if iv.diagnosis else ''}"
        )


def _match(val, clusters, tol):
    for lam, mult in clusters:
        if abs(lam - val) <= tol:
            return lam
    return None


def channel_co_modes(w: WeightMatrix, sys: LtiSystem, tri: ChannelTriple,
                     cfg: ToleranceConfig = DEFAULT_TOL) -> list:
    """Unstable modes of W (x) A inside the controllable and observable part of channel i.

    Returns ``(lam, multiplicity)`` pairs, ``lam`` being the cluster value of
    the unstable eigenvalue of W (x) A.
    """
    _require_feasible(w, sys.A)
    M = kron(w.W, sys.A)
    spec = eig(M, cfg)
    tol = cfg.eig_cluster_tol * max(1.0, linalg.norm(M, 2)) * 10
    unstable = unstable_clusters(spec, cfg)
    sub = co_subsystem(M, tri.Bbar, tri.Cbar, cfg)
    if sub.order == 0 or not unstable:
        return []
    counts: dict = {}
    for val in linalg.eigvals(sub.A):
        lam = _match(val, unstable, tol)
        if lam is not None:
            counts[lam] = counts.get(lam, 0) + 1
    return [(lam, counts[lam]) for lam, _ in unstable if lam in counts]


@dataclass
class FixedModeReport:
    """Partition rank test per unstable mode.

    ``ranks[k]`` maps the controller-side node tuple of each partition to the
    rank of the bordered matrix at ``tested_modes[k]``.
    """

    tested_modes: list
    ranks: list
    required_rank: int
    fixed_modes: list

    def passed(self, k: int) -> bool:
        return all(r >= self.required_rank for r in self.ranks[k].values())

    def to_dict(self) -> dict:
        modes = []
        for lam, ranks in zip(self.tested_modes, self.ranks):
            failing = [list(p) for p, r in ranks.items() if r < self.required_rank]
            modes.append({
                "eigenvalue": [lam.real, lam.imag],
                "partitions_tested": len(ranks),
                "min_rank": int(min(ranks.values())),
                "failing_partitions": [[i + 1 for i in p] for p in failing],
            })
        return {
            "required_rank": self.required_rank,
            "modes": modes,
            "fixed_modes": [[lam.real, lam.imag] for lam in self.fixed_modes],
        }


def partitions(m: int):
    """Controller-side subsets of {0..m-1}; the rest are measured."""
    for l in range(m + 1):
        yield from combinations(range(m), l)


def fixed_mode_scan(w: WeightMatrix, sys: LtiSystem, triples, cfg: ToleranceConfig = DEFAULT_TOL) -> FixedModeReport:
    m, n = w.m, sys.n
    if m > MAX_ENUM_NODES:
        raise ValueError(f"partition enumeration capped at m={MAX_ENUM_NODES}, got m={m}")
    triples = sorted(triples, key=lambda t: t.index)
    if [t.index for t in triples] != list(range(m)):
        raise ValueError("need exactly one channel triple per node")
    M = kron(w.W, sys.A)
    N = m * n
    tested, all_ranks, fixed = [], [], []
    for lam, _ in unstable_clusters(eig(M, cfg), cfg):
        shifted = M - lam * np.eye(N)
        ref = max(linalg.norm(M, 2), abs(lam))
        ranks = {}
        for ctrl in partitions(m):
            obs = [i for i in range(m) if i not in ctrl]
            Bs = [triples[i].Bbar for i in ctrl]
            Cs = np.vstack([triples[i].Cbar for i in obs] + [np.zeros((0, N))])
            top = np.hstack([shifted] + Bs)
            bottom = np.hstack([Cs, np.zeros((Cs.shape[0], top.shape[1] - N))])
            ranks[ctrl] = rank(np.vstack([top, bottom]), cfg, ref)
        tested.append(lam)
        all_ranks.append(ranks)
        if min(ranks.values()) < N:
            fixed.append(lam)
    return FixedModeReport(tested, all_ranks, N, fixed)
