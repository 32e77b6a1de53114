"""Time-domain runs of the plant and the observer network, stepped node by node."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import neighbor_sets
from .numerics import DEFAULT_TOL, ToleranceConfig
from .synthesis import ObserverDesign, _offsets
from .sysmodel import LtiSystem

DIVERGENCE_FACTOR = 1e12
EPS = np.finfo(float).eps
# errors below FLOOR_FACTOR * eps * (state magnitude) are rounding, not dynamics
FLOOR_FACTOR = 1e4


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, norm: float):
        super().__init__(f"error norm {norm:.3e} exceeded the divergence cut-off at step {step}")
        self.step = step


@dataclass
class SimTrace:
    K: int
    x: np.ndarray = field(repr=False)  # (K+1, n)
    xhat: np.ndarray = field(repr=False)  # (K+1, m, n)
    z: np.ndarray = field(repr=False)  # (K+1, sum(mu)); node i owns z[:, mu_off[i]:mu_off[i+1]]
    err_norms: np.ndarray = field(repr=False)  # (m, K+1)
    joint_norm: np.ndarray = field(repr=False)  # (K+1,)
    meta: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        """(K+1, m, n) array of x(k) - xhat_i(k)."""
        return self.x[:, None, :] - self.xhat

    def stacked(self, k: int) -> np.ndarray:
        """(eps(k), z(k)) in the collective ordering."""
        return np.concatenate([self.errors[k].ravel(), self.z[k]])


def _blocks(d: ObserverDesign, sys: LtiSystem):
    """Per-node neighbour blocks; non-neighbour blocks are never read."""
    n, m = sys.n, d.m
    nbrs = neighbor_sets(d.w.graph)
    ro, mo = _offsets(sys.r), _offsets(d.mu)
    out = []
    for i in range(m):
        rows_x = slice(i * n, (i + 1) * n)
        rows_z = slice(mo[i], mo[i + 1])
        per_j = []
        for j in nbrs[i]:
            cr, cz = slice(ro[j], ro[j + 1]), slice(mo[j], mo[j + 1])
            per_j.append((j, d.w.W[i, j], d.H[rows_x, cr], d.S[rows_x, cz], d.Q[rows_z, cr], d.R[rows_z, cz]))
        out.append(per_j)
    return out


def default_initial(sys: LtiSystem, d: ObserverDesign, seed: int = 0):
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(sys.n)
    return x0, [np.zeros(sys.n) for _ in range(d.m)], [np.zeros(mu) for mu in d.mu]


def simulate(sys: LtiSystem, d: ObserverDesign, x0=None, xhat0=None, z0=None, K: int = 60,
             seed: int = 0) -> SimTrace:
    """Run x(k+1) = A x(k) alongside every observer's local update.

    Missing initial conditions default to x0 ~ N(0, I) drawn from ``seed``
    and zero estimates and compensator states.
    """
    if K < 1:
        raise ValueError("horizon K must be at least 1")
    if d.n != sys.n or d.r != list(sys.r) or d.m != sys.m:
        raise ValueError("design dimensions do not match the plant")
    dx0, dxh0, dz0 = default_initial(sys, d, seed)
    x0 = dx0 if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n)
    xhat0 = dxh0 if xhat0 is None else [np.asarray(v, dtype=float).reshape(sys.n) for v in xhat0]
    z0 = dz0 if z0 is None else [np.asarray(v, dtype=float).reshape(mu) for v, mu in zip(z0, d.mu)]
    if len(xhat0) != d.m or len(z0) != d.m:
        raise ValueError(f"need {d.m} initial estimates and compensator states")

    n, m, A = sys.n, d.m, sys.A
    mo = _offsets(d.mu)
    blocks = _blocks(d, sys)
    x = np.zeros((K + 1, n))
    xhat = np.zeros((K + 1, m, n))
    z = np.zeros((K + 1, mo[-1]))
    x[0] = x0
    xhat[0] = np.array(xhat0)
    for i in range(m):
        z[0, mo[i]:mo[i + 1]] = z0[i]

    joint = np.zeros(K + 1)
    joint[0] = np.sqrt(np.sum((x[0] - xhat[0]) ** 2) + np.sum(z[0] ** 2))
    for k in range(K):
        resid = [sys.C_blocks[j] @ x[k] - sys.C_blocks[j] @ xhat[k, j] for j in range(m)]
        zk = [z[k, mo[j]:mo[j + 1]] for j in range(m)]
        for i in range(m):
            xi = np.zeros(n)
            zi = np.zeros(d.mu[i])
            for j, wij, Hij, Sij, Qij, Rij in blocks[i]:
                xi += wij * (A @ xhat[k, j]) + Hij @ resid[j] + Sij @ zk[j]
                zi += Rij @ zk[j] + Qij @ resid[j]
            xhat[k + 1, i] = xi
            z[k + 1, mo[i]:mo[i + 1]] = zi
        x[k + 1] = A @ x[k]
        joint[k + 1] = np.sqrt(np.sum((x[k + 1] - xhat[k + 1]) ** 2) + np.sum(z[k + 1] ** 2))
        # an unstable plant drags the rounding floor of x - xhat up with it
        limit = DIVERGENCE_FACTOR * max(joint[0], EPS * np.linalg.norm(x[k + 1]))
        if not np.isfinite(joint[k + 1]) or joint[k + 1] > limit > 0:
            raise SimulationDiverged(k + 1, float(joint[k + 1]))

    err = np.linalg.norm(x[:, None, :] - xhat, axis=2).T
    meta = {"seed": seed, "alpha": d.w.alpha, "achieved_radius": d.achieved_radius}
    return SimTrace(K, x, xhat, z, err, joint, meta)


def _scale(trace: SimTrace, k: int) -> float:
    """Magnitude of the quantities actually computed at step k; sets the rounding level."""
    return max(np.linalg.norm(trace.x[k]), np.max(np.linalg.norm(trace.xhat[k], axis=1)),
               np.linalg.norm(trace.z[k]) if trace.z.shape[1] else 0.0)


def error_floor(trace: SimTrace, k: int | None = None) -> float:
    """Smallest error norm distinguishable from rounding at step k (default: last step).

    Each node forms x - xhat_i from two vectors of size ~||x(k)||, so once the
    plant is unstable the attainable accuracy degrades like eps * ||x(k)||.
    """
    k = trace.K if k is None else k
    return FLOOR_FACTOR * EPS * _scale(trace, k)


def final_relative_error(trace: SimTrace) -> float:
    """max_i ||eps_i(K)|| / max_i ||eps_i(0)||.

    A zero initial error gives 0 while the final error stays at the rounding
    floor (inexact weights perturb the consensus update by a few ulps) and
    inf otherwise.
    """
    e0, eK = trace.err_norms[:, 0].max(), trace.err_norms[:, -1].max()
    if e0 == 0.0:
        return 0.0 if eK <= error_floor(trace) else np.inf
    return float(eK / e0)


def rewrite_defect(sys: LtiSystem, d: ObserverDesign, trace: SimTrace) -> float:
    """Largest per-step relative defect of (eps, z)(k+1) = closed_loop (eps, z)(k).

    The defect is scaled by ||closed_loop|| times the largest state magnitude
    at step k, since that bounds the rounding committed by the node-wise
    update. Steps with all-zero states must reproduce zero exactly.
    """
    CL = d.closed_loop
    norm_cl = max(np.linalg.norm(CL, 2), 1.0)
    worst = 0.0
    for k in range(trace.K):
        v, v_next = trace.stacked(k), trace.stacked(k + 1)
        gap = np.linalg.norm(v_next - CL @ v)
        scale = _scale(trace, k)
        if scale == 0.0:
            if gap != 0.0:
                return np.inf
            continue
        worst = max(worst, gap / (norm_cl * scale))
    return float(worst)


def error_dynamics_check(sys: LtiSystem, d: ObserverDesign, trace: SimTrace,
                         cfg: ToleranceConfig = DEFAULT_TOL, rtol: float = 1e-10) -> bool:
    return rewrite_defect(sys, d, trace) < rtol


class DecayRate(NamedTuple):
    rate: float
    degenerate: bool  # trace zero or below rounding level after burn-in


def decay_rate(trace: SimTrace, burn_in: int = 0) -> DecayRate:
    """Per-step geometric rate exp(slope) of a least-squares fit to log ||(eps, z)||.

    Samples at the floating-point floor (relative to the state magnitude) are
    left out of the fit.
    """
    ks = np.arange(burn_in, trace.K + 1)
    keep = [k for k in ks if trace.joint_norm[k] > FLOOR_FACTOR * EPS * _scale(trace, k)]
    if len(keep) < 2:
        return DecayRate(0.0, True)
    slope = np.polyfit(np.array(keep, dtype=float), np.log(trace.joint_norm[keep]), 1)[0]
    return DecayRate(float(np.exp(slope)), False)


def trace_to_csv(trace: SimTrace) -> str:
    m = trace.err_norms.shape[0]
    meta = ", ".join(f"{k}={v!r}" for k, v in trace.meta.items())
    lines = [f"# {meta}", "k," + ",".join(f"err_{i + 1}" for i in range(m)) + ",joint_norm"]
    for k in range(trace.K + 1):
        vals = [repr(float(v)) for v in trace.err_norms[:, k]] + [repr(float(trace.joint_norm[k]))]
        lines.append(f"{k}," + ",".join(vals))
    return "\n".join(lines) + "\n"
