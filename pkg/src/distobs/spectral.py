"""Existence condition, admissible consensus gains and the W (x) A spectrum audit."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .graph import CommGraph
from .numerics import DEFAULT_TOL, ToleranceConfig, eig, kron

# guard band for "rho(A) < threshold" and for degenerate Laplacian gaps
GUARD = 1e-9


class InfeasibleInterval(ValueError):
    pass


@dataclass(frozen=True)
class WeightMatrix:
    alpha: float
    W: np.ndarray = field(repr=False)
    w_spectrum: np.ndarray = field(repr=False)
    graph: CommGraph = field(repr=False)

    @property
    def m(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class AlphaInterval:
    lower: float
    upper: float
    feasible: bool
    marginal: bool = False
    diagnosis: str = ""

    def contains(self, alpha: float) -> bool:
        return self.feasible and self.lower < alpha < self.upper


def rho_threshold(lam2: float, lam_m: float) -> float:
    """Largest spectral radius the graph can accommodate, (lm + l2)/(lm - l2).

    Returns ``math.inf`` for a complete graph (l2 == lm) and 1 for a
    disconnected one (l2 == 0).
    """
    if lam2 < -GUARD or lam_m < lam2 - GUARD * max(1.0, lam_m):
        raise ValueError(f"need 0 <= lambda_2 <= lambda_m, got ({lam2}, {lam_m})")
    if lam_m <= GUARD:
        warnings.warn("graph has no edges; threshold degenerates to 1", stacklevel=2)
        return 1.0
    if lam2 <= GUARD:
        return 1.0
    if lam_m - lam2 <= GUARD * lam_m:
        return math.inf
    return (lam_m + lam2) / (lam_m - lam2)


def condition_holds(rhoA: float, lam2: float, lam_m: float) -> bool:
    return rhoA < rho_threshold(lam2, lam_m)


def alpha_interval(rhoA: float, lam2: float, lam_m: float) -> AlphaInterval:
    """Open interval of consensus gains alpha for which W (x) A keeps only A's unstable modes."""
    if rhoA <= 0:
        raise ValueError("spectral radius must be positive")
    if lam2 <= GUARD:
        upper = (1.0 + 1.0 / rhoA) / lam_m if lam_m > GUARD else math.inf
        return AlphaInterval(math.inf, upper, False, diagnosis="disconnected graph (lambda_2 = 0)")
    lower = (1.0 - 1.0 / rhoA) / lam2
    upper = (1.0 + 1.0 / rhoA) / lam_m
    thr = rho_threshold(lam2, lam_m)
    feasible = rhoA < thr
    marginal = not math.isinf(thr) and abs(rhoA - thr) <= GUARD * thr
    diagnosis = "" if feasible else f"rho(A)={rhoA:.6g} is not below the threshold {thr:.6g}"
    return AlphaInterval(lower, upper, feasible, marginal, diagnosis)


def make_weight(g: CommGraph, alpha: float) -> WeightMatrix:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    W = np.eye(g.m) - alpha * g.laplacian.astype(float)
    return WeightMatrix(float(alpha), W, np.sort(linalg.eigvalsh(W)), g)


def lambda_bar(g: CommGraph, alpha: float, rhoA: float) -> float:
    """Convergence-rate factor max |1 - alpha*l| * rho(A) over l in sp(L) minus lambda_1."""
    return float(np.max(np.abs(1.0 - alpha * g.lam[1:])) * rhoA)


def pick_alpha(interval: AlphaInterval, g: CommGraph, rhoA: float, grid: int = 401) -> float:
    """Interior alpha minimising lambda_bar: grid scan, golden-section refinement, closed-form check."""
    if not interval.feasible:
        raise InfeasibleInterval(interval.diagnosis or "alpha interval is empty")
    lo, hi = interval.lower, interval.upper
    # lower bound may be <= 0 when rho(A) <= 1; alpha itself must stay positive
    lo = max(lo, 0.0)
    xs = np.linspace(lo, hi, grid + 2)[1:-1]
    vals = np.array([lambda_bar(g, a, rhoA) for a in xs])
    k = int(np.argmin(vals))
    best = float(xs[k])
    if 0 < k < grid - 1:
        try:
            res = optimize.minimize_scalar(
                lambda x: lambda_bar(g, x, rhoA), bracket=(xs[k - 1], xs[k], xs[k + 1]),
                method="golden", options={"xtol": 1e-14},
            )
        except ValueError:  # flat bracket; the grid point stands
            res = None
        if res is not None and lo < res.x < hi and res.fun <= vals[k]:
            best = float(res.x)
    # |1 - alpha*l| is largest at l = lambda_2 or lambda_m, so the minimax balances the two
    lam2, lam_m = float(g.lam[1]), float(g.lam[-1])
    if lam2 + lam_m > 0:
        exact = 2.0 / (lam2 + lam_m)
        if lo < exact < hi and lambda_bar(g, exact, rhoA) <= lambda_bar(g, best, rhoA):
            best = exact
    eps = 1e-12 * (hi - lo)
    return float(min(max(best, lo + eps), hi - eps))


@dataclass
class KronAudit:
    """Outcome of matching the unstable spectrum of W (x) A against A's.

    ``entries`` has one ``(lam, mult_WA, mult_A)`` triple per unstable
    cluster of W (x) A; ``unmatched`` lists unstable eigenvalues of W (x) A
    that match no unstable eigenvalue of A.
    """

    passed: bool
    entries: list
    unmatched: list
    spectral_radius: float


def unstable_clusters(spec, cfg: ToleranceConfig = DEFAULT_TOL):
    """(value, multiplicity) for each cluster with modulus >= 1 - unit_circle_tol."""
    out = []
    for val, mult in zip(spec.cluster_values, spec.multiplicities):
        if abs(val) >= 1.0 - cfg.unit_circle_tol:
            out.append((complex(val), int(mult)))
    return out


def audit_kron_spectrum(w: WeightMatrix, A, cfg: ToleranceConfig = DEFAULT_TOL) -> KronAudit:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    M = kron(w.W, A)
    spec_M = eig(M, cfg)
    spec_A = eig(A, cfg)
    tol = cfg.eig_cluster_tol * max(1.0, linalg.norm(M, 2))
    unstable_A = unstable_clusters(spec_A, cfg)
    entries, unmatched = [], []
    for lam, mult in unstable_clusters(spec_M, cfg):
        hits = [a_mult for a_val, a_mult in unstable_A if abs(a_val - lam) <= tol]
        if not hits:
            unmatched.append(lam)
            continue
        entries.append((lam, mult, hits[0]))
    passed = not unmatched and all(mw == ma for _, mw, ma in entries)
    return KronAudit(passed, entries, unmatched, spec_M.radius)
