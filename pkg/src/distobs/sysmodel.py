"""Plant model, PBH detectability of (A, C) and of the lifted pair (W (x) A, Cbar)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .graph import components
from .numerics import (DEFAULT_TOL, ToleranceConfig, as_matrix, eig, kron,
                       null_basis, rank)
from .spectral import WeightMatrix, unstable_clusters


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray = field(repr=False)
    C_blocks: tuple = field(repr=False)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise ModelError(f"A must be square, got {A.shape}")
        blocks = []
        for i, Ci in enumerate(self.C_blocks):
            Ci = np.asarray(Ci, dtype=float)
            if Ci.ndim == 1:
                Ci = Ci.reshape(1, -1) if Ci.size else Ci.reshape(0, A.shape[0])
            if Ci.ndim != 2 or Ci.shape[1] != A.shape[0]:
                raise ModelError(f"C_{i + 1} must have {A.shape[0]} columns, got shape {Ci.shape}")
            if not np.all(np.isfinite(Ci)):
                raise ModelError(f"C_{i + 1} has non-finite entries")
            blocks.append(Ci)
        if not blocks:
            raise ModelError("at least one output block is required")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C_blocks", tuple(blocks))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.C_blocks)

    @property
    def r(self) -> list[int]:
        return [Ci.shape[0] for Ci in self.C_blocks]

    @property
    def C(self) -> np.ndarray:
        return np.vstack(self.C_blocks)


@dataclass
class Detectability:
    """PBH verdict; on failure carries the offending eigenvalue and a null vector."""

    detectable: bool
    eigenvalue: complex | None = None
    witness: np.ndarray | None = None

    def __bool__(self):
        return self.detectable


def _pbh(M, C, cfg):
    N = M.shape[0]
    for lam, _ in unstable_clusters(eig(M, cfg), cfg):
        stacked = np.vstack([M - lam * np.eye(N), C.astype(complex)])
        ref = max(linalg.norm(M, 2), abs(lam))
        if rank(stacked, cfg, ref) < N:
            return lam, null_basis(stacked, cfg, ref)
    return None, None


def is_detectable(A, C, cfg: ToleranceConfig = DEFAULT_TOL) -> Detectability:
    A = as_matrix(A, "A")
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        C = np.zeros((0, A.shape[0]))
    elif C.ndim == 1:
        C = C.reshape(1, -1)
    if C.ndim != 2 or C.shape[1] != A.shape[0]:
        raise ModelError(f"C needs {A.shape[0]} columns, got shape {C.shape}")
    lam, null = _pbh(A, C, cfg)
    if lam is None:
        return Detectability(True)
    return Detectability(False, lam, null[:, 0])


def stacked_cbar(sys: LtiSystem, m: int | None = None) -> np.ndarray:
    """Block-diagonal output map: block row i is e_i^T (x) C_i."""
    m = sys.m if m is None else m
    if m != sys.m:
        raise ModelError(f"system has {sys.m} output blocks, graph has {m} nodes")
    return linalg.block_diag(*sys.C_blocks) if m > 1 else sys.C_blocks[0].copy()


def _weight_eigenspaces(w: WeightMatrix, cfg):
    """Clusters (lam_W, orthonormal basis) of W; the eigenspace at 1 uses component indicators."""
    vals, vecs = linalg.eigh(w.W)
    tol = cfg.eig_cluster_tol * max(1.0, np.max(np.abs(vals)))
    out, used = [], np.zeros(len(vals), dtype=bool)
    for k in range(len(vals)):
        if used[k]:
            continue
        group = np.abs(vals - vals[k]) <= tol
        used |= group
        lam_w = float(vals[group].mean())
        basis = vecs[:, group]
        if abs(lam_w - 1.0) <= tol:
            comps = components(w.graph)
            if len(comps) == basis.shape[1]:
                basis = np.zeros((w.m, len(comps)))
                for c, nodes in enumerate(comps):
                    basis[nodes, c] = 1.0 / np.sqrt(len(nodes))
        out.append((lam_w, basis))
    return out


def _structured_witness(w, sys, lam, cfg):
    """Undetected eigenvector of the form v_W (x) v_A, if one exists.

    Among candidate v_W the one leaving the largest undetected v_A subspace
    wins; v_A is the projection of the all-ones direction onto that
    subspace, which makes the choice independent of basis rotations.
    """
    spec_A = eig(sys.A, cfg)
    tol = cfg.eig_cluster_tol * max(1.0, abs(lam)) * 10
    best = None
    for lam_w, basis_w in _weight_eigenspaces(w, cfg):
        for lam_a in spec_A.cluster_values:
            if abs(lam_w * lam_a - lam) > tol:
                continue
            NA = null_basis(sys.A - lam_a * np.eye(sys.n), cfg, max(linalg.norm(sys.A, 2), abs(lam_a)))
            if NA.shape[1] == 0:
                continue
            for col in basis_w.T:
                support = np.flatnonzero(np.abs(col) > 1e-12)
                CS = np.vstack([sys.C_blocks[i] for i in support] + [np.zeros((0, sys.n))])
                U = NA @ null_basis(CS @ NA, cfg) if CS.shape[0] else NA
                if U.shape[1] and (best is None or U.shape[1] > best[0]):
                    best = (U.shape[1], col, U)
    if best is None:
        return None
    _, vw, U = best
    va = U @ (U.conj().T @ np.ones(sys.n))
    if np.linalg.norm(va) < 1e-8:
        va = U[:, 0]
    v = np.kron(vw, va)
    return v / np.linalg.norm(v)


def lifted_detectability(w: WeightMatrix, sys: LtiSystem, cfg: ToleranceConfig = DEFAULT_TOL) -> Detectability:
    """PBH test on the mn-dimensional collective error pair (W (x) A, Cbar)."""
    if w.m != sys.m:
        raise ModelError(f"weight matrix is {w.m}x{w.m} but system has {sys.m} output blocks")
    M = kron(w.W, sys.A)
    lam, null = _pbh(M, stacked_cbar(sys), cfg)
    if lam is None:
        return Detectability(True)
    v = _structured_witness(w, sys, lam, cfg)
    if v is None:
        v = null[:, 0]
    return Detectability(False, lam, v)


def eigvec_structure_angles(w: WeightMatrix, A, cfg: ToleranceConfig = DEFAULT_TOL) -> list:
    """Largest principal angle between each unstable eigenspace of W (x) A and 1 (x) eig(A).

    Returns ``(lam, angle)`` pairs; ``angle`` is ``inf`` when the dimensions differ.
    """
    A = as_matrix(A, "A")
    n, m = A.shape[0], w.m
    M = kron(w.W, A)
    ones = np.ones((m, 1)) / np.sqrt(m)
    out = []
    for lam, _ in unstable_clusters(eig(M, cfg), cfg):
        E_lift = null_basis(M - lam * np.eye(m * n), cfg, max(linalg.norm(M, 2), abs(lam)))
        E_cons = np.kron(ones, null_basis(A - lam * np.eye(n), cfg, max(linalg.norm(A, 2), abs(lam))))
        if E_lift.shape[1] != E_cons.shape[1] or E_lift.shape[1] == 0:
            out.append((lam, np.inf))
            continue
        out.append((lam, float(np.max(linalg.subspace_angles(E_lift, E_cons)))))
    return out


def verify_unstable_eigvec_structure(w: WeightMatrix, A, cfg: ToleranceConfig = DEFAULT_TOL,
                                     max_angle: float = 1e-7) -> bool:
    return all(angle < max_angle for _, angle in eigvec_structure_angles(w, A, cfg))


def pattern_of(M, row_blocks, col_blocks) -> np.ndarray:
    """Binary block pattern; a block is 0 only if every entry is exactly zero."""
    M = np.asarray(M)
    if M.ndim != 2 or sum(row_blocks) != M.shape[0] or sum(col_blocks) != M.shape[1]:
        raise ModelError(f"block sizes {list(row_blocks)} x {list(col_blocks)} do not partition shape {M.shape}")
    if min(list(row_blocks) + list(col_blocks), default=0) < 0:
        raise ModelError("block sizes must be non-negative")
    rs = np.concatenate([[0], np.cumsum(row_blocks)]).astype(int)
    cs = np.concatenate([[0], np.cumsum(col_blocks)]).astype(int)
    P = np.zeros((len(row_blocks), len(col_blocks)), dtype=int)
    for i in range(len(row_blocks)):
        for j in range(len(col_blocks)):
            P[i, j] = int(np.any(M[rs[i]:rs[i + 1], cs[j]:cs[j + 1]] != 0))
    return P


def pattern_leq(P1, P2) -> bool:
    P1, P2 = np.asarray(P1), np.asarray(P2)
    if P1.shape != P2.shape:
        raise ModelError(f"pattern shapes differ: {P1.shape} vs {P2.shape}")
    return bool(np.all(P1 <= P2))


def _numbers(tok, lineno, count, what):
    if len(tok) != count:
        raise ModelError(f"line {lineno}: expected {count} entries for {what}, got {len(tok)}")
    try:
        return [float(t) for t in tok]
    except ValueError:
        raise ModelError(f"line {lineno}: non-numeric entry in {what}") from None


def _count(tok, lineno, what):
    if len(tok) != 1:
        raise ModelError(f"line {lineno}: expected a single integer for {what}")
    try:
        v = int(tok[0])
    except ValueError:
        raise ModelError(f"line {lineno}: {what} is not an integer") from None
    if v < 0:
        raise ModelError(f"line {lineno}: {what} must be non-negative")
    return v


def parse_plant(text: str) -> LtiSystem:
    """Parse ``n``, n rows of A, then per node ``r_i`` followed by r_i rows of C_i."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise ModelError("empty plant file")
    pos = 0
    n = _count(rows[0][1], rows[0][0], "state dimension n")
    if n < 1:
        raise ModelError(f"line {rows[0][0]}: state dimension must be positive")
    pos = 1
    if len(rows) < 1 + n:
        raise ModelError(f"plant file ends inside A (needs {n} rows)")
    A = [_numbers(tok, ln, n, "A") for ln, tok in rows[pos:pos + n]]
    pos += n
    blocks = []
    while pos < len(rows):
        ln, tok = rows[pos]
        r = _count(tok, ln, f"r_{len(blocks) + 1}")
        pos += 1
        if pos + r > len(rows):
            raise ModelError(f"line {ln}: plant file ends inside C_{len(blocks) + 1}")
        Ci = [_numbers(t, l2, n, f"C_{len(blocks) + 1}") for l2, t in rows[pos:pos + r]]
        blocks.append(np.array(Ci, dtype=float).reshape(r, n))
        pos += r
    if not blocks:
        raise ModelError("plant file has no output blocks")
    return LtiSystem(np.array(A), tuple(blocks))


def format_plant(sys: LtiSystem) -> str:
    lines = [str(sys.n)]
    lines += [" ".join(repr(float(v)) for v in row) for row in sys.A]
    for Ci in sys.C_blocks:
        lines.append(str(Ci.shape[0]))
        lines += [" ".join(repr(float(v)) for v in row) for row in Ci]
    return "\n".join(lines) + "\n"
