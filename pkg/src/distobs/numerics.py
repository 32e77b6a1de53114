"""Tolerance-governed matrix primitives shared by every other module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


class NumericsError(ValueError):
    """Raised on malformed matrices or a failed eigen computation."""


@dataclass(frozen=True)
class ToleranceConfig:
    rank_rel_tol: float = 1e-9
    eig_cluster_tol: float = 1e-8
    unit_circle_tol: float = 1e-9

    def __post_init__(self):
        for name in ("rank_rel_tol", "eig_cluster_tol", "unit_circle_tol"):
            value = getattr(self, name)
            if not (0.0 < value < 1e-3):
                raise ValueError(f"{name} must lie in (0, 1e-3), got {value}")


DEFAULT_TOL = ToleranceConfig()


def as_matrix(M, name="matrix", allow_empty=False) -> np.ndarray:
    """Coerce to a finite 2-D array.

    Empty dimensions are rejected unless ``allow_empty``; block-structured
    gains legitimately have zero-width blocks when a compensator order is 0.
    """
    arr = np.asarray(M)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and min(arr.shape) < 1:
        raise NumericsError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} has non-finite entries")
    if not np.iscomplexobj(arr):
        arr = arr.astype(float, copy=False)
    return arr


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues, right eigenvectors and multiplicity clusters of a matrix.

    ``clusters`` holds index arrays into ``eigenvalues``; eigenvalues closer
    than ``cluster_tol * ||M||`` are chained into one cluster whose
    size is the reported algebraic multiplicity.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    cluster_tol: float
    clusters: tuple

    @property
    def cluster_values(self) -> np.ndarray:
        """Mean eigenvalue of each cluster (well conditioned even for Jordan blocks)."""
        return np.array([self.eigenvalues[idx].mean() for idx in self.clusters])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([len(idx) for idx in self.clusters], dtype=int)

    @property
    def radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))


def cluster_values(values, tol) -> tuple:
    """Single-linkage grouping of complex numbers at absolute distance ``tol``."""
    values = np.asarray(values, dtype=complex)
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    ordered = sorted(groups.values(), key=lambda g: (-abs(values[g].mean()), values[g].mean().real, values[g].mean().imag))
    return tuple(np.array(g, dtype=int) for g in ordered)


def _eig_pair(M):
    try:
        return linalg.eig(M)
    except linalg.LinAlgError as exc:
        raise NumericsError(f"eigen routine did not converge: {exc}") from exc


def eig(M, cfg: ToleranceConfig = DEFAULT_TOL) -> Spectrum:
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise NumericsError(f"eig needs a square matrix, got {M.shape}")
    scale = linalg.norm(M, 2)

    def residual_ok(w, v):
        resid = np.linalg.norm(M @ v - v * w, axis=0)
        return np.all(resid <= cfg.eig_cluster_tol * scale * np.linalg.norm(v, axis=0))

    w, v = _eig_pair(M)
    if not residual_ok(w, v):
        # LAPACK balancing can mis-scale entries many orders below ||M||;
        # flushing them is a perturbation of at most eps * ||M||
        flushed = np.where(np.abs(M) < np.finfo(float).eps * scale, 0.0, M)
        w, v = _eig_pair(flushed)
        if not residual_ok(w, v):
            raise NumericsError("eigenpair residual exceeds the cluster tolerance")
    clusters = cluster_values(w, cfg.eig_cluster_tol * scale)
    return Spectrum(w, v, cfg.eig_cluster_tol, clusters)


def spectral_radius(M) -> float:
    M = as_matrix(M, allow_empty=True)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(linalg.eigvals(M))))


def _rank_threshold(s, shape, cfg, scale=0.0):
    """Singular values above this count towards the rank.

    ``scale`` is a reference magnitude for matrices that may be tiny because
    of cancellation, such as A - lam*I at an eigenvalue of a 1x1 A.
    """
    ref = max(s[0] if s.size else 0.0, scale)
    if ref == 0.0:
        return np.inf
    return cfg.rank_rel_tol * ref * max(shape)


def rank(M, cfg: ToleranceConfig = DEFAULT_TOL, scale: float = 0.0) -> int:
    M = as_matrix(M, allow_empty=True)
    if M.size == 0:
        return 0
    s = linalg.svd(M, compute_uv=False)
    return int(np.sum(s > _rank_threshold(s, M.shape, cfg, scale)))


def null_basis(M, cfg: ToleranceConfig = DEFAULT_TOL, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis (as columns) of the right null space at rank tolerance."""
    M = as_matrix(M, allow_empty=True)
    cols = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(cols, dtype=M.dtype)
    _, s, vh = linalg.svd(M, full_matrices=True)
    r = int(np.sum(s > _rank_threshold(s, M.shape, cfg, scale)))
    return vh[r:].conj().T


def range_basis(M, cfg: ToleranceConfig = DEFAULT_TOL, scale: float = 0.0) -> np.ndarray:
    """Orthonormal basis of the column space at rank tolerance."""
    M = as_matrix(M, allow_empty=True)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=M.dtype)
    u, s, _ = linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > _rank_threshold(s, M.shape, cfg, scale)))
    return u[:, :r]


def kron(Ma, Mb) -> np.ndarray:
    return np.kron(as_matrix(Ma, "Ma", allow_empty=True), as_matrix(Mb, "Mb", allow_empty=True))
