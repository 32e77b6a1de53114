"""Sparsity-constrained gains (H, S, Q, R) that stabilise the collective error dynamics.

Observer i owns compensator state z_i of order mu_i. Its measurement
residual and z_i may only reach observers in N_i, so column block i of H
and S is confined to rows N_i, and Q, R are block-diagonal (stage A) or
neighbour-masked (stage B).

Stage A handles channels in index order. For channel i it takes the
minimal (controllable and observable) part of the current closed loop as
seen from (Bbar_i, Cbar_i). If that part holds modes outside the target
radius, stage A closes it with an observer-based compensator whose two
gains come from radius-scaled discrete Riccati equations. It first tries a
compensator on the slow modal part only (order = number of slow modes) and
falls back to the whole minimal part when the reduced compensator disturbs
the remaining modes too much. Stage B is a fallback: randomised coordinate
descent on the spectral radius over the masked gain entries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .decomposition import MAX_ENUM_NODES, channel_triple, co_subsystem, fixed_mode_scan
from .graph import CommGraph, neighbor_sets, spectral_gap
from .numerics import DEFAULT_TOL, ToleranceConfig, kron, spectral_radius
from .spectral import WeightMatrix, alpha_interval, lambda_bar, make_weight
from .sysmodel import (LtiSystem, is_detectable, pattern_leq, pattern_of,
                       stacked_cbar)

logger = logging.getLogger(__name__)


class InfeasibleDesign(ValueError):
    """A precondition certifiably fails; no structured design is claimed to exist."""


class SynthesisFailed(RuntimeError):
    """The constructive search gave up. This does not prove that no design exists."""


@dataclass
class SynthesisOptions:
    target_radius: float | None = None  # None -> (1 + lambda_bar) / 2
    mu_cap: int | None = None  # None -> n * m
    max_restarts: int = 20
    rng_seed: int = 0
    stage: str = "auto"  # "auto", "A" or "B"
    sweeps: int = 200

    def __post_init__(self):
        if self.target_radius is not None and not 0.0 < self.target_radius < 1.0:
            raise ValueError("target_radius must lie in (0, 1)")
        if self.mu_cap is not None and self.mu_cap < 0:
            raise ValueError("mu_cap must be non-negative")
        if self.stage not in ("auto", "A", "B"):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class ObserverDesign:
    w: WeightMatrix = field(repr=False)
    H: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    mu: list
    n: int
    r: list
    closed_loop: np.ndarray = field(repr=False)
    achieved_radius: float
    stage: str = ""

    @property
    def m(self) -> int:
        return self.w.m


def closed_loop_matrix(w: WeightMatrix, sys: LtiSystem, H, S, Q, R, mu) -> np.ndarray:
    """[[W (x) A - H Cbar, -S], [Q Cbar, R]]."""
    n, m = sys.n, sys.m
    N, rt, mt = m * n, sum(sys.r), int(sum(mu))
    if len(mu) != m or min(mu, default=0) < 0:
        raise ValueError(f"need {m} non-negative compensator orders, got {mu}")
    H, S, Q, R = (np.asarray(X, dtype=float) for X in (H, S, Q, R))
    for name, X, shape in (("H", H, (N, rt)), ("S", S, (N, mt)), ("Q", Q, (mt, rt)), ("R", R, (mt, mt))):
        if X.shape != shape:
            raise ValueError(f"{name} has shape {X.shape}, expected {shape}")
    Cbar = stacked_cbar(sys, w.m)
    return np.block([[kron(w.W, sys.A) - H @ Cbar, -S], [Q @ Cbar, R]])


def make_design(w, sys, H, S, Q, R, mu, stage="") -> ObserverDesign:
    CL = closed_loop_matrix(w, sys, H, S, Q, R, mu)
    return ObserverDesign(w, np.asarray(H, float), np.asarray(S, float), np.asarray(Q, float),
                          np.asarray(R, float), list(map(int, mu)), sys.n, list(sys.r), CL,
                          spectral_radius(CL), stage)


def zero_design(w, sys) -> ObserverDesign:
    N, rt = sys.m * sys.n, sum(sys.r)
    return make_design(w, sys, np.zeros((N, rt)), np.zeros((N, 0)), np.zeros((0, rt)),
                       np.zeros((0, 0)), [0] * sys.m, stage="zero")


def _offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


def gain_masks(g: CommGraph, n: int, r, mu, block_diag_qr: bool):
    """Boolean entry masks for H, S, Q, R from the block pattern of the graph."""
    P = g.pattern.astype(bool)
    Pqr = np.eye(g.m, dtype=bool) if block_diag_qr else P
    rows_n = [n] * g.m
    return (_expand(P, rows_n, r), _expand(P, rows_n, mu), _expand(Pqr, mu, r), _expand(Pqr, mu, mu))


def _expand(Pb, rs, cs):
    ro, co = _offsets(rs), _offsets(cs)
    M = np.zeros((ro[-1], co[-1]), dtype=bool)
    for i in range(len(rs)):
        for j in range(len(cs)):
            if Pb[i, j]:
                M[ro[i]:ro[i + 1], co[j]:co[j + 1]] = True
    return M


def _dlqr_gain(A, B, radius, rng):
    """Gain K with rho(A - B K) < radius via the DARE of (A/radius, B/radius).

    The state weight is the identity plus a random PSD term; the random
    part keeps successive channel designs in general position.
    """
    d = A.shape[0]
    G = rng.standard_normal((d, d))
    Qw = np.eye(d) + 0.5 * G @ G.T / d
    Rw = np.eye(B.shape[1])
    As, Bs = A / radius, B / radius
    X = linalg.solve_discrete_are(As, Bs, Qw, Rw)
    return linalg.solve(Rw + Bs.T @ X @ Bs, Bs.T @ X @ As, assume_a="pos")


def _assemble(g, sys, comps, mu):
    """Full H, S, Q, R from per-channel compensators {i: (Sbar_i, Q_ii, R_ii)}."""
    m, n = g.m, sys.n
    nbrs = neighbor_sets(g)
    mo, ro = _offsets(mu), _offsets(sys.r)
    N, mt, rt = m * n, mo[-1], ro[-1]
    H, S, Q, R = np.zeros((N, rt)), np.zeros((N, mt)), np.zeros((mt, rt)), np.zeros((mt, mt))
    for i, (Sbar, Qii, Rii) in comps.items():
        cols = slice(mo[i], mo[i + 1])
        for pos, j in enumerate(nbrs[i]):
            S[j * n:(j + 1) * n, cols] = Sbar[pos * n:(pos + 1) * n]
        Q[cols, ro[i]:ro[i + 1]] = Qii
        R[cols, cols] = Rii
    return H, S, Q, R


def _slow_part(sub, target):
    """Project (A, B, C) onto the modes with |lam| >= target.

    Ordered real Schur form plus a Sylvester solve block-diagonalises A into
    (fast, slow); only the slow block and its input/output maps are returned.
    """
    T, U, k = linalg.schur(sub.A, output="real", sort=lambda re, im: abs(complex(re, im)) < target)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    X = linalg.solve_sylvester(T11, -T22, -T12)
    Bt = U.T @ sub.B
    B_slow = Bt[k:]
    C_slow = sub.C @ (U[:, :k] @ X + U[:, k:])
    return T22, B_slow, C_slow


def _bad_count(M, target):
    return int(np.sum(np.abs(linalg.eigvals(M)) >= target))


def _compensator(A, B, C, target, rng):
    K = _dlqr_gain(A, B, target, rng)
    L = _dlqr_gain(A.T, C.T, target, rng).T
    return -K, L, A - B @ K - L @ C


def _stage_a(g, w, sys, target, mu_cap, rng, cfg):
    """Sequential channel-wise compensation.

    Channel i sees the controllable and observable part of the current closed
    loop. Its compensator order climbs from the number of modes outside the
    target radius (slow-mode observer) to the full c/o order, stopping at the
    first order that moves those modes inside.
    """
    m, n = g.m, sys.n
    comps, mu = {}, [0] * m
    for i in range(m):
        H, S, Q, R = _assemble(g, sys, comps, mu)
        CL = closed_loop_matrix(w, sys, H, S, Q, R, mu)
        before = _bad_count(CL, target)
        if before == 0:
            break
        extra = CL.shape[0] - m * n
        tri = channel_triple(g, sys, i)
        B = np.vstack([-tri.Bbar, np.zeros((extra, tri.Bbar.shape[1]))])
        C = np.hstack([tri.Cbar, np.zeros((tri.Cbar.shape[0], extra))])
        sub = co_subsystem(CL, B, C, cfg)
        k_bad = _bad_count(sub.A, target) if sub.order else 0
        if k_bad == 0:
            continue
        ladder = [k_bad] if k_bad == sub.order else [k_bad, sub.order]
        chosen = None
        for order in ladder:
            if order > mu_cap:
                logger.info("stage A: channel %d needs order %d > mu_cap=%d", i, order, mu_cap)
                break
            try:
                blocks = _slow_part(sub, target) if order < sub.order else (sub.A, sub.B, sub.C)
                comp = _compensator(*blocks, target, rng)
            except (linalg.LinAlgError, ValueError) as exc:
                logger.info("stage A: order-%d compensator failed on channel %d: %s", order, i, exc)
                continue
            trial = {**comps, i: comp}
            trial_mu = mu[:i] + [order] + mu[i + 1:]
            if _bad_count(closed_loop_matrix(w, sys, *_assemble(g, sys, trial, trial_mu), trial_mu),
                          target) <= before - k_bad:
                chosen = (comp, order)
                break
        if chosen is None:
            return None
        comps[i], mu[i] = chosen
    H, S, Q, R = _assemble(g, sys, comps, mu)
    return make_design(w, sys, H, S, Q, R, mu, stage="A")


def _stage_b(g, w, sys, mu, target, restarts, sweeps, seed):
    n = sys.n
    masks = gain_masks(g, n, sys.r, mu, block_diag_qr=False)
    shapes = [mk.shape for mk in masks]
    idx = [np.flatnonzero(mk.ravel()) for mk in masks]
    sizes = [len(ix) for ix in idx]
    p = sum(sizes)
    base = kron(w.W, sys.A)
    Cbar = stacked_cbar(sys, w.m)
    scale = max(1.0, float(np.linalg.norm(sys.A, 2)))

    def unpack(theta):
        mats, k = [], 0
        for shape, ix, sz in zip(shapes, idx, sizes):
            X = np.zeros(shape)
            X.ravel()[ix] = theta[k:k + sz]
            mats.append(X)
            k += sz
        return mats

    def radius(theta):
        H, S, Q, R = unpack(theta)
        CL = np.block([[base - H @ Cbar, -S], [Q @ Cbar, R]])
        return float(np.max(np.abs(np.linalg.eigvals(CL))))

    best_theta, best_val = None, np.inf
    children = np.random.SeedSequence(seed).spawn(restarts)
    for k, child in enumerate(children):
        rng = np.random.default_rng(child)
        # restart 0 starts from zero gains, later ones from growing random scales
        theta = np.zeros(p) if k == 0 else rng.standard_normal(p) * scale * 0.1 * k
        val = radius(theta)
        steps = np.full(p, 0.5 * scale)
        for _ in range(sweeps):
            improved = False
            for j in rng.permutation(p):
                trial_best, trial_val = None, val
                for t in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
                    cand = theta.copy()
                    cand[j] += t * steps[j]
                    cv = radius(cand)
                    if cv < trial_val:
                        trial_best, trial_val = cand, cv
                if trial_best is not None:
                    theta, val = trial_best, trial_val
                    steps[j] *= 1.5
                    improved = True
                else:
                    steps[j] *= 0.5
            if val < target or not improved:
                break
        if val < best_val:
            best_theta, best_val = theta, val
        if best_val < target:
            break
    if best_theta is None or p == 0:
        return None
    H, S, Q, R = unpack(best_theta)
    return make_design(w, sys, H, S, Q, R, mu, stage="B")


def _fmt_mode(lam) -> str:
    lam = complex(lam)
    return f"{lam.real:.6g}" if lam.imag == 0 else f"{lam.real:.6g}{lam.imag:+.6g}j"


def certify_feasibility(g: CommGraph, w: WeightMatrix, sys: LtiSystem, cfg: ToleranceConfig = DEFAULT_TOL):
    """Raise InfeasibleDesign listing every precondition of the existence result that fails."""
    reasons = []
    det = is_detectable(sys.A, sys.C, cfg)
    if not det:
        reasons.append(f"(A, C) is not detectable: unobservable mode {det.eigenvalue:.6g}")
    rhoA = spectral_radius(sys.A)
    lam2, lam_m = spectral_gap(g)
    iv = alpha_interval(rhoA, lam2, lam_m)
    if not iv.feasible:
        reasons.append(f"alpha interval is empty: {iv.diagnosis}")
    elif not iv.contains(w.alpha):
        reasons.append(f"alpha={w.alpha:.6g} outside ({iv.lower:.6g}, {iv.upper:.6g})")
    report = None
    if g.m <= MAX_ENUM_NODES:
        triples = [channel_triple(g, sys, i) for i in range(g.m)]
        report = fixed_mode_scan(w, sys, triples, cfg)
        if report.fixed_modes:
            modes = ", ".join(_fmt_mode(lam) for lam in report.fixed_modes)
            reasons.append(f"decentralized fixed modes: {modes}")
    if reasons:
        raise InfeasibleDesign("; ".join(reasons))
    return report


def synthesize(g: CommGraph, w: WeightMatrix, sys: LtiSystem, opts: SynthesisOptions | None = None,
               cfg: ToleranceConfig = DEFAULT_TOL) -> ObserverDesign:
    opts = opts or SynthesisOptions()
    if sys.m != g.m:
        raise ValueError(f"system has {sys.m} output blocks, graph has {g.m} nodes")
    rhoA = spectral_radius(sys.A)
    if spectral_radius(kron(w.W, sys.A)) < 1.0 and opts.stage == "auto":
        return zero_design(w, sys)
    certify_feasibility(g, w, sys, cfg)
    lb = lambda_bar(g, w.alpha, rhoA)
    target = opts.target_radius if opts.target_radius is not None else 0.5 * (1.0 + lb)
    mu_cap = opts.mu_cap if opts.mu_cap is not None else sys.n * g.m

    if opts.stage in ("auto", "A"):
        for attempt in range(max(1, opts.max_restarts)):
            rng = np.random.default_rng([opts.rng_seed, attempt])
            d = _stage_a(g, w, sys, target, mu_cap, rng, cfg)
            if d is None:
                break
            if d.achieved_radius < 1.0:
                return d
            logger.info("stage A attempt %d reached radius %.4f", attempt, d.achieved_radius)
    if opts.stage in ("auto", "B"):
        ladder = [[0] * g.m, [min(sys.n, mu_cap)] * g.m]
        best = None
        for mu in ladder:
            d = _stage_b(g, w, sys, mu, target, opts.max_restarts, opts.sweeps, opts.rng_seed)
            if d is not None and (best is None or d.achieved_radius < best.achieved_radius):
                best = d
            if best is not None and best.achieved_radius < target:
                break
        if best is not None and best.achieved_radius < 1.0:
            return best
    raise SynthesisFailed("no stabilising structured design found within the search budget "
                          "(not a proof of nonexistence)")


@dataclass
class DesignCheck:
    radius: float
    stable: bool
    radius_consistent: bool
    patterns: dict

    @property
    def passed(self) -> bool:
        return self.stable and self.radius_consistent and all(self.patterns.values())


def design_patterns(d: ObserverDesign) -> dict:
    rows_n = [d.n] * d.m
    return {
        "H": pattern_of(d.H, rows_n, d.r),
        "S": pattern_of(d.S, rows_n, d.mu),
        "Q": pattern_of(d.Q, d.mu, d.r),
        "R": pattern_of(d.R, d.mu, d.mu),
    }


def verify_design(d: ObserverDesign, g: CommGraph, sys: LtiSystem | None = None,
                  cfg: ToleranceConfig = DEFAULT_TOL) -> DesignCheck:
    """Independent replay: re-assemble the closed loop if the plant is given, re-solve its spectrum, re-derive patterns."""
    CL = closed_loop_matrix(d.w, sys, d.H, d.S, d.Q, d.R, d.mu) if sys is not None else d.closed_loop
    rho = float(np.max(np.abs(np.linalg.eigvals(CL)))) if CL.size else 0.0
    patterns = {k: pattern_leq(P, g.pattern) for k, P in design_patterns(d).items()}
    consistent = abs(rho - d.achieved_radius) <= 1e-9 * max(1.0, rho)
    return DesignCheck(rho, rho < 1.0, consistent, patterns)


def format_design(d: ObserverDesign) -> str:
    """Block-sparse text form; floats use repr so parsing restores them bit for bit."""
    lines = [
        "# distributed observer design",
        f"alpha {d.w.alpha!r}",
        f"n {d.n}",
        "r " + " ".join(map(str, d.r)),
        "mu " + " ".join(map(str, d.mu)),
        f"stage {d.stage or '-'}",
        f"achieved_radius {d.achieved_radius!r}",
    ]
    rows_n = [d.n] * d.m
    layout = {"H": (rows_n, d.r), "S": (rows_n, d.mu), "Q": (d.mu, d.r), "R": (d.mu, d.mu)}
    for name, (rs, cs) in layout.items():
        X = getattr(d, name)
        ro, co = _offsets(rs), _offsets(cs)
        for i in range(len(rs)):
            for j in range(len(cs)):
                blk = X[ro[i]:ro[i + 1], co[j]:co[j + 1]]
                if blk.size and np.any(blk != 0):
                    lines.append(f"block {name} {i + 1} {j + 1}")
                    lines += [" ".join(repr(float(v)) for v in row) for row in blk]
    return "\n".join(lines) + "\n"


class DesignFormatError(ValueError):
    pass


def parse_design(text: str, g: CommGraph, sys: LtiSystem) -> ObserverDesign:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    header, pos = {}, 0
    while pos < len(rows) and rows[pos][1][0] != "block":
        lineno, tok = rows[pos]
        header[tok[0]] = (lineno, tok[1:])
        pos += 1
    for key in ("alpha", "n", "r", "mu", "achieved_radius"):
        if key not in header:
            raise DesignFormatError(f"design file lacks '{key}'")
    try:
        alpha = float(header["alpha"][1][0])
        n = int(header["n"][1][0])
        r = [int(v) for v in header["r"][1]]
        mu = [int(v) for v in header["mu"][1]]
        radius = float(header["achieved_radius"][1][0])
    except (ValueError, IndexError) as exc:
        raise DesignFormatError(f"malformed design header: {exc}") from None
    stage = header.get("stage", (0, ["-"]))[1][0]
    if n != sys.n or r != list(sys.r) or len(mu) != g.m:
        raise DesignFormatError("design dimensions do not match the plant and graph")
    rows_n = [n] * g.m
    layout = {"H": (rows_n, r), "S": (rows_n, mu), "Q": (mu, r), "R": (mu, mu)}
    mats = {k: np.zeros((sum(rs), sum(cs))) for k, (rs, cs) in layout.items()}
    while pos < len(rows):
        lineno, tok = rows[pos]
        if tok[0] != "block" or len(tok) != 4 or tok[1] not in layout:
            raise DesignFormatError(f"line {lineno}: expected 'block <H|S|Q|R> i j'")
        name = tok[1]
        try:
            i, j = int(tok[2]) - 1, int(tok[3]) - 1
        except ValueError:
            raise DesignFormatError(f"line {lineno}: block indices must be integers") from None
        rs, cs = layout[name]
        if not (0 <= i < len(rs) and 0 <= j < len(cs)):
            raise DesignFormatError(f"line {lineno}: block index out of range")
        ro, co = _offsets(rs), _offsets(cs)
        h, wdt = rs[i], cs[j]
        if pos + h >= len(rows) + (1 if h == 0 else 0):
            raise DesignFormatError(f"line {lineno}: file ends inside block")
        blk = []
        for l2, t in rows[pos + 1:pos + 1 + h]:
            if len(t) != wdt:
                raise DesignFormatError(f"line {l2}: expected {wdt} entries")
            try:
                blk.append([float(v) for v in t])
            except ValueError:
                raise DesignFormatError(f"line {l2}: non-numeric entry") from None
        mats[name][ro[i]:ro[i + 1], co[j]:co[j + 1]] = np.array(blk).reshape(h, wdt)
        pos += 1 + h
    w = make_weight(g, alpha)
    CL = closed_loop_matrix(w, sys, mats["H"], mats["S"], mats["Q"], mats["R"], mu)
    return ObserverDesign(w, mats["H"], mats["S"], mats["Q"], mats["R"], mu, n, r, CL, radius,
                          "" if stage == "-" else stage)
