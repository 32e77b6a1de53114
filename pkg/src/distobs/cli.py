"""Command-line front end: check, design, simulate, report.

Exit codes: 0 pass, 1 certified failure or divergence, 2 malformed input,
3 synthesis search exhausted (not a proof of nonexistence).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .decomposition import MAX_ENUM_NODES, channel_triple, fixed_mode_scan
from .graph import GraphError, components, is_connected, parse_graph, spectral_gap
from .numerics import NumericsError, spectral_radius
from .simulation import (SimulationDiverged, decay_rate, error_dynamics_check, error_floor,
                         final_relative_error, simulate, trace_to_csv)
from .spectral import (alpha_interval, audit_kron_spectrum, lambda_bar, make_weight, pick_alpha,
                       rho_threshold)
from .synthesis import (DesignFormatError, InfeasibleDesign, SynthesisFailed, SynthesisOptions,
                        format_design, parse_design, synthesize, verify_design)
from .sysmodel import ModelError, is_detectable, lifted_detectability, parse_plant

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SEARCH = 0, 1, 2, 3
CONVERGENCE_TOL = 1e-6


class InputError(Exception):
    pass


@dataclass
class ProblemConfig:
    plant: Path
    graph: Path
    alpha: float | None = None
    target_radius: float | None = None
    horizon: int | None = None
    seed: int = 0
    out: Path = Path("out")


def _c(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _finite(x: float):
    """JSON has no infinity; encode it as the string 'inf'."""
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def load_problem(cfg: ProblemConfig):
    try:
        g = parse_graph(cfg.graph.read_text())
        plant = parse_plant(cfg.plant.read_text())
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}") from None
    except (GraphError, ModelError, NumericsError) as exc:
        raise InputError(str(exc)) from None
    if plant.m != g.m:
        raise InputError(f"plant has {plant.m} output blocks but the graph has {g.m} nodes")
    return g, plant


def choose_alpha(cfg: ProblemConfig, g, plant):
    """Alpha and where it came from: user, optimised, or a diagnostic stand-in."""
    rhoA = spectral_radius(plant.A)
    lam2, lam_m = spectral_gap(g)
    iv = alpha_interval(max(rhoA, 1e-300), lam2, lam_m)
    if cfg.alpha is not None:
        if not cfg.alpha > 0:
            raise InputError(f"--alpha must be positive, got {cfg.alpha}")
        return cfg.alpha, "user", iv
    if iv.feasible:
        return pick_alpha(iv, g, max(rhoA, 1e-300)), "pick_alpha", iv
    # still evaluate the lifted pair so the report can name what breaks
    return (1.0 / lam_m if lam_m > 0 else 1.0), "diagnostic 1/lambda_m", iv


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def run_check(cfg: ProblemConfig, g, plant) -> tuple[int, dict]:
    rhoA = spectral_radius(plant.A)
    lam2, lam_m = spectral_gap(g)
    alpha, source, iv = choose_alpha(cfg, g, plant)
    w = make_weight(g, alpha)
    connected = is_connected(g)
    thr = rho_threshold(lam2, lam_m)
    det = is_detectable(plant.A, plant.C)
    lifted = lifted_detectability(w, plant)
    audit = audit_kron_spectrum(w, plant.A)
    if g.m <= MAX_ENUM_NODES:
        fm = fixed_mode_scan(w, plant, [channel_triple(g, plant, i) for i in range(g.m)])
        fm_dict, fm_ok = fm.to_dict(), not fm.fixed_modes
    else:
        fm_dict, fm_ok = {"skipped": f"m={g.m} exceeds the enumeration cap {MAX_ENUM_NODES}"}, True
    predicates = {
        "connected": connected,
        "threshold_condition": rhoA < thr,
        "alpha_in_interval": iv.contains(alpha),
        "detectable": bool(det),
        "lifted_detectable": bool(lifted),
        "no_fixed_modes": fm_ok,
    }
    report = {
        "m": g.m,
        "n": plant.n,
        "connected": connected,
        "components": [[i + 1 for i in comp] for comp in components(g)],
        "lambda_2": lam2,
        "lambda_m": lam_m,
        "rho_A": rhoA,
        "threshold": _finite(thr),
        "alpha_interval": {"lower": _finite(iv.lower), "upper": _finite(iv.upper),
                           "feasible": iv.feasible, "marginal": iv.marginal,
                           "diagnosis": iv.diagnosis},
        "alpha": alpha,
        "alpha_source": source,
        "lambda_bar": lambda_bar(g, alpha, rhoA),
        "detectability": {"detectable": bool(det),
                          "eigenvalue": None if det else _c(det.eigenvalue)},
        "lifted_detectability": {
            "detectable": bool(lifted),
            "eigenvalue": None if lifted else _c(lifted.eigenvalue),
            "witness": None if lifted else [_c(v) for v in np.ravel(lifted.witness)],
        },
        "kron_audit": {"passed": audit.passed,
                       "entries": [{"eigenvalue": _c(lam), "mult_WA": mw, "mult_A": ma}
                                   for lam, mw, ma in audit.entries],
                       "unmatched": [_c(lam) for lam in audit.unmatched]},
        "fixed_modes": fm_dict,
        "predicates": predicates,
        "passed": all(predicates.values()),
    }
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


def _fmt_c(z) -> str:
    z = complex(z[0], z[1]) if isinstance(z, list) else complex(z)
    return f"{z.real:.6g}" if z.imag == 0 else f"{z.real:.6g}{z.imag:+.6g}j"


def print_check(report: dict, stream=None):
    out = stream or sys.stdout
    p = report["predicates"]

    def mark(ok):
        return "ok  " if ok else "FAIL"

    iv = report["alpha_interval"]
    print(f"[{mark(p['connected'])}] graph connected: {report['connected']} "
          f"(components {report['components']})", file=out)
    print(f"       lambda_2 = {report['lambda_2']:.12g}, lambda_m = {report['lambda_m']:.12g}", file=out)
    print(f"[{mark(p['threshold_condition'])}] rho(A) = {report['rho_A']:.12g} < threshold "
          f"{report['threshold']}", file=out)
    print(f"[{mark(p['alpha_in_interval'])}] alpha = {report['alpha']:.12g} ({report['alpha_source']}), "
          f"interval ({iv['lower']}, {iv['upper']})" + (f": {iv['diagnosis']}" if iv["diagnosis"] else ""),
          file=out)
    print(f"       lambda_bar = {report['lambda_bar']:.12g}", file=out)
    d = report["detectability"]
    print(f"[{mark(p['detectable'])}] (A, C) detectable" +
          ("" if d["detectable"] else f": unobservable unstable mode {_fmt_c(d['eigenvalue'])}"), file=out)
    ld = report["lifted_detectability"]
    line = f"[{mark(p['lifted_detectable'])}] (W (x) A, Cbar) detectable"
    if not ld["detectable"]:
        wit = ", ".join(_fmt_c(v) for v in ld["witness"])
        line += f": undetectable mode {_fmt_c(ld['eigenvalue'])}, witness ({wit})"
    print(line, file=out)
    ka = report["kron_audit"]
    print(f"       W (x) A unstable spectrum matches A's: {ka['passed']}", file=out)
    for e in ka["entries"]:
        print(f"         lambda = {_fmt_c(e['eigenvalue'])}: multiplicity {e['mult_WA']} in W (x) A, "
              f"{e['mult_A']} in A", file=out)
    fm = report["fixed_modes"]
    if "skipped" in fm:
        print(f"[skip] fixed-mode scan: {fm['skipped']}", file=out)
    else:
        print(f"[{mark(p['no_fixed_modes'])}] fixed-mode scan (required rank {fm['required_rank']})", file=out)
        for mode in fm["modes"]:
            print(f"         lambda = {_fmt_c(mode['eigenvalue'])}: min rank {mode['min_rank']} over "
                  f"{mode['partitions_tested']} partitions, failing {mode['failing_partitions']}", file=out)
    print("hypotheses hold" if report["passed"] else "hypotheses violated", file=out)


def cmd_check(cfg: ProblemConfig) -> int:
    g, plant = load_problem(cfg)
    code, report = run_check(cfg, g, plant)
    print_check(report)
    path = _write(cfg.out, "check.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}")
    return code


def run_design(cfg: ProblemConfig, g, plant, mu_cap=None, stage="auto"):
    alpha, _, iv = choose_alpha(cfg, g, plant)
    if not iv.contains(alpha):
        why = iv.diagnosis or f"alpha={alpha:.6g} outside ({iv.lower:.6g}, {iv.upper:.6g})"
        return EXIT_FAIL, None, f"infeasible (certified): {why}"
    w = make_weight(g, alpha)
    opts = SynthesisOptions(target_radius=cfg.target_radius, mu_cap=mu_cap, rng_seed=cfg.seed, stage=stage)
    try:
        d = synthesize(g, w, plant, opts)
    except InfeasibleDesign as exc:
        return EXIT_FAIL, None, f"infeasible (certified): {exc}"
    except SynthesisFailed as exc:
        return EXIT_SEARCH, None, f"search failed (not a nonexistence proof): {exc}"
    return EXIT_OK, d, ""


def cmd_design(cfg: ProblemConfig, mu_cap=None, stage="auto") -> int:
    g, plant = load_problem(cfg)
    code, d, msg = run_design(cfg, g, plant, mu_cap, stage)
    if d is None:
        print(msg)
        return code
    chk = verify_design(d, g, plant)
    path = _write(cfg.out, "design.txt", format_design(d))
    rhoA = spectral_radius(plant.A)
    print(f"stage {d.stage}, mu = {d.mu}")
    print(f"achieved_radius = {d.achieved_radius:.12g}")
    print(f"lambda_bar = {lambda_bar(g, d.w.alpha, rhoA):.12g}")
    print(f"patterns within P(L): {all(chk.patterns.values())}")
    print(f"wrote {path}")
    return EXIT_OK if chk.passed else EXIT_FAIL


def default_horizon(radius: float) -> int:
    """Smallest K >= 60 with radius^K < 1e-8."""
    if not 0.0 < radius < 1.0:
        return 60
    return max(60, int(math.floor(math.log(1e-8) / math.log(radius))) + 1)


def run_simulate(cfg: ProblemConfig, g, plant, d, zero_error=False):
    K = cfg.horizon if cfg.horizon is not None else default_horizon(d.achieved_radius)
    if K < 1:
        raise InputError(f"--horizon must be at least 1, got {K}")
    xhat0 = None
    if zero_error:
        x0 = np.random.default_rng(cfg.seed).standard_normal(plant.n)
        xhat0 = [x0.copy() for _ in range(g.m)]
        trace = simulate(plant, d, x0=x0, xhat0=xhat0, K=K, seed=cfg.seed)
    else:
        trace = simulate(plant, d, K=K, seed=cfg.seed)
    return trace


def cmd_simulate(cfg: ProblemConfig, design_path: Path, zero_error=False) -> int:
    g, plant = load_problem(cfg)
    try:
        d = parse_design(design_path.read_text(), g, plant)
    except OSError as exc:
        raise InputError(f"cannot read design: {exc}") from None
    except DesignFormatError as exc:
        raise InputError(str(exc)) from None
    chk = verify_design(d, g, plant)
    if not chk.passed:
        print(f"warning: design fails verification (radius {chk.radius:.6g}, patterns {chk.patterns})")
    try:
        trace = run_simulate(cfg, g, plant, d, zero_error)
    except SimulationDiverged as exc:
        print(f"diverged: {exc}")
        return EXIT_FAIL
    path = _write(cfg.out, "trace.csv", trace_to_csv(trace))
    rel = final_relative_error(trace)
    rate = decay_rate(trace)
    print(f"horizon K = {trace.K}")
    print(f"final max relative error = {rel:.6e}")
    print("decay_rate = " + ("degenerate (zero trace)" if rate.degenerate else f"{rate.rate:.6g}"))
    print(f"rewrite identity holds: {error_dynamics_check(plant, d, trace)}")
    e0 = trace.err_norms[:, 0].max()
    if e0 > 0 and error_floor(trace) / e0 > CONVERGENCE_TOL:
        print(f"note: rounding floor at step K is {error_floor(trace) / e0:.2e} relative "
              "(the plant state has grown by that much)")
    print(f"wrote {path}")
    return EXIT_OK if rel < CONVERGENCE_TOL else EXIT_FAIL


def cmd_report(cfg: ProblemConfig, mu_cap=None, stage="auto") -> int:
    g, plant = load_problem(cfg)
    code, check = run_check(cfg, g, plant)
    print_check(check)
    _write(cfg.out, "check.json", json.dumps(check, indent=2, sort_keys=True) + "\n")
    summary = {"check_passed": check["passed"]}
    if code != EXIT_OK:
        _write(cfg.out, "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return code
    code, d, msg = run_design(cfg, g, plant, mu_cap, stage)
    if d is None:
        print(msg)
        summary["design"] = msg
        _write(cfg.out, "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return code
    _write(cfg.out, "design.txt", format_design(d))
    summary.update({"stage": d.stage, "mu": d.mu, "achieved_radius": d.achieved_radius,
                    "design_verified": verify_design(d, g, plant).passed})
    print(f"design: stage {d.stage}, mu = {d.mu}, achieved_radius = {d.achieved_radius:.12g}")
    try:
        trace = run_simulate(cfg, g, plant, d)
    except SimulationDiverged as exc:
        print(f"diverged: {exc}")
        summary["simulation"] = str(exc)
        _write(cfg.out, "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        return EXIT_FAIL
    _write(cfg.out, "trace.csv", trace_to_csv(trace))
    rel = final_relative_error(trace)
    rate = decay_rate(trace)
    summary.update({"horizon": trace.K, "final_relative_error": rel,
                    "decay_rate": None if rate.degenerate else rate.rate,
                    "rewrite_identity": error_dynamics_check(plant, d, trace)})
    print(f"simulation: K = {trace.K}, final max relative error = {rel:.6e}, "
          f"decay_rate = {summary['decay_rate']}")
    _write(cfg.out, "report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {cfg.out}/check.json, design.txt, trace.csv, report.json")
    return EXIT_OK if rel < CONVERGENCE_TOL else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distobs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--plant", type=Path, required=True, help="plant file (n, A rows, C blocks)")
        p.add_argument("--graph", type=Path, required=True, help="graph file (m, 1-indexed edges)")
        p.add_argument("--alpha", type=float, help="consensus gain; default minimises lambda_bar")
        p.add_argument("--target-radius", type=float, help="synthesis target; default (1 + lambda_bar)/2")
        p.add_argument("--horizon", type=int, help="simulation steps; default from achieved radius")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")

    common(sub.add_parser("check", help="test the existence hypotheses"))
    for name, help_ in (("design", "synthesise structured gains"), ("report", "check, design and simulate")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--mu-cap", type=int, help="largest compensator order per node; default n*m")
        p.add_argument("--stage", choices=["auto", "A", "B"], default="auto")
    p = sub.add_parser("simulate", help="run plant and observers from a design file")
    common(p)
    p.add_argument("--design", type=Path, required=True)
    p.add_argument("--zero-initial-error", action="store_true", help="start every estimate at x(0)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    cfg = ProblemConfig(args.plant, args.graph, args.alpha, args.target_radius, args.horizon,
                        args.seed, args.out)
    try:
        if cfg.target_radius is not None and not 0.0 < cfg.target_radius < 1.0:
            raise InputError("--target-radius must lie in (0, 1)")
        if getattr(args, "mu_cap", None) is not None and args.mu_cap < 0:
            raise InputError("--mu-cap must be non-negative")
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "design":
            return cmd_design(cfg, args.mu_cap, args.stage)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.design, args.zero_initial_error)
        return cmd_report(cfg, args.mu_cap, args.stage)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
