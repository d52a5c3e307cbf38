"""Command-line front end: ``opinion-lab <command> --scenario S --out DIR``.

Every command writes deterministic artifacts (floats via ``repr``, fixed key
order) into ``--out``. Module errors produce ``error.json`` there plus a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import re
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    consensus_report,
    contraction_certificate,
    find_equilibria,
    find_equilibrium,
    interior_equilibrium_test,
    multistart_starts,
    socially_closed_agents,
)
from .bifurcation import (
    TwoAgentScenario,
    divergence_ellipse,
    hopf_analysis,
    periodicity_necessary,
    sweep_c2,
    verify_limit_cycle,
)
from .errors import InsufficientData, NoConvergence, NotConsensusEligible, OpinionLabError, ValidationError
from .game import classify, costs, poa
from .generators import random_network
from .integrate import detect_convergence, estimate_periods, simulate
from .model import ROOT_EQUALITY_TOL, invariant_interval, preferred_roots, roots_equal
from .scenario import ScenarioFile, load_scenario, scenario_from_network, write_scenario

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "analyze", "game", "bifurcate", "sweep")
EXIT_OK, EXIT_ERROR = 0, 1


# ---------------------------------------------------------------- emission

def jsonable(obj):
    """Plain-JSON view of reports: arrays to lists, complex to {re, im}, non-finite to strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple) and hasattr(obj, "_fields"):
        return {k: jsonable(v) for k, v in zip(obj._fields, obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (frozenset, set)):
        return sorted(jsonable(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": jsonable(obj.real), "im": jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(jsonable(payload), indent=2, allow_nan=False) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue())


def _header(command: str, sc: ScenarioFile, seed: int) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "scenario": sc.name, "n": sc.n,
            "seed": seed, "warnings": list(sc.warnings)}


def _agents(indices) -> list:
    """Agent numbers as printed to users (1-based)."""
    return sorted(int(i) + 1 for i in indices)


# --------------------------------------------------------------- commands

def _convergence(net, traj, tol) -> dict:
    v = detect_convergence(net, traj, tol)
    return {"converged": v.converged, "tol": tol, "residual": v.residual, "settling_time": v.settling_time,
            "final_state": traj.final}


def cmd_simulate(sc: ScenarioFile, out: Path, opts) -> dict:
    net = sc.network()
    traj = simulate(net, sc.initial_state(), opts.cfg)
    write_csv(out / "trajectory.csv", ["t"] + [f"z_{i + 1}" for i in range(sc.n)],
              ([t, *z] for t, z in zip(traj.times, traj.states)))
    report = _header("simulate", sc, opts.seed)
    report["integrator"] = opts.cfg
    report["stats"] = traj.stats
    report["convergence"] = _convergence(net, traj, opts.tol)
    dump_json(out / "simulate.json", report)
    return report


def _equilibrium_dict(rep) -> dict:
    return {"z_star": rep.z_star, "residual": rep.residual, "jacobian_eigen_max_real": rep.jacobian_eigen_max_real,
            "in_interior_of_M": rep.in_interior_of_M, "method": rep.method, "iterations": rep.iterations}


def cmd_analyze(sc: ScenarioFile, out: Path, opts) -> dict:
    net = sc.network()
    z0 = sc.initial_state()
    report = _header("analyze", sc, opts.seed)
    root_tol = sc.option("root_tol", ROOT_EQUALITY_TOL)
    m = preferred_roots(net)
    lo, hi, v_min, v_max = invariant_interval(net, root_tol)
    report["preferred_roots"] = m
    report["interval"] = {"m_min": lo, "m_max": hi, "agents_at_min": _agents(v_min), "agents_at_max": _agents(v_max)}
    cert = contraction_certificate(net)
    report["contraction"] = cert
    cons = consensus_report(net, root_tol)
    report["consensus"] = dict(jsonable(cons), dominance_order=_agents_ordered(cons.dominance_order))
    report["socially_closed_agents"] = _agents(socially_closed_agents(net))
    if net.has_enemies:
        report["interior_test"] = {"applicable": False, "reason": "network has antagonistic links"}
    elif roots_equal(lo, hi, root_tol):
        report["interior_test"] = {"applicable": False, "reason": "m_min = m_max"}
    else:
        t = interior_equilibrium_test(net, root_tol)
        report["interior_test"] = {"applicable": True, "holds": t.holds, "explanation": t.explanation,
                                   "unreached_max": _agents(t.unreached_max), "unreached_min": _agents(t.unreached_min)}
    try:
        report["equilibrium"] = _equilibrium_dict(find_equilibrium(net, z0, cfg=opts.cfg))
    except NoConvergence as exc:
        report["equilibrium"] = {"error": exc.to_dict()}
    if sc.option("multistart", False) or not cert.satisfies_A2:
        eqs = find_equilibria(net, multistart_starts(net, seed=opts.seed))
        report["equilibria"] = [_equilibrium_dict(e) for e in eqs]
    traj = simulate(net, z0, opts.cfg)
    report["simulation"] = _convergence(net, traj, opts.tol)
    dump_json(out / "analyze.json", report)
    return report


def _agents_ordered(order) -> list:
    return [int(i) + 1 for i in order]


def cmd_game(sc: ScenarioFile, out: Path, opts) -> dict:
    net = sc.network()
    report = _header("game", sc, opts.seed)
    eq = find_equilibrium(net, sc.initial_state(), cfg=opts.cfg)
    report["equilibrium"] = _equilibrium_dict(eq)
    report["classification"] = classify(net, eq.z_star, seed=opts.seed)
    report["costs"] = costs(net, eq.z_star)
    if not sc.option("poa", True):
        report["poa"] = {"applicable": False, "reason": "disabled by analysis.poa"}
    elif net.has_enemies:
        report["poa"] = {"applicable": False, "reason": "network has antagonistic links"}
    elif np.any(net.preferences == 0) and not np.all(net.preferences == 0):
        report["poa"] = {"applicable": False, "reason": "some but not all preferences are zero"}
    else:
        steps = int(sc.option("egalitarian_steps", 10_000))
        report["poa"] = dict(applicable=True, **jsonable(poa(net, eq.z_star, egalitarian_steps=steps)))
    dump_json(out / "game.json", report)
    return report


def _two_agent(sc: ScenarioFile) -> TwoAgentScenario:
    if sc.n != 2:
        raise ValidationError(f"bifurcate needs a two-agent scenario, got n = {sc.n}", field="n")
    return TwoAgentScenario.from_network(sc.network())


def cmd_bifurcate(sc: ScenarioFile, out: Path, opts) -> dict:
    two = _two_agent(sc)
    report = _header("bifurcate", sc, opts.seed)
    report["c1"], report["c2"] = two.c1, two.c2
    report["periodicity_necessary"] = periodicity_necessary(two)
    report["divergence_ellipse"] = divergence_ellipse(two)
    report["contraction"] = contraction_certificate(two.network())
    try:
        report["hopf"] = hopf_analysis(two)
    except NotConsensusEligible as exc:
        report["hopf"] = {"error": exc.to_dict()}
    cyc = verify_limit_cycle(two, two.c2, sc.initial_state(), opts.cfg)
    report["limit_cycle"] = cyc
    if sc.sweep is not None and sc.sweep.param == "c2":
        rows = sweep_c2(two, sc.sweep.values(), sc.initial_state(), opts.cfg)
        write_csv(out / "bifurcation_sweep.csv", ["param_value", "amplitude", "period", "converged"],
                  ([r.param_value, r.amplitude, r.period, r.converged] for r in rows))
        report["sweep"] = {"param": "c2", "file": "bifurcation_sweep.csv", "rows": len(rows)}
    dump_json(out / "bifurcate.json", report)
    return report


_INDEXED = re.compile(r"^([pwr])\[(\d+)\]$")
_WEIGHT = re.compile(r"^a\[(\d+),(\d+)\]$")


def apply_param(sc: ScenarioFile, param: str, value: float) -> ScenarioFile:
    """Copy of ``sc`` with one parameter replaced (1-based agent indices)."""
    W, vecs = np.array(sc.weights), {k: np.array(getattr(sc, k)) for k in "pwr"}
    if param == "c2":
        if sc.n != 2:
            raise ValidationError("sweep.param c2 needs a two-agent scenario", field="sweep.param")
        W[1, 0] = value
    elif (mt := _INDEXED.match(param)) is not None:
        i = int(mt.group(2)) - 1
        if not 0 <= i < sc.n:
            raise ValidationError(f"agent {i + 1} out of range in {param!r}", field="sweep.param", agent=i + 1)
        vecs[mt.group(1)][i] = value
    elif (mt := _WEIGHT.match(param)) is not None:
        i, k = int(mt.group(1)) - 1, int(mt.group(2)) - 1
        if not (0 <= i < sc.n and 0 <= k < sc.n):
            raise ValidationError(f"index out of range in {param!r}", field="sweep.param")
        W[i, k] = value
    else:
        raise ValidationError(f"unsupported sweep parameter {param!r}", field="sweep.param")
    return dataclasses.replace(sc, weights=W, **vecs)


def _run_cell(sc: ScenarioFile, opts) -> dict:
    net = sc.network()
    traj = simulate(net, sc.initial_state(), opts.cfg)
    verdict = detect_convergence(net, traj, opts.tol)
    try:
        est = estimate_periods(traj)
        amp = float(np.max(est.amplitude))
        periods = [T for T in est.per_component_period if T is not None]
        period = float(np.mean(periods)) if est.oscillating and periods else None
        oscillating = est.oscillating
    except InsufficientData:
        amp, period, oscillating = 0.0, None, False
    return {"amplitude": amp, "period": period, "converged": verdict.converged, "oscillating": oscillating,
            "residual": verdict.residual, "final_state": traj.final}


def cmd_sweep(sc: ScenarioFile, out: Path, opts) -> dict:
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    if opts.random:
        # independent child streams keep each cell reproducible on its own
        children = np.random.SeedSequence(opts.seed).spawn(opts.count)
        cells = []
        for k, child in enumerate(children):
            net = random_network(np.random.default_rng(child), sc.n, kind=opts.kind)
            cell_sc = scenario_from_network(net, name=f"{sc.name}-random-{k}", z0=sc.initial_state(),
                                            integrator=opts.cfg, seed=opts.seed)
            write_scenario(cell_sc, cells_dir / f"cell_{k:04d}.scn")
            cells.append((float(k), cell_sc))
        param = "random"
    else:
        if sc.sweep is None:
            raise ValidationError("scenario has no sweep.* block; add one or pass --random", field="sweep")
        param = sc.sweep.param
        cells = [(float(v), apply_param(sc, param, float(v))) for v in sc.sweep.values()]
    rows = []
    for k, (value, cell_sc) in enumerate(cells):
        res = _run_cell(cell_sc, opts)
        dump_json(cells_dir / f"cell_{k:04d}.json",
                  dict(_header("sweep", cell_sc, opts.seed), param=param, param_value=value, **res))
        rows.append([value, res["amplitude"], res["period"], res["converged"]])
    write_csv(out / "sweep.csv", ["param_value", "amplitude", "period", "converged"], rows)
    report = dict(_header("sweep", sc, opts.seed), param=param, cells=len(rows), file="sweep.csv")
    dump_json(out / "sweep.json", report)
    return report


HANDLERS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "game": cmd_game, "bifurcate": cmd_bifurcate,
            "sweep": cmd_sweep}


# ------------------------------------------------------------------ driver

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opinion-lab", description="Opinion dynamics with resource-weighted agents.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario file path or bundled fixture name")
    ap.add_argument("--out", required=True, help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    ap.add_argument("--horizon", type=float, default=None, help="overrides integrator.t_end")
    ap.add_argument("--tol", type=float, default=None, help="convergence residual tolerance (default: analysis.convergence_tol, else 1e-6)")
    ap.add_argument("--random", action="store_true", help="sweep: random networks instead of a parameter grid")
    ap.add_argument("--count", type=int, default=10, help="sweep --random: number of networks")
    ap.add_argument("--kind", choices=("any", "a1", "a2"), default="any", help="sweep --random: network family")
    return ap


def run_command(command: str, scenario, out, seed: Optional[int] = None, horizon: Optional[float] = None,
                tol: Optional[float] = None, random: bool = False, count: int = 10, kind: str = "any") -> int:
    """Run one command; returns the exit status. Errors end up in ``out/error.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        sc = scenario if isinstance(scenario, ScenarioFile) else load_scenario(scenario)
        try:
            cfg = sc.integrator if horizon is None else sc.integrator.replace(
                t_end=horizon, step=min(sc.integrator.step, horizon))
        except ValueError as exc:
            raise ValidationError(f"--horizon: {exc}", field="horizon")
        if tol is None:
            tol = sc.option("convergence_tol", 1e-6)
        if not tol > 0:
            raise ValidationError(f"convergence tolerance must be positive, got {tol!r}", field="tol")
        if count < 1:
            raise ValidationError("--count must be >= 1", field="count")
        opts = argparse.Namespace(cfg=cfg, seed=sc.seed if seed is None else seed,
                                  tol=tol, random=random, count=count, kind=kind)
        HANDLERS[command](sc, out, opts)
    except OpinionLabError as exc:
        payload = {"schema_version": SCHEMA_VERSION, "command": command, "error": exc.to_dict()}
        dump_json(out / "error.json", payload)
        print(f"opinion-lab {command}: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command(args.command, args.scenario, args.out, args.seed, args.horizon, args.tol, args.random,
                       args.count, args.kind)


if __name__ == "__main__":
    sys.exit(main())
