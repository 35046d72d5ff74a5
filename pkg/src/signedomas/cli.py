"""Command-line entry point: ``signedomas {analyze,certify,simulate,reproduce-paper}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, ScenarioError, SignedOmasError
from .lyapunov import verify_schedule
from .scenario_io import ScenarioFile, load_paper_scenario, load_scenario
from .signed_graph import (check_structural_balance, edge_laplacian, incidence_matrix,
                           signed_laplacian)
from .spectral import expected_zero_count, rank_of, zero_eigenspace
from .switched_sim import SimulationTrace, classify_outcome, simulate
from .unicycle import run_paper_demo

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INADMISSIBLE = 0, 1, 2, 3

# Balance verdicts and camps of the bundled robot scenario, one entry per mode.
BUNDLED_VERDICTS = ("SB", "SB", "SB", "SUB", "SB", "SB")
BUNDLED_PARTITIONS = (
    ({"v1", "v3"}, {"v2", "v4"}),
    ({"v1", "v3", "v5"}, {"v2", "v4"}),
    ({"v1", "v3", "v5"}, {"v2", "v4", "v6"}),
    None,
    ({"v1", "v3", "v5"}, {"v2", "v4", "v6", "v7"}),
    ({"v1", "v3", "v5", "v7"}, {"v2", "v4", "v6"}),
)


def num(x):
    """Round to 12 significant digits; non-finite values become null."""
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return num(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"


def _partition_matches(part, expected) -> bool:
    return {frozenset(part[0]), frozenset(part[1])} == {frozenset(expected[0]), frozenset(expected[1])}


def analyze_report(sf: ScenarioFile) -> dict:
    modes = []
    for i, m in enumerate(sf.scenario.modes):
        g = m.graph
        b = check_structural_balance(g)
        L_e = edge_laplacian(g)
        zs = zero_eigenspace(L_e, sf.tol_for(L_e))
        entry = {
            "index": i,
            "start": m.start_time,
            "nodes": g.n_nodes,
            "edges": g.n_edges,
            "verdict": b.verdict,
        }
        if b.balanced:
            v1, v2 = b.partition(g)
            entry["partition"] = {"V1": list(v1), "V2": list(v2)}
        else:
            lab = g.labels
            entry["witness"] = [[lab[g.edges[k][0]], lab[g.edges[k][1]], g.edges[k][2]]
                                for k in b.witness_cycle]
        entry["rank_E"] = rank_of(incidence_matrix(g), sf.zero_tol)
        entry["rank_Ls"] = rank_of(signed_laplacian(g), sf.zero_tol)
        entry["rank_Les"] = rank_of(L_e, sf.zero_tol)
        entry["xi"] = zs.xi
        entry["xi_expected"] = expected_zero_count(g, b)
        modes.append(entry)
    return {"modes": modes}


def certify_report(sf: ScenarioFile, trace: SimulationTrace | None = None):
    certs = sf.certificates()
    report = verify_schedule(sf.scenario, certs, sf.n_hat, trace)
    modes = [{
        "index": i,
        "xi": c.xi,
        "alphas": list(c.alphas),
        "lambda_min_P": c.lambda_min_P,
        "lambda_max_P": c.lambda_max_P,
        "gamma": c.gamma,
        "residual": c.residual,
        "residual_ok": c.residual_ok(),
        "P": c.P,
    } for i, c in enumerate(certs)]
    transitions = [{
        "from": r.from_mode,
        "to": r.to_mode,
        "count": r.count,
        "active_time": r.active_time,
        "Omega": r.omega,
        "tau_min": r.tau_min,
        "actual_dwell": r.actual_dwell,
        "Theta": list(r.thetas),
        "admissible": r.admissible,
    } for r in report.transitions]
    doc = {"modes": modes,
           "schedule": {"N_hat": report.n_hat, "mode_ids": list(report.mode_ids),
                        "admissible": report.overall, "transitions": transitions}}
    return doc, all(c.residual_ok() for c in certs), report.overall


def _axis_names(d: int):
    return ["x", "y"] if d == 2 else (["x"] if d == 1 else [f"a{j}" for j in range(d)])


def trace_csv(trace: SimulationTrace, axis: int = 0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mode"] + [f"x_{lab}" for lab in trace.labels]
               + [f"e_{k + 1}" for k in range(len(trace.edge_pairs))])
    for i, t in enumerate(trace.times):
        row = [_fmt(t), int(trace.mode_index[i])]
        row += [_fmt(v) for v in trace.states[i, :, axis]]
        row += [_fmt(v) for v in trace.edge_errors[i, :, axis]]
        w.writerow(row)
    return buf.getvalue()


def _fmt(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else f"{x:.12g}"


def jumps_doc(trace: SimulationTrace) -> list:
    return [{"t": j.time, "from_mode": j.from_mode, "to_mode": j.to_mode,
             "phi_norm": float(np.linalg.norm(j.transition.Phi))} for j in trace.jumps]


def _outcome_doc(o) -> dict:
    doc = {"kind": o.kind, "edge_error_norm": o.edge_error_norm, "deviation": o.deviation}
    if o.alpha is not None:
        doc["alpha"] = list(o.alpha)
    if o.partition is not None:
        doc["partition"] = {"V1": list(o.partition[0]), "V2": list(o.partition[1])}
    return doc


def outcome_doc(sf: ScenarioFile, trace: SimulationTrace) -> dict:
    final = sf.scenario.modes[-1].graph
    b = check_structural_balance(final)
    d = trace.dim
    doc = {"final_verdict": b.verdict, "tolerance": sf.converge_tol}
    doc["joint"] = _outcome_doc(classify_outcome(trace, final, b, sf.converge_tol))
    if d > 1:
        doc["axes"] = {name: _outcome_doc(classify_outcome(trace.axis(j), final, b, sf.converge_tol))
                       for j, name in enumerate(_axis_names(d))}
    return doc


def _write(out: Path, name: str, text: str):
    (out / name).write_text(text, encoding="utf-8", newline="\n")


def write_traces(out: Path, trace: SimulationTrace):
    d = trace.dim
    if d == 1:
        _write(out, "trace.csv", trace_csv(trace))
    else:
        for j, name in enumerate(_axis_names(d)):
            _write(out, f"trace_{name}.csv", trace_csv(trace, j))
    _write(out, "jumps.json", dumps(jumps_doc(trace)))


def cmd_analyze(args) -> int:
    sf = load_scenario(args.scenario)
    sys.stdout.write(dumps(analyze_report(sf)))
    return EXIT_OK


def cmd_certify(args) -> int:
    sf = load_scenario(args.scenario)
    trace = simulate(sf.scenario)
    doc, residuals_ok, admissible = certify_report(sf, trace)
    sys.stdout.write(dumps(doc))
    if not residuals_ok:
        return EXIT_NUMERICAL
    return EXIT_OK if admissible else EXIT_INADMISSIBLE


def cmd_simulate(args) -> int:
    sf = load_scenario(args.scenario)
    trace = simulate(sf.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_traces(out, trace)
    doc = outcome_doc(sf, trace)
    _write(out, "outcome.json", dumps(doc))
    sys.stdout.write(dumps(doc))
    return EXIT_OK


def reproduce(out: Path) -> dict:
    """Run the bundled robot scenario and write every artefact into ``out``."""
    sf = load_paper_scenario()
    demo = run_paper_demo(sf)
    out.mkdir(parents=True, exist_ok=True)
    analysis = analyze_report(sf)
    cert_doc, residuals_ok, admissible = certify_report(sf, demo.trace)
    _write(out, "analysis.json", dumps(analysis))
    _write(out, "certificates.json", dumps(cert_doc))
    write_traces(out, demo.trace)
    _write(out, "trajectories.csv", demo.robots.to_csv())

    verdicts = [m["verdict"] for m in analysis["modes"]]
    partitions_ok = all(
        exp is None or ("partition" in m and _partition_matches((m["partition"]["V1"], m["partition"]["V2"]), exp))
        for m, exp in zip(analysis["modes"], BUNDLED_PARTITIONS))
    outcome = outcome_doc(sf, demo.trace)
    final_part = (analysis["modes"][-1]["partition"]["V1"], analysis["modes"][-1]["partition"]["V2"])
    checks = {
        "balance_sequence": verdicts == list(BUNDLED_VERDICTS),
        "partitions": partitions_ok,
        "final_partition": _partition_matches(final_part, BUNDLED_PARTITIONS[-1]),
        "xi_matches_formula": all(m["xi"] == m["xi_expected"] for m in analysis["modes"]),
        "residuals_ok": residuals_ok,
        "schedule_admissible": admissible,
        "terminal_bipartite": outcome["joint"]["kind"] == "bipartite"
        and _partition_matches((outcome["joint"]["partition"]["V1"], outcome["joint"]["partition"]["V2"]),
                               BUNDLED_PARTITIONS[-1]),
    }
    summary = {
        "balance_sequence": verdicts,
        "expected_sequence": list(BUNDLED_VERDICTS),
        "final_partition": {"V1": list(final_part[0]), "V2": list(final_part[1])},
        "gammas": [m["gamma"] for m in cert_doc["modes"]],
        "outcome": outcome,
        "checks": checks,
    }
    _write(out, "summary.json", dumps(summary))
    return summary


def cmd_reproduce(args) -> int:
    summary = reproduce(Path(args.out))
    sys.stdout.write(dumps(summary))
    return EXIT_OK if all(summary["checks"].values()) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signedomas",
                                description="Structural balance, Lyapunov certificates and simulation "
                                            "for open multi-agent systems on switching signed graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="per-mode balance, partition, ranks and zero-eigenvalue count")
    a.add_argument("scenario")
    a.set_defaults(func=cmd_analyze)
    c = sub.add_parser("certify", help="Lyapunov certificates and dwell-time report")
    c.add_argument("scenario")
    c.set_defaults(func=cmd_certify)
    s = sub.add_parser("simulate", help="simulate and classify the terminal behaviour")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    r = sub.add_parser("reproduce-paper", help="run the bundled seven-robot scenario end to end")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SignedOmasError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
