"""Command-line front end.

    xswap run SCENARIO.json [flags]      one simulation plus its checks
    xswap sweep [CORPUS_DIR] [flags]     deviation sweep over a corpus
    xswap export-corpus DIR              write the built-in corpus as files

Exit codes: 0 every enabled check passed, 1 some check failed, 2 invalid
input, 3 a run hit the horizon without quiescing.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import plots
from .checker import (
    check_equilibrium,
    check_uniformity,
    classify,
    default_corpus,
    deviation_runs,
    fmt_payoff,
    late_resolutions,
    leaving_implies_entering,
    payoff,
    ring,
    signature_first_use,
    uniformity_violations,
    verify_op_violations,
)
from .graph import validate_swap_values
from .metrics import completion_bound, measure
from .parties import SimResult, simulate
from .scenario import RUN_CHECKS, ScenarioError, ScenarioSpec, load_scenario, write_scenario

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_HORIZON = 0, 1, 2, 3
SPACE_RING_SIZES = range(3, 9)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xswap", description="cross-chain swap simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        # None means "use the scenario's value" (or the documented default)
        p.add_argument("--latency", choices=("max", "unit", "seeded"))
        p.add_argument("--seed", type=int)
        p.add_argument("--payoff", choices=("plain", "herlihy"))
        p.add_argument("--coalitions", type=int, default=1, metavar="K",
                       help="largest coalition size in the equilibrium search (default 1)")
        p.add_argument("--crypto", choices=("real", "test"))
        p.add_argument("--out", default="./out", help="output directory (default ./out)")
        p.add_argument("--no-figures", action="store_true")

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("scenario")
    run.add_argument("--checks", help=f"comma list from {','.join(RUN_CHECKS)}")
    common(run)

    sw = sub.add_parser("sweep", help="uniformity, equilibrium and metrics over a corpus")
    sw.add_argument("corpus", nargs="?", help="directory of scenario files (default: built-in)")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--max-runs", type=int, default=50_000,
                    help="equilibrium run budget per scenario")
    common(sw)

    ex = sub.add_parser("export-corpus", help="write the built-in corpus as scenario files")
    ex.add_argument("dir")
    return ap


def _apply_flags(spec: ScenarioSpec, args) -> ScenarioSpec:
    return spec.with_overrides(latency=args.latency, seed=args.seed, payoff=args.payoff,
                               crypto=args.crypto)


def _party_rows(r: SimResult, model: str) -> list[dict]:
    return [
        {
            "party": r.g.name(p),
            "id": p,
            "conforming": p in r.conforming,
            "strategy": r.strategies[p].label(),
            "outcome": classify(p, r).value,
            "payoff": fmt_payoff(payoff(p, r, model)),
        }
        for p in r.g.parties
    ]


def run_checks(spec: ScenarioSpec, r: SimResult, coalitions: int) -> dict[str, dict]:
    """Evaluate the scenario's enabled checks on one result."""
    out: dict[str, dict] = {}
    sid = spec.id
    if "uniformity" in spec.checks:
        if r.deviators or spec.kind == "trace":
            bad = uniformity_violations(r, sid)
        else:
            bad = check_uniformity([(sid, r)]).violations
        out["uniformity"] = {"status": "fail" if bad else "pass", "witnesses": [str(v) for v in bad]}
    if "properties" in spec.checks and spec.kind != "trace":
        bad = leaving_implies_entering(r, sid) + signature_first_use(r, sid) + verify_op_violations(r, sid)
        out["properties"] = {"status": "fail" if bad else "pass", "witnesses": [str(v) for v in bad]}
    if "resolution" in spec.checks and spec.kind != "trace":
        bad = late_resolutions(r, sid)
        out["resolution"] = {"status": "fail" if bad else "pass", "witnesses": [str(v) for v in bad]}
    if "completion" in spec.checks and spec.kind != "trace" and not r.deviators:
        m = measure(r)
        bound = completion_bound(r)
        all_triggered = all(r.triggered(a.key) for a in r.g.arcs)
        ok = all_triggered and m.completion_ticks is not None and m.completion_ticks <= bound
        out["completion"] = {
            "status": "pass" if ok else "fail",
            "completion_ticks": m.completion_ticks,
            "bound": bound,
            "witnesses": [] if ok else [f"[{sid}] completion {m.completion_ticks} vs bound {bound}"],
        }
    if "equilibrium" in spec.checks and spec.kind != "trace":
        out["equilibrium"] = _equilibrium(spec, coalitions)
    return out


def _equilibrium(spec: ScenarioSpec, coalitions: int, max_runs: int = 50_000) -> dict:
    if spec.payoff == "plain":
        rep = validate_swap_values(spec.g)
        if not rep.valid:
            why = rep.reason or ("participation fails" if not rep.participation_ok
                                 else f"better sub-swap {rep.witness}")
            return {"status": "skipped", "witnesses": [f"[{spec.id}] values not valid: {why}"]}
    v = check_equilibrium(spec.g, spec.payoff, coalitions, max_runs=max_runs, **spec.sim_kwargs())
    return {
        "status": v.status(),
        "runs": v.runs,
        "coalition_limit": coalitions,
        "coalitions_covered": f"{v.coalitions_covered}/{v.coalitions_total}",
        "note": v.note,
        "witnesses": [f"[{spec.id}] {w}" for w in v.witnesses],
    }


def _write_jsonl(path: Path, records) -> None:
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def _write_csv(path: Path, rows: Sequence[dict]) -> None:
    with path.open("w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# -- run ----------------------------------------------------------------------


def cmd_run(args) -> int:
    try:
        spec = _apply_flags(load_scenario(args.scenario), args)
        if args.checks:
            names = tuple(c.strip() for c in args.checks.split(",") if c.strip())
            unknown = [c for c in names if c not in RUN_CHECKS]
            if unknown:
                print(f"xswap: unknown check {unknown[0]!r}", file=sys.stderr)
                return EXIT_INVALID
            spec = spec.with_overrides(checks=names)
    except ScenarioError as e:
        print(f"xswap: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"xswap: cannot read {args.scenario}: {e.strerror}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = spec.run()
    (out / "trace.jsonl").write_text(r.trace.to_jsonl())
    if not r.trace.quiescent:
        print(f"xswap: [{spec.id}] horizon {r.trace.horizon} reached without quiescence",
              file=sys.stderr)
        return EXIT_HORIZON
    checks = run_checks(spec, r, args.coalitions)
    passed = all(c["status"] == "pass" for c in checks.values())
    records = [dict(scenario=spec.id, record="party", **row) for row in _party_rows(r, spec.payoff)]
    for name, c in checks.items():
        records.append(dict(scenario=spec.id, record="check", check=name, **c))
    records.append({"scenario": spec.id, "record": "verdict", "pass": passed,
                    "run": r.describe()})
    _write_jsonl(out / "verdict.jsonl", records)
    if spec.kind != "trace":
        _write_csv(out / "metrics.csv", [measure(r).row(spec.id)])
        if not args.no_figures:
            plots.timeline(r, out / "timeline.png")
    lines = [f"scenario {spec.id}: {r.describe()}"]
    for row in _party_rows(r, spec.payoff):
        lines.append(f"  {row['party']:<12} {row['strategy']:<28} {row['outcome']:<12} {row['payoff']}")
    for name, c in checks.items():
        lines.append(f"  check {name:<12} {c['status']}")
        lines.extend(f"    {w}" for w in c["witnesses"])
    lines.append("PASS" if passed else "FAIL")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if passed else EXIT_FAIL


# -- sweep --------------------------------------------------------------------


def _corpus_specs(corpus: str | None) -> list[ScenarioSpec]:
    if corpus is None:
        return [ScenarioSpec(e.id, "swap", e.g) for e in default_corpus()]
    files = sorted(Path(corpus).glob("*.json"))
    if not files:
        raise ScenarioError(corpus, 1, "no scenario files (*.json) in corpus directory")
    return [load_scenario(f) for f in files]


def evaluate_scenario(spec: ScenarioSpec, coalitions: int, max_runs: int) -> dict:
    """Every sweep check for one scenario; returns plain data only."""
    if spec.kind == "trace":
        r = spec.run()
        bad = uniformity_violations(r, spec.id)
        return {
            "id": spec.id,
            "record": {"scenario": spec.id, "kind": "trace", "parties": list(spec.g.names),
                       "outcomes": {spec.g.name(p): classify(p, r).value for p in spec.g.parties},
                       "checks": {"uniformity": "fail" if bad else "pass"},
                       "pass": not bad, "witnesses": [str(v) for v in bad]},
            "counts": Counter(classify(p, r).value for p in r.conforming),
        }
    runs = deviation_runs(spec.g, **spec.sim_kwargs())
    horizon = [sid for sid, r in runs if not r.trace.quiescent]
    if horizon:
        return {"id": spec.id, "horizon": horizon,
                "record": {"scenario": spec.id, "pass": False,
                           "witnesses": [f"[{spec.id}/{s}] horizon reached" for s in horizon]}}
    named = [(f"{spec.id}/{sid}", r) for sid, r in runs]
    base = runs[0][1]
    uni = check_uniformity(named)
    props = [v for sid, r in named for v in
             leaving_implies_entering(r, sid) + signature_first_use(r, sid)]
    ops = [v for sid, r in named for v in verify_op_violations(r, sid)]
    late = [v for sid, r in named for v in late_resolutions(r, sid)]
    m = measure(base)
    bound = completion_bound(base)
    completion_ok = bool(m.completion_ticks is not None and m.completion_ticks <= bound
                         and all(base.triggered(a.key) for a in spec.g.arcs))
    eq = _equilibrium(spec, coalitions, max_runs)
    checks = {
        "uniformity_all_conforming": "pass" if uni.clause_a else "fail",
        "uniformity_deviations": "pass" if uni.clause_b else "fail",
        "leaving_implies_entering": "pass" if not props else "fail",
        "verify_ops": "pass" if not ops else "fail",
        "resolution_deadline": "pass" if not late else "fail",
        "completion_bound": "pass" if completion_ok else "fail",
        "equilibrium": eq["status"],
    }
    witnesses = [str(v) for v in uni.violations + props + ops + late[:20]]
    if not completion_ok:
        witnesses.append(f"[{spec.id}/all-conforming] completion {m.completion_ticks} vs bound {bound}")
    witnesses += eq["witnesses"][:20]
    counts = Counter(classify(p, r).value for _, r in runs for p in r.conforming)
    return {
        "id": spec.id,
        "record": {
            "scenario": spec.id,
            "kind": "swap",
            "parties": list(spec.g.names),
            "arcs": len(spec.g.arcs),
            "leaders": list(base.leaders.leaders),
            "latency": spec.latency,
            "seed": spec.seed,
            "payoff": spec.payoff,
            "runs": len(runs),
            "outcomes": {spec.g.name(p): classify(p, base).value for p in spec.g.parties},
            "payoffs": {spec.g.name(p): fmt_payoff(payoff(p, base, spec.payoff))
                        for p in spec.g.parties},
            "late_resolutions": len(late),
            "equilibrium_runs": eq.get("runs", 0),
            "checks": checks,
            "pass": all(v == "pass" for v in checks.values()),
            "witnesses": witnesses,
        },
        "metrics": m.row(spec.id),
        "completion": (spec.id, m.completion_ticks, bound),
        "counts": counts,
    }


def _space_rows(crypto: str) -> list[tuple[int, int]]:
    rows = []
    for n in SPACE_RING_SIZES:
        r = simulate(ring(n), backend=crypto)
        bits = set(measure(r).published_bits.values())
        if len(bits) != 1:
            raise AssertionError(f"ring {n}: contracts differ in size {sorted(bits)}")
        rows.append((n, bits.pop()))
    return rows


def cmd_sweep(args) -> int:
    try:
        specs = [_apply_flags(s, args) for s in _corpus_specs(args.corpus)]
    except ScenarioError as e:
        print(f"xswap: {e}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    work = [(s, args.coalitions, args.max_runs) for s in specs]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(evaluate_scenario, *zip(*work)))
    else:
        results = [evaluate_scenario(*w) for w in work]
    _write_jsonl(out / "verdicts.jsonl", [res["record"] for res in results])
    _write_csv(out / "metrics.csv", [res["metrics"] for res in results if "metrics" in res])

    crypto = args.crypto or "test"
    space = _space_rows(crypto)
    (n0, b0), (n1, b1) = space[0], space[1]
    c2 = (b1 - b0) // (n1 - n0)
    c1 = b0 - c2 * n0
    space_ok = all(b == c1 + c2 * n for n, b in space)
    _write_csv(out / "space.csv", [{"n": n, "bits_per_contract": b, "predicted": c1 + c2 * n}
                                   for n, b in space])
    if not args.no_figures:
        plots.space_scaling(space, c1, c2, out / "space.png")
        comp = [res["completion"] for res in results if "completion" in res]
        if comp:
            plots.completion_vs_bound(comp, out / "completion.png")
        plots.outcome_classes({res["id"]: res.get("counts", Counter()) for res in results},
                              out / "outcomes.png")

    lines = [f"{'scenario':<22} {'pass':<5} checks"]
    failing = []
    for res in results:
        rec = res["record"]
        bad = [k for k, v in rec.get("checks", {}).items() if v != "pass"]
        lines.append(f"{rec['scenario']:<22} {'yes' if rec['pass'] else 'NO':<5} "
                     + (("failed: " + ",".join(bad)) if bad else "all pass"))
        if not rec["pass"]:
            failing.append(rec)
    lines.append(f"space per contract = {c1} + {c2}*n over rings n=3..8: "
                 + ("exact" if space_ok else "NOT linear"))
    for rec in failing:
        lines.append(f"witnesses for {rec['scenario']}:")
        lines.extend(f"  {w}" for w in rec["witnesses"][:10])
    ok = not failing and space_ok
    horizon = any("horizon" in res for res in results)
    lines.append("PASS" if ok else "FAIL")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if horizon:
        return EXIT_HORIZON
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    d = Path(args.dir)
    d.mkdir(parents=True, exist_ok=True)
    for e in default_corpus():
        write_scenario(d / f"{e.id}.json", e.id, e.g)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "run":
        return cmd_run(args)
    if args.cmd == "sweep":
        if args.coalitions < 1:
            print("xswap: --coalitions must be at least 1", file=sys.stderr)
            return EXIT_INVALID
        return cmd_sweep(args)
    return cmd_export(args)


if __name__ == "__main__":
    sys.exit(main())
