"""Command-line entry point.

    ftmas simulate --scenario F [--seed S] [--policy P] [--max-steps N] [--trace-out F2]
    ftmas explore  --scenario F [--max-states N] [--max-depth N] [--report-out F3] [--workers N]
    ftmas check    --scenario F --trace F2

Exit codes: 0 pass/completed, 1 property violation (or inconclusive run),
2 malformed input, 3 invalid scenario.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import model, sim
from .checker import BoundExceeded, RefinementViolation, check_refinement, explore
from .scenario import Bounds, ParseError, ScenarioInvalid, load_scenario

EXIT_OK, EXIT_VIOLATION, EXIT_PARSE, EXIT_INVALID = 0, 1, 2, 3
FOOTER_LIMIT = 20


def _emit(doc: dict, footer: list[str], out) -> None:
    out.write(json.dumps(doc, indent=2) + "\n")
    for line in footer:
        out.write(f"# {line}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftmas", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("simulate", help="run seeded randomized traces")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, help="single seed (default: every seed in the scenario)")
    p.add_argument("--policy", choices=sim.POLICIES)
    p.add_argument("--max-steps", type=_positive)
    p.add_argument("--trace-out", help="write the trace (single seed only)")
    p.add_argument("--workers", type=_positive, default=1)

    p = sub.add_parser("explore", help="exhaustively explore the reachable state graph")
    p.add_argument("--scenario", required=True)
    p.add_argument("--max-states", type=_positive)
    p.add_argument("--max-depth", type=_positive)
    p.add_argument("--report-out")
    p.add_argument("--workers", type=_positive, default=1)

    p = sub.add_parser("check", help="replay a trace and check refinement")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", required=True)
    return parser


def _simulate(args, out) -> int:
    scenario = load_scenario(args.scenario)
    seeds = [args.seed] if args.seed is not None else list(scenario.seeds)
    if args.trace_out and len(seeds) != 1:
        raise ScenarioInvalid("--trace-out needs a single --seed")
    summary = sim.batch(scenario, seeds, args.policy, args.max_steps, workers=args.workers)
    runs = []
    footer = []
    for t in summary.traces:
        runs.append({
            "seed": t.seed, "outcome": t.outcome, "steps": len(t.records),
            "violations": t.violations,
        })
        footer.extend(f"seed {t.seed}: {v}" for v in t.violations)
    doc = {
        "format-version": 1,
        "kind": "simulation",
        "scenario": scenario.name,
        "policy": args.policy or scenario.policy,
        "runs": summary.runs,
        "completed": summary.completed,
        "meanSteps": summary.mean_steps,
        "eventHistogram": summary.event_histogram,
        "results": runs,
    }
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fp:
            sim.write_trace(summary.traces[0], fp)
    ok = summary.completed == summary.runs and not any(t.violations for t in summary.traces)
    footer.append(f"{'PASS' if ok else 'FAIL'}: {summary.completed}/{summary.runs} runs reached the goal")
    _emit(doc, footer, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _explore(args, out) -> int:
    scenario = load_scenario(args.scenario)
    bounds = Bounds(
        max_states=args.max_states or scenario.bounds.max_states,
        max_depth=args.max_depth or scenario.bounds.max_depth,
    )
    try:
        _, report = explore(scenario, bounds, workers=args.workers)
    except BoundExceeded as exc:
        report = exc.report
    doc = report.to_dict()
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fp:
            fp.write(json.dumps(doc, indent=2) + "\n")
    footer = []
    for v in report.invariant_violations:
        footer.append(f"invariant {v['invariant']} violated at {v['digest']}: {v['witness']}")
    for v in report.variant_violations:
        footer.append(f"variant {v['delta']} on {v['pre']} --{v['event']}--> {v['post']}")
    for v in report.stability_violations:
        footer.append(f"stability on {v['pre']} --{v['event']}--> {v['post']}: {v['witness']}")
    footer.extend(f"deadlock at {d}" for d in report.deadlocks)
    footer.extend(f"goal unreachable from {d}" for d in report.unreachable_to_goal)
    if len(footer) > FOOTER_LIMIT:
        footer = footer[:FOOTER_LIMIT] + [f"... {len(footer) - FOOTER_LIMIT} more in the report"]
    if report.partial:
        footer.append("bound exceeded: the graph is partial and nothing is certified")
    footer.append(report.summary())
    _emit(doc, footer, out)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _check(args, out) -> int:
    scenario = load_scenario(args.scenario)
    try:
        with open(args.trace, encoding="utf-8") as fp:
            header, records = sim.read_trace(fp)
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read trace: {exc}") from None
    doc = {
        "format-version": 1,
        "kind": "refinement-check",
        "scenario": scenario.name,
        "trace": {"seed": header.get("seed"), "policy": header.get("policy")},
        "steps": len(records),
    }
    try:
        states = sim.replay(scenario, records)
        steps = [(states[i], r.event, states[i + 1]) for i, r in enumerate(records)]
        verdicts = check_refinement(steps)
    except sim.ReplayMismatch as exc:
        doc.update(verdict="FAIL", violation={"step": exc.step, "level": "replay", "reason": str(exc)})
        _emit(doc, [f"FAIL: replay diverged at step {exc.step}: {exc}"], out)
        return EXIT_VIOLATION
    except RefinementViolation as exc:
        doc.update(verdict="FAIL", violation={"step": exc.step, "level": exc.level, "reason": exc.reason})
        _emit(doc, [f"FAIL: refinement broken at step {exc.step} ({exc.level}): {exc.reason}"], out)
        return EXIT_VIOLATION
    abstract_steps = {lvl: sum(v.levels[lvl] == "step" for v in verdicts) for lvl in ("M2", "M1", "M0")}
    doc.update(verdict="PASS", abstractSteps=abstract_steps,
               goal=model.is_goal(states[-1]))
    _emit(doc, [f"PASS: {len(records)} steps refine M2/M1/M0 ({abstract_steps})"], out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    handler = {"simulate": _simulate, "explore": _explore, "check": _check}[args.mode]
    try:
        return handler(args, out)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ScenarioInvalid as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
