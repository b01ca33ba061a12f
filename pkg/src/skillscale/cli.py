"""Command-line entry point: ``skillscale <subcommand> ...``.

Exit codes: 0 success, 1 domain error (message printed verbatim), 2 usage error.
Every structured report embeds the tool version, SHA-256 digests of its input
files and the seed (or null), with sorted keys and no timestamps, so reruns
with the same inputs are byte-identical. Outputs are only ever written to
paths that do not exist yet.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .errors import ParseError, PreconditionError, SkillScaleError
from .gate import GateConfig, check_closure, gate_detailed, gate_ids_text, load_closure_spec, scan_workspace
from .laws import (
    fit_boltzmann,
    fit_propagation,
    fit_rebound,
    fit_rescue,
    fit_rescue_hardest,
    fit_routing_law,
    fit_synergy,
)
from .manager import ActionPlan, apply, evaluate_candidate, load_plan, plan, validate_payloads
from .schema import dedup, dump_library, ingest, load_library, skill_from_mapping
from .scorecards import score, write_scorecard_tables
from .sim import (
    DEFAULT_BLACKHOLE,
    DEFAULT_SWEEP,
    SimConfig,
    load_sim_config,
    simulate_blackhole,
    simulate_pipeline,
    simulate_rescue,
    simulate_sweep,
    simulate_synergy,
    simulate_wrong_state,
)
from .trials import format_trials, read_columns, read_trials

SUBCOMMANDS = (
    "ingest", "dedup", "audit", "simulate", "fit", "plan", "apply", "diff", "gate", "closure", "report",
)


@dataclass
class CommandResult:
    exit_code: int
    report_paths: list[str] = field(default_factory=list)


class _Outputs:
    """Collects outputs, refusing to touch existing paths or any input file."""

    def __init__(self, inputs: Sequence[str | Path]) -> None:
        self.inputs = {Path(p).resolve() for p in inputs}
        self.paths: list[str] = []

    def claim(self, path: str | Path) -> Path:
        p = Path(path)
        if p.resolve() in self.inputs:
            raise PreconditionError(f"output {str(p)!r} would overwrite an input file")
        if p.exists():
            raise PreconditionError(f"output {str(p)!r} already exists; outputs must go to new paths")
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(str(p))
        return p

    def text(self, path: str | Path, content: str) -> Path:
        p = self.claim(path)
        p.write_text(content, encoding="utf-8")
        return p

    def json(self, path: str | Path, obj: Any) -> Path:
        return self.text(path, dumps(obj))

    def rows(self, path: str | Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        p = self.claim(path)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return p


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def envelope(kind: str, inputs: Sequence[str | Path], seed: int | None, body: Any) -> dict[str, Any]:
    return {
        "tool": "skillscale",
        "version": __version__,
        "kind": kind,
        "seed": seed,
        "inputs": [{"path": str(p), "sha256": digest(p)} for p in inputs],
        "result": body,
    }


def _read_structured(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(str(path), "<document>", str(exc)) from None


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- subcommands


def cmd_ingest(args: argparse.Namespace, out: _Outputs) -> int:
    docs, labels = [], []
    for path in args.documents:
        data = _read_structured(path)
        items = data if isinstance(data, list) else [data]
        for k, item in enumerate(items):
            docs.append(item)
            labels.append(f"{path}[{k}]" if isinstance(data, list) else str(path))
    lib = ingest(docs, labels)
    dump_library(lib, out.claim(args.out))
    return 0


def cmd_dedup(args: argparse.Namespace, out: _Outputs) -> int:
    lib = load_library(args.library)
    reduced, merged = dedup(lib, args.threshold)
    dump_library(reduced, out.claim(args.out))
    if args.merged_out:
        out.rows(args.merged_out, ["survivor", "merged"], merged)
    print(f"retained {len(reduced)} of {len(lib)} skills; merged {len(merged)}")
    return 0


def cmd_audit(args: argparse.Namespace, out: _Outputs) -> int:
    lib = load_library(args.library)
    cards = score(lib)
    inputs = [args.library]
    body: dict[str, Any] = {"scorecards": cards.to_dict()}
    if args.candidate:
        inputs.append(args.candidate)
        cand = skill_from_mapping(_read_structured(args.candidate), str(args.candidate))
        body["candidate"] = evaluate_candidate(lib, cand).to_dict()
    out.json(args.out, envelope("audit", inputs, None, body))
    if args.tables_dir:
        for p in (Path(args.tables_dir) / f"scorecard_{k}.csv" for k in ("pairs", "skills", "library")):
            out.claim(p)
        write_scorecard_tables(cards, args.tables_dir)
    return 0


def _sim_config(args: argparse.Namespace) -> tuple[SimConfig, list[str]]:
    if args.config:
        cfg = load_sim_config(args.config)
        cfg = replace(cfg, seed=args.seed)
        return cfg, [args.config]
    return SimConfig(seed=args.seed), []


def cmd_simulate(args: argparse.Namespace, out: _Outputs) -> int:
    cfg, inputs = _sim_config(args)
    kind = args.kind
    summary: dict[str, Any] = {"config": cfg.to_dict(), "kind": kind}
    if kind == "single":
        sweep = args.sweep_n or list(DEFAULT_SWEEP)
        out.text(args.out, format_trials(simulate_sweep(cfg, sweep, args.trials)))
    elif kind == "pipeline":
        run = simulate_pipeline(cfg, args.n, args.k, args.trials, args.p_step)
        out.text(args.out, format_trials(run.records))
        summary.update(strict_success=run.strict_success, per_step_accuracy=list(run.per_step_accuracy),
                       p_n=run.p_n, n=args.n, k=args.k)
    elif kind == "rescue":
        pairs = simulate_rescue(cfg, args.pairs, args.trials)
        out.rows(args.out, ["pair_id", "p_a", "p_b", "observed_delta", "joint_no_state", "clipped"],
                 [(i, p.p_a, p.p_b, p.delta, p.joint_no_state, int(p.clipped)) for i, p in enumerate(pairs)])
        summary.update(clipped=sum(p.clipped for p in pairs), pairs=len(pairs))
    elif kind == "wrong_state":
        grid = args.grid or [0.0, 0.25, 0.5, 0.75, 1.0]
        out.rows(args.out, ["kappa", "delta_q"], simulate_wrong_state(cfg, grid, args.trials))
    elif kind == "synergy":
        grid = args.grid or [round(0.05 * i, 2) for i in range(21)]
        out.rows(args.out, ["g", "s"], simulate_synergy(cfg, grid, args.trials))
    elif kind == "blackhole":
        if cfg.blackhole is None:
            cfg = replace(cfg, blackhole=DEFAULT_BLACKHOLE)
            summary["config"] = cfg.to_dict()
        rows = []
        for q in (False, True):
            for s in (False, True):
                r = simulate_blackhole(cfg, q, s, args.trials, args.n)
                rows.append((int(q), int(s), r.margin, r.capture_rate, r.gini, r.accuracy))
        out.rows(args.out, ["query_weak", "skill_weak", "margin", "capture_rate", "gini", "accuracy"], rows)
    if args.report:
        out.json(args.report, envelope("simulate", inputs, cfg.seed, summary))
    return 0


def _fit_body(law: str, path: str) -> tuple[dict[str, Any], list[tuple[Any, ...]], list[str]]:
    """Fit one law; returns (report body, plot-ready rows, plot header)."""
    if law == "routing":
        fit = fit_routing_law(read_trials(path))
        rows = [(p.n, math.log(p.n), p.accuracy, p.ci_lo, p.ci_hi, fit.predict(p.n)) for p in fit.points]
        return fit.to_dict(), rows, ["n", "ln_n", "accuracy", "ci_lo", "ci_hi", "fitted"]
    if law == "rescue":
        rows = read_columns(path, ["p_a", "p_b", "observed_delta"])
        fit, hard = fit_rescue(rows), fit_rescue_hardest(rows)
        body = {"all": fit.__dict__, "hardest_quartile": hard.__dict__}
        plot = [((1 - pb) * pa, d) for pa, pb, d in rows]
        return body, plot, ["rescue_potential", "observed_delta"]
    if law == "propagation":
        rows = read_columns(path, ["kappa", "delta_q"])
        fit = fit_propagation(rows)
        body = {"lambda": fit.lam, "r": fit.r, "r_squared": fit.r_squared, "kappa_zero": fit.kappa_zero}
        return body, rows, ["kappa", "delta_q"]
    if law == "synergy":
        rows = read_columns(path, ["g", "s"])
        return fit_synergy(rows).__dict__, rows, ["g", "s"]
    if law == "rebound":
        rows = read_columns(path, ["n_exposed", "rebound"])
        return fit_rebound(rows).__dict__, rows, ["n_exposed", "rebound"]
    if law == "boltzmann":
        obs = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for col in ("accuracy", "similarities"):
                if col not in (reader.fieldnames or []):
                    raise ParseError(path, col, "missing column")
            for line, row in enumerate(reader, start=2):
                try:
                    sims = [float(v) for v in row["similarities"].split(";") if v.strip()]
                    obs.append((sims, float(row["accuracy"])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{line}", "row", str(exc)) from None
        fit = fit_boltzmann(obs)
        return fit.__dict__, [(len(s), a) for s, a in obs], ["distractors", "accuracy"]
    raise PreconditionError(f"unknown law {law!r}")


def cmd_fit(args: argparse.Namespace, out: _Outputs) -> int:
    body, rows, header = _fit_body(args.law, args.input)
    body = {"law": args.law, **body}
    out.json(args.out, envelope("fit", [args.input], None, body))
    if args.plot_data:
        out.rows(args.plot_data, header, rows)
    return 0


def cmd_plan(args: argparse.Namespace, out: _Outputs) -> int:
    lib = load_library(args.library)
    p = plan(lib, score(lib))
    out.text(args.out, p.dumps())
    print(f"{len(p.actions)} pending actions for library version {lib.version}")
    return 0


def cmd_apply(args: argparse.Namespace, out: _Outputs) -> int:
    lib = load_library(args.library)
    p: ActionPlan = load_plan(args.plan)
    validate_payloads(p, lib)
    new, audit = apply(lib, p)
    dump_library(new, out.claim(args.out))
    if args.audit_out:
        body = audit.to_dict()
        body["summary"] = audit.summary()
        out.json(args.audit_out, envelope("audit_diff", [args.library, args.plan], None, body))
    sys.stdout.write(audit.summary())
    return 0


def cmd_diff(args: argparse.Namespace, out: _Outputs) -> int:
    before, after = load_library(args.before), load_library(args.after)
    from .manager import audit

    result = audit(before, after)
    body = result.to_dict()
    out.json(args.out, envelope("diff", [args.before, args.after], None, body))
    return 0


def cmd_gate(args: argparse.Namespace, out: _Outputs) -> int:
    lib = load_library(args.library)
    inputs = [args.library]
    if args.task_file:
        task = Path(args.task_file).read_text(encoding="utf-8")
        inputs.append(args.task_file)
    else:
        task = args.task or ""
    cfg = GateConfig(
        global_cap=args.global_cap, per_task_cap=args.per_task_cap, per_domain_cap=args.per_domain_cap,
        local_artifact_reduction=args.local_reduction,
    )
    res = gate_detailed(lib, task, cfg)
    if args.format == "ids":
        out.text(args.out, gate_ids_text(res.ids))
    else:
        out.json(args.out, envelope("gate", inputs, None, res.to_dict()))
    return 0


def cmd_closure(args: argparse.Namespace, out: _Outputs) -> int:
    spec = load_closure_spec(args.spec)
    res = check_closure(spec, scan_workspace(args.workspace))
    if args.out:
        out.json(args.out, envelope("closure", [args.spec], None, {"task_id": spec.task_id, **res.to_dict()}))
    if not res.complete:
        print(f"task {spec.task_id} incomplete: missing={list(res.missing)} empty={list(res.empty)}",
              file=sys.stderr)
        return 1
    return 0


def cmd_report(args: argparse.Namespace, out: _Outputs) -> int:
    """Simulate the standard studies and emit plot-ready CSVs plus one JSON summary."""
    cfg, inputs = _sim_config(args)
    d = Path(args.out_dir)
    if d.exists():
        raise PreconditionError(f"output directory {str(d)!r} already exists; outputs must go to new paths")
    trials = simulate_sweep(cfg, DEFAULT_SWEEP, args.trials)
    routing = fit_routing_law(trials)
    out.rows(d / "routing_curve.csv", ["n", "ln_n", "accuracy", "ci_lo", "ci_hi", "fitted"],
             [(p.n, math.log(p.n), p.accuracy, p.ci_lo, p.ci_hi, routing.predict(p.n)) for p in routing.points])
    pairs = simulate_rescue(cfg, args.pairs, 200)
    rows = [(p.p_a, p.p_b, p.delta) for p in pairs]
    rescue = fit_rescue(rows)
    out.rows(d / "rescue_scatter.csv", ["rescue_potential", "observed_delta"],
             [((1 - pb) * pa, dl) for pa, pb, dl in rows])
    grid = [round(0.025 * i, 3) for i in range(41)]
    syn_rows = simulate_synergy(cfg, grid, args.trials * 20)
    syn = fit_synergy(syn_rows)
    out.rows(d / "synergy_curve.csv", ["g", "s"], syn_rows)
    prop_rows = simulate_wrong_state(cfg, [0.0, 0.25, 0.5, 0.75, 1.0], args.trials * 20)
    prop = fit_propagation(prop_rows)
    out.rows(d / "propagation.csv", ["kappa", "delta_q"], prop_rows)
    body = {
        "config": cfg.to_dict(),
        "routing": {k: v for k, v in routing.to_dict().items() if k != "points"},
        "rescue": rescue.__dict__,
        "synergy": syn.__dict__,
        "propagation": {"lambda": prop.lam, "r": prop.r, "kappa_zero": prop.kappa_zero},
    }
    out.json(d / "summary.json", envelope("report", inputs, cfg.seed, body))
    return 0


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 2
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skillscale", description="Audit, optimize and gate agent skill libraries.")
    p.add_argument("--version", action="version", version=f"skillscale {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="normalize skill documents into one library file")
    s.add_argument("documents", nargs="+")
    s.add_argument("--out", required=True)

    s = sub.add_parser("dedup", help="merge near-duplicate descriptions")
    s.add_argument("library")
    s.add_argument("--threshold", type=float, default=0.95)
    s.add_argument("--out", required=True)
    s.add_argument("--merged-out")

    s = sub.add_parser("audit", help="scorecards (and optional candidate gate) for a library")
    s.add_argument("library")
    s.add_argument("--out", required=True)
    s.add_argument("--tables-dir")
    s.add_argument("--candidate")

    s = sub.add_parser("simulate", help="run the generative router")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--kind", default="single",
                   choices=("single", "pipeline", "rescue", "wrong_state", "synergy", "blackhole"))
    s.add_argument("--sweep-n", type=_int_list)
    s.add_argument("--trials", type=int, default=5000)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--k", type=int, default=3)
    s.add_argument("--p-step", type=float)
    s.add_argument("--pairs", type=int, default=1690)
    s.add_argument("--grid", type=_float_list)
    s.add_argument("--out", required=True)
    s.add_argument("--report")

    s = sub.add_parser("fit", help="fit one law from a delimited data file")
    s.add_argument("--law", required=True,
                   choices=("routing", "rescue", "propagation", "synergy", "rebound", "boltzmann"))
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--plot-data")

    s = sub.add_parser("plan", help="propose pending actions from scorecards")
    s.add_argument("library")
    s.add_argument("--out", required=True)

    s = sub.add_parser("apply", help="apply an approved plan")
    s.add_argument("library")
    s.add_argument("plan")
    s.add_argument("--out", required=True)
    s.add_argument("--audit-out")

    s = sub.add_parser("diff", help="structural and metric diff of two library snapshots")
    s.add_argument("before")
    s.add_argument("after")
    s.add_argument("--out", required=True)

    s = sub.add_parser("gate", help="task-conditioned exposed skill list")
    s.add_argument("library")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--task")
    g.add_argument("--task-file")
    s.add_argument("--global-cap", type=int, default=250)
    s.add_argument("--per-task-cap", type=int, default=80)
    s.add_argument("--per-domain-cap", type=int, default=24)
    s.add_argument("--local-reduction", type=float, default=0.5)
    s.add_argument("--format", choices=("ids", "json"), default="ids")
    s.add_argument("--out", required=True)

    s = sub.add_parser("closure", help="check required task artifacts")
    s.add_argument("spec")
    s.add_argument("--workspace", required=True)
    s.add_argument("--out")

    s = sub.add_parser("report", help="simulate standard studies and emit plot-ready data")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--pairs", type=int, default=400)
    s.add_argument("--out-dir", required=True)
    return p


_HANDLERS = {
    "ingest": cmd_ingest, "dedup": cmd_dedup, "audit": cmd_audit, "simulate": cmd_simulate,
    "fit": cmd_fit, "plan": cmd_plan, "apply": cmd_apply, "diff": cmd_diff, "gate": cmd_gate,
    "closure": cmd_closure, "report": cmd_report,
}

_INPUT_ARGS = ("documents", "library", "candidate", "config", "input", "plan", "before", "after",
               "task_file", "spec")


def run(argv: Sequence[str] | None = None) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CommandResult(int(exc.code or 0))
    inputs: list[str] = []
    for name in _INPUT_ARGS:
        v = getattr(args, name, None)
        if v:
            inputs.extend(v if isinstance(v, list) else [v])
    out = _Outputs(inputs)
    try:
        code = _HANDLERS[args.command](args, out)
    except SkillScaleError as exc:
        print(str(exc), file=sys.stderr)
        return CommandResult(1, out.paths)
    except OSError as exc:
        print(f"{exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return CommandResult(1, out.paths)
    return CommandResult(code, out.paths)


def main(argv: Sequence[str] | None = None) -> int:
    return run(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
