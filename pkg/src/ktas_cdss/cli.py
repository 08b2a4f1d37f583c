"""``ktas-cdss`` command line: run, eval, compare, prompts, rxnorm.

Exit codes: 0 success, 1 backend or tool failure, 2 usage, config or input
schema error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence, TextIO

from . import __version__
from .backends import BackendError
from .config import ConfigError, RunConfig, load_config
from .core import AgentRole, CdssError, PatientCase, RunMode, make_case
from .evaluation import (
    SchemaError,
    compare_modes,
    evaluate,
    load_cases,
    load_score_tables,
    write_comparison_outputs,
    write_eval_outputs,
)
from .pipeline import PipelinePlan, make_run_dir, run_batch, write_transcripts
from .prompts import ROLE_ORDER, asset_digest, dump_assets, manifest
from .records import CaseRunRecord
from .reports import render_diagnosis, render_management, render_medication, render_triage
from .tools import NotFound, RecordedTransport, RxNormClient

log = logging.getLogger("ktas_cdss")

EXIT_OK, EXIT_BACKEND, EXIT_USAGE = 0, 1, 2

BANNER = (
    "*** DECISION SUPPORT ONLY: generated for review by a qualified clinician. "
    "Not a diagnosis or an order. ***"
)

_MODES = {"multi": RunMode.MULTI_AGENT, "single": RunMode.SINGLE_AGENT}


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override KTAS_CDSS_* env vars and --config)")
    g.add_argument("--backend", help="'scripted:<fixture path>' or 'http:<base_url>'")
    g.add_argument("--model-id", help="model name sent to the HTTP backend")
    g.add_argument("--timeout-s", type=float, help="per-completion timeout in seconds")
    g.add_argument("--max-in-flight", type=int, help="concurrent HTTP requests allowed")
    g.add_argument("--tools", dest="tools_enabled", action=argparse.BooleanOptionalAction,
                   default=None, help="offer tools to the agents (default: on)")
    g.add_argument("--max-tool-iterations", type=int, help="tool-call rounds per stage")
    g.add_argument("--parallelism", type=int, help="cases run concurrently")
    g.add_argument("--temperature", type=float, help="sampling temperature")
    g.add_argument("--max-tokens", type=int, help="completion token limit")
    g.add_argument("--output-dir", type=Path, help="root directory for run outputs")
    g.add_argument("--rxnorm-base-url", help="RxNorm REST base URL")
    g.add_argument("--rxnorm-fixtures", type=Path,
                   help="serve RxNorm from a recorded responses.json instead of the network")
    g.add_argument("--interactions", help="interaction table JSON, or 'remote:<base_url>'")
    g.add_argument("--search-fixtures", type=Path, help="offline search fixture directory")
    g.add_argument("--live-search", action=argparse.BooleanOptionalAction, default=None,
                   help="allow live web search when no search fixtures are given")
    p.add_argument("--run-id", help="name of the run directory (default: command and mode)")
    p.add_argument("--stable", action="store_true",
                   help="deterministic output: no timestamps in directory names or transcripts")


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scores", type=Path,
                   help="aggregate expert score tables (JSON) instead of per-case annotations")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ktas-cdss",
        description="Multi-agent KTAS emergency-department decision support and its evaluation harness.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="INI config file ([ktas_cdss] section)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="run one case file or inline narrative through the pipeline")
    p.add_argument("input", help="a .jsonl case file, a text file holding a narrative, or the narrative itself")
    p.add_argument("--mode", choices=sorted(_MODES), default="multi", help="pipeline mode (default: multi)")
    p.add_argument("--case-id", help="case id for a narrative input (default: file stem or 'inline')")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="run a case set and write metrics, tables and figures")
    p.add_argument("cases", type=Path, help="JSON-lines case file with expert annotations")
    p.add_argument("--mode", choices=sorted(_MODES), default="multi", help="pipeline mode (default: multi)")
    _add_eval_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="run both modes on a case set and report the deltas")
    p.add_argument("cases", type=Path, help="JSON-lines case file with expert annotations")
    _add_eval_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("prompts", help="print the verbatim prompt assets")
    p.add_argument("role", help="triage-nurse, emergency-physician, pharmacist, ed-doctor-in-charge or all")
    p.add_argument("--digest", action="store_true",
                   help="print sha256 digests checked against the asset manifest instead of text")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("rxnorm", help="resolve a drug name to its RxNorm concept")
    p.add_argument("name", help="drug name")
    p.add_argument("--fixtures", type=Path, help="recorded responses.json (or its directory)")
    p.add_argument("--base-url", help="RxNorm REST base URL")
    p.set_defaults(func=cmd_rxnorm)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    keys = ("backend", "model_id", "timeout_s", "max_in_flight", "tools_enabled",
            "max_tool_iterations", "parallelism", "temperature", "max_tokens", "output_dir",
            "rxnorm_base_url", "rxnorm_fixtures", "interactions", "search_fixtures", "live_search")
    return load_config(args.config, {k: getattr(args, k, None) for k in keys})


def _plan(cfg: RunConfig, mode: RunMode) -> PipelinePlan:
    return PipelinePlan(mode=mode, tools_enabled=cfg.tools_enabled,
                        max_tool_iterations=cfg.max_tool_iterations, temperature=cfg.temperature,
                        max_tokens=cfg.max_tokens, model_id=cfg.model_id)


def _err(msg: str) -> None:
    print(f"ktas-cdss: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# commands


def _read_run_input(args: argparse.Namespace) -> list[PatientCase]:
    path = Path(args.input)
    try:
        is_file = path.is_file()
    except OSError:  # inline text too long to be a path
        is_file = False
    if is_file and path.suffix == ".jsonl":
        return load_cases(path)
    if is_file:
        return [make_case(args.case_id or path.stem, path.read_text("utf-8"))]
    return [make_case(args.case_id or "inline", args.input)]


def render_record(rec: CaseRunRecord, out: TextIO) -> None:
    """Print the parsed reports of one run, in stage order, under the banner."""
    print(BANNER, file=out)
    print(f"\n# Case {rec.case_id} ({rec.mode.value}-agent)", file=out)
    sections = (
        ("Emergency Physician: diagnosis", rec.parsed.diagnosis, render_diagnosis),
        ("Pharmacist: medication review", rec.parsed.medication, render_medication),
        ("Triage Nurse: KTAS assessment", rec.parsed.triage, render_triage),
        ("ED Doctor in Charge: management decision", rec.parsed.management, render_management),
    )
    for title, report, render in sections:
        if report is not None:
            print(f"\n## {title}\n", file=out)
            print(render(report).rstrip(), file=out)
    for w in rec.warnings:
        print(f"\n[warning] {w}", file=out)
    if rec.error:
        print(f"\n[error] {rec.error}", file=out)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cases = _read_run_input(args)
    mode = _MODES[args.mode]
    backend = cfg.make_backend()
    try:
        records = run_batch(cases, _plan(cfg, mode), backend, cfg.make_tools(), cfg.parallelism)
    finally:
        backend.close()
    run_dir = make_run_dir(cfg.output_dir, args.run_id or f"run-{args.mode}", args.stable)
    write_transcripts(records, run_dir, args.stable)
    for rec in records:
        render_record(rec, sys.stdout)
    print(f"\ntranscripts: {run_dir / 'transcripts'}")
    failed = [r.case_id for r in records if not r.ok]
    if failed:
        _err(f"backend failure for {', '.join(failed)}")
        return EXIT_BACKEND
    return EXIT_OK


def _scores_for(args: argparse.Namespace, mode: RunMode):
    if args.scores is None:
        return None
    return load_score_tables(args.scores).get(mode.value)


def _run_and_evaluate(cfg: RunConfig, args: argparse.Namespace, cases: list[PatientCase],
                      mode: RunMode, run_dir: Path):
    records: list[CaseRunRecord] = []
    if cases:
        backend = cfg.make_backend()
        try:
            records = run_batch(cases, _plan(cfg, mode), backend, cfg.make_tools(), cfg.parallelism)
        finally:
            backend.close()
        write_transcripts(records, run_dir, args.stable)
    report = evaluate(records, cases, mode, _scores_for(args, mode))
    for case_id in report.failed_cases:
        rec = next(r for r in records if r.case_id == case_id)
        _err(f"warning: case {case_id} failed and is excluded: {rec.error}")
    return records, report


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cases = load_cases(args.cases)
    if not cases:
        _err(f"warning: {args.cases} contains no cases; writing empty tables")
    mode = _MODES[args.mode]
    run_dir = make_run_dir(cfg.output_dir, args.run_id or f"eval-{args.mode}", args.stable)
    records, report = _run_and_evaluate(cfg, args, cases, mode, run_dir)
    paths = write_eval_outputs(report, run_dir, figures=not args.no_figures)
    sys.stdout.write(report.to_markdown())
    print()
    for p in paths.values():
        print(f"wrote {p}")
    if records and all(not r.ok for r in records):
        return EXIT_BACKEND
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cases = load_cases(args.cases)
    if not cases:
        _err(f"warning: {args.cases} contains no cases; writing empty tables")
    run_dir = make_run_dir(cfg.output_dir, args.run_id or "compare", args.stable)
    reports, all_records = {}, []
    for name in ("multi", "single"):
        mode = _MODES[name]
        records, report = _run_and_evaluate(cfg, args, cases, mode, run_dir)
        write_eval_outputs(report, run_dir / name, figures=not args.no_figures)
        reports[name] = report
        all_records += records
    comparison = compare_modes(reports["multi"], reports["single"])
    paths = write_comparison_outputs(comparison, reports["multi"], reports["single"], run_dir,
                                     figures=not args.no_figures)
    sys.stdout.write(comparison.to_markdown())
    print()
    for p in paths.values():
        print(f"wrote {p}")
    if all_records and all(not r.ok for r in all_records):
        return EXIT_BACKEND
    return EXIT_OK


def _roles(arg: str) -> list[AgentRole]:
    return list(ROLE_ORDER) if arg.strip().lower() == "all" else [AgentRole.parse(arg)]


def cmd_prompts(args: argparse.Namespace) -> int:
    try:
        roles = _roles(args.role)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if not args.digest:
        sys.stdout.write(dump_assets(roles))
        return EXIT_OK
    man = manifest()
    entries = [e for r in roles for e in man["roles"][r.value].values()]
    if args.role.strip().lower() == "all":
        entries.append(man["guide"])
    bad = 0
    for e in entries:
        actual = asset_digest(e["file"])
        status = "OK" if actual == e["sha256"] else "MISMATCH"
        bad += status != "OK"
        print(f"{actual}  {e['file']}  {status}")
    return EXIT_BACKEND if bad else EXIT_OK


def cmd_rxnorm(args: argparse.Namespace) -> int:
    kwargs = {}
    if args.base_url:
        kwargs["base_url"] = args.base_url
    transport = RecordedTransport(args.fixtures) if args.fixtures else None
    client = RxNormClient(transport=transport, **kwargs)
    try:
        concept = client.find_rxcui(args.name)
    except NotFound:
        print("NotFound")
        return EXIT_OK
    except BackendError as exc:
        _err(str(exc))
        return EXIT_BACKEND
    finally:
        client.close()
    print(f"{concept.rxcui}\t{concept.name}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        _err(f"{getattr(args, 'cases', getattr(args, 'input', ''))}: {exc}")
        return EXIT_USAGE
    except BackendError as exc:
        _err(str(exc))
        return EXIT_BACKEND
    except (CdssError, ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
