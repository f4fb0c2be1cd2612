"""Command line entry point: ``vsspipe <command> ...``.

Exit status: 0 on success, 1 when a phase, run or check fails, 2 on usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from dataclasses import replace
from pathlib import Path

from . import __version__
from .broker import Broker, BrokerClient, BrokerServer, serve
from .catalog import CatalogError, flatten_lines, load_catalog_file, write_delimited
from .clock import VirtualClock, WallClock
from .cpds import CpdsConfig, SutError, SutHandle, run_sut
from .evaluation import format_table, load_gold, pass_at_k
from .gateway import Gateway, GatewayError, RecordStore, ReplayBackend
from .gherkin import GherkinSyntaxError, parse_feature
from .pipeline import PipelineError, ReviewError
from .project import ConfigError, PhaseError, ProjectConfig, Workspace, mapping_table, split_blocks
from .runner import BindError, StepsFormatError, bind, execute, load_steps_file, render_report

log = logging.getLogger("vsspipe")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(args) -> ProjectConfig:
    if args.config:
        return ProjectConfig.load(args.config, args.out)
    return ProjectConfig.fixture(args.out or "vsspipe-out")


def _workspace(args) -> Workspace:
    return Workspace(_config(args), force=args.force)


def _print_phase(res) -> None:
    print(f"[{res.phase}] wrote {len(res.written)} file(s)"
          + (f", kept {len(res.kept)} approved file(s) (use --force to overwrite)" if res.kept else ""))
    for p in res.problems:
        print(f"[{res.phase}] {p}")
    if res.summary:
        print(f"[{res.phase}] " + json.dumps(res.summary, sort_keys=True))


# -- catalog

def cmd_catalog_flatten(args) -> int:
    path = args.catalog or _config(args).catalog
    cat = load_catalog_file(path)
    if args.format == "csv":
        if not args.output:
            raise UsageError("--format csv needs --output")
        write_delimited(cat, args.output)
    else:
        text = flatten_lines(cat) + "\n"
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    print(f"{len(cat)} signals", file=sys.stderr)
    return EXIT_OK


# -- phases

def cmd_gen_gherkin(args) -> int:
    res = _workspace(args).gen_gherkin(args.auto_approve)
    _print_phase(res)
    for rid in res.summary.get("needs_review", []):
        print(f"needs review: gherkin/{rid}.feature (see gherkin/{rid}.diagnostics.txt)")
    return EXIT_OK


def cmd_map_signals(args) -> int:
    _print_phase(_workspace(args).map_signals(args.auto_approve))
    return EXIT_OK


def cmd_refine(args) -> int:
    _print_phase(_workspace(args).refine(args.auto_approve))
    return EXIT_OK


def cmd_gen_code(args) -> int:
    res = _workspace(args).gen_code(args.auto_approve)
    _print_phase(res)
    return EXIT_FAIL if res.problems else EXIT_OK


def cmd_pipeline_all(args) -> int:
    ws = _workspace(args)
    results = []
    try:
        results.append(ws.gen_gherkin(args.auto_approve))
        for phase in (ws.map_signals, ws.refine, ws.gen_code):
            results.append(phase(args.auto_approve))
        results.append(ws.evaluate())
    finally:
        for res in results:
            _print_phase(res)
    print(ws.read("eval/summary.txt"), end="")
    ev = results[-1].summary
    return EXIT_OK if ev["bundles"] and ev["bundles_correct"] == ev["bundles"] else EXIT_FAIL


# -- review

def _rel(ws: Workspace, artifact: str) -> str:
    p = Path(artifact)
    if p.is_absolute():
        try:
            return p.resolve().relative_to(ws.out.resolve()).as_posix()
        except ValueError:
            raise UsageError(f"{artifact} is not inside {ws.out}") from None
    if artifact.startswith("Req_") and "/" not in artifact:
        return f"gherkin/{artifact}.feature"
    return p.as_posix()


def cmd_review_status(args) -> int:
    ws = _workspace(args)
    for rel in sorted(ws.manifest.entries):
        e = ws.manifest.entries[rel]
        stale = "" if ws.approved(rel) or not ws.manifest.passes(rel) else " (changed since review)"
        print(f"{e['status']:<9} {rel}{stale}" + (f"  # {e['note']}" if e.get("note") else ""))
    counts = ws.manifest.counts()
    print(", ".join(f"{n} {s}" for s, n in counts.items()))
    return EXIT_OK


def cmd_review_approve(args) -> int:
    ws = _workspace(args)
    for artifact in args.artifacts:
        rel = _rel(ws, artifact)
        ws.approve(rel, args.note or "")
        print(f"{ws.manifest.status(rel)}: {rel}")
    return EXIT_OK


def cmd_review_edit(args) -> int:
    ws = _workspace(args)
    if args.blocks:
        edits = split_blocks(Path(args.blocks).read_text(encoding="utf-8"))
        if not edits:
            raise UsageError(f"{args.blocks} holds no '=== <id>' blocks")
        for rid, text in edits.items():
            rel = _rel(ws, rid)
            ws.edit(rel, text, args.note or "")
            print(f"edited: {rel}")
        return EXIT_OK
    if len(args.artifacts) != 1:
        raise UsageError("review edit takes exactly one artifact (or --blocks FILE)")
    rel = _rel(ws, args.artifacts[0])
    text = Path(args.source).read_text(encoding="utf-8") if args.source else None
    ws.edit(rel, text, args.note or "")
    print(f"edited: {rel}")
    return EXIT_OK


def cmd_review_reject(args) -> int:
    ws = _workspace(args)
    for artifact in args.artifacts:
        rel = _rel(ws, artifact)
        ws.reject(rel, args.note or "")
        print(f"rejected: {rel}")
    return EXIT_OK


# -- services

def _cpds_config(args) -> CpdsConfig:
    base = _config(args).cpds if args.config else CpdsConfig()
    if args.time_scale is not None:
        base = replace(base, time_scale=args.time_scale)
    return base


def _wait_for_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    while not stop.wait(0.5):
        pass


def cmd_broker_serve(args) -> int:
    cat = load_catalog_file(args.catalog or _config(args).catalog)
    server = serve(Broker(cat, WallClock()), args.listen)
    host, port = server.address
    print(f"broker listening on {host}:{port} ({len(cat)} signals)", flush=True)
    try:
        _wait_for_signal()
    finally:
        server.shutdown()
    return EXIT_OK


def cmd_sut_run(args) -> int:
    config = _cpds_config(args)
    handle = run_sut(args.broker, config, VirtualClock(), echo=lambda line: print(line, flush=True))
    handle.run_free()
    print(f"CPDS running against {args.broker} (time scale {config.time_scale:g})", flush=True)
    try:
        _wait_for_signal()
    finally:
        handle.stop()
    return EXIT_OK


def cmd_run(args) -> int:
    feature = parse_feature(Path(args.feature).read_text(encoding="utf-8"))
    bindings = load_steps_file(args.steps)
    env = {}
    env_path = Path(args.steps).with_name(Path(args.steps).name.replace(".steps.jsonl", ".environment.json"))
    if env_path != Path(args.steps) and env_path.exists():
        env = json.loads(env_path.read_text(encoding="utf-8"))
    strict = env.get("strict", True) if args.strict is None else args.strict
    time_scale = args.time_scale or float(env.get("time_scale", 1000.0))
    plan = bind(feature, bindings, strict)

    if not args.spawn:
        if not args.broker:
            raise UsageError("run needs --broker ADDR or --spawn")
        client = BrokerClient.connect(args.broker)
        try:
            report = execute(plan, client, None, time_scale)
        finally:
            client.close()
        print(render_report(report), end="")
        return EXIT_OK if report.ok else EXIT_FAIL

    catalog = load_catalog_file(args.catalog or _config(args).catalog)
    clock = VirtualClock()
    broker = Broker(catalog, clock)
    server = BrokerServer(broker).start()
    host, port = server.address
    address = f"{host}:{port}"
    cpds = _cpds_config(args) if args.config or args.time_scale else CpdsConfig()
    sut = runner_client = None
    try:
        sut = SutHandle(BrokerClient.connect(address), cpds, clock).start()
        runner_client = BrokerClient.connect(address)
        report = execute(plan, runner_client, sut, time_scale)
    finally:
        if sut is not None:
            sut.stop()
            sut.broker.close()
        if runner_client is not None:
            runner_client.close()
        server.shutdown()
    print(render_report(report), end="")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for t in broker.trace:
                fh.write(json.dumps({"seq": t.seq, "t": t.timestamp, "path": t.path,
                                     "previous": t.previous, "value": t.value}) + "\n")
    return EXIT_OK if report.ok else EXIT_FAIL


# -- eval

def cmd_eval_mapping(args) -> int:
    cfg = _config(args)
    runs_path = Path(args.runs) if args.runs else cfg.mapping_runs
    records = Path(args.records) if args.records else cfg.records
    if runs_path is None or records is None or cfg.gold is None:
        raise UsageError("eval mapping needs mapping runs, recorded responses and gold mappings")
    catalog = load_catalog_file(cfg.catalog)
    runs = json.loads(runs_path.read_text(encoding="utf-8"))
    rows = mapping_table(runs, catalog, load_gold(cfg.gold), Gateway(ReplayBackend(RecordStore(records).load())),
                         runs_path.parent, cfg.decoding.selection_cap)
    print(format_table(rows, ["run", "provider", "candidates", "correct", "false_positives"]))
    out = Path(args.json) if args.json else cfg.output / "eval" / "mapping_table.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    mismatched = [r["run"] for r in rows if r.get("expected") and
                  (f"{r['expected']['correct']}/{r['expected']['expected']}" != r["correct"]
                   or r["expected"]["false_positives"] != r["false_positives"])]
    for run in mismatched:
        print(f"differs from expected: {run}", file=sys.stderr)
    return EXIT_FAIL if mismatched else EXIT_OK


def cmd_eval_passk(args) -> int:
    if args.cases:
        cases = json.loads(Path(args.cases).read_text(encoding="utf-8"))
        bad = 0
        for case in cases:
            v = pass_at_k(case["n"], case["c"], case["k"])
            ok = "expected" not in case or abs(v - case["expected"]) <= 1e-12
            bad += not ok
            print(f"n={case['n']} c={case['c']} k={case['k']}  pass@k={v:.6g}" + ("" if ok else "  MISMATCH"))
        return EXIT_FAIL if bad else EXIT_OK
    if None in (args.n, args.c, args.k):
        raise UsageError("eval passk needs --n, --c and --k (or --cases FILE)")
    if not (0 <= args.c <= args.n and 1 <= args.k <= args.n):
        raise UsageError("need 0 <= c <= n and 1 <= k <= n")
    print(f"{pass_at_k(args.n, args.c, args.k):g}")
    return EXIT_OK


# -- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="project config (YAML); defaults to the bundled CPDS project")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--force", action="store_true", help="overwrite approved artifacts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vsspipe",
                                description="Requirements to executable vehicle tests over a VSS catalog.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def group(name, help_):
        g = sub.add_parser(name, help=help_)
        s = g.add_subparsers(dest="action", metavar="action")
        s.required = True
        return s

    def leaf(parent, name, func, help_):
        q = parent.add_parser(name, help=help_, parents=[common])
        q.set_defaults(func=func)
        return q

    cat = group("catalog", "catalog tools")
    q = leaf(cat, "flatten", cmd_catalog_flatten, "print one 'path,kind,datatype' line per signal")
    q.add_argument("--catalog", help="VSS JSON file (default: from config)")
    q.add_argument("--format", choices=("lines", "csv"), default="lines")
    q.add_argument("-o", "--output")

    gen = group("gen", "generation phases")
    leaf(gen, "gherkin", cmd_gen_gherkin, "draft one feature per requirement").add_argument(
        "--auto-approve", action="store_true", help="approve drafts that parse")
    leaf(gen, "code", cmd_gen_code, "emit step bindings for approved enriched features").add_argument(
        "--auto-approve", action="store_true")

    mp = group("map", "signal mapping")
    leaf(mp, "signals", cmd_map_signals, "map approved drafts onto catalog signals").add_argument(
        "--auto-approve", action="store_true")

    leaf(sub, "refine", cmd_refine, "inject mapped VSS paths into approved drafts").add_argument(
        "--auto-approve", action="store_true")

    rv = group("review", "review gate")
    leaf(rv, "status", cmd_review_status, "list artifacts and their review status")
    q = leaf(rv, "approve", cmd_review_approve, "approve artifacts as they are")
    q.add_argument("artifacts", nargs="+", help="path relative to the output dir, or a requirement id")
    q.add_argument("--note")
    q = leaf(rv, "edit", cmd_review_edit, "record a reviewer edit (optionally replacing the content)")
    q.add_argument("artifacts", nargs="*")
    q.add_argument("--from", dest="source", help="file holding the new content")
    q.add_argument("--blocks", help="file of '=== <requirement id>' blocks to apply to Gherkin drafts")
    q.add_argument("--note")
    q = leaf(rv, "reject", cmd_review_reject, "reject artifacts")
    q.add_argument("artifacts", nargs="+")
    q.add_argument("--note")

    br = group("broker", "signal broker")
    q = leaf(br, "serve", cmd_broker_serve, "serve the catalog over TCP")
    q.add_argument("--listen", default="127.0.0.1:55555")
    q.add_argument("--catalog")

    st = group("sut", "system under test")
    q = leaf(st, "run", cmd_sut_run, "run the CPDS against a broker")
    q.add_argument("--broker", required=True, help="host:port")
    q.add_argument("--time-scale", type=float, help="virtual seconds per wall second")

    q = leaf(sub, "run", cmd_run, "execute a feature with its steps artifact")
    q.add_argument("--feature", required=True)
    q.add_argument("--steps", required=True)
    q.add_argument("--broker", help="host:port of a running broker (SUT started separately)")
    q.add_argument("--spawn", action="store_true", help="start a private broker and SUT for this run")
    q.add_argument("--catalog", help="catalog for --spawn (default: from config)")
    q.add_argument("--strict", dest="strict", action="store_true", default=None)
    q.add_argument("--no-strict", dest="strict", action="store_false")
    q.add_argument("--time-scale", type=float)
    q.add_argument("--trace", help="write the broker trace as JSON lines (--spawn only)")

    ev = group("eval", "evaluation")
    q = leaf(ev, "mapping", cmd_eval_mapping, "replay recorded mapping runs and score them")
    q.add_argument("--runs")
    q.add_argument("--records")
    q.add_argument("--json", help="write the table here (default: <out>/eval/mapping_table.json)")
    q = leaf(ev, "passk", cmd_eval_passk, "pass@k estimate")
    q.add_argument("--n", type=int)
    q.add_argument("--c", type=int)
    q.add_argument("--k", type=int)
    q.add_argument("--cases", help="JSON list of {n, c, k[, expected]}")

    pl = group("pipeline", "all phases")
    leaf(pl, "all", cmd_pipeline_all, "run every phase, then execute and judge the bundles").add_argument(
        "--auto-approve", action="store_true", help="approve every artifact that passes its checks")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"vsspipe: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PhaseError, ReviewError, PipelineError, GatewayError, SutError, CatalogError, GherkinSyntaxError,
            StepsFormatError, BindError, OSError, ValueError) as exc:
        print(f"vsspipe: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
