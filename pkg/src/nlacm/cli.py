"""Command-line entry point: ``nlacm <command> ...``.

Exit codes: 0 success or compliant, 1 violations found, 2 pipeline error.
Every command runs against replay fixtures unless ``--live`` is given.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .model import ExtendedAccessMatrix, load_hierarchy, load_matrix, save_matrix

log = logging.getLogger("nlacm")

DATA = Path(__file__).resolve().parent / "data"
EXIT_OK, EXIT_VIOLATIONS, EXIT_ERROR = 0, 1, 2


class CliError(RuntimeError):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n"


def _fmt(path: str) -> str:
    return "csv" if path.lower().endswith(".csv") else "json"


def _matrix(path: str):
    return load_matrix(Path(path), _fmt(path))


def _schema(path: str | None):
    from .schema import load_schema

    if path is None:
        raise CliError("--schema is required")
    return load_schema(path)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.parallelism is not None:
        cfg.gateway.parallelism = args.parallelism
    return cfg.validate()


def _gateway(args, cfg: RunConfig, default_fixtures: Path | None = None):
    fixtures = list(args.fixtures or [])
    if not fixtures and not args.live and default_fixtures is not None and default_fixtures.exists():
        fixtures = [str(default_fixtures)]
    return cfg.make_gateway(fixtures, args.live)


def _target(spec: str, schema=None):
    from .catalog import open_target

    return open_target(spec, schema)


def _resolve_data(arg: str, kind: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    bundled = DATA / kind / arg if kind else DATA / arg
    if bundled.exists():
        return bundled
    raise CliError(f"no such {kind or 'path'}: {arg}")


# -- commands ------------------------------------------------------------------


def cmd_synthesize(args) -> int:
    from .catalog import SandboxDatabase
    from .hierarchy import synthesize_enlacm
    from .synthesizer import synthesize

    cfg = _config(args)
    matrix = _matrix(args.matrix)
    schema = _schema(args.schema)
    gw = _gateway(args, cfg)
    out = Path(args.out)
    with SandboxDatabase.from_schema(schema) as scratch:
        if isinstance(matrix, ExtendedAccessMatrix):
            hs = synthesize_enlacm(matrix, schema, gw, scratch)
            script, report = hs.script, hs.synthesis.report
            extra = {"inheritance_edges": [list(e) for e in hs.edges], "flags": list(hs.flags)}
        else:
            syn = synthesize(matrix, schema, gw, scratch)
            script, report, extra = syn.script, syn.report, {}
    _write(out / "script.sql", script.render())
    _write(out / "synthesis_report.json", _dump({**report.to_dict(), **extra}))
    print(f"{len(script)} statements -> {out / 'script.sql'}")
    return EXIT_OK if report.ok else EXIT_VIOLATIONS


def _apply(target, scripts) -> None:
    for path in scripts or []:
        for r in target.execute_script(Path(path).read_text(encoding="utf-8")):
            if not r.ok:
                log.warning("statement %d failed: %s", r.index, r.error)


def cmd_generate(args) -> int:
    schema = _schema(args.schema) if args.schema else None
    target = _target(args.target, schema)
    _apply(target, args.apply)
    acm = target.generate_enlacm() if args.hierarchy else target.generate_acm()
    text = save_matrix(acm, format=_fmt(args.out))
    _write(Path(args.out), text)
    print(f"{len(acm.subjects) if not args.hierarchy else len(acm.matrix.subjects)} roles -> {args.out}")
    return EXIT_OK


def cmd_diff(args) -> int:
    from .differencer import diff

    cfg = _config(args)
    gw = _gateway(args, cfg)
    m1 = _matrix(args.policy)
    sandbox = None
    if args.implementation:
        m2 = _matrix(args.implementation)
    elif args.target:
        schema = _schema(args.schema) if args.schema else None
        sandbox = _target(args.target, schema)
        _apply(sandbox, args.apply)
        m2 = sandbox.generate_enlacm() if isinstance(m1, ExtendedAccessMatrix) else sandbox.generate_acm()
    else:
        raise CliError("give an implementation matrix or --target")
    report = diff(m1, m2, gw, sandbox)
    out = Path(args.out)
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", report.render_text())
    sys.stdout.write(report.render_text())
    return EXIT_OK if report.empty else EXIT_VIOLATIONS


def cmd_join(args) -> int:
    from .hierarchy import audit_matches, bipartite_match, build_enlacm

    cfg = _config(args)
    gw = _gateway(args, cfg)
    m = _matrix(args.matrix)
    m = m.matrix if isinstance(m, ExtendedAccessMatrix) else m
    rhl = load_hierarchy(Path(args.hierarchy), _fmt(args.hierarchy))
    m_roles = [s.raw for s in m.subjects]
    l_roles = list(dict.fromkeys(r.role for r in rhl.rows))
    k = bipartite_match(m_roles, l_roles, gw)
    if k.error:
        raise CliError(f"matching stopped at role {k.cursor}: {k.error}")
    findings = audit_matches(k, m_roles, l_roles, gw)
    out = Path(args.out)
    _write(out / "enlacm.json", save_matrix(build_enlacm(m, rhl, k)))
    _write(
        out / "findings.json",
        _dump({"pairs": [p.__dict__ for p in k.pairs], "suspect": findings.to_list()}),
    )
    print(f"{len(k.pairs)} matched pairs, {len(findings.suspect_pairs)} suspect")
    return EXIT_OK if not findings.suspect_pairs else EXIT_VIOLATIONS


def cmd_deploi(args) -> int:
    from .deploi import load_bundle, render_table, run_deploi
    from .schema import load_schema

    cfg = _config(args)
    root = _resolve_data(args.bundle, "bundles")
    bundle = load_bundle(root)
    schema = load_schema(args.schema) if args.schema else load_schema(root / "schema.json")
    gw = _gateway(args, cfg, root / "fixtures.ndjson")
    target = _target(args.target or cfg.catalog.target, schema)
    run = run_deploi(
        bundle,
        schema,
        gw,
        target,
        use_llm_dependencies=args.llm_dependencies,
        feedback_rounds=cfg.deploi.feedback_rounds,
        hooks=cfg.deploi.hooks if args.config else None,
    )
    out = Path(args.out)
    _write(out / "code.sql", run.code())
    _write(out / "run.json", _dump(run.to_dict()))
    for label, table in run.implementation.items():
        _write(out / "implementation" / f"{label.replace(' ', '_')}.txt", render_table(table))
    print(run.graph.render().rstrip("\n"))
    for label, rep in run.reports.items():
        print(f"{label}: {'compliant' if rep.empty else 'violations'}")
    return EXIT_OK if run.compliant else EXIT_VIOLATIONS


def cmd_bench_build(args) -> int:
    from .benchgen import load_suite, suite_triples, synthesis_triple

    suite = load_suite(_resolve_data(args.suite, ""))
    out = Path(args.out)
    for t in suite_triples(suite, args.seed) + [synthesis_triple(suite, args.seed)]:
        name = t.perturbation.label if len(t.view_names) == len(suite.diff_views) else "accuracy"
        d = out / name
        _write(d / "base.json", save_matrix(t.base))
        _write(d / "perturbed.json", save_matrix(t.perturbed))
        _write(d / "sql.json", save_matrix(t.sql))
        _write(d / "truth.sql", "\n".join(t.truth_script()) + "\n")
    print(f"{len(suite.perturbations) + 1} triples -> {out}")
    return EXIT_OK


def cmd_bench_run(args) -> int:
    from .benchgen import load_suite, run_suite

    cfg = _config(args)
    root = _resolve_data(args.suite, "")
    suite = load_suite(root)
    gw = _gateway(args, cfg, root / "fixtures.ndjson")
    result = run_suite(suite, gw, args.seed)
    try:
        out = Path(args.out)
        for label, script in result.scripts().items():
            _write(out / "scripts" / f"{label}.sql", script)
        _write(out / "reports.json", _dump(result.to_dict()))
        _write(out / "scorecards.csv", result.scorecards_csv())
        if result.synthesis:
            _write(out / "accuracy.txt", result.synthesis.render())
            sys.stdout.write(result.synthesis.render())
    finally:
        result.close()
    return EXIT_OK


def cmd_bench_score(args) -> int:
    import csv
    import io

    from .benchgen import load_confusion, total_f1_errors

    records = load_confusion(_resolve_data(args.confusion, ""))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["comparison", "metric", "method", "tp", "fp", "fn", "f1_error"])
    for (comp, metric, method), card in sorted(total_f1_errors(records).items()):
        w.writerow([comp, metric, method, card.tp, card.fp, card.fn, f"{float(card.f1_error):.3f}"])
    if args.out:
        _write(Path(args.out), buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_sandbox_init(args) -> int:
    from .catalog import SandboxDatabase

    schema = _schema(args.schema)
    with SandboxDatabase.from_schema(schema, args.db):
        pass
    print(f"seeded {len(schema.tables)} tables -> {args.db}")
    return EXIT_OK


def cmd_sandbox_exec(args) -> int:
    from .catalog import SandboxDatabase

    failed = 0
    with SandboxDatabase(args.db) as db:
        for r in db.execute_script(Path(args.script).read_text(encoding="utf-8")):
            status = "ok" if r.ok else f"error: {r.error}"
            print(f"[{r.index}] {status}")
            failed += not r.ok
    return EXIT_OK if not failed else EXIT_ERROR


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--fixtures", action="append", help="replay fixture file (repeatable)")
    common.add_argument("--live", action="store_true", help="call the configured model endpoint")
    common.add_argument("--parallelism", type=int, help="concurrent model calls")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nlacm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", parents=[common], help="matrix + schema -> SQL script")
    p.add_argument("matrix")
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("generate", parents=[common], help="database catalog -> all-SQL matrix")
    p.add_argument("--target", required=True, help="sandbox:PATH or postgresql:// DSN")
    p.add_argument("--schema")
    p.add_argument("--apply", action="append", help="SQL script to run first (repeatable)")
    p.add_argument("--hierarchy", action="store_true", help="include role inheritance")
    p.add_argument("--out", required=True, help="matrix file (.json or .csv)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("diff", parents=[common], help="policy matrix vs implementation")
    p.add_argument("policy")
    p.add_argument("implementation", nargs="?")
    p.add_argument("--target")
    p.add_argument("--schema")
    p.add_argument("--apply", action="append")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("join", parents=[common], help="matrix + role hierarchy list -> extended matrix")
    p.add_argument("matrix")
    p.add_argument("hierarchy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("deploi", parents=[common], help="deploy and audit a policy bundle")
    p.add_argument("bundle", help="bundle directory or a bundled name such as 'retail'")
    p.add_argument("--target")
    p.add_argument("--schema")
    p.add_argument("--llm-dependencies", action="store_true", help="infer the execution graph with the model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_deploi)

    bench = sub.add_parser("bench", help="benchmark generation, runs and scoring")
    bsub = bench.add_subparsers(dest="bench_command", required=True)
    p = bsub.add_parser("build", parents=[common])
    p.add_argument("--suite", default="car_1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_build)
    p = bsub.add_parser("run", parents=[common])
    p.add_argument("--suite", default="car_1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench_run)
    p = bsub.add_parser("score", parents=[common])
    p.add_argument("confusion", nargs="?", default="recorded_confusion.json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_score)

    sandbox = sub.add_parser("sandbox", help="disposable database")
    ssub = sandbox.add_subparsers(dest="sandbox_command", required=True)
    p = ssub.add_parser("init", parents=[common])
    p.add_argument("--schema", required=True)
    p.add_argument("--db", required=True)
    p.set_defaults(func=cmd_sandbox_init)
    p = ssub.add_parser("exec", parents=[common])
    p.add_argument("--db", required=True)
    p.add_argument("script")
    p.set_defaults(func=cmd_sandbox_exec)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # any pipeline failure maps to the error exit code
        log.debug("pipeline failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
