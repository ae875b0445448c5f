"""Command-line driver.

Subcommands: ``audit`` (one config, report files, CI exit code), ``batch``
(many configs plus per-family aggregates), ``sanity`` (identity audits for
every built-in family on every embedded dataset), ``presets`` (list the
shipped A/B catalogs).

Exit codes: 0 benign/behaviour-aligned, 1 execution error, 2 sanity check
failure, 3 risky verdict, 4 unclassified verdict. ``--no-gate`` downgrades
a risky exit to 0 with a warning.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import data as data_mod
from . import presets as presets_mod
from .config import ConfigError, config_to_dict, load_config
from .learners import LearnerSpec
from .pipeline import (
    AuditConfig,
    AuditError,
    DatasetSource,
    ModelRef,
    VERDICT_BEHAVIOUR_ALIGNED,
    VERDICT_BENIGN,
    VERDICT_RISKY,
    run_audit,
    run_batch,
    write_batch_files,
    write_report_files,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SANITY_FAIL = 2
EXIT_RISKY = 3
EXIT_UNCLASSIFIED = 4

SEED_ENV_VAR = "DELTA_AUDIT_SEED"

# test hook: applied to each sanity report before its checks run
SANITY_FAULT_HOOK = None

_SANITY_SPECS = {
    "logreg": LearnerSpec("logreg", {"l2_strength": 1.0, "max_iterations": 300}),
    "knn": LearnerSpec("knn", {"k": 5}),
    "forest": LearnerSpec("forest", {"n_trees": 20, "max_depth": 4, "seed": 7}),
    "gbstumps": LearnerSpec("gbstumps", {"n_rounds": 30}),
}

_SANITY_LIMITS = {"mag_l1": 1e-9, "dce": 1e-9, "jsd": 1e-9}


def _apply_seed_env(cfg: AuditConfig) -> AuditConfig:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return cfg
    try:
        return replace(cfg, seed=int(raw))
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR}={raw!r} is not an integer") from None


def _verdict_exit(verdict: str, no_gate: bool) -> int:
    if verdict in (VERDICT_BENIGN, VERDICT_BEHAVIOUR_ALIGNED):
        return EXIT_OK
    if verdict == VERDICT_RISKY:
        if no_gate:
            print("warning: risky verdict suppressed by --no-gate", file=sys.stderr)
            return EXIT_OK
        return EXIT_RISKY
    return EXIT_UNCLASSIFIED


def cmd_audit(args) -> int:
    try:
        cfg = _apply_seed_env(load_config(args.config, args.set or ()))
        report = run_audit(cfg, config_echo=config_to_dict(cfg))
        paths = write_report_files(report, args.out, overwrite=args.force)
    except (ConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except AuditError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{report.name}: verdict={report.verdict} mag_l1={report.metrics.mag_l1:.6g} "
          f"dce={report.metrics.dce:.6g} bac={report.metrics.bac} jsd={report.metrics.jsd:.6g}")
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.verbose:
        print(f"report: {paths['report']}")
    return _verdict_exit(report.verdict, args.no_gate)


def _collect_configs(pattern: str) -> list[Path]:
    path = Path(pattern)
    if path.is_dir():
        return sorted(path.glob("*.ini")) + sorted(path.glob("*.cfg"))
    return [Path(p) for p in sorted(glob.glob(pattern))]


def cmd_batch(args) -> int:
    paths = _collect_configs(args.configs)
    if not paths:
        print(f"error: no config files match {args.configs!r}", file=sys.stderr)
        return EXIT_ERROR
    try:
        configs = [_apply_seed_env(load_config(p)) for p in paths]
        echoes = [config_to_dict(c) for c in configs]
        result = run_batch(configs, config_echoes=echoes)
        out_paths = write_batch_files(result, args.out, overwrite=args.force)
        out_root = Path(args.out)
        for report in result.reports:
            write_report_files(report, out_root / report.name, overwrite=args.force)
    except (ConfigError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for report in result.reports:
        print(f"{report.name}: verdict={report.verdict} mag_l1={report.metrics.mag_l1:.6g}")
    for failure in result.failures:
        print(f"failed: {failure.name} at stage {failure.stage} ({failure.kind}): {failure.message}",
              file=sys.stderr)
    if args.verbose:
        print(f"aggregate: {out_paths['aggregate']}")
    if result.failures:
        return EXIT_ERROR
    verdicts = {r.verdict for r in result.reports}
    if VERDICT_RISKY in verdicts:
        return _verdict_exit(VERDICT_RISKY, args.no_gate)
    if verdicts - {VERDICT_BENIGN, VERDICT_BEHAVIOUR_ALIGNED}:
        return EXIT_UNCLASSIFIED
    return EXIT_OK


def cmd_sanity(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sanity_path = out / "sanity.csv"
    if sanity_path.exists() and not args.force:
        print(f"error: refusing to overwrite {sanity_path}; pass --force", file=sys.stderr)
        return EXIT_ERROR
    rows = ["family,dataset,mag_l1,dce,rank_overlap10,jsd,passed,failing_metrics"]
    failures = []
    for family, spec in _SANITY_SPECS.items():
        for ds_name in data_mod.EMBEDDED_BUILDERS:
            cfg = AuditConfig(
                name=f"sanity-{family}-{ds_name}",
                family=family,
                dataset=DatasetSource(kind="embedded", name=ds_name),
                model_a=ModelRef(kind="builtin", spec=spec),
                model_b=ModelRef(kind="builtin", spec=spec),
            )
            try:
                report = run_audit(cfg)
            except AuditError as exc:
                print(f"error ({exc.kind}): {exc}", file=sys.stderr)
                return EXIT_ERROR
            if SANITY_FAULT_HOOK is not None:
                report = SANITY_FAULT_HOOK(report)
            m = report.metrics
            failing = [name for name, limit in _SANITY_LIMITS.items() if getattr(m, name) > limit]
            if m.rank_overlap10 != 1.0:
                failing.append("rank_overlap10")
            passed = not failing
            rows.append(
                f"{family},{ds_name},{m.mag_l1!r},{m.dce!r},{m.rank_overlap10!r},{m.jsd!r},"
                f"{int(passed)},{'|'.join(failing)}"
            )
            status = "ok" if passed else f"FAIL ({' '.join(failing)})"
            print(f"sanity {family} on {ds_name}: {status}")
            if failing:
                failures.append((family, ds_name, failing))
    sanity_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    if failures:
        for family, ds_name, failing in failures:
            print(f"sanity failure: {family} on {ds_name}: {', '.join(failing)}", file=sys.stderr)
        return EXIT_SANITY_FAIL
    return EXIT_OK


def cmd_presets(args) -> int:
    entries = [
        {"name": p.name, "family": p.family, "kind": p.kind, "knobs": p.knobs}
        for p in presets_mod.PRESETS.values()
    ]
    if args.json:
        print(json.dumps(entries, indent=2))
        return EXIT_OK
    width = max(len(e["name"]) for e in entries)
    for e in entries:
        print(f"{e['name']:<{width}}  {e['kind']:<15}  {e['knobs']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delta-audit",
                                     description="Audit what changed between two model versions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_audit = sub.add_parser("audit", help="run one audit config and gate on the verdict")
    p_audit.add_argument("--config", required=True)
    p_audit.add_argument("--out", required=True)
    p_audit.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p_audit.add_argument("--no-gate", action="store_true", help="risky verdict exits 0 with a warning")
    p_audit.add_argument("--force", action="store_true", help="overwrite existing output files")
    p_audit.add_argument("-v", "--verbose", action="store_true")
    p_audit.set_defaults(func=cmd_audit)

    p_batch = sub.add_parser("batch", help="run every config in a directory or glob")
    p_batch.add_argument("--configs", required=True, help="directory or glob of config files")
    p_batch.add_argument("--out", required=True)
    p_batch.add_argument("--no-gate", action="store_true")
    p_batch.add_argument("--force", action="store_true")
    p_batch.add_argument("-v", "--verbose", action="store_true")
    p_batch.set_defaults(func=cmd_batch)

    p_sanity = sub.add_parser("sanity", help="identity audits: every family on every embedded dataset")
    p_sanity.add_argument("--out", required=True)
    p_sanity.add_argument("--force", action="store_true")
    p_sanity.set_defaults(func=cmd_sanity)

    p_presets = sub.add_parser("presets", help="list shipped A/B presets")
    p_presets.add_argument("--json", action="store_true")
    p_presets.set_defaults(func=cmd_presets)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
