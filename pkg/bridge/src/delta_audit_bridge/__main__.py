"""CLI: ``serve`` runs a scoring server on stdin/stdout, ``export-dataset``
dumps a named dataset to CSV for the audit client."""

from __future__ import annotations

import argparse
import sys

from .datasets import export_csv
from .server import build_server


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delta-audit-bridge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="serve one fitted estimator over the scoring protocol")
    p_serve.add_argument("--family", required=True,
                         help="svc | rf | gb | logreg | knn | linear")
    p_serve.add_argument("--params", default="", help="estimator hyperparameters as JSON")
    p_serve.add_argument("--dataset", default="", help="named dataset or CSV path")
    p_serve.add_argument("--label-column", default="label")
    p_serve.add_argument("--role", choices=("A", "B"), default="A")
    p_serve.add_argument("--scaler-sidecar", default="",
                         help="role A writes scaler parameters here, role B loads them")
    p_serve.add_argument("--split-seed", type=int, default=42)
    p_serve.add_argument("--test-fraction", type=float, default=0.2)
    p_serve.add_argument("--sidecar-wait", type=float, default=10.0)
    p_serve.add_argument("--tag", default="", help="override the model tag")

    p_export = sub.add_parser("export-dataset", help="write a named dataset to CSV")
    p_export.add_argument("name")
    p_export.add_argument("out")
    p_export.add_argument("--label-column", default="label")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        try:
            server = build_server(args)
        except Exception as exc:
            print(f"bridge startup failed: {exc}", file=sys.stderr)
            return 1
        return server.run()
    rows = export_csv(args.name, args.out, args.label_column)
    print(f"wrote {rows} rows to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
