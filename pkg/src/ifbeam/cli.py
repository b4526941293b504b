"""Command-line entry point ``ifbeam``.

Every command prints JSON on stdout. Failures print one JSON error line on
stderr and exit with status 1.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__


def _cmd_run(args):
    from .harness import ExperimentSpec, emit_results, run_experiment
    with open(args.spec, encoding="utf-8") as fh:
        spec = ExperimentSpec.from_yaml(fh.read())
    record = run_experiment(spec)
    out = args.output or f"{spec.name}.{'csv' if args.format == 'csv' else 'jsonl'}"
    emit_results(record, out, args.format)
    errors = {c.scheme: c.error for c in record.cells if c.error}
    return {"output": out, "cells": len(record.cells), "scheme_errors": errors}


def _cmd_validate(args):
    from .harness import read_results, validate_record
    record = read_results(args.results)
    problems = validate_record(record)
    if problems:
        raise ValueError("; ".join(problems))
    return {"ok": True, "cells": len(record.cells)}


def _cmd_codebook(args):
    from .quantization import Codebook, RatePdfParams, train_lloyd_max
    if args.action == "show":
        if not args.file:
            raise ValueError("codebook show needs a file")
        with open(args.file, encoding="utf-8") as fh:
            cb = Codebook.from_json(fh.read())
        return json.loads(cb.to_json())
    if None in (args.n_t, args.alpha, args.n_f) or (args.n0 is None) == (args.snr_db is None):
        raise ValueError("codebook train needs --n-t, --alpha, --n-f and one of --n0/--snr-db")
    n0 = args.n0 if args.n0 is not None else 10.0 ** (-args.snr_db / 10.0)
    cb = train_lloyd_max(RatePdfParams(args.n_t, args.alpha, n0), args.n_f)
    text = cb.to_json()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return json.loads(text)


def _cmd_account(args):
    from .protocol import accounting_table
    params = {}
    for item in args.params:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        params[key.strip()] = int(value)
    acc = accounting_table(args.scheme, **params)
    return {"scheme": acc.scheme, "params": params, "bits": acc.bits, "bytes": acc.bytes}


def _cmd_selftest(args):
    from .selftest import run_checks
    results = run_checks()
    failed = [r["name"] for r in results if not r["ok"]]
    if failed:
        raise AssertionError(f"self-test failed: {failed}")
    return {"ok": True, "checks": results}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 1


def build_parser():
    p = _Parser(prog="ifbeam", description="Multicell MISO selection lab")
    p.add_argument("--version", action="version", version=f"ifbeam {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec (YAML)")
    r.add_argument("spec")
    r.add_argument("-o", "--output")
    r.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="check a results file")
    v.add_argument("results")
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("codebook", help="train or show a Lloyd-Max codebook")
    c.add_argument("action", choices=("train", "show"))
    c.add_argument("file", nargs="?", help="codebook JSON (show)")
    c.add_argument("--n-t", type=int)
    c.add_argument("--alpha", type=int)
    c.add_argument("--n-f", type=int)
    c.add_argument("--n0", type=float)
    c.add_argument("--snr-db", type=float)
    c.add_argument("-o", "--output")
    c.set_defaults(func=_cmd_codebook)

    a = sub.add_parser("account", help="exchange size of a scheme in bits and bytes")
    a.add_argument("scheme", choices=("proposed", "wmmse", "global"))
    a.add_argument("params", nargs="*", help="key=value, e.g. n_t=4 n_c=7 n_f_total=35")
    a.set_defaults(func=_cmd_account)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        return _fail("UsageError", str(exc))
    try:
        out = args.func(args)
    except Exception as exc:
        return _fail(type(exc).__name__, str(exc))
    print(json.dumps(out, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
