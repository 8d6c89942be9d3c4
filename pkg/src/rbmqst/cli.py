"""Command-line interface.

    rbmqst gen-target    [--config spec.json] [--set key=value ...] [--out DIR]
    rbmqst train         [--config spec.json] [--set key=value ...]
                         [--target target.json] [--out DIR]
    rbmqst eval          --checkpoint FILE --target FILE [--out DIR]
    rbmqst gradcheck     [--sizes 2,1,2] [--seed N] [--h H]
    rbmqst bench-sampler [--config spec.json] [--set key=value ...] [--out DIR]

`--set` takes dotted paths into the experiment spec with JSON-literal values
(strings may be left unquoted), e.g. --set optimizer.epochs=500
--set sampler.proposal=Uniform --set sweep=10.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

import argparse
import json
import sys

from .errors import NumericalError, ValidationError
from .runner import (
    ExperimentSpec,
    cmd_bench_sampler,
    cmd_eval,
    cmd_gen_target,
    cmd_gradcheck,
    cmd_train,
)


def _parse_set(entry: str) -> tuple[list[str], object]:
    if "=" not in entry:
        raise ValidationError(f"--set expects key=value, got {entry!r}")
    key, raw = entry.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def _apply_set(doc: dict, path: list[str], value) -> None:
    node = doc
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValidationError(f"cannot descend into {'.'.join(path)}")
    node[path[-1]] = value


def load_spec(config_path, overrides) -> ExperimentSpec:
    doc = {}
    if config_path is not None:
        with open(config_path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
    for entry in overrides or ():
        path, value = _parse_set(entry)
        _apply_set(doc, path, value)
    return ExperimentSpec.from_dict(doc)


def _add_spec_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment spec JSON file")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a spec field (dotted path, JSON value)")
    parser.add_argument("--out", help="output directory (overrides spec.outdir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rbmqst",
                                     description="RBM quantum state tomography "
                                                 "with entropy maximization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-target", help="generate a random-circuit target file")
    _add_spec_args(p)

    p = sub.add_parser("train", help="train an RBM against a target file")
    _add_spec_args(p)
    p.add_argument("--target", help="target JSON (generated when omitted)")

    p = sub.add_parser("eval", help="evaluate a checkpoint against a target")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", help="write report.json here")

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    p.add_argument("--sizes", default="2,1,2", help="n_sys,n_env,m (default 2,1,2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)

    p = sub.add_parser("bench-sampler", help="benchmark every proposal kind")
    _add_spec_args(p)
    return parser


def _print(doc: dict) -> None:
    json.dump(doc, sys.stdout, sort_keys=True, indent=2, default=str)
    sys.stdout.write("\n")


def _run(args) -> int:
    if args.command == "gen-target":
        spec = load_spec(args.config, args.overrides)
        _print(cmd_gen_target(spec, args.out))
    elif args.command == "train":
        spec = load_spec(args.config, args.overrides)
        _print(cmd_train(spec, args.target, args.out))
    elif args.command == "eval":
        _print(cmd_eval(args.checkpoint, args.target, args.out))
    elif args.command == "gradcheck":
        try:
            sizes = tuple(int(tok) for tok in args.sizes.split(","))
        except ValueError as exc:
            raise ValidationError(f"bad --sizes {args.sizes!r}") from exc
        if len(sizes) != 3:
            raise ValidationError("--sizes expects n_sys,n_env,m")
        report = cmd_gradcheck(sizes, seed=args.seed, h=args.h)
        _print(report)
        print("PASS" if report["pass"] else "FAIL")
    elif args.command == "bench-sampler":
        spec = load_spec(args.config, args.overrides)
        _print(cmd_bench_sampler(spec, args.out))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
