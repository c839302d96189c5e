"""Command line interface.

Subcommands: gen-data, train, eval, infer, gradcheck, bench-attn.
Configuration comes from a key=value text file (--config) further
overridden by repeated --set key=value flags. Exit codes: 0 ok, 1 usage
or configuration error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import sys

from .bench import DEFAULT_MEMORY_CAP, bench_attention, format_table
from .config import load_run_config
from .data import SynthConfig, generate_dataset
from .errors import ConfigError, DataError, NumericsError
from .harness import GRADCHECK_THRESHOLD, evaluate, infer, run_gradcheck, train


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (repeatable)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tscnet",
                                     description="salient object detection: training and tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count-range", default="3,8")
    p.add_argument("--size-range", default="0.04,0.12")

    p = sub.add_parser("train", help="train a model")
    _add_config_args(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="metrics CSV path")

    p = sub.add_parser("infer", help="write saliency maps for one image")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--laterals", action="store_true", help="also write the lateral maps")

    p = sub.add_parser("gradcheck", help="finite-difference check of the micro network")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--threshold", type=float, default=GRADCHECK_THRESHOLD)
    p.add_argument("--out", default=None, help="write the report table here")

    p = sub.add_parser("bench-attn", help="attention memory/time benchmark")
    p.add_argument("--sizes", default="32x16,32x32,32x64",
                   help="comma list of CxH pairs, e.g. 32x16,32x64")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--cap", type=int, default=DEFAULT_MEMORY_CAP,
                   help="skip standard attention above this score-map element count")
    return parser


def _cmd_gen_data(args) -> int:
    lo, hi = (int(v) for v in args.count_range.split(","))
    smin, smax = (float(v) for v in args.size_range.split(","))
    cfg = SynthConfig(size=args.size, count_range=(lo, hi), size_range=(smin, smax), seed=args.seed)
    manifest = generate_dataset(cfg, args.n, args.out)
    print(f"wrote {args.n} samples, manifest at {manifest}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.overrides)
    result = train(cfg)
    print(f"trained {result.steps} steps over {result.epochs} epochs")
    print(f"final total loss {result.final_total:.6f} (first {result.first_total:.6f})")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_run_config(args.config, args.overrides)
    report = evaluate(cfg, args.checkpoint, args.manifest, report_path=args.out)
    means = report.means
    print(f"images: {len(report.image_ids)}")
    print(f"s_alpha {means['s_alpha']:.4f}  f_mean {means['f_mean']:.4f}  "
          f"e_mean {means['e_mean']:.4f}  mae {means['mae']:.4f}")
    if args.out:
        print(f"report: {args.out}")
    return 0


def _cmd_infer(args) -> int:
    cfg = load_run_config(args.config, args.overrides)
    for path in infer(cfg, args.checkpoint, args.image, args.out, laterals=args.laterals):
        print(path)
    return 0


def _cmd_gradcheck(args) -> int:
    report, elapsed, passed = run_gradcheck(epsilon=args.epsilon, seed=args.seed,
                                            threshold=args.threshold)
    table = report.format_table()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table + "\n")
    print(table)
    print(f"elapsed {elapsed:.1f}s, threshold {args.threshold:g}: {'PASS' if passed else 'FAIL'}")
    if not passed:
        raise NumericsError(f"gradient check failed: worst error {report.worst:.3e}")
    return 0


def _cmd_bench(args) -> int:
    sizes = []
    for token in args.sizes.split(","):
        c, _, h = token.strip().partition("x")
        try:
            sizes.append((int(c), int(h)))
        except ValueError:
            raise ConfigError(f"bad size token '{token}', expected CxH") from None
    rows = bench_attention(sizes, repeats=args.repeats, memory_cap=args.cap)
    print(format_table(rows))
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "gradcheck": _cmd_gradcheck,
    "bench-attn": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
