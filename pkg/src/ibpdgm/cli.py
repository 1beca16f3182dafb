"""Command-line entry points: train, eval, report, selftest, gen.

Configuration comes from a key=value text file (`--config`), environment
variables prefixed IBPDGM_, and flag overrides, in that precedence order.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bbvi
from . import data as dio
from . import model as mdl
from . import selftest
from . import training

ENV_PREFIX = "IBPDGM_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _coerce(name, raw, target_type):
    if target_type is bool or target_type == "bool":
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {name}: expected a boolean, got {raw!r}")
    try:
        if target_type is int or target_type == "int":
            return int(raw)
        if target_type is float or target_type == "float":
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {name}: cannot parse {raw!r}") from None
    return str(raw)


def parse_config_file(path):
    """key = value lines; blank lines and # comments ignored."""
    pairs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = stripped.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def build_run_config(args):
    """Fold defaults < config file < environment < --set flags."""
    cfg = training.RunConfig()
    field_types = {name: type(getattr(cfg, name)) for name in vars(cfg)}

    def apply(pairs, source):
        for key, raw in pairs.items():
            if key not in field_types:
                raise UsageError(f"unknown config key {key!r} (from {source})")
            setattr(cfg, key, _coerce(key, raw, field_types[key]))

    if args.config:
        apply(parse_config_file(args.config), args.config)
    env_pairs = {}
    for name, value in os.environ.items():
        if name.startswith(ENV_PREFIX):
            env_pairs[name[len(ENV_PREFIX):].lower()] = value
    apply(env_pairs, "environment")
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    apply(overrides, "--set")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic:
        cfg.deterministic = True
    if args.out:
        cfg.out = args.out
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def make_parser():
    parser = _Parser(prog="ibpdgm")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write metrics + checkpoint")
    _add_common(p)

    p = sub.add_parser("eval", help="classification error (%) of a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images"), p.add_argument("--labels")
    p.add_argument("--amat")

    p = sub.add_parser("report", help="active-component report for a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images"), p.add_argument("--labels")
    p.add_argument("--amat")
    p.add_argument("--tau", type=float, default=0.01)

    p = sub.add_parser("selftest", help="run the numeric self-check suites")
    _add_common(p)
    p.add_argument("--reps", type=int, default=120,
                   help="repetitions for the unbiasedness suite")

    p = sub.add_parser("gen", help="draw observations from a trained model")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--label", type=int, default=None)
    p.add_argument("--sample", action="store_true",
                   help="also draw observations (not just likelihood means)")

    return parser


def _load_eval_dataset(args, cfg):
    if args.amat:
        return dio.load_amat(args.amat, kind=cfg.likelihood)
    if args.images and args.labels:
        return dio.load_idx(args.images, args.labels)
    raise UsageError("provide --amat or both --images and --labels")


def cmd_train(args):
    cfg = build_run_config(args)
    result = training.train(cfg, log=lambda msg: print(msg, flush=True))
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args):
    cfg = build_run_config(args)
    m = mdl.load_checkpoint(args.checkpoint)
    dataset = _load_eval_dataset(args, cfg)
    if dataset.dim != m.D:
        raise UsageError(
            f"dataset has {dataset.dim} features, checkpoint expects {m.D}")
    err = training.error_rate(m, dataset)
    print(f"error_rate_percent: {err:.4f}")
    return EXIT_OK


def cmd_report(args):
    cfg = build_run_config(args)
    m = mdl.load_checkpoint(args.checkpoint)
    dataset = _load_eval_dataset(args, cfg)
    report = training.component_report(m, dataset, args.tau)
    print(f"tau: {report.tau}")
    print(f"active_count: {report.count}")
    print("component,mean,std,active")
    for k in range(m.K):
        print(f"{k},{report.mean[k]:.6f},{report.std[k]:.6f},"
              f"{int(k in set(report.active.tolist()))}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = {
            "tau": report.tau,
            "active": [int(i) for i in report.active],
            "count": report.count,
            "mean": report.mean.tolist(),
            "std": report.std.tolist(),
        }
        path = os.path.join(args.out, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
        print(f"written: {path}")
    return EXIT_OK


def cmd_selftest(args):
    ok = selftest.run_all(print_fn=print, reps=args.reps)
    print("selftest:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_gen(args):
    cfg = build_run_config(args)
    m = mdl.load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(cfg.seed)
    means, samples = mdl.generate(m, args.n, rng, y=args.label,
                                  sample_observations=args.sample)
    out_dir = args.out or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    means_path = os.path.join(out_dir, "generated_means.csv")
    np.savetxt(means_path, means, delimiter=",")
    print(f"written: {means_path}")
    if samples is not None:
        samples_path = os.path.join(out_dir, "generated_samples.csv")
        np.savetxt(samples_path, samples, delimiter=",")
        print(f"written: {samples_path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "selftest": cmd_selftest,
    "gen": cmd_gen,
}


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dio.DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except bbvi.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
