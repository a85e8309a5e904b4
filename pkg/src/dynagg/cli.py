"""Command-line experiment runner.

    dynagg run CONFIG [flags]        run a config file or packaged preset
    dynagg calibrate CONFIG [flags]  fit the Count-Sketch-Reset cutoff
    dynagg synth-trace [PARAMS]      write a synthetic contact trace CSV
    dynagg presets list|show NAME
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .config import ConfigError, load_config, parse_config, preset_names, preset_text, with_overrides
from .experiment import NotConverged, calibrate_cutoff, run_experiment, synth_params
from .sim_env import ChurnError, TraceFormatError, synth_trace, write_trace

FLAG_KEYS = {
    "seeds": "seeds",
    "rounds": "rounds",
    "out": "out",
    "lam": "lambda",
    "parcels": "parcels",
    "window": "window",
    "bins": "bins",
    "cutoff_a": "cutoff_a",
    "cutoff_b": "cutoff_b",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="config file path or preset name")
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    p.add_argument("--rounds", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--lambda", dest="lam", help="reversion constant(s), comma-separated")
    p.add_argument("--parcels", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--cutoff-a", type=float)
    p.add_argument("--cutoff-b", type=float)
    p.add_argument("--trace", help="contact trace CSV (switches to the trace environment)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _resolved_config(args):
    cfg = load_config(args.config)
    overrides = {key: getattr(args, attr) for attr, key in FLAG_KEYS.items()}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    cfg = with_overrides(cfg, overrides)
    if args.trace:
        cfg = replace(cfg, environment="trace", trace=args.trace, base_dir=".")
    return cfg.validate()


def cmd_run(args) -> int:
    cfg = _resolved_config(args)
    for path in run_experiment(cfg):
        print(path)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _resolved_config(args)
    cal = calibrate_cutoff(cfg)
    for k, q in zip(cal.ks, cal.quantiles):
        print(f"# k={int(k)} q{cfg.quantile:g}={q:g}")
    print(f"cutoff_a = {cal.a:.4f}")
    print(f"cutoff_b = {cal.b:.4f}")
    return 0


def cmd_synth_trace(args) -> int:
    cfg = parse_config(open(args.params).read()) if args.params else parse_config("")
    updates = {"synth_hosts": args.hosts, "synth_days": args.days,
               "synth_places": args.places, "synth_seed": args.seed}
    cfg = with_overrides(cfg, updates)
    params = synth_params(cfg)
    contacts = synth_trace(params, np.random.default_rng(cfg.synth_seed))
    write_trace(args.out, contacts, comments=[f"synthetic trace: {params}", f"seed = {cfg.synth_seed}"])
    print(f"{args.out}: {len(contacts)} contacts among {params.n_hosts} hosts")
    return 0


def cmd_presets(args) -> int:
    if args.action == "list":
        for name in preset_names():
            first = preset_text(name).splitlines()[0].lstrip("# ").strip()
            print(f"{name:24s} {first}")
        return 0
    if not args.name:
        raise ConfigError("preset", "show needs a preset name")
    print(preset_text(args.name), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynagg", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="fit the reset cutoff f(k) = a + b k")
    _add_run_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth-trace", help="generate a synthetic contact trace")
    p.add_argument("params", nargs="?", help="optional config file with synth_* keys")
    p.add_argument("--hosts", type=int)
    p.add_argument("--days", type=float)
    p.add_argument("--places", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_trace)

    p = sub.add_parser("presets", help="list or show packaged presets")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError, ChurnError, NotConverged, OSError) as exc:
        print(f"dynagg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
