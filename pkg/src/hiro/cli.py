"""Command-line entry point: ``hiro train | eval | sweep | export``."""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError
from .experiment import (default_out_root, expand_sweep, export_plot_data, load_trainer,
                         parse_config, run_experiment, run_name)
from .hrl import ABLATIONS

log = logging.getLogger("hiro")

# flags that map one-to-one onto config keys
_FLAG_KEYS = {"env": "env", "ablation": "ablation", "correction": "correction",
              "seed": "seed", "total_steps": "total_steps"}


def _config_args(p):
    p.add_argument("--config", help="INI config file")
    p.add_argument("--env")
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--correction")
    p.add_argument("--seed", type=int)
    p.add_argument("--total-steps", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any other config key; repeatable")
    p.add_argument("--out", default=None,
                   help="output root (default: $HIRO_OUT_DIR or ./runs)")


def _overrides(args):
    values = {key: str(getattr(args, flag)) for flag, key in _FLAG_KEYS.items()
              if getattr(args, flag, None) is not None}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def _build_parser():
    ap = argparse.ArgumentParser(prog="hiro", description="Two-level goal-conditioned RL runs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    tr = sub.add_parser("train", help="run one experiment")
    _config_args(tr)

    ev = sub.add_parser("eval", help="evaluate the checkpoint in a run directory")
    ev.add_argument("run_dir")
    ev.add_argument("--episodes", type=int, default=None)

    sw = sub.add_parser("sweep", help="one run per (ablation, seed)")
    _config_args(sw)
    sw.add_argument("--ablations", default=",".join(ABLATIONS[:3]),
                    help="comma-separated ablation names")
    sw.add_argument("--seeds", default="0", help="comma-separated seeds or a count like 5x")
    sw.add_argument("--jobs", type=int, default=1, help="runs executed concurrently")

    ex = sub.add_parser("export", help="aggregate eval records into CSV")
    ex.add_argument("run_dirs", nargs="+")
    ex.add_argument("-o", "--output", help="CSV path (default: stdout)")
    return ap


def _seeds(text):
    if text.endswith("x"):
        return list(range(int(text[:-1])))
    return [int(s) for s in text.split(",") if s.strip()]


def _train(args):
    cfg = parse_config(args.config, _overrides(args))
    cfg.out_dir = str(Path(args.out or default_out_root()) / run_name(cfg))
    log.info("run directory %s", cfg.out_dir)
    status = run_experiment(cfg)
    print(Path(cfg.out_dir, "summary.json").read_text(), end="")
    return status


def _sweep(args):
    base = parse_config(args.config, _overrides(args))
    ablations = [a.strip() for a in args.ablations.split(",") if a.strip()]
    runs = expand_sweep(base, ablations, _seeds(args.seeds), args.out or default_out_root())
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            statuses = list(pool.map(run_experiment, runs))
    else:
        statuses = [run_experiment(cfg) for cfg in runs]
    for cfg, st in zip(runs, statuses):
        print(f"{cfg.out_dir}\tstatus={st}")
    return max(statuses, default=0)


def _eval(args):
    _, trainer = load_trainer(args.run_dir)
    print(json.dumps(trainer.evaluate(args.episodes), sort_keys=True))
    return 0


def _export(args):
    text = export_plot_data(args.run_dirs, args.output)
    if args.output is None:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    verbs = {"train": _train, "eval": _eval, "sweep": _sweep, "export": _export}
    try:
        return verbs[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
