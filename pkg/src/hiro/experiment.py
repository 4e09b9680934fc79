"""Experiment configuration, run directories, metrics and plot-data export.

A config is an INI file; every key belongs to exactly one section::

    [experiment]   env, seed, out_dir, checkpoint_every
    [hiro]         ablation, c, reward scales, train/eval cadence, budgets, sigmas
    [td3]          gamma, tau, actor_lr, critic_lr, hidden, batch_size, buffer_size
    [correction]   correction

A run directory holds ``config.ini`` (the resolved config), ``metrics.jsonl``,
``timing.jsonl`` (wall-clock only, kept apart so metrics stay byte-identical
across reruns), ``summary.json`` and TD3 checkpoints.
"""

import configparser
import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import SPECS, make_env
from .errors import ConfigError, NumericError
from .hrl import ABLATIONS, HiroConfig, HiroTrainer

log = logging.getLogger(__name__)

SECTIONS = {
    "experiment": ("env", "seed", "out_dir", "checkpoint_every"),
    "hiro": ("ablation", "c", "low_reward_scale", "high_reward_scale", "low_train_every",
             "high_train_every", "eval_every", "eval_episodes", "total_steps", "sigma_low",
             "sigma_high", "pretrain_steps", "relabel_low_prob"),
    "td3": ("gamma", "tau", "actor_lr", "critic_lr", "hidden", "batch_size", "buffer_size"),
    "correction": ("correction",),
}
KEY_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}


@dataclass
class ExperimentConfig:
    env: str = "push"
    seed: int = 0
    out_dir: str = "runs/default"
    checkpoint_every: int = 50_000
    hiro: HiroConfig = field(default_factory=HiroConfig)

    def validate(self):
        if self.env not in SPECS:
            raise ConfigError("env", f"expected one of {sorted(SPECS)}")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every", "must be >= 1")
        self.hiro.validate()

    def get(self, key):
        return getattr(self if KEY_SECTION[key] == "experiment" else self.hiro, key)


def _coerce(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            value = float(raw.replace("_", ""))
            if not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace("(", "").replace(")", "").split(",") if x.strip())
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def apply_overrides(cfg, values):
    """Set ``{key: raw string or value}`` entries on a config, validating key names."""
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key not in KEY_SECTION:
            raise ConfigError(key, "unknown key")
        target = cfg if KEY_SECTION[key] == "experiment" else cfg.hiro
        default = getattr(target, key)
        value = _coerce(key, raw, default) if isinstance(raw, str) else raw
        if isinstance(default, tuple):
            value = tuple(value)
        setattr(target, key, value)
    cfg.validate()
    return cfg


def parse_config(source=None, overrides=None):
    """Build an :class:`ExperimentConfig` from INI text or a file path, then apply overrides."""
    cfg = ExperimentConfig()
    values = {}
    if source is not None:
        text = Path(source).read_text() if _looks_like_path(source) else str(source)
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("<file>", str(exc)) from None
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(section, "unknown section")
            for key, raw in parser.items(section):
                if key not in SECTIONS[section]:
                    raise ConfigError(key, f"unknown key in [{section}]")
                values[key] = raw
    values.update(overrides or {})
    return apply_overrides(cfg, values)


def _looks_like_path(source):
    if isinstance(source, Path):
        return True
    return bool(source) and "\n" not in source and "=" not in source and "[" not in source


def dump_config(cfg):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in SECTIONS.items():
        parser[section] = {}
        for key in keys:
            value = cfg.get(key)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            parser[section][key] = repr(value) if isinstance(value, float) else str(value)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# -- running ------------------------------------------------------------------


class MetricWriter:
    """Append-only JSON-lines writer; each record is one self-contained line."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def write(self, kind, env_steps, **payload):
        rec = {"kind": kind, "env_steps": int(env_steps), **payload}
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._fh.flush()
        return rec

    def close(self):
        self._fh.close()


def read_metrics(path):
    """Parse a metrics file, skipping any line that is not complete JSON (e.g. a torn last line)."""
    out = []
    with open(path) as fh:
        for line in fh:
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                continue
    return out


def save_checkpoint(trainer, run_dir):
    trainer.low.save(run_dir / "low.ckpt")
    if trainer.high is not None:
        trainer.high.save(run_dir / "high.ckpt")


def load_trainer(run_dir):
    """Rebuild a trainer from a run directory's config echo and checkpoints."""
    run_dir = Path(run_dir)
    cfg = parse_config(run_dir / "config.ini")
    trainer = HiroTrainer(cfg.hiro, make_env(cfg.env), cfg.seed)
    trainer.low.load(run_dir / "low.ckpt")
    if trainer.high is not None:
        trainer.high.load(run_dir / "high.ckpt")
    return cfg, trainer


def _mean(xs):
    return float(np.mean(xs)) if xs else None


def run_experiment(cfg):
    """Pretrain (if configured), train, evaluate periodically, checkpoint, summarize.

    Returns 0 on success and 1 if training hit a numeric failure; in that case
    the agents' last finite parameters are checkpointed before returning.
    """
    cfg.validate()
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(dump_config(cfg))
    metrics = MetricWriter(run_dir / "metrics.jsonl")
    timing = open(run_dir / "timing.jsonl", "w")
    h = cfg.hiro
    trainer = HiroTrainer(h, make_env(cfg.env), cfg.seed)
    evals = []
    status = 0
    started = time.time()

    def stamp(kind, steps):
        timing.write(json.dumps({"kind": kind, "env_steps": steps,
                                 "wall_clock": time.time(), "elapsed": time.time() - started}) + "\n")
        timing.flush()

    def on_step(step):
        if step % h.eval_every == 0:
            res = trainer.evaluate()
            evals.append(res["score"])
            metrics.write("eval", step, **res)
            stats = trainer.pop_correction_stats()
            if stats is not None:
                metrics.write("correction_stats", step, **stats)
            stamp("eval", step)
        if step % cfg.checkpoint_every == 0:
            save_checkpoint(trainer, run_dir)

    try:
        if h.ablation == "pretrain_low":
            used = trainer.pretrain_lower(h.pretrain_steps)
            metrics.write("pretrain", 0, pretrain_steps=used)
            stamp("pretrain", 0)
        losses = {"low": [], "high": []}
        tick = trainer.train_tick

        def recording_tick(step):
            out = tick(step)
            for level, vals in out.items():
                losses[level].append(vals["critic_loss"])
            return out

        trainer.train_tick = recording_tick
        while trainer.env_steps < h.total_steps:
            for v in losses.values():
                v.clear()
            ret = trainer.run_episode(on_step=on_step, step_limit=h.total_steps)
            metrics.write("train", trainer.env_steps, episode=trainer.episodes,
                          episode_return=ret, low_critic_loss=_mean(losses["low"]),
                          high_critic_loss=_mean(losses["high"]))
    except NumericError as exc:
        log.error("numeric failure at step %d: %s", trainer.env_steps, exc)
        metrics.write("abort", trainer.env_steps, reason=str(exc))
        status = 1
    save_checkpoint(trainer, run_dir)
    summary = {
        "env": cfg.env, "ablation": h.ablation, "seed": cfg.seed,
        "env_steps": trainer.env_steps,
        "best_eval": max(evals) if evals else None,
        "last_eval": evals[-1] if evals else None,
        "n_evals": len(evals), "status": status,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    metrics.close()
    stamp("done", trainer.env_steps)
    timing.close()
    return status


def run_name(cfg):
    return f"{cfg.env}_{cfg.hiro.ablation}_s{cfg.seed}"


def expand_sweep(base, ablations, seeds, out_root):
    """One config per (ablation, seed), each in its own run directory under ``out_root``."""
    runs = []
    for ablation in ablations:
        if ablation not in ABLATIONS:
            raise ConfigError("ablation", f"expected one of {ABLATIONS}")
        for seed in seeds:
            cfg = dataclasses.replace(base, seed=seed,
                                      hiro=dataclasses.replace(base.hiro, ablation=ablation))
            cfg.out_dir = str(Path(out_root) / run_name(cfg))
            runs.append(cfg)
    return runs


def export_plot_data(run_dirs, out=None):
    """Aggregate eval scores as ``ablation, env_steps, mean, stderr, n`` CSV rows.

    ``env_steps`` is the raw step count; stderr is the sample standard deviation
    over seeds divided by sqrt(n), and 0 for a single seed.
    """
    groups = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        cfg = parse_config(run_dir / "config.ini")
        for rec in read_metrics(run_dir / "metrics.jsonl"):
            if rec.get("kind") == "eval":
                key = (cfg.hiro.ablation, rec["env_steps"])
                groups.setdefault(key, []).append(rec["score"])
    if not groups:
        log.warning("no eval records found in %d run directories", len(run_dirs))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ablation", "env_steps", "mean", "stderr", "n"])
    for (ablation, steps) in sorted(groups):
        vals = np.array(groups[(ablation, steps)], dtype=np.float64)
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        w.writerow([ablation, steps, repr(float(vals.mean())), repr(se), len(vals)])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


def default_out_root():
    return os.environ.get("HIRO_OUT_DIR", "runs")
