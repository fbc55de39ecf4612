"""Experiment runner: train every seed, evaluate on cadence, write the report directory.

Report layout (``<out_dir>/<name>/``)::

    config.txt               the run configuration, verbatim
    overrides.txt            environment overrides applied on top (if any)
    metrics_seed<S>.csv      one row per evaluation point
    timing_seed<S>.csv       wall-clock per evaluation point (kept apart: not deterministic)
    aggregate.csv            mean / std / bootstrap interval across seeds per evaluation point
    eval_reward.svg, comm_amplitude.svg
    checkpoint_seed<S>.dckp  final parameters
    protocol_seed<S>.csv     matrix tasks only: learned code per input number
    ABORTED                  present only if a seed hit a non-finite loss
"""
from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from ..agents import CommNets
from ..autodiff import save_params
from ..coma import ComaDialTrainer
from ..coma import TrainingAborted as ComaAborted
from ..dial import DialTrainer
from ..dial import TrainingAborted as DialAborted
from ..discretizers import DiscretizerSpec, discretize_array, draw_noise
from ..envs.protocol import ProtocolTable, protocol_table
from ..rng import stream
from . import svg
from .config import RunConfig

log = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 25
BASE_COLUMNS = ("seed", "iteration", "eval_reward", "comm_amplitude", "loss")
COMA_COLUMNS = ("critic_loss", "actor_lr")


def metric_columns(cfg: RunConfig) -> tuple:
    return BASE_COLUMNS + (COMA_COLUMNS if cfg.trainer == "coma_dial" else ())


def make_trainer(cfg: RunConfig, seed: int):
    if cfg.trainer == "dial":
        return DialTrainer(cfg.env, cfg.discretizer, cfg.dial, seed=seed, ablations=cfg.ablations)
    return ComaDialTrainer(cfg.env, cfg.discretizer, cfg.coma, seed=seed, ablations=cfg.ablations)


def fmt(value) -> str:
    """Shortest round-tripping text for a float; integers stay integers."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class SeedResult:
    seed: int
    rows: list
    aborted: str | None = None


def train_seed(cfg: RunConfig, seed: int, progress=None) -> tuple:
    """Train one seed; returns ``(SeedResult, trainer, wall_ms per row)``."""
    trainer = make_trainer(cfg, seed)
    eval_rng = stream(seed, "eval")
    cols = metric_columns(cfg)
    window = {k: [] for k in cols[3:]}
    rows, wall = [], []
    start = time.perf_counter()
    aborted = None
    for it in range(1, cfg.train_iterations + 1):
        try:
            m = trainer.train_iteration()
        except (DialAborted, ComaAborted, FloatingPointError) as exc:
            aborted = f"seed {seed}, iteration {it}: {exc}"
            log.error("aborted %s", aborted)
            break
        for k in window:
            window[k].append(m[k])
        if it % cfg.eval_every == 0:
            reward = trainer.evaluate(cfg.eval_episodes, eval_rng)
            row = {"seed": seed, "iteration": it, "eval_reward": reward}
            row.update({k: float(np.mean(v)) for k, v in window.items()})
            rows.append(row)
            wall.append((time.perf_counter() - start) * 1e3)
            window = {k: [] for k in window}
            if progress is not None:
                progress(row)
    return SeedResult(seed, rows, aborted), trainer, wall


def write_metrics(path, rows, cols) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r[c]) for c in cols])


def read_metrics(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ("seed", "iteration") else float(v)) for k, v in r.items()})
    return out


def bootstrap_interval(values, rng: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES,
                       level: float = 0.95) -> tuple:
    """Percentile interval of the mean over ``resamples`` resamples with replacement."""
    v = np.asarray(values, dtype=np.float64)
    idx = rng.integers(0, len(v), size=(resamples, len(v)))
    means = v[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def aggregate(results: list) -> list:
    """Per evaluation point: mean, population std and bootstrap interval across seeds.

    Only iterations reached by every seed are aggregated.
    """
    by_iter: dict = {}
    for res in results:
        for r in res.rows:
            by_iter.setdefault(r["iteration"], []).append(r)
    n = len(results)
    rng = stream(0, "bootstrap")
    out = []
    for it in sorted(by_iter):
        rows = by_iter[it]
        if len(rows) != n:
            continue
        rew = np.array([r["eval_reward"] for r in rows])
        amp = np.array([r["comm_amplitude"] for r in rows])
        lo, hi = bootstrap_interval(rew, rng)
        out.append({
            "iteration": it, "n_seeds": n,
            "eval_reward_mean": float(rew.mean()), "eval_reward_std": float(rew.std()),
            "eval_reward_ci_low": lo, "eval_reward_ci_high": hi,
            "comm_amplitude_mean": float(amp.mean()), "comm_amplitude_std": float(amp.std()),
        })
    return out


AGGREGATE_COLUMNS = ("iteration", "n_seeds", "eval_reward_mean", "eval_reward_std", "eval_reward_ci_low",
                     "eval_reward_ci_high", "comm_amplitude_mean", "comm_amplitude_std")


def final_window(rows: list, fraction: float = 0.1) -> list:
    """The last ``fraction`` of evaluation rows (at least one)."""
    k = max(1, int(round(len(rows) * fraction)))
    return rows[-k:]


def message_policy(nets: CommNets, spec: DiscretizerSpec, rng: np.random.Generator):
    """Eval-mode messages of the first speaking group as a function of its observation."""
    group = next(iter(nets.speak_groups))
    net = nets.cnets[group]
    spec = spec.eval()

    def policy(obs):
        x = net.predict(obs)
        return discretize_array(x, spec, draw_noise(spec, x.shape, rng))

    return policy


def matrix_protocol(nets: CommNets, cfg: RunConfig, seed: int, episodes: int) -> ProtocolTable:
    env = cfg.env
    rng = stream(seed, "protocol")
    return protocol_table(message_policy(nets, cfg.discretizer, rng), env.n_numbers, env.message_bits,
                          env.flip_probability, env.flips_per_message, episodes, rng)


def write_plots(report_dir, aggregated: list, results: list, title: str) -> None:
    if not aggregated:
        return
    its = [a["iteration"] for a in aggregated]
    for key, label in (("eval_reward", "evaluation reward"), ("comm_amplitude", "communication amplitude")):
        mean = np.array([a[f"{key}_mean"] for a in aggregated])
        std = np.array([a[f"{key}_std"] for a in aggregated])
        series = {f"mean of {len(results)} seeds": (its, mean)}
        bands = {f"mean of {len(results)} seeds": (mean - std, mean + std)}
        for res in results:
            series[f"seed {res.seed}"] = ([r["iteration"] for r in res.rows], [r[key] for r in res.rows])
        text = svg.line_chart(series, f"{title}: {label}", "training iteration", label, bands)
        with open(os.path.join(report_dir, f"{key}.svg"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def run(cfg: RunConfig, config_text: str, overrides: dict | None = None, out_dir: str | None = None,
        progress=None) -> str:
    """Run every seed of ``cfg`` and return the report directory."""
    report_dir = os.path.join(out_dir or cfg.out_dir, cfg.name)
    os.makedirs(report_dir, exist_ok=True)
    marker = os.path.join(report_dir, "ABORTED")
    if os.path.exists(marker):
        os.remove(marker)
    with open(os.path.join(report_dir, "config.txt"), "w", encoding="utf-8", newline="") as fh:
        fh.write(config_text)
    if overrides:
        with open(os.path.join(report_dir, "overrides.txt"), "w", encoding="utf-8", newline="\n") as fh:
            for k in sorted(overrides):
                fh.write(f"{k} = {overrides[k]}\n")
    cols = metric_columns(cfg)
    results, aborted = [], []
    for seed in cfg.seeds:
        log.info("%s: seed %d", cfg.name, seed)
        res, trainer, wall = train_seed(cfg, seed, progress)
        results.append(res)
        write_metrics(os.path.join(report_dir, f"metrics_seed{seed}.csv"), res.rows, cols)
        with open(os.path.join(report_dir, f"timing_seed{seed}.csv"), "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "iteration", "wall_ms"])
            for r, ms in zip(res.rows, wall):
                w.writerow([seed, r["iteration"], f"{ms:.1f}"])
        if res.aborted:
            aborted.append(res.aborted)
            continue
        if cfg.checkpoint:
            save_params(os.path.join(report_dir, f"checkpoint_seed{seed}.dckp"), trainer.checkpoint_params())
        if cfg.is_matrix:
            matrix_protocol(trainer.nets, cfg, seed, cfg.protocol_episodes).write_csv(
                os.path.join(report_dir, f"protocol_seed{seed}.csv"))
    agg = aggregate(results)
    with open(os.path.join(report_dir, "aggregate.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for a in agg:
            w.writerow([fmt(a[c]) for c in AGGREGATE_COLUMNS])
    write_plots(report_dir, agg, results, f"{cfg.name} ({cfg.discretizer.kind.label})")
    if aborted:
        with open(marker, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(aborted) + "\n")
    return report_dir
