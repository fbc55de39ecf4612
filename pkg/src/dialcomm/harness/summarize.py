"""Cross-report comparison table: final-window reward, mean ± std over seeds."""
from __future__ import annotations

import csv
import glob
import os
from dataclasses import dataclass

import numpy as np

from ..envs import MatrixEnvConfig
from .config import ConfigError, loads
from .runner import final_window, read_metrics


class SummaryError(ValueError):
    pass


@dataclass(frozen=True)
class SummaryRow:
    env: str
    trainer: str
    discretizer: str
    n_seeds: int
    mean: float
    std: float
    per_seed: tuple

    @property
    def formatted(self) -> str:
        return f"{self.mean:.3f} ± {self.std:.3f}"


def env_label(env) -> str:
    if isinstance(env, MatrixEnvConfig):
        label = f"matrix N={env.n_agents} M={env.n_numbers} B={env.message_bits}"
        if env.flip_probability > 0:
            label += f" p={env.flip_probability:g} k={env.flips_per_message}"
        return label
    return env.scenario.value


def seed_scores(rows_by_seed: dict, fraction: float = 0.1) -> dict:
    """Per seed: mean eval reward over the final ``fraction`` of its evaluation rows."""
    return {s: float(np.mean([r["eval_reward"] for r in final_window(rows, fraction)]))
            for s, rows in rows_by_seed.items()}


def load_report(report_dir: str) -> tuple:
    cfg_path = os.path.join(report_dir, "config.txt")
    if not os.path.exists(cfg_path):
        raise SummaryError(f"{report_dir}: no config.txt; not a report directory")
    with open(cfg_path, encoding="utf-8") as fh:
        text = fh.read()
    overrides = {}
    ov_path = os.path.join(report_dir, "overrides.txt")
    if os.path.exists(ov_path):
        with open(ov_path, encoding="utf-8") as fh:
            for line in fh:
                if "=" in line:
                    k, v = (p.strip() for p in line.split("=", 1))
                    overrides["DIALCOMM_" + k.upper().replace(".", "__")] = v
    try:
        cfg = loads(text, overrides)
    except ConfigError as exc:
        raise SummaryError(f"{report_dir}: {exc}") from exc
    rows_by_seed = {}
    for path in sorted(glob.glob(os.path.join(report_dir, "metrics_seed*.csv"))):
        rows = read_metrics(path)
        if rows:
            rows_by_seed[rows[0]["seed"]] = rows
    if not rows_by_seed:
        raise SummaryError(f"{report_dir}: no metric rows")
    return cfg, rows_by_seed


def _cadence(report_dir: str, rows_by_seed: dict) -> int:
    steps = set()
    for rows in rows_by_seed.values():
        its = [r["iteration"] for r in rows]
        steps |= {its[0]} | set(np.diff(its).tolist())
    if len(steps) != 1:
        raise SummaryError(f"{report_dir}: evaluation rows are not evenly spaced ({sorted(steps)})")
    return steps.pop()


def summarize(report_dirs) -> list:
    """One row per (env, trainer, discretizer); reports must share one evaluation cadence."""
    groups: dict = {}
    cadences = {}
    for d in report_dirs:
        cfg, rows_by_seed = load_report(d)
        cadences[d] = _cadence(d, rows_by_seed)
        key = (env_label(cfg.env), cfg.trainer, cfg.discretizer.kind.label)
        if cfg.ablations.zero_messages:
            key = (key[0], key[1] + " (zero messages)", key[2])
        elif cfg.ablations.sever_channel:
            key = (key[0], key[1] + " (severed)", key[2])
        groups.setdefault(key, {})
        for s, rows in rows_by_seed.items():
            if s in groups[key]:
                raise SummaryError(f"seed {s} of {key} appears in more than one report")
            groups[key][s] = rows
    if len(set(cadences.values())) > 1:
        raise SummaryError(f"mixed evaluation cadences: {cadences}")
    out = []
    for (env, trainer, disc), rows_by_seed in groups.items():
        scores = seed_scores(rows_by_seed)
        vals = np.array([scores[s] for s in sorted(scores)])
        out.append(SummaryRow(env, trainer, disc, len(vals), float(vals.mean()), float(vals.std()),
                              tuple(vals.tolist())))
    return out


def write_summary_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["env", "trainer", "discretizer", "n_seeds", "final_reward_mean", "final_reward_std"])
        for r in rows:
            w.writerow([r.env, r.trainer, r.discretizer, r.n_seeds, repr(r.mean), repr(r.std)])


def format_table(rows) -> str:
    header = ("env", "trainer", "discretizer", "seeds", "final reward")
    body = [(r.env, r.trainer, r.discretizer, str(r.n_seeds), r.formatted) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(line.rstrip() for line in lines) + "\n"
