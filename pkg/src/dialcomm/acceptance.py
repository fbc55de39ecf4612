"""Executable acceptance criteria, one PASS/FAIL line each.

Tiers: ``quick`` criteria finish in about a minute; ``full`` adds the matrix
training experiments; ``long`` adds the speaker-listener experiments.

Training experiments are ordinary harness runs written under ``work_dir``.
Because a (configuration, seed) pair fixes every number the harness emits,
an existing report is reused when its archived configuration is identical
and it was produced by the same package source (a SHA-256 over every
``.py``/``.pyx`` file of the package, stored next to the report).
"""
from __future__ import annotations

import filecmp
import glob
import hashlib
import os
import tempfile
import time
from dataclasses import dataclass
from math import erf, sqrt
from pathlib import Path

import numpy as np
from scipy import stats

from .autodiff import Tensor, backward, mul, sum_
from .coma import LrGate, counterfactual_advantage, gated_lr
from .discretizers import ALL_KINDS, DiscretizerSpec, Kind, discretize, draw_noise, sample_outputs
from .envs import MatrixEnv, MatrixEnvConfig
from .envs.oracles import oracle_matrix_rewards
from .harness.config import loads
from .harness.runner import read_metrics, run
from .harness.summarize import seed_scores
from .rng import stream

TIERS = ("quick", "full", "long")
X_VALUES = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
FREQ_TOL = 0.02
KS_ALPHA = 0.01
GRAD_RTOL = 1e-4
GRAD_FLOOR = 1e-6


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    tier: str
    check: object
    experiments: tuple = ()


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    @property
    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  [{self.number}] {self.title}: {self.detail} ({self.seconds:.1f}s)"


@dataclass
class Context:
    work_dir: str
    echo: object = print


# ----------------------------------------------------------------- oracles


def _phi(z: float) -> float:
    return 0.5 * (1.0 + erf(z / sqrt(2.0)))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def _logit(y):
    y = np.asarray(y, dtype=np.float64)
    return np.log(y) - np.log1p(-y)


def oracle_p_one(spec: DiscretizerSpec, x: float) -> float | None:
    """Closed-form P(output = 1) for units whose output is binary; None for continuous ones."""
    k, train = spec.kind, spec.mode.value == "train"
    if k is Kind.STE or (not train and k in (Kind.DRU, Kind.ST_DRU)):
        return 1.0 if x >= 0 else 0.0
    if k is Kind.ST_DRU:
        return _phi(x / spec.sigma_g) if spec.sigma_g > 0 else float(x >= 0)
    if k is Kind.ST_GS or (k is Kind.GS and not train):
        return float(_sigmoid(x))  # the difference of two Gumbels is standard logistic
    return None


def oracle_cdf(spec: DiscretizerSpec, x: float):
    """CDF of the continuous train-mode outputs: sigma(N(x, s^2)) and sigma((x + Logistic)/tau)."""
    if spec.kind is Kind.DRU:
        return lambda y: stats.norm.cdf((_logit(y) - x) / spec.sigma_g)
    if spec.kind is Kind.GS:
        return lambda y: _sigmoid(spec.temperature * _logit(y) - x)
    raise ValueError(f"{spec.kind.label} {spec.mode.value} output is not continuous")


def surrogate(spec: DiscretizerSpec, x: np.ndarray, noise) -> np.ndarray:
    """The smooth function whose derivative each unit's backward claims to be."""
    if spec.kind is Kind.STE:
        return x
    if spec.kind in (Kind.DRU, Kind.ST_DRU):
        return _sigmoid(x + noise.first)  # noise is stored already scaled by sigma_G
    return _sigmoid((x + noise.first - noise.second) / spec.temperature)


# ----------------------------------------------------------------- quick criteria


def check_distributions(ctx: Context) -> tuple:
    draws = 10_000
    edges = np.linspace(0.0, 1.0, 21)
    worst_freq, worst_p, cases = 0.0, 1.0, 0
    failures = []
    for kind in ALL_KINDS:
        for mode in ("train", "eval"):
            spec = DiscretizerSpec(kind, mode=mode)
            for x in X_VALUES:
                rng = stream(2024, f"acceptance/dist/{kind.value}/{mode}/{x:g}")
                out = sample_outputs(spec, x, draws, rng)
                cases += 1
                p1 = oracle_p_one(spec, x)
                if p1 is not None:
                    if not np.isin(out, (0.0, 1.0)).all():
                        failures.append(f"{kind.label}/{mode}/x={x:g} not binary")
                        continue
                    err = abs(out.mean() - p1)
                    worst_freq = max(worst_freq, err)
                    if err > FREQ_TOL:
                        failures.append(f"{kind.label}/{mode}/x={x:g} P(1) off by {err:.3f}")
                    continue
                cdf = oracle_cdf(spec, x)
                expected = np.diff(np.concatenate([[0.0], cdf(edges[1:-1]), [1.0]]))
                counts, _ = np.histogram(out, bins=edges)
                err = float(np.abs(counts / draws - expected).max())
                worst_freq = max(worst_freq, err)
                p = float(stats.kstest(out, cdf).pvalue)
                worst_p = min(worst_p, p)
                if err > FREQ_TOL:
                    failures.append(f"{kind.label}/{mode}/x={x:g} bin frequency off by {err:.3f}")
                if p < KS_ALPHA:
                    failures.append(f"{kind.label}/{mode}/x={x:g} KS p={p:.4f}")
    detail = f"{cases} cases, worst |freq error|={worst_freq:.4f} (tol {FREQ_TOL}), min KS p={worst_p:.3f}"
    if failures:
        detail += "; " + "; ".join(failures[:5])
    return not failures, detail


def check_gradients(ctx: Context) -> tuple:
    n, h = 1000, 1e-5
    worst = {}
    for kind in ALL_KINDS:
        spec = DiscretizerSpec(kind).train()
        rng = stream(7, f"acceptance/grad/{kind.value}")
        x0 = rng.normal(0.0, 2.0, size=n)
        upstream = rng.normal(size=n)
        noise = draw_noise(spec, x0.shape, rng)
        xt = Tensor(x0.copy(), requires_grad=True)
        out = discretize(xt, spec, noise=noise)
        backward(sum_(mul(out.message, Tensor(upstream))))
        fd = (surrogate(spec, x0 + h, noise) - surrogate(spec, x0 - h, noise)) / (2 * h) * upstream
        rel = np.abs(xt.grad - fd) / np.maximum(np.abs(fd), GRAD_FLOOR)
        worst[kind.label] = float(rel.max())
    ok = all(v < GRAD_RTOL for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return ok, f"max relative error per unit: {detail} (tol {GRAD_RTOL:g}, {n} inputs each)"


def check_env_oracles(ctx: Context) -> tuple:
    rng = stream(11, "acceptance/oracles")
    simple = MatrixEnvConfig(3, 4, 2)
    noisy = MatrixEnvConfig(10, 2, 3, flip_probability=0.5, flips_per_message=1)
    r_simple = oracle_matrix_rewards(simple, 10_000, rng)
    r_noisy = oracle_matrix_rewards(noisy, 10_000, rng)
    env = MatrixEnv(simple, 10_000)
    env.reset(rng)
    same = float(env.all_same().mean())
    ok = bool((r_simple == 3).all() and (r_noisy == 10).all() and abs(same - 0.5) <= 0.015)
    return ok, (f"simple oracle min/max {r_simple.min():g}/{r_simple.max():g} (want 3), "
                f"noisy oracle min/max {r_noisy.min():g}/{r_noisy.max():g} (want 10), "
                f"all-same frequency {same:.4f} (want 0.5 +- 0.015)")


def check_coma_identities(ctx: Context) -> tuple:
    rng = stream(13, "acceptance/coma")
    n, n_u = 10_000, 5
    q = rng.normal(0.0, 10.0, size=(n, n_u))
    logits = rng.normal(0.0, 2.0, size=(n, n_u))
    pi = np.exp(logits - logits.max(axis=1, keepdims=True))
    pi /= pi.sum(axis=1, keepdims=True)
    adv = np.stack([counterfactual_advantage(q, pi, np.full(n, u)) for u in range(n_u)], axis=1)
    expected_zero = float(np.abs((pi * adv).sum(axis=1)).max())
    shift = rng.normal(0.0, 10.0, size=(n, 1))
    adv_shift = np.stack([counterfactual_advantage(q + shift, pi, np.full(n, u)) for u in range(n_u)], axis=1)
    shift_err = float(np.abs(adv_shift - adv).max())
    gate = LrGate()
    grid = np.linspace(0.0, 1.0, 1000)
    lrs = np.array([gated_lr(v, gate) for v in grid])
    endpoints = (gated_lr(gate.eta_max, gate) == 0.0 and gated_lr(gate.eta_min, gate) == gate.alpha_max
                 and gated_lr(10.0, gate) == 0.0 and gated_lr(0.0, gate) == gate.alpha_max
                 and abs(gated_lr((gate.eta_min + gate.eta_max) / 2, gate) - gate.alpha_max / 2) < 1e-18)
    monotone = bool((np.diff(lrs) <= 0).all() and lrs.min() >= 0 and lrs.max() <= gate.alpha_max)
    ok = expected_zero <= 1e-12 and shift_err <= 1e-12 and endpoints and monotone
    return ok, (f"max |sum pi*A|={expected_zero:.1e}, max shift change={shift_err:.1e} (tol 1e-12), "
                f"gate endpoints {'ok' if endpoints else 'WRONG'}, monotone/bounded {'ok' if monotone else 'NO'}")


DETERMINISM_CONFIGS = {
    "determinism_dial": """\
name = determinism_dial
trainer = dial
env.kind = matrix
env.n_agents = 3
env.n_numbers = 4
env.message_bits = 3
env.flip_probability = 0.5
env.flips_per_message = 1
discretizer.kind = DRU
seeds = 1, 2
train_iterations = 60
eval_every = 20
eval_episodes = 20
protocol_episodes = 50
""",
    "determinism_coma": """\
name = determinism_coma
trainer = coma_dial
env.kind = particle
env.scenario = speaker_listener
env.episode_length = 8
discretizer.kind = GS
seeds = 3
train_iterations = 20
eval_every = 10
eval_episodes = 4
param_sharing = false
""",
}


def check_determinism(ctx: Context) -> tuple:
    compared = 0
    diffs = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, text in DETERMINISM_CONFIGS.items():
            cfg = loads(text)
            a = run(cfg, text, out_dir=os.path.join(tmp, "a"))
            b = run(cfg, text, out_dir=os.path.join(tmp, "b"))
            for path in sorted(glob.glob(os.path.join(a, "*.csv")) + glob.glob(os.path.join(a, "*.dckp"))):
                base = os.path.basename(path)
                if base.startswith("timing_"):
                    continue
                compared += 1
                if not filecmp.cmp(path, os.path.join(b, base), shallow=False):
                    diffs.append(f"{name}/{base}")
    ok = compared > 0 and not diffs
    return ok, f"{compared} files compared byte-for-byte" + (f"; differing: {diffs}" if diffs else "")


# ----------------------------------------------------------------- training experiments


def source_fingerprint() -> str:
    root = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for path in sorted(list(root.rglob("*.py")) + list(root.rglob("*.pyx"))):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def _matrix_text(name, kind, n_agents, n_numbers, bits, iterations, p=0.0, k=0) -> str:
    noise = f"env.flip_probability = {p:g}\nenv.flips_per_message = {k}\n" if p else ""
    return (f"name = {name}\ntrainer = dial\nenv.kind = matrix\nenv.n_agents = {n_agents}\n"
            f"env.n_numbers = {n_numbers}\nenv.message_bits = {bits}\n{noise}discretizer.kind = {kind}\n"
            f"seeds = 1..5\ntrain_iterations = {iterations}\neval_every = 100\neval_episodes = 100\n"
            f"dial.gamma = 1.0\n")


def _listener_text(name, trainer, kind, zero=False) -> str:
    extra = "dial.gamma = 0.95\n" if trainer == "dial" else ""
    if zero:
        extra += "ablations.zero_messages = true\n"
    return (f"name = {name}\ntrainer = {trainer}\nenv.kind = particle\nenv.scenario = speaker_listener\n"
            f"env.message_bits = 2\ndiscretizer.kind = {kind}\nseeds = 1..5\ntrain_iterations = 10000\n"
            f"eval_every = 50\neval_episodes = 10\nparam_sharing = false\n{extra}")


def experiment_texts() -> dict:
    """Every training experiment the acceptance suite runs, by report name."""
    out = {}
    for kind in ALL_KINDS:
        lk = kind.value.lower()
        out[f"simple_matrix_{lk}"] = _matrix_text(f"simple_matrix_{lk}", kind.value, 3, 4, 2, 10_000)
    for kind in (Kind.STE, Kind.DRU, Kind.ST_DRU):
        lk = kind.value.lower()
        out[f"error_correction_{lk}"] = _matrix_text(f"error_correction_{lk}", kind.value, 10, 2, 3, 20_000, 0.5, 1)
        out[f"complex_matrix_{lk}"] = _matrix_text(f"complex_matrix_{lk}", kind.value, 5, 16, 4, 20_000)
    for kind in (Kind.DRU, Kind.ST_DRU):
        lk = kind.value.lower()
        out[f"speaker_listener_coma_{lk}"] = _listener_text(f"speaker_listener_coma_{lk}", "coma_dial", kind.value)
        out[f"speaker_listener_coma_{lk}_zero"] = _listener_text(
            f"speaker_listener_coma_{lk}_zero", "coma_dial", kind.value, zero=True)
    out["speaker_listener_dial_dru"] = _listener_text("speaker_listener_dial_dru", "dial", "DRU")
    return out


def is_cached(work_dir: str, name: str, fingerprint: str | None = None) -> bool:
    """Whether ``work_dir`` holds a complete report for experiment ``name`` from this source."""
    report = os.path.join(work_dir, name)
    stamp = os.path.join(report, "source_fingerprint.txt")
    if not os.path.exists(stamp) or os.path.exists(os.path.join(report, "ABORTED")):
        return False
    with open(stamp, encoding="utf-8") as fh:
        old_fp = fh.read().strip()
    with open(os.path.join(report, "config.txt"), encoding="utf-8") as fh:
        return old_fp == (fingerprint or source_fingerprint()) and fh.read() == experiment_texts()[name]


def experiment(ctx: Context, name: str) -> tuple:
    """Run (or reuse) one experiment; returns ``(rows_by_seed, report_dir, cpu_seconds)``."""
    text = experiment_texts()[name]
    cfg = loads(text)
    report = os.path.join(ctx.work_dir, name)
    stamp = os.path.join(report, "source_fingerprint.txt")
    fingerprint = source_fingerprint()
    if not is_cached(ctx.work_dir, name, fingerprint):
        ctx.echo(f"      running {name} ({len(cfg.seeds)} seeds x {cfg.train_iterations} iterations)")
        if os.path.exists(stamp):
            os.remove(stamp)
        run(cfg, text, out_dir=ctx.work_dir)
        with open(stamp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(fingerprint + "\n")
    rows = {}
    seconds = 0.0
    for s in cfg.seeds:
        rows[s] = read_metrics(os.path.join(report, f"metrics_seed{s}.csv"))
        with open(os.path.join(report, f"timing_seed{s}.csv"), encoding="utf-8") as fh:
            lines = fh.read().strip().splitlines()
        if len(lines) > 1:
            seconds += float(lines[-1].split(",")[-1]) / 1e3
    if os.path.exists(os.path.join(report, "ABORTED")):
        raise RuntimeError(f"{name} aborted; see {os.path.join(report, 'ABORTED')}")
    return rows, report, seconds


def _mean_score(rows_by_seed) -> float:
    return float(np.mean(list(seed_scores(rows_by_seed).values())))


def _curve(rows_by_seed, key) -> tuple:
    its = [r["iteration"] for r in next(iter(rows_by_seed.values()))]
    vals = np.mean([[r[key] for r in rows] for rows in rows_by_seed.values()], axis=0)
    return np.array(its), vals


def _budget(seconds: float, limit: float) -> tuple:
    return seconds <= limit, f"training time {seconds / 60:.1f} min (budget {limit / 60:.0f} min)"


def check_simple_matrix(ctx: Context) -> tuple:
    scores, seconds = {}, 0.0
    for kind in ALL_KINDS:
        rows, _, sec = experiment(ctx, f"simple_matrix_{kind.value.lower()}")
        scores[kind.label] = _mean_score(rows)
        seconds += sec
    others = [v for k, v in scores.items() if k != "GS"]
    ok_budget, budget = _budget(seconds, 30 * 60)
    ok = (scores["STE"] >= 2.90 and scores["DRU"] >= 2.80 and scores["ST-DRU"] >= 2.80
          and scores["GS"] < min(others) and ok_budget)
    detail = ", ".join(f"{k} {v:.3f}" for k, v in scores.items())
    return ok, f"final-window means: {detail} (want STE>=2.90, DRU/ST-DRU>=2.80, GS lowest); {budget}"


def _dominant_code(dist: dict) -> str:
    return max(sorted(dist), key=lambda c: dist[c])


def read_protocol(path) -> tuple:
    pre, post = {}, {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            number, code, f_pre, f_post = line.strip().split(",")
            if float(f_pre) > 0:
                pre.setdefault(int(number), {})[code] = float(f_pre)
            if float(f_post) > 0:
                post.setdefault(int(number), {})[code] = float(f_post)
    return pre, post


def check_error_correction(ctx: Context) -> tuple:
    scores, seconds, code_notes, code_ok = {}, 0.0, [], True
    for kind in (Kind.DRU, Kind.ST_DRU, Kind.STE):
        rows, report, sec = experiment(ctx, f"error_correction_{kind.value.lower()}")
        seconds += sec
        per_seed = seed_scores(rows)
        scores[kind.label] = float(np.mean(list(per_seed.values())))
        if kind is Kind.STE:
            continue
        for s, v in per_seed.items():
            if v < 9.3:
                continue
            pre, post = read_protocol(os.path.join(report, f"protocol_seed{s}.csv"))
            c0, c1 = _dominant_code(pre[0]), _dominant_code(pre[1])
            dist = sum(a != b for a, b in zip(c0, c1))
            disjoint = not (set(post[0]) & set(post[1]))
            if dist != 3 or not disjoint:
                code_ok = False
                code_notes.append(f"{kind.label} seed {s}: {c0}/{c1} distance {dist}")
    ok_budget, budget = _budget(seconds, 2 * 3600)
    ok = (scores["DRU"] >= 9.3 and scores["ST-DRU"] >= 9.3 and scores["STE"] <= 7.0
          and scores["STE"] <= scores["ST-DRU"] - 2.0 and code_ok and ok_budget)
    detail = ", ".join(f"{k} {v:.3f}" for k, v in scores.items())
    codes = "codes at distance 3 with disjoint post-channel supports" if code_ok else "; ".join(code_notes)
    return ok, f"final-window means: {detail} (want DRU/ST-DRU>=9.3, STE<=7.0 and 2 below ST-DRU); {codes}; {budget}"


def first_reach(its, values, threshold) -> int | None:
    hit = np.flatnonzero(np.asarray(values) >= threshold)
    return int(its[hit[0]]) if hit.size else None


def check_complex_matrix(ctx: Context) -> tuple:
    curves, amps, seconds = {}, {}, 0.0
    for kind in (Kind.STE, Kind.DRU, Kind.ST_DRU):
        rows, _, sec = experiment(ctx, f"complex_matrix_{kind.value.lower()}")
        seconds += sec
        curves[kind.label] = _curve(rows, "eval_reward")
        amps[kind.label] = _curve(rows, "comm_amplitude")[1]
    its = curves["STE"][0]
    reach = {k: first_reach(its, v, 4.7) for k, (its, v) in curves.items()}
    ste, st_dru = reach["STE"], reach["ST-DRU"]
    speed_ok = ste is not None and (st_dru is None or st_dru >= 2 * ste)
    amp_ok = bool((amps["DRU"] > amps["STE"]).all() and (amps["ST-DRU"] > amps["STE"]).all())
    ok_budget, budget = _budget(seconds, 3600)
    ok = speed_ok and amp_ok and ok_budget
    budget_its = int(its[-1])

    def show(v):
        return f"it {v}" if v is not None else f"not within {budget_its}"

    return ok, (f"mean reward first >= 4.7: STE {show(ste)}, ST-DRU {show(st_dru)}, DRU {show(reach['DRU'])} "
                f"(want ST-DRU >= 2x STE); amplitude DRU>STE at every eval point: "
                f"{bool((amps['DRU'] > amps['STE']).all())}, ST-DRU>STE: {bool((amps['ST-DRU'] > amps['STE']).all())}, "
                f"final STE/DRU/ST-DRU {amps['STE'][-1]:.2f}/{amps['DRU'][-1]:.2f}/{amps['ST-DRU'][-1]:.2f}; {budget}")


def check_speaker_listener(ctx: Context) -> tuple:
    seconds, scores = 0.0, {}
    for name in ("coma_dru", "coma_st_dru", "coma_dru_zero", "coma_st_dru_zero", "dial_dru"):
        rows, _, sec = experiment(ctx, f"speaker_listener_{name}")
        seconds += sec
        scores[name] = _mean_score(rows)
    ok_budget, budget = _budget(seconds, 4 * 3600)
    ok = (scores["coma_dru"] >= -18 and scores["coma_st_dru"] >= -18
          and scores["coma_dru"] >= scores["coma_dru_zero"] + 10
          and scores["coma_st_dru"] >= scores["coma_st_dru_zero"] + 10
          and scores["coma_dru"] > scores["dial_dru"] and ok_budget)
    return ok, (f"COMA-DIAL DRU {scores['coma_dru']:.2f}, ST-DRU {scores['coma_st_dru']:.2f} (want >= -18); "
                f"zero-message DRU {scores['coma_dru_zero']:.2f}, ST-DRU {scores['coma_st_dru_zero']:.2f} "
                f"(want >= 10 below); DIAL DRU {scores['dial_dru']:.2f} (want below COMA-DIAL); {budget}")


_ALL = ALL_KINDS
_NOISY = (Kind.STE, Kind.DRU, Kind.ST_DRU)


def _names(prefix, kinds, suffixes=("",)) -> tuple:
    return tuple(f"{prefix}_{k.value.lower()}{s}" for k in kinds for s in suffixes)


CRITERIA = (
    Criterion(1, "discretizer output distributions", "quick", check_distributions),
    Criterion(2, "surrogate gradients vs finite differences", "quick", check_gradients),
    Criterion(3, "simple matrix game, DIAL", "full", check_simple_matrix, _names("simple_matrix", _ALL)),
    Criterion(4, "error-correcting matrix game, DIAL", "full", check_error_correction,
              _names("error_correction", _NOISY)),
    Criterion(5, "desk-scale complex matrix game, DIAL", "full", check_complex_matrix,
              _names("complex_matrix", _NOISY)),
    Criterion(6, "speaker-listener, COMA-DIAL", "long", check_speaker_listener,
              _names("speaker_listener_coma", (Kind.DRU, Kind.ST_DRU), ("", "_zero"))
              + ("speaker_listener_dial_dru",)),
    Criterion(7, "environment oracles", "quick", check_env_oracles),
    Criterion(8, "counterfactual advantage and gate identities", "quick", check_coma_identities),
    Criterion(9, "determinism of emitted CSVs", "quick", check_determinism),
)


def run_criterion(c: Criterion, ctx: Context) -> Result:
    start = time.perf_counter()
    try:
        passed, detail = c.check(ctx)
    except Exception as exc:  # a crashing criterion is a failing criterion
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
    return Result(c.number, c.title, bool(passed), detail, time.perf_counter() - start)


def run_criteria(only=None, tier: str = "quick", work_dir: str = "reports/acceptance", echo=print) -> list:
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}")
    allowed = TIERS[: TIERS.index(tier) + 1]
    ctx = Context(work_dir, echo)
    os.makedirs(work_dir, exist_ok=True)
    results = []
    for c in CRITERIA:
        if only and c.number not in only:
            continue
        if not only and c.tier not in allowed:
            continue
        res = run_criterion(c, ctx)
        echo(res.line)
        results.append(res)
    return results
