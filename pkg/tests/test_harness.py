import csv
import glob
import os

import numpy as np
import pytest

from dialcomm.acceptance import experiment_texts
from dialcomm.autodiff import load_params
from dialcomm.discretizers import Kind
from dialcomm.envs import MatrixEnvConfig, ParticleEnvConfig, Scenario
from dialcomm.harness import (
    ConfigError,
    SummaryError,
    aggregate,
    bootstrap_interval,
    env_overrides,
    final_window,
    format_table,
    load,
    loads,
    parse_text,
    run,
    summarize,
)
from dialcomm.harness.cli import main
from dialcomm.harness.runner import SeedResult, read_metrics, write_metrics
from dialcomm.harness.summarize import seed_scores

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

TINY = """\
name = tiny
trainer = dial
env.kind = matrix
env.n_agents = 2
env.n_numbers = 2
env.message_bits = 1
discretizer.kind = DRU
seeds = 1, 2
train_iterations = 20
eval_every = 10
eval_episodes = 8
dial.batch_size = 4
dial.anet_hidden = 8
dial.cnet_hidden = 4
protocol_episodes = 10
"""

TINY_COMA = """\
name = tiny_coma
trainer = coma_dial
env.kind = particle
env.scenario = speaker_listener
env.episode_length = 4
discretizer.kind = ST-GS
seeds = 3
train_iterations = 6
eval_every = 3
eval_episodes = 2
coma.batch_size = 2
coma.anet_hidden = 8
coma.cnet_hidden = 4
coma.critic_hidden = 8
coma.gate.eta_max = 2.0
param_sharing = false
"""


def write_report(path, seeds_rewards, every=10, trainer="dial"):
    """A synthetic report directory with constant per-seed rewards."""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.txt"), "w") as fh:
        fh.write(f"name = x\ntrainer = {trainer}\nseeds = {', '.join(str(s) for s in seeds_rewards)}\n")
        fh.write(f"train_iterations = {every * 10}\neval_every = {every}\n")
    for seed, reward in seeds_rewards.items():
        rows = [{"seed": seed, "iteration": every * (i + 1), "eval_reward": reward, "comm_amplitude": 0.0,
                 "loss": 0.0} for i in range(10)]
        write_metrics(os.path.join(path, f"metrics_seed{seed}.csv"), rows,
                      ("seed", "iteration", "eval_reward", "comm_amplitude", "loss"))


class TestConfigParsing:
    def test_parse_text(self):
        flat = parse_text("# comment\nA = 1\n\nenv.N_agents = 4  # trailing\n")
        assert flat == {"a": "1", "env.n_agents": "4"}

    def test_duplicate_and_malformed(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_text("a = 1\na = 2\n")
        with pytest.raises(ConfigError, match="line 2"):
            parse_text("a = 1\nbroken\n")

    def test_full_matrix_config(self):
        cfg = loads(TINY)
        assert cfg.env == MatrixEnvConfig(n_agents=2, n_numbers=2, message_bits=1)
        assert cfg.discretizer.kind is Kind.DRU
        assert cfg.seeds == (1, 2) and cfg.n_eval_rows == 2
        assert cfg.dial.anet_hidden == (8,) and cfg.dial.batch_size == 4

    def test_particle_config_and_gate(self):
        cfg = loads(TINY_COMA)
        assert isinstance(cfg.env, ParticleEnvConfig) and cfg.env.scenario is Scenario.SPEAKER_LISTENER
        assert cfg.coma.gate.eta_max == 2.0 and cfg.coma.param_sharing is False
        assert cfg.discretizer.kind is Kind.ST_GS

    def test_seed_range(self):
        assert loads("seeds = 1..5").seeds == (1, 2, 3, 4, 5)

    def test_physics_keys(self):
        cfg = loads("env.kind = particle\nenv.scenario = simple_reference\nenv.physics.dt = 0.05\n")
        assert cfg.env.physics.dt == 0.05

    @pytest.mark.parametrize("text,match", [
        ("trainer = rial", "trainer"),
        ("bogus = 1", "unknown key"),
        ("dial.bogus = 1", "unknown key dial.bogus"),
        ("zzz.a = 1", "unknown section"),
        ("train_iterations = 100\neval_every = 30", "divide"),
        ("seeds = 1, 1", "distinct"),
        ("env.kind = particle", "scenario"),
        ("env.kind = grid", "env.kind"),
        ("env.n_agents = 1", r"\[env\]"),
        ("ablations.zero_messages = maybe", "boolean"),
        ("env.physics.dt = 0.1", "particle"),
    ])
    def test_errors(self, text, match):
        with pytest.raises(ConfigError, match=match):
            loads(text)


class TestEnvOverrides:
    def test_prefix_and_nesting(self):
        env = {"DIALCOMM_ENV__N_AGENTS": "5", "DIALCOMM_SEEDS": "7", "DIALCOMM_KERNELS": "python", "HOME": "/"}
        assert env_overrides(env) == {"env.n_agents": "5", "seeds": "7"}

    def test_override_wins_over_file(self):
        cfg = loads(TINY, {"DIALCOMM_ENV__N_AGENTS": "4", "DIALCOMM_COMA__GATE__ALPHA_MAX": "0.01"})
        assert cfg.env.n_agents == 4 and cfg.coma.gate.alpha_max == 0.01

    def test_load_returns_raw_text(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(TINY)
        cfg, text = load(path, {"DIALCOMM_TRAIN_ITERATIONS": "30"})
        assert text == TINY and cfg.train_iterations == 30


class TestShippedConfigs:
    def test_every_config_parses(self):
        paths = sorted(glob.glob(os.path.join(CONFIGS, "*.cfg")))
        assert len(paths) > 20
        for path in paths:
            cfg, _ = load(path, {})
            assert cfg.name == os.path.basename(path)[:-4]

    def test_acceptance_experiments_match_shipped_configs(self):
        for name, text in experiment_texts().items():
            shipped, _ = load(os.path.join(CONFIGS, f"{name}.cfg"), {})
            assert loads(text) == shipped, name

    def test_particle_cadence(self):
        cfg, _ = load(os.path.join(CONFIGS, "speaker_listener_coma_dru.cfg"), {})
        assert (cfg.eval_every, cfg.eval_episodes) == (50, 10)
        cfg, _ = load(os.path.join(CONFIGS, "simple_matrix_ste.cfg"), {})
        assert (cfg.eval_every, cfg.eval_episodes, cfg.seeds) == (100, 100, (1, 2, 3, 4, 5))


class TestStatistics:
    def test_final_window(self):
        rows = list(range(100))
        assert final_window(rows) == list(range(90, 100))
        assert final_window(rows[:4]) == [3]

    def test_bootstrap_interval_brackets_mean(self):
        v = np.random.default_rng(0).normal(size=50)
        lo, hi = bootstrap_interval(v, np.random.default_rng(1))
        assert lo <= v.mean() <= hi
        assert bootstrap_interval([2.0, 2.0], np.random.default_rng(1)) == (2.0, 2.0)

    def test_aggregate_population_std(self):
        results = [SeedResult(s, [{"iteration": 10, "eval_reward": r, "comm_amplitude": 1.0}])
                   for s, r in ((1, 2.0), (2, 4.0))]
        (row,) = aggregate(results)
        assert row["eval_reward_mean"] == 3.0 and row["eval_reward_std"] == 1.0
        assert row["n_seeds"] == 2

    def test_aggregate_skips_iterations_missing_a_seed(self):
        a = SeedResult(1, [{"iteration": 10, "eval_reward": 1.0, "comm_amplitude": 0.0},
                           {"iteration": 20, "eval_reward": 1.0, "comm_amplitude": 0.0}])
        b = SeedResult(2, [{"iteration": 10, "eval_reward": 1.0, "comm_amplitude": 0.0}])
        assert [r["iteration"] for r in aggregate([a, b])] == [10]

    def test_seed_scores_use_final_ten_percent(self):
        rows = [{"eval_reward": float(i)} for i in range(20)]
        assert seed_scores({1: rows}) == {1: 18.5}


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    return run(loads(TINY), TINY, out_dir=str(out))


class TestRun:
    def test_outputs(self, report):
        names = set(os.listdir(report))
        for seed in (1, 2):
            assert {f"metrics_seed{seed}.csv", f"timing_seed{seed}.csv", f"checkpoint_seed{seed}.dckp",
                    f"protocol_seed{seed}.csv"} <= names
        assert {"config.txt", "aggregate.csv", "eval_reward.svg", "comm_amplitude.svg"} <= names
        assert "ABORTED" not in names
        assert open(os.path.join(report, "config.txt")).read() == TINY

    def test_metric_csv_format(self, report):
        raw = open(os.path.join(report, "metrics_seed1.csv"), "rb").read()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").splitlines()
        assert lines[0] == "seed,iteration,eval_reward,comm_amplitude,loss"
        assert [line.split(",")[1] for line in lines[1:]] == ["10", "20"]

    def test_aggregate_recomputable_from_seed_csvs(self, report):
        rows = {s: read_metrics(os.path.join(report, f"metrics_seed{s}.csv")) for s in (1, 2)}
        with open(os.path.join(report, "aggregate.csv")) as fh:
            agg = list(csv.DictReader(fh))
        assert len(agg) == 2
        for i, a in enumerate(agg):
            vals = np.array([rows[s][i]["eval_reward"] for s in (1, 2)])
            assert float(a["eval_reward_mean"]) == pytest.approx(vals.mean(), abs=1e-15)
            assert float(a["eval_reward_std"]) == pytest.approx(vals.std(), abs=1e-15)

    def test_checkpoint_contains_networks(self, report):
        names = [n for n, _ in load_params(os.path.join(report, "checkpoint_seed1.dckp"))]
        assert any(n.startswith("cnet[agent]") for n in names)
        assert any(n.startswith("anet[agent]") for n in names)

    def test_byte_identical_rerun(self, report, tmp_path):
        again = run(loads(TINY), TINY, out_dir=str(tmp_path))
        for name in os.listdir(report):
            if name.startswith("timing"):
                continue
            with open(os.path.join(report, name), "rb") as a, open(os.path.join(again, name), "rb") as b:
                assert a.read() == b.read(), name

    def test_coma_run_columns(self, tmp_path):
        report = run(loads(TINY_COMA), TINY_COMA, out_dir=str(tmp_path))
        header = open(os.path.join(report, "metrics_seed3.csv")).readline().strip()
        assert header == "seed,iteration,eval_reward,comm_amplitude,loss,critic_loss,actor_lr"
        assert not glob.glob(os.path.join(report, "protocol_*"))

    def test_aborted_run_leaves_marker(self, tmp_path, monkeypatch):
        from dialcomm import dial

        def boom(self):
            raise dial.TrainingAborted("non-finite DQN loss at iteration 0")

        monkeypatch.setattr(dial.DialTrainer, "train_iteration", boom)
        report = run(loads(TINY), TINY, out_dir=str(tmp_path))
        assert "non-finite" in open(os.path.join(report, "ABORTED")).read()
        assert open(os.path.join(report, "metrics_seed1.csv")).read().count("\n") == 1


class TestSummarize:
    def test_constant_single_seed(self, tmp_path):
        write_report(tmp_path / "a", {1: 3.0})
        (row,) = summarize([str(tmp_path / "a")])
        assert row.formatted == "3.000 ± 0.000"

    def test_two_seeds_population_std(self, tmp_path):
        write_report(tmp_path / "a", {1: 2.0, 2: 4.0})
        (row,) = summarize([str(tmp_path / "a")])
        assert (row.mean, row.std, row.n_seeds) == (3.0, 1.0, 2)
        assert "3.000 ± 1.000" in format_table([row])

    def test_reports_merge_by_key(self, tmp_path):
        write_report(tmp_path / "a", {1: 2.0})
        write_report(tmp_path / "b", {2: 4.0})
        (row,) = summarize([str(tmp_path / "a"), str(tmp_path / "b")])
        assert row.per_seed == (2.0, 4.0)

    def test_mixed_cadence_fails(self, tmp_path):
        write_report(tmp_path / "a", {1: 2.0}, every=10)
        write_report(tmp_path / "b", {1: 2.0}, every=50, trainer="coma_dial")
        with pytest.raises(SummaryError, match="cadence"):
            summarize([str(tmp_path / "a"), str(tmp_path / "b")])

    def test_duplicate_seed_fails(self, tmp_path):
        write_report(tmp_path / "a", {1: 2.0})
        write_report(tmp_path / "b", {1: 2.0})
        with pytest.raises(SummaryError, match="more than one"):
            summarize([str(tmp_path / "a"), str(tmp_path / "b")])

    def test_not_a_report(self, tmp_path):
        with pytest.raises(SummaryError, match="config.txt"):
            summarize([str(tmp_path)])


class TestCli:
    def test_run_summarize_protocol(self, tmp_path, capsys):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text(TINY)
        assert main(["run", str(cfg), "--out", str(tmp_path), "-q"]) == 0
        report = tmp_path / "tiny"
        assert main(["summarize", str(report), "--out", str(tmp_path / "sum")]) == 0
        assert "matrix N=2 M=2 B=1" in capsys.readouterr().out
        assert (tmp_path / "sum" / "summary.csv").exists()
        out_csv = tmp_path / "proto.csv"
        assert main(["protocol", str(report / "checkpoint_seed1.dckp"), str(cfg), "--out", str(out_csv)]) == 0
        assert capsys.readouterr().out.strip() == str(out_csv)
        # reproduces the protocol table written at the end of the run
        assert main(["protocol", str(report / "checkpoint_seed1.dckp"), str(cfg), "--seed", "1"]) == 0
        printed = capsys.readouterr().out.split("\n", 1)[1]
        assert printed.strip() == "\n".join((report / "protocol_seed1.csv").read_text().splitlines()[1:])

    def test_histograms(self, tmp_path, capsys):
        assert main(["histograms", "--out", str(tmp_path), "--draws", "1000"]) == 0
        files = capsys.readouterr().out.split()
        assert len(files) == 11
        with open(tmp_path / "histograms.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 5 * 2 * 7 * 20
        ste = {(r["mode"], r["x"]): [] for r in rows if r["unit"] == "STE"}
        dru = {(r["mode"], r["x"]): [] for r in rows if r["unit"] == "DRU"}
        for r in rows:
            if r["unit"] in ("STE", "DRU") and r["mode"] == "eval":
                (ste if r["unit"] == "STE" else dru)[("eval", r["x"])].append(r["frequency"])
        assert all(ste[k] == dru[k] for k in ste if k[0] == "eval")

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("trainer = rial\n")
        assert main(["run", str(bad)]) == 2
        assert "config error" in capsys.readouterr().err
        assert main(["run", str(tmp_path / "missing.cfg")]) == 2

    def test_summarize_error_exit_code(self, tmp_path):
        assert main(["summarize", str(tmp_path)]) == 2

    def test_protocol_rejects_particle(self, tmp_path, capsys):
        cfg = tmp_path / "p.cfg"
        cfg.write_text(TINY_COMA)
        ck = tmp_path / "x.dckp"
        ck.write_bytes(b"DCKP")
        assert main(["protocol", str(ck), str(cfg)]) == 2

    def test_acceptance_list(self, capsys):
        assert main(["acceptance", "--list"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 9

    def test_module_entry_point(self):
        import subprocess
        import sys

        out = subprocess.run([sys.executable, "-m", "dialcomm", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "summarize" in out.stdout
