import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dialcomm.agents import Ablations
from dialcomm.autodiff import Parameter, Tensor, backward, gather, log_softmax
from dialcomm.coma import (
    ComaConfig,
    ComaDialTrainer,
    LrGate,
    ReturnScale,
    actor_loss,
    behavior_mix,
    counterfactual_advantage,
    critic_loss,
    gated_lr,
)
from dialcomm.discretizers import DiscretizerSpec, Kind
from dialcomm.envs import MatrixEnvConfig, ParticleEnvConfig

SMALL = ComaConfig(batch_size=6, anet_hidden=(16,), cnet_hidden=(8,), critic_hidden=(16,))
SL = ParticleEnvConfig("speaker_listener", episode_length=5)
MATRIX = MatrixEnvConfig(n_agents=3, n_numbers=4, message_bits=2)

simplex = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6).map(lambda v: np.array(v) / np.sum(v))


class TestCriticLoss:
    def test_perfect_terminal(self):
        assert float(critic_loss(Tensor([2.5]), np.array([2.5])).data) == 0.0

    def test_bootstrap_arithmetic(self):
        assert float(critic_loss(Tensor([0.0]), np.array([0.0 + 1.0 * 1.0])).data) == 1.0

    def test_targets_use_taken_next_action(self):
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU), SMALL, seed=1)
        batch = tr.rollout()
        tr.return_scale.update(batch.rewards, tr.cfg.gamma)
        inp, taken, y = tr.critic_batch(batch)
        T, B = batch.n_steps, batch.batch_size
        q_next = tr.critic_target.predict(inp).reshape(T, B, -1)  # one actor
        u = taken.reshape(T, B)
        r = batch.rewards / tr.return_scale.scale
        expected = r.copy()
        expected[:-1] += tr.cfg.gamma * np.take_along_axis(q_next[1:], u[1:, :, None], axis=2)[..., 0]
        np.testing.assert_allclose(y, expected.reshape(-1), rtol=1e-14)

    def test_zero_gamma_regresses_on_reward(self):
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU),
                             ComaConfig(**{**SMALL.__dict__, "gamma": 0.0, "normalize_rewards": False}), seed=1)
        batch = tr.rollout()
        _, _, y = tr.critic_batch(batch)
        np.testing.assert_array_equal(y, batch.rewards.reshape(-1))


class TestAdvantage:
    def test_uniform_policy_example(self):
        assert counterfactual_advantage([1.0, 3.0], [0.5, 0.5], 1) == pytest.approx(1.0)

    def test_point_mass_policy_gives_zero(self):
        assert counterfactual_advantage([4.0, -2.0, 7.0], [0.0, 0.0, 1.0], 2) == 0.0

    def test_constant_q_gives_zero(self):
        for u in range(3):
            assert counterfactual_advantage([5.0, 5.0, 5.0], [0.2, 0.3, 0.5], u) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(pi=simplex, seed=st.integers(0, 2**31))
    def test_policy_weighted_advantage_is_zero(self, pi, seed):
        q = np.random.default_rng(seed).normal(size=len(pi)) * 10
        adv = np.array([counterfactual_advantage(q, pi, u) for u in range(len(pi))])
        assert abs(float(pi @ adv)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(pi=simplex, c=st.floats(-100, 100), seed=st.integers(0, 2**31))
    def test_shift_invariance(self, pi, c, seed):
        q = np.random.default_rng(seed).normal(size=len(pi))
        for u in range(len(pi)):
            assert abs(counterfactual_advantage(q + c, pi, u) - counterfactual_advantage(q, pi, u)) < 1e-12

    def test_rowwise_matches_single_rows(self):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(10, 5))
        pi = rng.dirichlet(np.ones(5), size=10)
        u = rng.integers(0, 5, 10)
        rows = [counterfactual_advantage(q[i], pi[i], u[i]) for i in range(10)]
        np.testing.assert_allclose(counterfactual_advantage(q, pi, u), rows, rtol=1e-15)


class TestGate:
    G = LrGate(eta_min=0.05, eta_max=0.5, alpha_max=5e-4)

    def test_closed_above_eta_max(self):
        assert gated_lr(0.5, self.G) == 0.0 and gated_lr(3.0, self.G) == 0.0

    def test_midpoint(self):
        assert gated_lr(0.275, self.G) == pytest.approx(2.5e-4)

    def test_full_below_eta_min(self):
        assert gated_lr(0.05, self.G) == 5e-4 and gated_lr(0.0, self.G) == 5e-4

    def test_validation(self):
        with pytest.raises(ValueError):
            LrGate(eta_min=0.5, eta_max=0.5)
        with pytest.raises(ValueError):
            LrGate(alpha_max=0.0)

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(0, 5), b=st.floats(0, 5))
    def test_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert gated_lr(lo, self.G) >= gated_lr(hi, self.G)
        assert 0.0 <= gated_lr(lo, self.G) <= self.G.alpha_max


class TestBehaviorMix:
    def test_examples(self):
        np.testing.assert_allclose(behavior_mix([0.8, 0.2], 0.5), [0.65, 0.35])
        np.testing.assert_allclose(behavior_mix([0.8, 0.2], 1.0), [0.5, 0.5])
        np.testing.assert_array_equal(behavior_mix([0.8, 0.2], 0.0), [0.8, 0.2])

    @settings(max_examples=100, deadline=None)
    @given(pi=simplex, eps=st.floats(0, 1))
    def test_simplex_with_floor(self, pi, eps):
        mixed = behavior_mix(pi, eps)
        assert abs(mixed.sum() - 1.0) < 1e-12
        assert mixed.min() >= eps / len(pi) - 1e-15


class TestActorLoss:
    def test_on_policy_reduces_to_weighted_log_prob(self):
        logp = Tensor(np.log([0.5, 0.25]))
        adv = np.array([1.0, -2.0])
        loss = actor_loss(logp, adv, np.ones(2), [], 0.0)
        assert float(loss.data) == pytest.approx(np.mean(-adv * np.log([0.5, 0.25])))

    def test_zero_advantage_gives_zero_loss_and_grads(self):
        logits = Parameter(np.random.default_rng(0).normal(size=(4, 3)))
        logp = gather(log_softmax(logits, axis=1), np.arange(4), np.array([0, 1, 2, 0]))
        loss = actor_loss(logp, np.zeros(4), np.ones(4), [logits], 0.0)
        backward(loss)
        assert float(loss.data) == 0.0
        np.testing.assert_array_equal(logits.grad, 0.0)

    def test_positive_advantage_step_raises_probability(self):
        logits = Parameter(np.zeros((1, 3)))
        logp = gather(log_softmax(logits, axis=1), np.arange(1), np.array([2]))
        backward(actor_loss(logp, np.array([1.0]), np.array([1.3]), [], 0.0))
        logits.data -= 0.1 * logits.grad
        p = np.exp(logits.data[0]) / np.exp(logits.data[0]).sum()
        assert p[2] > 1 / 3

    def test_l1_penalty_is_mean_absolute_weight(self):
        w = Parameter(np.array([[1.0, -3.0]]))
        b = Parameter(np.array([[0.5]]))
        loss = actor_loss(Tensor([0.0]), np.zeros(1), np.ones(1), [w, b], 0.1)
        assert float(loss.data) == pytest.approx(0.1 * 4.5 / 3)
        backward(loss)
        np.testing.assert_allclose(w.grad, [[0.1 / 3, -0.1 / 3]])

    def test_zero_behaviour_probability_rejected(self):
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU), SMALL, seed=1)
        batch = tr.rollout()
        for extra in batch.extras:
            pi, _ = extra["listener"]
            extra["listener"] = (pi, np.zeros(len(pi)))
        inp, taken, _ = tr.critic_batch(batch)
        with pytest.raises(ValueError, match="zero probability"):
            tr.actor_objective(batch, tr.advantages(batch, inp, taken))


class TestReturnScale:
    def test_empty_is_unit(self):
        assert ReturnScale().scale == 1.0

    def test_discounted_rms(self):
        rs = ReturnScale()
        rs.update(np.array([[1.0], [1.0]]), 0.5)  # returns 1.5 and 1.0
        assert rs.scale == pytest.approx(np.sqrt((1.5**2 + 1.0) / 2))

    def test_floor(self):
        rs = ReturnScale()
        rs.update(np.zeros((3, 2)), 0.9)
        assert rs.scale == rs.floor


class TestTrainer:
    def test_metrics_and_critic_width(self):
        tr = ComaDialTrainer(MATRIX, DiscretizerSpec(Kind.DRU), SMALL, seed=1)
        assert tr.critic.in_width == 12 + 2 * 2 + 3 and tr.critic.out_width == 2
        m = tr.train_iteration()
        assert set(m) == {"loss", "critic_loss", "actor_lr", "train_reward", "comm_amplitude"}
        assert 0.0 <= m["actor_lr"] <= SMALL.gate.alpha_max

    def test_policy_is_simplex(self):
        tr = ComaDialTrainer(MATRIX, DiscretizerSpec(Kind.GS), SMALL, seed=2)
        pi, pb = tr._per_actor_policy(tr.rollout())
        np.testing.assert_allclose(pi.sum(axis=-1), 1.0, rtol=1e-12)
        assert np.all(pb >= SMALL.epsilon / 2)

    def test_closed_gate_freezes_actor(self):
        cfg = ComaConfig(**{**SMALL.__dict__, "gate": LrGate(eta_min=-2.0, eta_max=-1.0)})
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU), cfg, seed=1)
        before = [p.data.copy() for p in tr.nets.all_params()]
        m = tr.train_iteration()
        assert m["actor_lr"] == 0.0
        for old, p in zip(before, tr.nets.all_params()):
            np.testing.assert_array_equal(old, p.data)

    @pytest.mark.parametrize("kind", [Kind.DRU, Kind.ST_DRU, Kind.GS])
    def test_sever_channel_zeroes_cnet_grads(self, kind):
        for sever in (True, False):
            tr = ComaDialTrainer(SL, DiscretizerSpec(kind), SMALL, seed=3, ablations=Ablations(sever_channel=sever))
            batch = tr.rollout()
            inp, taken, _ = tr.critic_batch(batch)
            loss, _ = tr.actor_objective(batch, tr.advantages(batch, inp, taken))
            tr.actor_opt.zero_grad()
            backward(loss)
            norm = sum(float(np.abs(p.grad).sum()) for p in tr.nets.cnet_params())
            assert (norm == 0.0) == sever

    def test_replayed_ratios_are_one_over_mix(self):
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU), SMALL, seed=4)
        batch = tr.rollout()
        taped = tr.nets.forward(batch.merged_obs(), tr.spec, record=batch.record)
        logits = taped.outputs["listener"].data
        rolled = np.concatenate([o["listener"] for o in batch.outputs], axis=0)
        np.testing.assert_allclose(logits, rolled, rtol=0, atol=1e-12)

    def test_replay_reproduces_loss(self):
        tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.ST_GS), SMALL, seed=5)
        batch = tr.rollout()
        inp, taken, _ = tr.critic_batch(batch)
        adv = tr.advantages(batch, inp, taken)
        first, _ = tr.actor_objective(batch, adv)
        again, _ = tr.actor_objective(batch, adv)
        # recompute from the rollout-time policy: ratios pi / pi_b exactly as recorded
        pi, pb = tr._per_actor_policy(batch)
        u = taken.reshape(pi.shape[:-1])
        p_taken = np.take_along_axis(pi, u[..., None], axis=-1)[..., 0]
        mean_abs = np.mean(np.concatenate([np.abs(p.data).ravel() for p in tr.nets.anet_params()]))
        expected = np.mean(-adv * (p_taken / pb) * np.log(p_taken)) + SMALL.reg_coeff * mean_abs
        assert abs(float(first.data) - float(again.data)) < 1e-12
        assert abs(float(first.data) - expected) < 1e-12

    def test_deterministic_for_seed(self):
        runs = []
        for _ in range(2):
            tr = ComaDialTrainer(MATRIX, DiscretizerSpec(Kind.DRU), SMALL, seed=9)
            runs.append([tr.train_iteration()["critic_loss"] for _ in range(3)])
        assert runs[0] == runs[1]

    def test_critic_steps(self):
        losses = []
        for steps in (1, 4):
            cfg = ComaConfig(**{**SMALL.__dict__, "critic_steps": steps})
            tr = ComaDialTrainer(SL, DiscretizerSpec(Kind.DRU), cfg, seed=6)
            losses.append(tr.train_iteration()["critic_loss"])
        assert losses[1] < losses[0]
