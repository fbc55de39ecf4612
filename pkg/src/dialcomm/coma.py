"""COMA-DIAL: centralised counterfactual critic for actions, channel gradients for messages.

Per iteration: roll out with an epsilon-mixed behaviour policy, fit the
critic, gate the actor learning rate on the refreshed critic loss, then take
an off-policy actor step whose gradient also flows through the channel into
the senders' C-Nets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .agents import Ablations, CommNets
from .autodiff import (
    Adam,
    Mlp,
    MlpSpec,
    Tensor,
    abs_,
    backward,
    concat,
    gather,
    log_softmax,
    mean,
    soft_update,
    square,
)
from .discretizers import DiscretizerSpec
from .envs import make_env, make_layout
from .rng import stream
from .rollout import EpisodeBatch, actions_to_env, batch_amplitude, evaluate, play, reward_copies


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class LrGate:
    eta_min: float = 0.05
    eta_max: float = 0.5
    alpha_max: float = 1e-3

    def __post_init__(self):
        if not self.eta_min < self.eta_max:
            raise ValueError(f"need eta_min < eta_max, got {self.eta_min} >= {self.eta_max}")
        if self.alpha_max <= 0:
            raise ValueError("alpha_max must be positive")


@dataclass(frozen=True)
class ComaConfig:
    batch_size: int = 32
    epsilon: float = 0.1
    gamma: float = 0.95
    tau: float = 0.1
    critic_lr: float = 1e-3
    critic_steps: int = 4
    gate: LrGate = LrGate()
    reg_coeff: float = 1e-3
    anet_hidden: tuple = (64, 64)
    cnet_hidden: tuple = (32,)
    critic_hidden: tuple = (64, 64)
    param_sharing: bool = True
    normalize_rewards: bool = True


@dataclass
class ReturnScale:
    """Running root-mean-square of discounted returns; rewards are divided by it.

    The gate thresholds are absolute critic-loss values, so the critic has to
    live on a fixed scale regardless of how large an environment's raw
    rewards are. The RMS (not the std) is used so a nearly constant return
    never shrinks the scale toward zero.
    """

    sum_sq: float = 0.0
    count: int = 0
    floor: float = 1e-8

    def update(self, rewards: np.ndarray, gamma: float) -> None:
        returns = np.zeros_like(rewards, dtype=np.float64)
        acc = np.zeros(rewards.shape[1:])
        for t in range(len(rewards) - 1, -1, -1):
            acc = rewards[t] + gamma * acc
            returns[t] = acc
        self.sum_sq += float(np.sum(returns ** 2))
        self.count += returns.size

    @property
    def scale(self) -> float:
        if self.count == 0:
            return 1.0
        return max(float(np.sqrt(self.sum_sq / self.count)), self.floor)


def gated_lr(critic_loss_value: float, gate: LrGate) -> float:
    """Actor step size: full below eta_min, zero above eta_max, linear in between."""
    frac = (gate.eta_max - critic_loss_value) / (gate.eta_max - gate.eta_min)
    return gate.alpha_max * min(1.0, max(0.0, frac))


def behavior_mix(policy: np.ndarray, epsilon: float) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    return (1.0 - epsilon) * policy + epsilon / policy.shape[-1]


def counterfactual_advantage(q_row, policy, u) -> np.ndarray:
    """Q(s, u) minus the policy-weighted value of every alternative for this agent.

    Works row-wise on ``(n, |U|)`` arrays or on a single row.
    """
    q = np.asarray(q_row, dtype=np.float64)
    pi = np.asarray(policy, dtype=np.float64)
    u = np.asarray(u)
    baseline = (q * pi).sum(axis=-1)
    taken = np.take_along_axis(q, u[..., None], axis=-1)[..., 0] if q.ndim > 1 else q[int(u)]
    return taken - baseline


def critic_loss(q_taken: Tensor, targets: np.ndarray) -> Tensor:
    return mean(square(q_taken - Tensor(targets)))


def actor_loss(logp_taken: Tensor, advantages: np.ndarray, ratios: np.ndarray, params, reg_coeff: float) -> Tensor:
    """Mean of -A * (pi / pi_b) * ln pi plus ``reg_coeff`` times the mean absolute actor weight.

    Advantages and importance ratios are constants; the gradient flows through
    ``ln pi`` only. The penalty is averaged rather than summed over weights:
    under Adam a summed penalty moves every weight by a full step per
    iteration and swamps the policy gradient.
    """
    pg = mean(Tensor(-(advantages * ratios)) * logp_taken)
    if reg_coeff == 0.0 or not params:
        return pg
    l1 = mean(concat([abs_(p).reshape(-1) for p in params], axis=0))
    return pg + Tensor(reg_coeff) * l1


class ComaDialTrainer:
    def __init__(self, env_cfg, spec: DiscretizerSpec, cfg: ComaConfig = ComaConfig(), seed: int = 0,
                 ablations: Ablations | None = None):
        self.env_cfg = env_cfg
        self.spec = spec.train()
        self.cfg = cfg
        self.seed = seed
        self.ablations = ablations or Ablations()
        self.layout = make_layout(env_cfg)
        self.rng = {name: stream(seed, name) for name in ("init", "env", "explore", "noise", "channel")}
        self.nets = CommNets(self.layout, self.rng["init"], cfg.anet_hidden, cfg.cnet_hidden,
                             param_sharing=cfg.param_sharing)
        lay = self.layout
        self.n_actors = len(lay.actors)
        width = lay.state_width + (self.n_actors - 1) * lay.n_actions + self.n_actors
        self.critic = Mlp(MlpSpec((width, *cfg.critic_hidden, lay.n_actions)), self.rng["init"], prefix="critic")
        self.critic_target = self.critic.clone(prefix="critic_target")
        self.critic_opt = Adam(self.critic.params, lr=cfg.critic_lr)
        self.actor_opt = Adam(self.nets.all_params(), lr=cfg.gate.alpha_max)
        self.env = make_env(env_cfg, cfg.batch_size)
        self.return_scale = ReturnScale()
        self.iteration = 0

    # ----------------------------------------------------------- rollout

    def _choose(self, eps: float):
        def choose(step, t):
            out, extra = {}, {}
            for g, agents in self.nets.act_groups.items():
                logits = step.outputs[g].data
                z = np.exp(logits - logits.max(axis=1, keepdims=True))
                pi = z / z.sum(axis=1, keepdims=True)
                pi_b = np.ascontiguousarray(behavior_mix(pi, eps))
                u = kernels.sample_categorical(pi_b, self.rng["explore"].random(len(pi_b)))
                out[g] = u.reshape(len(agents), -1)
                extra[g] = (pi, pi_b[np.arange(len(u)), u])
            return out, extra

        return choose

    def rollout(self) -> EpisodeBatch:
        return play(self.env, self.nets, self.spec, self._choose(self.cfg.epsilon), self.rng["env"],
                    self.rng["noise"], self.rng["channel"], self.env_cfg, self.ablations)

    # ----------------------------------------------------------- critic

    def critic_inputs(self, states: np.ndarray, joint: np.ndarray) -> np.ndarray:
        """Rows ``i * N + n`` for actor i: state ⊕ others' one-hot actions ⊕ actor id.

        ``states``: ``(N, state_width)``; ``joint``: ``(N, n_actors)`` action ids.
        """
        n = len(states)
        n_act, n_u = self.n_actors, self.layout.n_actions
        eye_u, eye_a = np.eye(n_u), np.eye(n_act)
        rows = []
        for i in range(n_act):
            others = [eye_u[joint[:, j]] for j in range(n_act) if j != i]
            rows.append(np.concatenate([states, *others, np.repeat(eye_a[i:i + 1], n, axis=0)], axis=1))
        return np.concatenate(rows, axis=0)

    def _joint(self, batch: EpisodeBatch) -> np.ndarray:
        """``(T, B, n_actors)`` joint actions."""
        return np.stack([actions_to_env(self.nets, a, batch.batch_size) for a in batch.actions], axis=0)

    def critic_batch(self, batch: EpisodeBatch):
        T, B = batch.n_steps, batch.batch_size
        joint = self._joint(batch)
        states = batch.states[:T].reshape(T * B, -1)
        inp = self.critic_inputs(states, joint.reshape(T * B, -1))
        taken = np.transpose(joint, (2, 0, 1)).reshape(-1)  # (actor, t, b)
        rewards = batch.rewards / self.return_scale.scale if self.cfg.normalize_rewards else batch.rewards
        y = np.repeat(rewards[None], self.n_actors, axis=0).astype(np.float64)
        if self.cfg.gamma > 0 and T > 1:
            q_next = self.critic_target.predict(inp).reshape(self.n_actors, T, B, -1)
            u_next = np.transpose(joint, (2, 0, 1))
            nxt = np.take_along_axis(q_next[:, 1:], u_next[:, 1:, :, None], axis=3)[..., 0]
            y[:, :-1] += self.cfg.gamma * nxt
        return inp, taken, y.reshape(-1)

    def critic_loss_value(self, inp, taken, y) -> float:
        q = self.critic.predict(inp)
        return float(np.mean((q[np.arange(len(taken)), taken] - y) ** 2))

    # ----------------------------------------------------------- actor

    def _per_actor_policy(self, batch: EpisodeBatch):
        """Policies ``(n_actors, T, B, |U|)`` and behaviour probs of taken actions ``(n_actors, T, B)``."""
        T, B = batch.n_steps, batch.batch_size
        pi = np.zeros((self.n_actors, T, B, self.layout.n_actions))
        pb = np.zeros((self.n_actors, T, B))
        for (g, j), col in self.nets.actor_column().items():
            for t, extra in enumerate(batch.extras):
                p_full, p_taken = extra[g]
                pi[col, t] = p_full[j * B:(j + 1) * B]
                pb[col, t] = p_taken[j * B:(j + 1) * B]
        return pi, pb

    def advantages(self, batch: EpisodeBatch, inp: np.ndarray, taken: np.ndarray) -> np.ndarray:
        """``(n_actors, T, B)`` counterfactual advantages from the current critic."""
        q = self.critic.predict(inp)
        pi, _ = self._per_actor_policy(batch)
        adv = counterfactual_advantage(q, pi.reshape(len(q), -1), taken)
        return adv.reshape(self.n_actors, batch.n_steps, batch.batch_size)

    def actor_objective(self, batch: EpisodeBatch, adv: np.ndarray):
        taped = self.nets.forward(batch.merged_obs(), self.spec, record=batch.record, ablations=self.ablations)
        _, pb = self._per_actor_policy(batch)
        cols = self.nets.actor_column()
        logp_parts, a_parts, b_parts = [], [], []
        for g, logits in taped.outputs.items():
            k = len(self.nets.act_groups[g])
            taken = np.stack([a[g] for a in batch.actions], axis=1).reshape(-1)
            logp = gather(log_softmax(logits, axis=1), np.arange(len(taken)), taken)
            logp_parts.append(logp)
            a_parts.append(np.concatenate([adv[cols[(g, j)]].reshape(-1) for j in range(k)]))
            b_parts.append(np.concatenate([pb[cols[(g, j)]].reshape(-1) for j in range(k)]))
        logp = logp_parts[0] if len(logp_parts) == 1 else concat(logp_parts, axis=0)
        behaviour = np.concatenate(b_parts)
        if (behaviour <= 0).any():
            raise ValueError("behaviour policy gave zero probability to a taken action")
        ratios = np.exp(logp.data) / behaviour
        loss = actor_loss(logp, np.concatenate(a_parts), ratios, self.nets.anet_params(), self.cfg.reg_coeff)
        return loss, taped

    # ----------------------------------------------------------- iteration

    def train_iteration(self) -> dict:
        batch = self.rollout()
        if self.cfg.normalize_rewards:
            self.return_scale.update(batch.rewards, self.cfg.gamma)
        inp, taken, y = self.critic_batch(batch)

        for _ in range(self.cfg.critic_steps):
            q = self.critic(Tensor(inp))
            c_loss = critic_loss(gather(q, np.arange(len(taken)), taken), y)
            if not np.isfinite(c_loss.data).all():
                raise TrainingAborted(f"non-finite critic loss at iteration {self.iteration}")
            self.critic_opt.zero_grad()
            backward(c_loss)
            self.critic_opt.step()

        fresh = self.critic_loss_value(inp, taken, y)
        alpha = gated_lr(fresh, self.cfg.gate)
        adv = self.advantages(batch, inp, taken)
        a_loss, _ = self.actor_objective(batch, adv)
        if not np.isfinite(a_loss.data).all():
            raise TrainingAborted(f"non-finite actor loss at iteration {self.iteration}")
        if alpha > 0.0:
            self.actor_opt.zero_grad()
            backward(a_loss)
            self.actor_opt.step(lr=alpha)
        soft_update(self.critic_target.params, self.critic.params, self.cfg.tau)
        self.iteration += 1
        return {
            "loss": float(a_loss.data),
            "critic_loss": fresh,
            "actor_lr": alpha,
            "train_reward": float(batch.episode_returns().mean()) * reward_copies(self.env_cfg, self.layout),
            "comm_amplitude": batch_amplitude(batch),
        }

    def evaluate(self, n_episodes: int, rng: np.random.Generator) -> float:
        return evaluate(self.nets, self.spec, self.env_cfg, n_episodes, rng, self.ablations)

    def checkpoint_params(self) -> list:
        return self.nets.all_params() + self.critic.params
