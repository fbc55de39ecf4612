"""DIAL: independent deep Q-learning with gradients flowing through the channel.

Each iteration collects a fresh on-policy batch, regresses Q(o ⊕ m, u) on the
one-step target from the target A-Nets, and backpropagates the loss through
the receivers' inputs into every sender's C-Net.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Ablations, CommNets, epsilon_greedy, select_action
from .autodiff import Adam, Tensor, backward, concat, gather, mean, soft_update, square
from .discretizers import DiscretizerSpec
from .envs import make_env, make_layout
from .rng import stream
from .rollout import EpisodeBatch, batch_amplitude, evaluate, play, reward_copies

__all__ = ["DialConfig", "DialTrainer", "dqn_loss", "select_action", "epsilon_greedy"]


class TrainingAborted(RuntimeError):
    """A loss or parameter became non-finite."""


@dataclass(frozen=True)
class DialConfig:
    batch_size: int = 32
    epsilon: float = 0.05
    gamma: float = 1.0
    tau: float = 0.01
    lr: float = 5e-4
    anet_hidden: tuple = (64, 64)
    cnet_hidden: tuple = (32,)
    param_sharing: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")


def td_targets(batch: EpisodeBatch, target_nets: dict, gamma: float) -> dict:
    """``{group: (k, T, B)}`` one-step targets; the last step is terminal."""
    T = batch.n_steps
    out = {}
    for g in batch.actions[0]:
        k = batch.actions[0][g].shape[0]
        y = np.repeat(batch.rewards[None, :, :], k, axis=0).astype(np.float64)
        if gamma > 0:
            for t in range(T - 1):
                q_next = target_nets[g].predict(batch.inputs[t + 1][g]).max(axis=1)
                y[:, t] += gamma * q_next.reshape(k, -1)
        out[g] = y
    return out


def dqn_loss(q_taken: Tensor, targets: np.ndarray) -> Tensor:
    """Mean squared TD error; ``targets`` are constants."""
    return mean(square(q_taken - Tensor(targets)))


class DialTrainer:
    def __init__(self, env_cfg, spec: DiscretizerSpec, cfg: DialConfig = DialConfig(), seed: int = 0,
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
        self.targets = self.nets.clone_anets()
        self.opt = Adam(self.nets.all_params(), lr=cfg.lr)
        self.env = make_env(env_cfg, cfg.batch_size)
        self.iteration = 0

    def _choose(self, eps: float):
        def choose(step, t):
            out = {}
            for g, agents in self.nets.act_groups.items():
                q = step.outputs[g].data
                out[g] = epsilon_greedy(q, eps, self.rng["explore"]).reshape(len(agents), -1)
            return out

        return choose

    def rollout(self, epsilon: float | None = None) -> EpisodeBatch:
        eps = self.cfg.epsilon if epsilon is None else epsilon
        return play(self.env, self.nets, self.spec, self._choose(eps), self.rng["env"], self.rng["noise"],
                    self.rng["channel"], self.env_cfg, self.ablations)

    def replay(self, batch: EpisodeBatch):
        """Taped pass over the whole batch using the recorded draws."""
        return self.nets.forward(batch.merged_obs(), self.spec, record=batch.record, ablations=self.ablations)

    def loss(self, batch: EpisodeBatch):
        taped = self.replay(batch)
        targets = td_targets(batch, self.targets, self.cfg.gamma)
        q_parts, y_parts = [], []
        for g, q in taped.outputs.items():
            taken = np.stack([a[g] for a in batch.actions], axis=1).reshape(-1)  # (k, T, B) -> rows
            q_parts.append(gather(q, np.arange(len(taken)), taken))
            y_parts.append(targets[g].reshape(-1))
        q_taken = q_parts[0] if len(q_parts) == 1 else concat(q_parts, axis=0)
        return dqn_loss(q_taken, np.concatenate(y_parts)), taped

    def train_iteration(self) -> dict:
        batch = self.rollout()
        loss, taped = self.loss(batch)
        if not np.isfinite(loss.data).all():
            raise TrainingAborted(f"non-finite DQN loss at iteration {self.iteration}")
        self.opt.zero_grad()
        backward(loss)
        self.opt.step()
        for g, net in self.nets.anets.items():
            soft_update(self.targets[g].params, net.params, self.cfg.tau)
        self.iteration += 1
        return {
            "loss": float(loss.data),
            "train_reward": float(batch.episode_returns().mean()) * reward_copies(self.env_cfg, self.layout),
            "comm_amplitude": batch_amplitude(batch),
        }

    def evaluate(self, n_episodes: int, rng: np.random.Generator) -> float:
        return evaluate(self.nets, self.spec, self.env_cfg, n_episodes, rng, self.ablations)

    def checkpoint_params(self) -> list:
        return self.nets.all_params()
