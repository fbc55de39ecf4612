"""Episode collection and evaluation shared by the DIAL and COMA-DIAL trainers.

Rollouts run untaped and record every noise draw and channel flip; the
trainers then replay the whole batch in a single taped pass, which yields
exactly the values the agents acted on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Ablations, CommNets, CommRecord
from .discretizers import DiscretizerSpec
from .envs import make_env
from .envs.matrix import MatrixEnvConfig


@dataclass
class EpisodeBatch:
    """A batch of B episodes of T steps.

    ``obs[t][a]``: ``(B, obs_width)``; ``actions[t][g]``: ``(k_g, B)`` ints;
    ``rewards``: ``(T, B)`` team rewards; ``states``: ``(T + 1, B, state_width)``;
    ``outputs[t][g]`` / ``inputs[t][g]``: untaped A-Net outputs and inputs.
    """

    obs: list
    actions: list
    rewards: np.ndarray
    states: np.ndarray
    record: CommRecord
    outputs: list
    inputs: list
    amplitudes: list
    extras: list

    @property
    def n_steps(self) -> int:
        return len(self.obs)

    @property
    def batch_size(self) -> int:
        return self.rewards.shape[1]

    def merged_obs(self) -> list:
        """Per-agent observations stacked over time: sample index ``t * B + b``."""
        n_agents = len(self.obs[0])
        return [np.concatenate([step[a] for step in self.obs], axis=0) for a in range(n_agents)]

    def episode_returns(self) -> np.ndarray:
        return self.rewards.sum(axis=0)


def channel_params(env_cfg) -> tuple:
    if isinstance(env_cfg, MatrixEnvConfig):
        return env_cfg.flip_probability, env_cfg.flips_per_message
    return 0.0, 0


def actions_to_env(nets: CommNets, actions: dict, batch: int) -> np.ndarray:
    out = np.zeros((batch, len(nets.layout.actors)), dtype=np.int64)
    for (g, j), col in nets.actor_column().items():
        out[:, col] = actions[g][j]
    return out


def play(env, nets: CommNets, spec: DiscretizerSpec, choose, rng_env, rng_noise, rng_channel,
         env_cfg, ablations: Ablations | None = None) -> EpisodeBatch:
    """Run one batch of episodes; ``choose(outputs, t)`` returns ``{group: (k, B) actions}``
    and optionally a dict of per-step extras as a second value."""
    p, k = channel_params(env_cfg)
    res = env.reset(rng_env)
    obs, actions, rewards, states, outputs, inputs, records, amps, extras = [], [], [], [], [], [], [], [], []
    states.append(res.global_state)
    done = False
    t = 0
    while not done:
        obs.append(res.observations)
        step = nets.forward_np(res.observations, spec, rng_noise=rng_noise, rng_channel=rng_channel,
                               flip_probability=p, flips_per_message=k, ablations=ablations)
        env.communicate()
        chosen = choose(step, t)
        extra = None
        if isinstance(chosen, tuple):
            chosen, extra = chosen
        res = env.step(actions_to_env(nets, chosen, env.batch))
        actions.append(chosen)
        rewards.append(res.team_reward)
        states.append(res.global_state)
        outputs.append({g: o.data for g, o in step.outputs.items()})
        inputs.append({g: i.data for g, i in step.inputs.items()})
        records.append(step.record)
        amps.append([x.data for x in step.pre_activations.values()])
        extras.append(extra)
        done = res.done
        t += 1
    return EpisodeBatch(obs, actions, np.array(rewards), np.array(states), CommRecord.merge(records),
                        outputs, inputs, amps, extras)


def batch_amplitude(batch: EpisodeBatch) -> float:
    parts = [x.ravel() for step in batch.amplitudes for x in step]
    return float(np.abs(np.concatenate(parts)).mean()) if parts else 0.0


def greedy(nets: CommNets, batch: int):
    def choose(step, t):
        out = {}
        for g, agents in nets.act_groups.items():
            q = step.outputs[g].data
            out[g] = np.argmax(q, axis=1).reshape(len(agents), batch)
        return out

    return choose


def reward_copies(env_cfg, layout) -> int:
    """How many agents collect the team reward as their own return.

    In the matrix game each agent is paid for its own answer, so the per-agent
    returns already sum to the team reward. In the particle scenarios every
    agent is paid the full team reward.
    """
    return 1 if isinstance(env_cfg, MatrixEnvConfig) else layout.n_agents


def evaluate(nets: CommNets, spec: DiscretizerSpec, env_cfg, n_episodes: int, rng: np.random.Generator,
             ablations: Ablations | None = None) -> float:
    """Mean summed-over-agents episode return under greedy actions and eval-mode units."""
    env = make_env(env_cfg, n_episodes)
    rng_env, rng_noise, rng_channel = rng.spawn(3)
    batch = play(env, nets, spec.eval(), greedy(nets, n_episodes), rng_env, rng_noise, rng_channel,
                 env_cfg, ablations)
    return float(batch.episode_returns().mean()) * reward_copies(env_cfg, nets.layout)
