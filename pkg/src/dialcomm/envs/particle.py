"""Point-mass navigation scenarios with three landmarks.

Scenarios
---------
speaker_listener
    A static speaker sees the target landmark; a listener must reach it.
simple_reference
    Two movers; each sees the *other* mover's target and must reach its own.
parallel_speaker_listener
    One speaker, several listeners, one shared target.

Movers pick one of five discrete actions (noop, +x, -x, +y, -y). The
per-step team reward is minus the summed squared distance of every mover
to its target.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .. import kernels
from .base import CommLayout, StepResult

N_LANDMARKS = 3
N_MOVES = 5


class Scenario(str, enum.Enum):
    SPEAKER_LISTENER = "speaker_listener"
    SIMPLE_REFERENCE = "simple_reference"
    PARALLEL_SPEAKER_LISTENER = "parallel_speaker_listener"


@dataclass(frozen=True)
class Physics:
    dt: float = 0.1
    damping: float = 0.25
    accel: float = 5.0
    max_speed: float = 1.3


@dataclass(frozen=True)
class ParticleEnvConfig:
    scenario: Scenario = Scenario.SPEAKER_LISTENER
    n_listeners: int = 2
    n_landmarks: int = N_LANDMARKS
    episode_length: int = 25
    message_bits: int = 2
    physics: Physics = Physics()

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.n_landmarks != N_LANDMARKS:
            raise ValueError(f"scenarios use exactly {N_LANDMARKS} landmarks")
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")
        if self.n_listeners < 1:
            raise ValueError("need at least one listener")
        if self.message_bits < 1:
            raise ValueError("messages need at least one bit")

    @property
    def n_movers(self) -> int:
        if self.scenario is Scenario.SPEAKER_LISTENER:
            return 1
        if self.scenario is Scenario.SIMPLE_REFERENCE:
            return 2
        return self.n_listeners


def particle_layout(cfg: ParticleEnvConfig) -> CommLayout:
    listener_width = 2 + 2 * N_LANDMARKS
    state_width = 4 * cfg.n_movers + 2 * N_LANDMARKS + 2 * N_LANDMARKS * cfg.n_movers + 2 * cfg.n_movers \
        + N_LANDMARKS * cfg.n_movers
    common = dict(n_actions=N_MOVES, message_bits=cfg.message_bits, state_width=state_width,
                  episode_length=cfg.episode_length)
    if cfg.scenario is Scenario.SIMPLE_REFERENCE:
        return CommLayout(
            n_agents=2,
            obs_widths=(listener_width + N_LANDMARKS,) * 2,
            speakers=(0, 1),
            actors=(0, 1),
            listens_to={0: (1,), 1: (0,)},
            groups=("agent", "agent"),
            **common,
        )
    n_listen = cfg.n_movers
    return CommLayout(
        n_agents=1 + n_listen,
        obs_widths=(N_LANDMARKS,) + (listener_width,) * n_listen,
        speakers=(0,),
        actors=tuple(range(1, 1 + n_listen)),
        listens_to={a: (0,) for a in range(1, 1 + n_listen)},
        groups=("speaker",) + ("listener",) * n_listen,
        **common,
    )


class ParticleEnv:
    """A batch of particle episodes stepped in lock-step."""

    def __init__(self, cfg: ParticleEnvConfig, batch: int = 1):
        self.cfg = cfg
        self.batch = batch
        self.layout = particle_layout(cfg)
        self.t = 0
        self.landmarks = None
        self.pos = None
        self.vel = None
        self.targets = None

    def reset(self, rng: np.random.Generator) -> StepResult:
        b, k = self.batch, self.cfg.n_movers
        self.landmarks = rng.uniform(-1.0, 1.0, size=(b, N_LANDMARKS, 2))
        # movers stored flat, (batch * n_movers, 2), for the integration kernel
        self.pos = rng.uniform(-1.0, 1.0, size=(b * k, 2))
        self.vel = np.zeros((b * k, 2))
        if self.cfg.scenario is Scenario.SIMPLE_REFERENCE:
            self.targets = rng.integers(0, N_LANDMARKS, size=(b, k))
        else:
            self.targets = np.repeat(rng.integers(0, N_LANDMARKS, size=(b, 1)), k, axis=1)
        self.t = 0
        return StepResult(self._observations(), np.zeros(b), False, self.global_state())

    def communicate(self):
        """Messages are exchanged every step; no phase bookkeeping needed."""

    def _movers(self, arr) -> np.ndarray:
        return arr.reshape(self.batch, self.cfg.n_movers, 2)

    def target_positions(self) -> np.ndarray:
        idx = np.arange(self.batch)[:, None]
        return self.landmarks[idx, self.targets]

    def _observations(self) -> list:
        eye = np.eye(N_LANDMARKS)
        pos, vel = self._movers(self.pos), self._movers(self.vel)
        mover_obs = []
        for j in range(self.cfg.n_movers):
            rel = (self.landmarks - pos[:, j:j + 1, :]).reshape(self.batch, -1)
            mover_obs.append(np.concatenate([vel[:, j], rel], axis=1))
        if self.cfg.scenario is Scenario.SIMPLE_REFERENCE:
            return [
                np.concatenate([mover_obs[j], eye[self.targets[:, 1 - j]]], axis=1)
                for j in range(2)
            ]
        return [eye[self.targets[:, 0]]] + mover_obs

    def global_state(self) -> np.ndarray:
        """Positions, velocities, landmarks, mover-to-landmark and mover-to-target offsets, target one-hots."""
        eye = np.eye(N_LANDMARKS)
        pos, vel = self._movers(self.pos), self._movers(self.vel)
        offsets = self.landmarks[:, None, :, :] - pos[:, :, None, :]
        goal = self.target_positions() - pos
        parts = [pos.reshape(self.batch, -1), vel.reshape(self.batch, -1),
                 self.landmarks.reshape(self.batch, -1), offsets.reshape(self.batch, -1),
                 goal.reshape(self.batch, -1)]
        parts += [eye[self.targets[:, j]] for j in range(self.cfg.n_movers)]
        return np.concatenate(parts, axis=1)

    def distances_sq(self) -> np.ndarray:
        diff = self._movers(self.pos) - self.target_positions()
        return (diff * diff).sum(axis=2)

    def step(self, actions) -> StepResult:
        if self.t >= self.cfg.episode_length:
            raise RuntimeError("episode already finished; call reset")
        actions = np.ascontiguousarray(np.asarray(actions, dtype=np.int64).reshape(self.batch * self.cfg.n_movers))
        if ((actions < 0) | (actions >= N_MOVES)).any():
            bad = actions[(actions < 0) | (actions >= N_MOVES)][0]
            raise ValueError(f"unknown action id {bad}; expected 0..{N_MOVES - 1}")
        ph = self.cfg.physics
        kernels.integrate(self.pos, self.vel, actions, ph.dt, ph.damping, ph.accel, ph.max_speed)
        self.t += 1
        reward = -self.distances_sq().sum(axis=1)
        done = self.t >= self.cfg.episode_length
        return StepResult(self._observations(), reward, done, self.global_state())
