"""Matrix communication game.

N agents each see a number in [0, M) as a one-hot vector, broadcast one
message, then answer whether every agent received the same number. The
team reward is the count of correct answers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import CommLayout, PhaseError, StepResult

SAME, DIFFERENT = 0, 1


@dataclass(frozen=True)
class MatrixEnvConfig:
    n_agents: int = 3
    n_numbers: int = 4
    message_bits: int = 2
    flip_probability: float = 0.0
    flips_per_message: int = 0

    def __post_init__(self):
        if self.n_agents < 2:
            raise ValueError("matrix environment needs at least 2 agents")
        if self.n_numbers < 2:
            raise ValueError("matrix environment needs at least 2 numbers")
        if self.message_bits < 1:
            raise ValueError("messages need at least one bit")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip probability must lie in [0, 1], got {self.flip_probability}")
        if self.flips_per_message < 0 or self.flips_per_message > self.message_bits:
            raise ValueError(f"flips per message must lie in [0, {self.message_bits}]")
        if self.flip_probability > 0 and self.message_bits <= self.min_bits:
            raise ValueError(
                f"error correction needs more than {self.min_bits} bits for {self.n_numbers} numbers, "
                f"got {self.message_bits}"
            )

    @property
    def min_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.n_numbers)))


def matrix_layout(cfg: MatrixEnvConfig) -> CommLayout:
    n = cfg.n_agents
    return CommLayout(
        n_agents=n,
        obs_widths=(cfg.n_numbers,) * n,
        speakers=tuple(range(n)),
        actors=tuple(range(n)),
        listens_to={a: tuple(b for b in range(n) if b != a) for a in range(n)},
        n_actions=2,
        groups=("agent",) * n,
        message_bits=cfg.message_bits,
        state_width=n * cfg.n_numbers,
        episode_length=1,
    )


def draw_numbers(cfg: MatrixEnvConfig, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Half the episodes give every agent one shared number; the rest are never all equal."""
    n, m = cfg.n_agents, cfg.n_numbers
    same = rng.random(batch) < 0.5
    numbers = np.empty((batch, n), dtype=np.int64)
    numbers[same] = rng.integers(0, m, size=(int(same.sum()), 1))
    todo = np.flatnonzero(~same)
    while todo.size:
        numbers[todo] = rng.integers(0, m, size=(todo.size, n))
        all_equal = (numbers[todo] == numbers[todo, :1]).all(axis=1)
        todo = todo[all_equal]
    return numbers


class MatrixEnv:
    """A batch of matrix games stepped in lock-step."""

    def __init__(self, cfg: MatrixEnvConfig, batch: int = 1):
        self.cfg = cfg
        self.batch = batch
        self.layout = matrix_layout(cfg)
        self.numbers = None
        self.phase = None

    def reset(self, rng: np.random.Generator, numbers: np.ndarray | None = None) -> StepResult:
        self.numbers = draw_numbers(self.cfg, self.batch, rng) if numbers is None else np.asarray(numbers)
        self.phase = "communicate"
        return StepResult(self._observations(), np.zeros(self.batch), False, self.global_state())

    def _observations(self) -> list:
        eye = np.eye(self.cfg.n_numbers)
        return [eye[self.numbers[:, a]] for a in range(self.cfg.n_agents)]

    def global_state(self) -> np.ndarray:
        return np.concatenate(self._observations(), axis=1)

    def all_same(self) -> np.ndarray:
        return (self.numbers == self.numbers[:, :1]).all(axis=1)

    def communicate(self):
        if self.phase != "communicate":
            raise PhaseError(f"messages can only be exchanged in the communicate phase, not {self.phase!r}")
        self.phase = "act"

    def step(self, actions) -> StepResult:
        if self.phase != "act":
            raise PhaseError(f"step called in phase {self.phase!r}; exchange messages first")
        actions = np.asarray(actions).reshape(self.batch, self.cfg.n_agents)
        if not np.isin(actions, (SAME, DIFFERENT)).all():
            raise ValueError("matrix actions must be 0 (same) or 1 (different)")
        truth = np.where(self.all_same(), SAME, DIFFERENT)
        reward = (actions == truth[:, None]).sum(axis=1).astype(np.float64)
        self.phase = "done"
        return StepResult(self._observations(), reward, True, self.global_state())
