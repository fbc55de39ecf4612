"""Shared types for the batched environments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PhaseError(RuntimeError):
    """An environment method was called in the wrong phase."""


@dataclass
class StepResult:
    """One step for a batch of episodes.

    ``observations[a]`` has shape ``(batch, obs_width[a])``; ``team_reward``
    has shape ``(batch,)``. ``done`` is shared by every agent and episode.
    """

    observations: list
    team_reward: np.ndarray
    done: bool
    global_state: np.ndarray


@dataclass(frozen=True)
class CommLayout:
    """Who speaks, who acts, who hears whom, and which agents share weights."""

    n_agents: int
    obs_widths: tuple
    speakers: tuple
    actors: tuple
    listens_to: dict
    n_actions: int
    groups: tuple
    message_bits: int
    state_width: int
    episode_length: int

    def incoming_width(self, agent: int) -> int:
        return len(self.listens_to.get(agent, ())) * self.message_bits

    def agents_in(self, group: str) -> tuple:
        return tuple(a for a in range(self.n_agents) if self.groups[a] == group)

    def without_sharing(self) -> "CommLayout":
        groups = tuple(f"{g}{a}" for a, g in enumerate(self.groups))
        return CommLayout(self.n_agents, self.obs_widths, self.speakers, self.actors, self.listens_to,
                          self.n_actions, groups, self.message_bits, self.state_width, self.episode_length)
