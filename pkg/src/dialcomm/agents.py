"""Per-agent networks and the message routing shared by both trainers.

Rows for a weight-sharing group are laid out agent-major: row ``j * S + s``
is sample ``s`` of the group's ``j``-th agent. Noise and flip masks are kept
as ``(k, S, width)`` arrays so per-step records concatenate along axis 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Mlp, MlpSpec, Tensor, concat, gather
from .discretizers import DiscretizerSpec, Noise, discretize, discretize_array, draw_noise
from .envs.base import CommLayout
from .envs.channel import channel_op, draw_flip_mask


@dataclass
class Ablations:
    sever_channel: bool = False
    zero_messages: bool = False


@dataclass
class CommRecord:
    """Noise and channel draws for one forward pass, replayable later."""

    noise: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)

    @staticmethod
    def merge(records) -> "CommRecord":
        records = list(records)
        out = CommRecord()
        for g in records[0].noise:
            first = [r.noise[g].first for r in records]
            second = [r.noise[g].second for r in records]
            out.noise[g] = Noise(
                None if first[0] is None else np.concatenate(first, axis=1),
                None if second[0] is None else np.concatenate(second, axis=1),
            )
        for g in records[0].masks:
            out.masks[g] = np.concatenate([r.masks[g] for r in records], axis=1)
        return out


@dataclass
class CommPass:
    pre_activations: dict
    messages: dict
    outputs: dict
    inputs: dict
    record: CommRecord


class CommNets:
    """C-Nets for speaking groups and A-Nets (Q or policy heads) for acting groups."""

    def __init__(self, layout: CommLayout, rng: np.random.Generator, anet_hidden=(64, 64),
                 cnet_hidden=(32,), activation: str = "tanh", param_sharing: bool = True):
        self.layout = layout if param_sharing else layout.without_sharing()
        lay = self.layout
        self.speak_groups = _ordered_groups(lay, lay.speakers)
        self.act_groups = _ordered_groups(lay, lay.actors)
        self.cnets = {}
        for g, agents in self.speak_groups.items():
            width = lay.obs_widths[agents[0]]
            spec = MlpSpec((width, *cnet_hidden, lay.message_bits), activation)
            self.cnets[g] = Mlp(spec, rng, prefix=f"cnet[{g}]")
        self.anets = {}
        for g, agents in self.act_groups.items():
            width = lay.obs_widths[agents[0]] + lay.incoming_width(agents[0])
            spec = MlpSpec((width, *anet_hidden, lay.n_actions), activation)
            self.anets[g] = Mlp(spec, rng, prefix=f"anet[{g}]")
        # row offsets of each speaker inside the stacked message matrix
        self._speaker_slot = {}
        slot = 0
        for g, agents in self.speak_groups.items():
            for a in agents:
                self._speaker_slot[a] = slot
                slot += 1
        self._n_slots = slot
        self._index_cache = {}

    def cnet_params(self) -> list:
        return [p for net in self.cnets.values() for p in net.params]

    def anet_params(self) -> list:
        return [p for net in self.anets.values() for p in net.params]

    def all_params(self) -> list:
        return self.cnet_params() + self.anet_params()

    def named_params(self) -> list:
        return self.all_params()

    def actor_column(self) -> dict:
        """(group, j) -> column in the env's action array."""
        cols = {a: i for i, a in enumerate(self.layout.actors)}
        return {(g, j): cols[a] for g, agents in self.act_groups.items() for j, a in enumerate(agents)}

    def _incoming_index(self, group: str, n_samples: int):
        key = (group, n_samples)
        if key not in self._index_cache:
            lay = self.layout
            agents = self.act_groups[group]
            bits = lay.message_bits
            senders = [lay.listens_to[a] for a in agents]
            n_in = len(senders[0])
            slots = np.array([[self._speaker_slot[s] for s in snd] for snd in senders])  # (k, n_in)
            s_idx = np.arange(n_samples)
            rows = slots[:, None, :, None] * n_samples + s_idx[None, :, None, None]
            rows = np.broadcast_to(rows, (len(agents), n_samples, n_in, bits))
            cols = np.broadcast_to(np.arange(bits), rows.shape)
            shape = (len(agents) * n_samples, n_in * bits)
            self._index_cache[key] = (rows.reshape(shape), cols.reshape(shape))
        return self._index_cache[key]

    def forward(self, obs: list, spec: DiscretizerSpec, record: CommRecord | None = None,
                rng_noise: np.random.Generator | None = None, rng_channel: np.random.Generator | None = None,
                flip_probability: float = 0.0, flips_per_message: int = 0,
                ablations: Ablations | None = None) -> CommPass:
        """Messages from every speaker, delivered to every actor, through the A-Nets.

        ``obs[a]`` is ``(S, obs_width[a])``. With ``record`` the stored noise
        and flips are reused; otherwise fresh draws are made and returned.
        """
        lay = self.layout
        abl = ablations or Ablations()
        n_samples = obs[0].shape[0]
        new_record = CommRecord()
        pre, msgs = {}, {}
        stacked = []
        for g, agents in self.speak_groups.items():
            x_in = np.concatenate([obs[a] for a in agents], axis=0)
            x = self.cnets[g](x_in)
            if record is not None:
                noise = record.noise[g]
                noise = Noise(*(None if n is None else n.reshape(x.shape) for n in (noise.first, noise.second)))
            else:
                noise = draw_noise(spec, x.shape, rng_noise)
            out = discretize(x, spec, noise=noise)
            k = len(agents)
            new_record.noise[g] = Noise(
                *(None if n is None else n.reshape(k, n_samples, -1) for n in (noise.first, noise.second))
            )
            pre[g] = x
            msgs[g] = out.message
            stacked.append(out.message)
        all_msgs = stacked[0] if len(stacked) == 1 else concat(stacked, axis=0)
        if abl.sever_channel:
            all_msgs = Tensor(all_msgs.data)

        outputs, inputs = {}, {}
        for g, agents in self.act_groups.items():
            own = np.concatenate([obs[a] for a in agents], axis=0)
            k = len(agents)
            if lay.incoming_width(agents[0]) == 0:
                inp = Tensor(own)
            else:
                rows, cols = self._incoming_index(g, n_samples)
                heard = gather(all_msgs, rows, cols)
                if record is not None:
                    mask = record.masks[g].reshape(heard.shape)
                else:
                    n_in = len(lay.listens_to[agents[0]])
                    mask = draw_flip_mask((k * n_samples, n_in, lay.message_bits), flip_probability,
                                          flips_per_message, rng_channel).reshape(heard.shape)
                new_record.masks[g] = mask.reshape(k, n_samples, -1)
                heard = channel_op(heard, mask)
                if abl.zero_messages:
                    heard = Tensor(np.zeros(heard.shape))
                inp = concat([Tensor(own), heard], axis=1)
            inputs[g] = inp
            outputs[g] = self.anets[g](inp)
        return CommPass(pre, msgs, outputs, inputs, new_record)

    def forward_np(self, obs: list, spec: DiscretizerSpec, record: CommRecord | None = None,
                   rng_noise: np.random.Generator | None = None, rng_channel: np.random.Generator | None = None,
                   flip_probability: float = 0.0, flips_per_message: int = 0,
                   ablations: Ablations | None = None) -> CommPass:
        """Untaped twin of :meth:`forward` on raw arrays; same arithmetic, same draws."""
        lay = self.layout
        abl = ablations or Ablations()
        n_samples = obs[0].shape[0]
        new_record = CommRecord()
        pre, msgs, stacked = {}, {}, []
        for g, agents in self.speak_groups.items():
            x = self.cnets[g].predict(np.concatenate([obs[a] for a in agents], axis=0))
            if record is not None:
                noise = record.noise[g]
                noise = Noise(*(None if n is None else n.reshape(x.shape) for n in (noise.first, noise.second)))
            else:
                noise = draw_noise(spec, x.shape, rng_noise)
            m = discretize_array(x, spec, noise)
            k = len(agents)
            new_record.noise[g] = Noise(
                *(None if n is None else n.reshape(k, n_samples, -1) for n in (noise.first, noise.second))
            )
            pre[g], msgs[g] = Tensor(x), Tensor(m)
            stacked.append(m)
        all_msgs = stacked[0] if len(stacked) == 1 else np.concatenate(stacked, axis=0)

        outputs, inputs = {}, {}
        for g, agents in self.act_groups.items():
            own = np.concatenate([obs[a] for a in agents], axis=0)
            k = len(agents)
            if lay.incoming_width(agents[0]) == 0:
                inp = own
            else:
                rows, cols = self._incoming_index(g, n_samples)
                heard = all_msgs[rows, cols]
                if record is not None:
                    mask = record.masks[g].reshape(heard.shape)
                else:
                    n_in = len(lay.listens_to[agents[0]])
                    mask = draw_flip_mask((k * n_samples, n_in, lay.message_bits), flip_probability,
                                          flips_per_message, rng_channel).reshape(heard.shape)
                new_record.masks[g] = mask.reshape(k, n_samples, -1)
                if mask.any():
                    heard = kernels.flip_bits(heard, mask)
                if abl.zero_messages:
                    heard = np.zeros(heard.shape)
                inp = np.concatenate([own, heard], axis=1)
            inputs[g] = Tensor(inp)
            outputs[g] = Tensor(self.anets[g].predict(inp))
        return CommPass(pre, msgs, outputs, inputs, new_record)

    def clone_anets(self) -> dict:
        return {g: net.clone(prefix=f"target_anet[{g}]") for g, net in self.anets.items()}


def _ordered_groups(layout: CommLayout, agents) -> dict:
    groups: dict = {}
    for a in agents:
        groups.setdefault(layout.groups[a], []).append(a)
    return {g: tuple(v) for g, v in groups.items()}


def communication_amplitude(pass_: CommPass) -> float:
    """Mean absolute discretizer input over every speaker and sample."""
    parts = [x.data.ravel() for x in pass_.pre_activations.values()]
    if not parts:
        return 0.0
    return float(np.abs(np.concatenate(parts)).mean())


def epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise epsilon-greedy choice; ties go to the lowest index."""
    q = np.atleast_2d(np.asarray(q_values, dtype=np.float64))
    if q.shape[-1] == 0:
        raise ValueError("empty action set")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    greedy = np.argmax(q, axis=1)
    explore = rng.random(len(q)) < epsilon
    random_actions = rng.integers(0, q.shape[1], size=len(q))
    return np.where(explore, random_actions, greedy).astype(np.int64)


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    return int(epsilon_greedy(np.asarray(q_values)[None, :], epsilon, rng)[0])
