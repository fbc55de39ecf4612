"""Empirical message protocol tables for the matrix game."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .channel import draw_flip_mask
from .. import kernels


@dataclass
class ProtocolTable:
    """Per input number: distribution over emitted codes before and after the channel."""

    message_bits: int
    pre: dict = field(default_factory=dict)
    post: dict = field(default_factory=dict)

    def rows(self):
        for number in sorted(set(self.pre) | set(self.post)):
            pre, post = self.pre.get(number, {}), self.post.get(number, {})
            for code in sorted(set(pre) | set(post)):
                yield number, code, pre.get(code, 0.0), post.get(code, 0.0)

    def support(self, number: int, after_channel: bool = True) -> set:
        table = self.post if after_channel else self.pre
        return {c for c, f in table.get(number, {}).items() if f > 0}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["input_number", "message_bits_string", "pre_channel_freq", "post_channel_freq"])
            for number, code, pre, post in self.rows():
                w.writerow([number, code, f"{pre:.6f}", f"{post:.6f}"])


def _code_string(bits: np.ndarray) -> list:
    return ["".join("1" if b >= 0.5 else "0" for b in row) for row in bits]


def _distribution(numbers, codes) -> dict:
    out: dict = {}
    for n, c in zip(numbers, codes):
        out.setdefault(int(n), {}).setdefault(c, 0)
        out[int(n)][c] += 1
    for n, counts in out.items():
        total = sum(counts.values())
        out[n] = {c: k / total for c, k in counts.items()}
    return out


def protocol_table(policy, n_numbers: int, message_bits: int, flip_probability: float,
                   flips_per_message: int, episodes: int, rng: np.random.Generator) -> ProtocolTable:
    """Query ``policy`` (one-hot observations ``(n, M)`` -> binary messages ``(n, B)``).

    Every input number is presented ``episodes`` times; each emitted message
    passes through one independent channel draw for the post-channel row.
    """
    numbers = np.repeat(np.arange(n_numbers), episodes)
    obs = np.eye(n_numbers)[numbers]
    bits = np.asarray(policy(obs), dtype=np.float64)
    if bits.shape != (len(numbers), message_bits):
        raise ValueError(f"policy returned shape {bits.shape}, expected {(len(numbers), message_bits)}")
    mask = draw_flip_mask(bits.shape, flip_probability, flips_per_message, rng)
    noisy = kernels.flip_bits(bits, mask)
    return ProtocolTable(
        message_bits,
        pre=_distribution(numbers, _code_string(bits)),
        post=_distribution(numbers, _code_string(noisy)),
    )
