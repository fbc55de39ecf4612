"""Bit-flip noise channel between sender and receivers."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..autodiff import Tensor, as_tensor, straight_through


class ChannelError(ValueError):
    pass


def draw_flip_mask(shape, p: float, k: int, rng: np.random.Generator) -> np.ndarray:
    """Mask over messages of shape ``(..., B)``.

    Each message is hit with probability ``p``; a hit flips exactly ``k``
    distinct positions chosen uniformly.
    """
    shape = tuple(shape)
    n_bits = shape[-1]
    if k > n_bits:
        raise ChannelError(f"cannot flip {k} bits of a {n_bits}-bit message")
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"flip probability must lie in [0, 1], got {p}")
    mask = np.zeros(shape)
    if p == 0.0 or k == 0:
        return mask
    flat = mask.reshape(-1, n_bits)
    hit = rng.random(flat.shape[0]) < p
    n_hit = int(hit.sum())
    if n_hit:
        # first k entries of a random permutation per message
        order = np.argsort(rng.random((n_hit, n_bits)), axis=1)[:, :k]
        rows = np.repeat(np.flatnonzero(hit), k)
        flat[rows, order.reshape(-1)] = 1.0
    return mask


def apply_channel(message, p: float, k: int, rng: np.random.Generator | None = None,
                  mask: np.ndarray | None = None) -> np.ndarray:
    """Corrupt binary messages; ``mask`` forces specific flips instead of drawing them."""
    message = np.asarray(message, dtype=np.float64)
    if not np.isin(message, (0.0, 1.0)).all():
        raise ChannelError("channel input must be binary")
    if mask is None:
        mask = draw_flip_mask(message.shape, p, k, rng)
    return kernels.flip_bits(message, mask)


def channel_op(message, mask: np.ndarray) -> Tensor:
    """Tape-aware channel: receivers see ``1 - m`` at masked entries.

    Backward is the identity so the sender's gradient path is untouched.
    Continuous (train-mode) messages are flipped the same way.
    """
    message = as_tensor(message)
    if not mask.any():
        return message
    value = kernels.flip_bits(message.data, mask)
    return straight_through(message, value, np.ones_like(value), kind="channel", ctx={"mask": mask})
