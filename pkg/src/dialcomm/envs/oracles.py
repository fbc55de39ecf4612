"""Hand-coded policies used to check the environments themselves."""
from __future__ import annotations

import numpy as np

from .channel import draw_flip_mask, apply_channel
from .matrix import MatrixEnv, MatrixEnvConfig, SAME, DIFFERENT
from .particle import ParticleEnv, N_MOVES


def encode_numbers(numbers, cfg: MatrixEnvConfig) -> np.ndarray:
    """Binary code of each number, every bit repeated ``B // min_bits`` times.

    With M=2, B=3 this is the 000/111 repetition code. Unused trailing bits are 0.
    """
    numbers = np.asarray(numbers, dtype=np.int64)
    b0, reps = cfg.min_bits, cfg.message_bits // cfg.min_bits
    bits = (numbers[..., None] >> np.arange(b0)) & 1
    code = np.repeat(bits, reps, axis=-1).astype(np.float64)
    pad = cfg.message_bits - code.shape[-1]
    if pad:
        code = np.concatenate([code, np.zeros(code.shape[:-1] + (pad,))], axis=-1)
    return code


def decode_messages(bits, cfg: MatrixEnvConfig) -> np.ndarray:
    """Majority vote over each repeated group, inverse of :func:`encode_numbers`."""
    bits = np.asarray(bits)
    b0, reps = cfg.min_bits, cfg.message_bits // cfg.min_bits
    groups = bits[..., : b0 * reps].reshape(bits.shape[:-1] + (b0, reps))
    votes = (groups.sum(axis=-1) * 2 > reps).astype(np.int64)
    return (votes << np.arange(b0)).sum(axis=-1)


def oracle_matrix_rewards(cfg: MatrixEnvConfig, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Broadcast the own number, answer 'same' iff every decoded number matches."""
    env = MatrixEnv(cfg, episodes)
    env.reset(rng)
    n = cfg.n_agents
    code = encode_numbers(env.numbers, cfg)  # (batch, n, B)
    env.communicate()
    actions = np.empty((episodes, n), dtype=np.int64)
    for a in range(n):
        others = [b for b in range(n) if b != a]
        heard = code[:, others]
        if cfg.flip_probability > 0:
            heard = apply_channel(heard, cfg.flip_probability, cfg.flips_per_message, rng)
        decoded = decode_messages(heard, cfg)
        agree = (decoded == env.numbers[:, a:a + 1]).all(axis=1)
        actions[:, a] = np.where(agree, SAME, DIFFERENT)
    return env.step(actions).team_reward


def greedy_moves(delta: np.ndarray, vel: np.ndarray, dt: float = 0.1) -> np.ndarray:
    """Move id that best reduces the predicted offset ``delta`` to a goal."""
    ahead = delta - vel * dt
    moves = np.zeros(len(delta), dtype=np.int64)
    ax = np.abs(ahead[:, 0]) >= np.abs(ahead[:, 1])
    moves[ax] = np.where(ahead[ax, 0] > 0, 1, 2)
    moves[~ax] = np.where(ahead[~ax, 1] > 0, 3, 4)
    moves[np.abs(ahead).max(axis=1) < 0.02] = 0
    return moves


def scripted_particle_returns(env: ParticleEnv, rng: np.random.Generator, informed: bool = True) -> np.ndarray:
    """Episode returns of a greedy controller.

    ``informed`` movers head for their true target; otherwise they head for the
    landmark centroid, the best choice without communication.
    """
    env.reset(rng)
    total = np.zeros(env.batch)
    k = env.cfg.n_movers
    done = False
    while not done:
        pos = env._movers(env.pos).reshape(-1, 2)
        vel = env.vel
        goal = env.target_positions() if informed else np.repeat(env.landmarks.mean(axis=1, keepdims=True), k, axis=1)
        moves = greedy_moves(goal.reshape(-1, 2) - pos, vel, env.cfg.physics.dt)
        res = env.step(moves.reshape(env.batch, k))
        total += res.team_reward
        done = res.done
    return total


__all__ = [
    "encode_numbers",
    "decode_messages",
    "oracle_matrix_rewards",
    "scripted_particle_returns",
    "greedy_moves",
    "draw_flip_mask",
    "N_MOVES",
]
