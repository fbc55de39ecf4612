"""Pure numpy versions of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same
signature; results agree to within a few ulps (libm vs numpy math).
"""
import numpy as np

STE, DRU, GS, ST_DRU, ST_GS = 0, 1, 2, 3, 4

PROB_CLAMP = 1e-10


def _sigmoid(z):
    # tanh form is overflow-free for any finite z
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def discretize(kind, train, x, n1, n2, tau):
    """Elementwise discretization forward pass plus surrogate derivative.

    ``n1`` is the Gaussian draw for the DRU family or the first Gumbel draw
    for the GS family; ``n2`` is the second Gumbel draw (ignored otherwise).
    Returns ``(message, dmessage_dx)``; eval mode returns a zero derivative.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if kind in (STE, DRU, ST_DRU) and not train:
        return (x >= 0.0).astype(np.float64), np.zeros_like(x)
    if kind == STE:
        return (x >= 0.0).astype(np.float64), np.ones_like(x)
    if kind == DRU:
        m = _sigmoid(x + n1)
        return m, m * (1.0 - m)
    if kind == ST_DRU:
        z = x + n1
        s = _sigmoid(z)
        return (z >= 0.0).astype(np.float64), s * (1.0 - s)
    if kind not in (GS, ST_GS):
        raise ValueError(f"unknown discretizer kind {kind}")

    p = _sigmoid(x)
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    log_p0 = np.log(p)
    log_p1 = np.log(1.0 - p)
    hard = ((log_p0 + n1) >= (log_p1 + n2)).astype(np.float64)
    if not train:
        return hard, np.zeros_like(x)
    soft = _sigmoid(((log_p0 + n1) - (log_p1 + n2)) / tau)
    grad = np.where(inside, soft * (1.0 - soft) / tau, 0.0)
    if kind == GS:
        return soft, grad
    return hard, grad


def integrate(pos, vel, actions, dt, damping, accel, max_speed):
    """Point-mass step for a batch of movers, updating ``pos``/``vel`` in place.

    ``actions`` holds ids in {0: noop, 1: +x, 2: -x, 3: +y, 4: -y}.
    """
    direction = np.zeros_like(vel)
    direction[actions == 1, 0] = 1.0
    direction[actions == 2, 0] = -1.0
    direction[actions == 3, 1] = 1.0
    direction[actions == 4, 1] = -1.0
    vel *= 1.0 - damping
    vel += accel * dt * direction
    speed = np.sqrt(vel[:, 0] * vel[:, 0] + vel[:, 1] * vel[:, 1])
    over = speed > max_speed
    if over.any():
        vel[over] *= (max_speed / speed[over])[:, None]
    pos += vel * dt
    return pos, vel


def sample_categorical(probs, uniforms):
    """Inverse-CDF sampling, one draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    idx = (uniforms[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1).astype(np.int64)


def flip_bits(messages, mask):
    """Return ``messages`` with masked entries replaced by ``1 - m``."""
    return messages + mask * (1.0 - 2.0 * messages)
