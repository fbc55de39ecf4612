"""Multilayer perceptrons, Adam and target-network updates on the tape."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Parameter, Tensor, ShapeError, matmul, add, tanh, sigmoid, as_tensor

_ACTIVATIONS = {
    "tanh": (tanh, np.tanh),
    "sigmoid": (sigmoid, lambda z: 0.5 * (1.0 + np.tanh(0.5 * z))),
    "identity": (lambda t: t, lambda z: z),
}


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    activation: str = "tanh"
    output_activation: str = "identity"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError(f"an MLP needs at least input and output sizes, got {sizes}")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        for act in (self.activation, self.output_activation):
            if act not in ("tanh", "sigmoid", "identity"):
                raise ValueError(f"unsupported activation {act!r}")


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator, prefix: str = "mlp") -> list:
    """Glorot-uniform weights, zero biases; ordered [W0, b0, W1, b1, ...]."""
    params = []
    sizes = spec.layer_sizes
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (n_in + n_out))
        params.append(Parameter(rng.uniform(-limit, limit, size=(n_in, n_out)), name=f"{prefix}.{i}.W"))
        params.append(Parameter(np.zeros((1, n_out)), name=f"{prefix}.{i}.b"))
    return params


def mlp_forward(spec: MlpSpec, params, x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
        raise ShapeError(f"mlp input width {x.shape} does not match first layer {spec.layer_sizes[0]}")
    n_layers = len(spec.layer_sizes) - 1
    h = x
    for i in range(n_layers):
        h = add(matmul(h, params[2 * i]), params[2 * i + 1])
        act = spec.output_activation if i == n_layers - 1 else spec.activation
        h = _ACTIVATIONS[act][0](h)
    return h


def mlp_predict(spec: MlpSpec, params, x: np.ndarray) -> np.ndarray:
    """Untaped forward pass on raw arrays (rollouts and evaluation)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.layer_sizes[0]:
        raise ShapeError(f"mlp input width {x.shape} does not match first layer {spec.layer_sizes[0]}")
    n_layers = len(spec.layer_sizes) - 1
    h = x
    for i in range(n_layers):
        h = h @ params[2 * i].data + params[2 * i + 1].data
        act = spec.output_activation if i == n_layers - 1 else spec.activation
        h = _ACTIVATIONS[act][1](h)
    return h


class Mlp:
    """An :class:`MlpSpec` bundled with its parameters."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, prefix: str = "mlp",
                 params: list | None = None):
        self.spec = spec
        if params is None:
            if rng is None:
                raise ValueError("need an rng to initialise parameters")
            params = init_mlp_params(spec, rng, prefix)
        self.params = params

    def __call__(self, x) -> Tensor:
        return mlp_forward(self.spec, self.params, x)

    def predict(self, x) -> np.ndarray:
        return mlp_predict(self.spec, self.params, x)

    def clone(self, prefix: str | None = None) -> "Mlp":
        params = []
        for p in self.params:
            name = p.name if prefix is None else prefix + "." + p.name.split(".", 1)[-1]
            params.append(Parameter(p.data.copy(), name=name))
        return Mlp(self.spec, params=params)

    @property
    def in_width(self) -> int:
        return self.spec.layer_sizes[0]

    @property
    def out_width(self) -> int:
        return self.spec.layer_sizes[-1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(params, states: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update in place; ``states`` maps id(param) -> AdamState."""
    for p in params:
        st = states.get(id(p))
        if st is None:
            st = states[id(p)] = AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
        g = p.grad
        st.t += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * (g * g)
        if lr == 0.0:
            continue
        m_hat = st.m / (1.0 - beta1**st.t)
        v_hat = st.v / (1.0 - beta2**st.t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class Adam:
    params: list
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def __post_init__(self):
        # parameter sharing can list one Parameter several times
        unique = {}
        for p in self.params:
            unique.setdefault(id(p), p)
        self.params = list(unique.values())

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None):
        adam_step(self.params, self.states, self.lr if lr is None else lr, self.beta1, self.beta2, self.eps)


def soft_update(target, online, tau: float):
    """target <- tau * online + (1 - tau) * target, elementwise and in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"soft update weight must lie in [0, 1], got {tau}")
    target, online = list(target), list(online)
    if len(target) != len(online):
        raise ShapeError(f"soft update over {len(target)} target vs {len(online)} online parameters")
    for t, o in zip(target, online):
        if t.shape != o.shape:
            raise ShapeError(f"soft update shape mismatch {t.shape} vs {o.shape} ({t.name})")
        t.data *= 1.0 - tau
        t.data += tau * o.data
