"""The five discretization units for binary messages.

Each unit maps a real pre-activation ``x`` (the C-Net output) to a per-bit
message in [0, 1]. Training and evaluation modes use different forward
functions, and the straight-through units use a surrogate function in the
backward pass:

========  ====================  ====================  ====================
unit      train forward         backward surrogate    eval forward
========  ====================  ====================  ====================
STE       H(x)                  x                     H(x)
DRU       sigmoid(x + n)        sigmoid(x + n)        H(x)
GS        gumbel softmax        gumbel softmax        gumbel-max
ST_DRU    H(x + n)              sigmoid(x + n)        H(x)
ST_GS     gumbel-max            gumbel softmax        gumbel-max
========  ====================  ====================  ====================

``n ~ N(0, sigma_g^2)``; the Gumbel forms use class probabilities
``(sigmoid(x), 1 - sigmoid(x))`` and report the probability of class 0.
H(0) is 1.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .autodiff import Tensor, as_tensor, straight_through
from .rng import gumbel


class Kind(str, enum.Enum):
    DRU = "DRU"
    STE = "STE"
    GS = "GS"
    ST_DRU = "ST_DRU"
    ST_GS = "ST_GS"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper().replace("-", "_"))

    @property
    def label(self) -> str:
        return self.value.replace("_", "-")


class Mode(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


_KERNEL_CODE = {
    Kind.STE: kernels.STE,
    Kind.DRU: kernels.DRU,
    Kind.GS: kernels.GS,
    Kind.ST_DRU: kernels.ST_DRU,
    Kind.ST_GS: kernels.ST_GS,
}

ALL_KINDS = (Kind.DRU, Kind.STE, Kind.GS, Kind.ST_DRU, Kind.ST_GS)


@dataclass(frozen=True)
class DiscretizerSpec:
    kind: Kind = Kind.DRU
    sigma_g: float = 2.0
    temperature: float = 1.0
    mode: Mode = Mode.TRAIN

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.sigma_g < 0:
            raise ValueError(f"sigma_g must be non-negative, got {self.sigma_g}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def train(self) -> "DiscretizerSpec":
        return replace(self, mode=Mode.TRAIN)

    def eval(self) -> "DiscretizerSpec":
        return replace(self, mode=Mode.EVAL)

    @property
    def gumbel_family(self) -> bool:
        return self.kind in (Kind.GS, Kind.ST_GS)

    @property
    def uses_noise(self) -> bool:
        if self.gumbel_family:
            return True
        return self.mode is Mode.TRAIN and self.kind in (Kind.DRU, Kind.ST_DRU)


@dataclass
class Noise:
    """Per-element noise for one discretize call; ``None`` means no noise."""

    first: np.ndarray | None = None
    second: np.ndarray | None = None


@dataclass
class ChannelOutput:
    message: Tensor
    pre_activation: Tensor
    noise: Noise


def draw_noise(spec: DiscretizerSpec, shape, rng: np.random.Generator) -> Noise:
    if not spec.uses_noise:
        return Noise()
    if spec.gumbel_family:
        return Noise(gumbel(rng, shape), gumbel(rng, shape))
    return Noise(rng.normal(0.0, spec.sigma_g, size=shape))


def _run_kernel(spec: DiscretizerSpec, x: np.ndarray, noise: Noise):
    zeros = 0.0
    n1 = noise.first if noise.first is not None else zeros
    n2 = noise.second if noise.second is not None else zeros
    return kernels.discretize(
        _KERNEL_CODE[spec.kind], spec.mode is Mode.TRAIN, x, n1, n2, float(spec.temperature)
    )


def discretize(x, spec: DiscretizerSpec, rng: np.random.Generator | None = None,
               noise: Noise | None = None) -> ChannelOutput:
    """Apply the unit elementwise with independent noise per bit.

    Pass ``noise`` to replay a previous draw; otherwise it is drawn from ``rng``.
    The noise is stored on the tape node and never re-drawn in backward.
    """
    x = as_tensor(x)
    if noise is None:
        if spec.uses_noise and rng is None:
            raise ValueError(f"{spec.kind.label} in {spec.mode.value} mode needs an rng")
        noise = draw_noise(spec, x.shape, rng)
    value, local_grad = _run_kernel(spec, x.data, noise)
    msg = straight_through(
        x, value, local_grad, kind=f"discretize:{spec.kind.value}",
        ctx={"noise": noise, "spec": spec},
    )
    return ChannelOutput(msg, x, noise)


def discretize_array(x: np.ndarray, spec: DiscretizerSpec, noise: Noise) -> np.ndarray:
    """Untaped forward values only."""
    return _run_kernel(spec, np.asarray(x, dtype=np.float64), noise)[0]


def backward_contract_check(spec: DiscretizerSpec, x, upstream, noise: Noise) -> np.ndarray:
    """Gradient reaching ``x`` from ``upstream`` through the unit with frozen noise."""
    xt = Tensor(np.atleast_1d(np.asarray(x, dtype=np.float64)), requires_grad=True)
    out = discretize(xt, spec, noise=noise)
    up = np.broadcast_to(np.asarray(upstream, dtype=np.float64), xt.shape)
    return up * out.message.node.saved_ctx["local_grad"]


def output_histogram(spec: DiscretizerSpec, x_values, draws: int, rng: np.random.Generator,
                     bins: int = 20) -> dict:
    """Empirical output distribution for each input value.

    Returns ``{x: (bin_edges, frequencies)}`` with ``bins`` equal-width bins
    over [0, 1]; the last bin is closed so an output of exactly 1 lands in it.
    """
    if draws < 1000:
        raise ValueError(f"need at least 1000 draws per input, got {draws}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = {}
    for xv in x_values:
        x = np.full(draws, float(xv))
        m = discretize_array(x, spec, draw_noise(spec, x.shape, rng))
        counts, _ = np.histogram(m, bins=edges)
        out[float(xv)] = (edges, counts / draws)
    return out


def sample_outputs(spec: DiscretizerSpec, x_value: float, draws: int, rng: np.random.Generator) -> np.ndarray:
    x = np.full(draws, float(x_value))
    return discretize_array(x, spec, draw_noise(spec, x.shape, rng))


def write_histogram_csv(path, rows) -> None:
    """``rows``: iterable of (unit, mode, x, bin_left, bin_right, frequency)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "mode", "x", "bin_left", "bin_right", "frequency"])
        for unit, mode, x, lo, hi, f in rows:
            w.writerow([unit, mode, f"{x:g}", f"{lo:.4f}", f"{hi:.4f}", f"{f:.6f}"])


def histogram_rows(spec: DiscretizerSpec, hist: dict):
    for x, (edges, freqs) in hist.items():
        for lo, hi, f in zip(edges[:-1], edges[1:], freqs):
            yield spec.kind.label, spec.mode.value, x, lo, hi, f
