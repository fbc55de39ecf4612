"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``DIALCOMM_KERNELS=python``
to force the numpy fallback.
"""
import os

from . import _reference

STE, DRU, GS, ST_DRU, ST_GS = (
    _reference.STE,
    _reference.DRU,
    _reference.GS,
    _reference.ST_DRU,
    _reference.ST_GS,
)


def _load():
    if os.environ.get("DIALCOMM_KERNELS", "").lower() == "python":
        return _reference, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _reference, "python"
    return _ckernels, "compiled"


_backend, BACKEND = _load()

discretize = _backend.discretize
integrate = _backend.integrate
sample_categorical = _backend.sample_categorical
flip_bits = _backend.flip_bits

__all__ = [
    "BACKEND",
    "discretize",
    "integrate",
    "sample_categorical",
    "flip_bits",
    "STE",
    "DRU",
    "GS",
    "ST_DRU",
    "ST_GS",
]
