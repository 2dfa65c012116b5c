"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled module is used when it was built and ``BAASMEC_KERNELS`` is not
set to ``python``.  ``BACKEND`` names the active implementation.
"""
import importlib
import os

from . import _pykernels

NAMES = ("mlp_forward_vec", "masked_argmax", "score_population", "repair_population")


def load(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _pykernels
    if name == "cython":
        return importlib.import_module(".._ckernels", __name__)
    raise ValueError(f"unknown kernel backend {name!r}")


def available() -> list[str]:
    out = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        out.insert(0, "cython")
    return out


_requested = os.environ.get("BAASMEC_KERNELS", "auto").lower()
if _requested == "python":
    _impl, BACKEND = _pykernels, "python"
else:
    try:
        _impl, BACKEND = load("cython"), "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl, BACKEND = _pykernels, "python"

mlp_forward_vec = _impl.mlp_forward_vec
masked_argmax = _impl.masked_argmax
score_population = _impl.score_population
repair_population = _impl.repair_population
