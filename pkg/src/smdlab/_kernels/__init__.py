"""Step-loop kernel selection.

The compiled extension is preferred when it imported cleanly; setting
SMDLAB_PURE_PYTHON=1 forces the pure-Python twin.  Both expose the same
``run_linear`` entry point with identical semantics.
"""

import os

from . import _pyloop

try:
    from . import _fastloop
except ImportError:  # extension not built; fall back silently
    _fastloop = None

HAVE_COMPILED = _fastloop is not None

POT_IDS = {
    "squared_l2": _pyloop.POT_SQUARED_L2,
    "negative_entropy": _pyloop.POT_NEGATIVE_ENTROPY,
    "qnorm_componentwise": _pyloop.POT_QNORM_COMPONENTWISE,
    "qnorm_squared": _pyloop.POT_QNORM_SQUARED,
}
LOSS_IDS = {
    "square": _pyloop.LOSS_SQUARE,
    "huber": _pyloop.LOSS_HUBER,
    "quartic": _pyloop.LOSS_QUARTIC,
    "logcosh": _pyloop.LOSS_LOGCOSH,
}
SCHED_IDS = {
    "constant": _pyloop.SCHED_CONSTANT,
    "sequence": _pyloop.SCHED_SEQUENCE,
    "adaptive": _pyloop.SCHED_ADAPTIVE,
}

TERM_NAMES = {
    _pyloop.TERM_MAX_STEPS: "max_steps",
    _pyloop.TERM_RESIDUAL_TOL: "residual_tol",
    _pyloop.TERM_DOMAIN: "domain_error",
    _pyloop.TERM_NONFINITE: "nonfinite",
}


def default_kernel_name() -> str:
    if os.environ.get("SMDLAB_PURE_PYTHON"):
        return "python"
    return "compiled" if HAVE_COMPILED else "python"


def get_kernel(name: str = "auto"):
    """Return the kernel module for ``name`` in {auto, compiled, python}."""
    if name == "auto":
        name = default_kernel_name()
    if name == "compiled":
        if _fastloop is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _fastloop
    if name == "python":
        return _pyloop
    raise ValueError(f"unknown kernel {name!r}")
