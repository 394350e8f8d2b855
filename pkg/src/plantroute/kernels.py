"""Kernel backend selection: numba-compiled by default, plain Python fallback.

Set ``PLANTROUTE_NUMBA=0`` (or ``off``/``false``) to force the plain backend;
anything else uses numba when it is importable. The plain copy of the kernel
module is always available as :data:`plain` so the two backends can be
compared directly (see the ``bench`` CLI verb and the kernel tests).
"""

from __future__ import annotations

import importlib.util
import os

from . import _kernel_impl as _impl

KERNEL_NAMES = (
    "resolve_predictions",
    "fill_inputs",
    "apply_predictions",
    "rollout_cost",
    "solve_assignments",
    "_score_combo",
)


def _numba_requested() -> bool:
    flag = os.environ.get("PLANTROUTE_NUMBA", "").strip().lower()
    return flag not in ("0", "off", "false", "no")


def _load_plain_copy():
    spec = importlib.util.spec_from_file_location("plantroute._kernel_impl_plain", _impl.__file__)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


if _numba_requested():
    try:
        from numba import njit
    except ImportError:
        njit = None
else:
    njit = None

if njit is not None:
    # Keep an untouched plain instance, then compile the real module in
    # place so the kernels' cross-calls resolve to the compiled versions.
    plain = _load_plain_copy()
    for _name in KERNEL_NAMES:
        setattr(_impl, _name, njit(cache=True)(getattr(_impl, _name)))
    BACKEND = "numba"
else:
    plain = _impl
    BACKEND = "python"

active = _impl

resolve_predictions = _impl.resolve_predictions
fill_inputs = _impl.fill_inputs
apply_predictions = _impl.apply_predictions
rollout_cost = _impl.rollout_cost
solve_assignments = _impl.solve_assignments


def backend() -> str:
    """Which backend the package is running on: ``"numba"`` or ``"python"``."""
    return BACKEND
