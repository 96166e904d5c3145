"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import os

import numpy as np
from sklearn.utils.validation import check_array

from .circuit import Circuit
from .exceptions import InvalidArgumentError
from .netlist import parse_netlist, read_netlist

__all__ = ["check_circuit", "check_times", "check_positive"]


def check_circuit(X) -> Circuit:
    """Accept a :class:`Circuit`, netlist text or a path to a netlist file."""
    if isinstance(X, Circuit):
        return X
    if isinstance(X, os.PathLike):
        return read_netlist(X)
    if isinstance(X, str):
        if "\n" not in X and os.path.isfile(X):
            return read_netlist(X)
        return parse_netlist(X)
    raise InvalidArgumentError(f"expected a Circuit, netlist text or path, got {type(X).__name__}")


def check_times(t) -> np.ndarray:
    """Finite 1-D float array of sample times."""
    arr = check_array(np.atleast_1d(np.asarray(t, dtype=float)), ensure_2d=False, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgumentError("sample times must be one-dimensional")
    return arr


def check_positive(name: str, value, allow_none: bool = False):
    if value is None and allow_none:
        return None
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a number, got {value!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise InvalidArgumentError(f"{name} must be positive and finite, got {value!r}")
    return v
