"""Parameter containers: name/flatten dataclass trees of weight matrices."""

from __future__ import annotations

import dataclasses

import numpy as np

from .autodiff import Tape, Var


def named_parameters(obj, prefix=""):
    """Flatten every array (or Var) in a tree of dataclasses, lists and tuples.

    Names are dotted paths such as ``gnn.0.theta_m``.
    """
    out = {}
    if isinstance(obj, (np.ndarray, Var)):
        out[prefix] = obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            out.update(named_parameters(getattr(obj, f.name), _join(prefix, f.name)))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.update(named_parameters(item, _join(prefix, str(i))))
    return out


def with_parameters(obj, mapping, prefix=""):
    """Copy of ``obj`` with the arrays named in ``mapping`` replaced."""
    if isinstance(obj, (np.ndarray, Var)):
        return mapping.get(prefix, obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {f.name: with_parameters(getattr(obj, f.name), mapping, _join(prefix, f.name))
                   for f in dataclasses.fields(obj) if f.init}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, list):
        return [with_parameters(item, mapping, _join(prefix, str(i))) for i, item in enumerate(obj)]
    if isinstance(obj, tuple):
        return tuple(with_parameters(item, mapping, _join(prefix, str(i))) for i, item in enumerate(obj))
    return obj


def bind(model, tape: Tape):
    """Register every parameter of ``model`` as a tape leaf.

    Returns ``(live_model, leaves)`` where ``leaves`` maps names to Vars.
    """
    leaves = {name: tape.leaf(arr, name) for name, arr in named_parameters(model).items()}
    return with_parameters(model, leaves), leaves


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _join(prefix, name):
    return f"{prefix}.{name}" if prefix else name
