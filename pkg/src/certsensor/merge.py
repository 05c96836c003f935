"""Fold command line overrides into a loaded configuration document.

Overrides are addressed by dotted keys (``train.lambda``, ``perturb.eps_series``). They only
ever add or replace leaves; a ``None`` value means "flag not given" and never overrides.
"""

from __future__ import annotations

from collections.abc import Mapping
from copy import deepcopy
from typing import Any

# Flags that fan out to several leaves of the document.
_FANOUT: dict[str, tuple[str, ...]] = {
    "seed": ("seed", "data.seed", "train.seed"),
}


def _set_path(document: dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = document
    for key in parents:
        child = node.get(key)
        if child is None:
            child = {}
        elif not isinstance(child, dict):
            raise TypeError(f"Cannot override '{dotted}': '{key}' is not a table")
        else:
            child = dict(child)
        node[key] = child
        node = child
    node[leaf] = value


def merge_overrides(
    document: Mapping[str, Any] | None, overrides: Mapping[str, Any]
) -> dict[str, Any]:
    """Return a copy of ``document`` with every non-``None`` override applied."""

    merged: dict[str, Any] = deepcopy(dict(document or {}))
    for dotted, value in overrides.items():
        if value is None:
            continue
        for target in _FANOUT.get(dotted, (dotted,)):
            _set_path(merged, target, value)
    return merged


__all__ = ["merge_overrides"]
