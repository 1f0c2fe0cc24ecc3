"""
Helper utilities for AlmostISS
"""

import hashlib
import json
from typing import Any, Dict, Mapping, Sequence, Tuple

import numpy as np


def sample_box(
    box: Mapping[str, Tuple[float, float]],
    names: Sequence[str],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw n points uniformly from an axis-aligned box.

    Args:
        box: Mapping from variable name to (lo, hi)
        names: Column order of the result
        n: Number of points
        rng: Random generator

    Returns:
        np.ndarray: Array of shape (n, len(names))

    Raises:
        KeyError: If a name has no bounds in ``box``

    Examples:
        >>> sample_box({"x1": (-1, 1)}, ["x1"], 3, np.random.default_rng(0)).shape
        (3, 1)
    """
    lo = np.array([box[name][0] for name in names], dtype=float)
    hi = np.array([box[name][1] for name in names], dtype=float)
    return lo + (hi - lo) * rng.random((n, len(names)))


def box_grid(
    box: Mapping[str, Tuple[float, float]],
    names: Sequence[str],
    per_axis: int,
) -> np.ndarray:
    """Regular grid with ``per_axis`` points per axis, endpoints included.

    Returns:
        np.ndarray: Array of shape (per_axis ** len(names), len(names)) in C order
    """
    axes = [np.linspace(box[name][0], box[name][1], per_axis) for name in names]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(names))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a (seed, stream...) pair.

    The same pair always gives the same generator, no matter which thread asks.
    """
    return np.random.default_rng([seed, *stream])


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a config dict."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
