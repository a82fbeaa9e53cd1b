"""Named random streams derived from one top-level seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; identical (seed, name) pairs give identical streams."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))]))


def child_seed(seed: int, name: str) -> int:
    """A plain integer seed for ``name``, for APIs that want an int."""
    return int(stream(seed, name).integers(0, 2**31 - 1))
