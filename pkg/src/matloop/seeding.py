"""Deterministic seed derivation and reproducible UUID generation.

All randomness in a campaign flows from one 64-bit master seed. Sub-streams
are derived through ``numpy.random.SeedSequence`` spawn keys built from string
tags and integer indices, so adding a new consumer never perturbs existing
streams and replays are bit-identical across processes.
"""

from __future__ import annotations

import uuid
import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def subseed_sequence(master_seed: int, *tags) -> np.random.SeedSequence:
    """SeedSequence for stream (master, tags...). Tags may be str or int."""
    key = tuple(_tag_to_int(t) for t in tags)
    return np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=key)


def rng_for(master_seed: int, *tags) -> np.random.Generator:
    """Independent Generator for the given tag path."""
    return np.random.default_rng(subseed_sequence(master_seed, *tags))


def deterministic_uuid(rng: np.random.Generator) -> str:
    """Random-layout (version 4) UUID drawn from ``rng``.

    Byte-identical replays require UUIDs to come from the campaign RNG rather
    than the OS entropy pool.
    """
    raw = bytes(rng.integers(0, 256, size=16, dtype=np.uint8).tolist())
    return str(uuid.UUID(bytes=raw, version=4))


def fresh_uuid() -> str:
    """OS-entropy UUID for interactive (non-replayed) use."""
    return str(uuid.uuid4())
