"""Deterministic RNG stream derivation.

Every random draw in the package comes from a Philox generator seeded
through ``numpy.random.SeedSequence`` with an explicit spawn key, i.e. a
counter-based splitting scheme: ``stream(master, MODULE, chunk)`` yields the
same stream no matter how many workers run or in which order chunks are
processed.  String key parts are hashed with crc32 so module names can be
used directly.
"""

from __future__ import annotations

import zlib

import numpy as np

# Stable stream identifiers, one per consumer.  Values are arbitrary but
# must never change once results are published.
TERRAIN = 11
LOS_SAMPLE = 21
LOS_AZIMUTH = 22
COVERAGE_GEOM = 31
COVERAGE_FADE = 32
COVERAGE_THIN = 33
SEARCH = 41
SWEEP = 42
RECONSTRUCT = 51
TRACKING = 61
SCENARIO = 71


def _as_uint32(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & 0xFFFFFFFF
    value = int(part)
    if value < 0:
        raise ValueError(f"stream key parts must be non-negative, got {part}")
    return value & 0xFFFFFFFF


def stream(master_seed: int, *key) -> np.random.Generator:
    """Return the Generator for ``key`` under ``master_seed``.

    ``key`` parts may be ints or strings; the same tuple always maps to the
    same stream, and distinct tuples map to independent streams.
    """
    spawn_key = tuple(_as_uint32(part) for part in key)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def derive(master_seed: int, *key) -> int:
    """Derive a child integer seed for ``key`` under ``master_seed``.

    Used where an API takes a seed rather than a Generator; the child is
    independent of every stream() with a different key tuple.
    """
    spawn_key = tuple(_as_uint32(part) for part in key)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=spawn_key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])
