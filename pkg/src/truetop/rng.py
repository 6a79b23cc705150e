"""Deterministic random-stream derivation.

All randomness in a run flows from a single 64-bit seed.  Independent
sub-streams (seed selection, attack placement, per-trial repetitions) are
derived from the master seed plus a label path, so results are reproducible
bit-for-bit regardless of execution order or parallelism.
"""

from __future__ import annotations

import zlib

import numpy as np

_U32 = 0xFFFFFFFF


def _label_words(part) -> tuple[int, ...]:
    if isinstance(part, (int, np.integer)):
        value = int(part) & 0xFFFFFFFFFFFFFFFF
        return (value & _U32, (value >> 32) & _U32)
    if isinstance(part, str):
        return (zlib.crc32(part.encode("utf-8")) & _U32,)
    raise TypeError(f"unsupported rng label part: {part!r}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return a generator for the sub-stream identified by ``path``.

    The same (seed, path) pair yields the same stream on every platform.
    """
    words: list[int] = []
    for part in path:
        words.extend(_label_words(part))
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(words))
    return np.random.default_rng(ss)
