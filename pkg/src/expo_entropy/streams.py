"""Counter-addressed random substreams.

A stream is a Philox key derived from ``(master_seed, stream_id)``.  Within
a stream, replication ``b`` owns the counter blocks
``[b * blocks_per_rep, (b + 1) * blocks_per_rep)``, so its uniforms depend
only on ``(master_seed, stream_id, b)``: any chunking of the replications,
in any order and on any number of workers, reproduces the same draws.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_key", "replication_uniforms", "replication_exponentials"]

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter value
_TO_UNIT = 2.0**-53


def stream_key(master_seed: int, stream_id: int) -> np.ndarray:
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id),))
    return seq.generate_state(2, dtype=np.uint64)


def replication_uniforms(key: np.ndarray, start: int, count: int, draws: int) -> np.ndarray:
    """Uniforms on [0, 1) of shape ``(count, draws)`` for replications ``start .. start+count-1``."""
    blocks = -(-draws // _WORDS_PER_BLOCK)
    counter = start * blocks
    bitgen = np.random.Philox(key=key, counter=[counter & 0xFFFFFFFFFFFFFFFF, counter >> 64, 0, 0])
    raw = bitgen.random_raw(count * blocks * _WORDS_PER_BLOCK).reshape(count, blocks * _WORDS_PER_BLOCK)
    return (raw[:, :draws] >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def replication_exponentials(key: np.ndarray, start: int, count: int, draws: int) -> np.ndarray:
    """Unit exponentials by inversion, ``-log(1 - U)``."""
    return -np.log1p(-replication_uniforms(key, start, count, draws))
