"""Counter-based random streams keyed by (master seed, replication, component)."""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_id(tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode())
    return int(tag)


def stream(master_seed: int, *keys) -> np.random.Generator:
    """Philox generator for the sub-stream identified by ``keys``.

    Distinct key tuples give statistically independent streams; the same key
    tuple always reproduces the same stream, whatever order streams are made in.
    """
    flat = []
    for k in keys:
        flat.extend(k if isinstance(k, tuple) else (k,))
    seq = np.random.SeedSequence(int(master_seed) & _MASK64,
                                 spawn_key=tuple(_tag_id(k) for k in flat))
    return np.random.Generator(np.random.Philox(seq))
