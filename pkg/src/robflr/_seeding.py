import zlib

import numpy as np


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed for a (seed, purpose, index...) stream."""
    words = [int(seed) & 0xFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        elif isinstance(k, float):
            words.append(zlib.crc32(repr(k).encode()))
        else:
            words.append(int(k) & 0xFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1
