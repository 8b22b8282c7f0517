import zlib

import numpy as np


def derive_seed(seed, *keys):
    """Deterministic child seed for ``(seed, *keys)``.

    String keys are hashed with crc32 so stage names can be used directly.
    Changing one key never perturbs the streams of other keys.
    """
    words = [int(seed)]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    if any(w < 0 for w in words):
        raise ValueError("seeds and keys must be non-negative")
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint32)[0])
