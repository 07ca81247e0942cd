import zlib

import numpy as np


def sub_seed(master: int, *names) -> int:
    """Named seed derived from a master seed."""
    key = [int(master)] + [zlib.crc32(str(n).encode()) for n in names]
    return int(np.random.SeedSequence(key).generate_state(1)[0])
