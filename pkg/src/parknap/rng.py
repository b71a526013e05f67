"""Seeded, counter-based random streams.

Every random draw in the package goes through :func:`stream`, which keys a
Philox generator by ``(seed, purpose, *ids)``. Parallel branches therefore get
independent streams that do not depend on scheduling order.
"""
import zlib

import numpy as np

PURPOSES = ("instance", "algorithm", "trial", "cell", "probe", "check")


def _key(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream ids must be nonnegative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed, *keys):
    """Return a Generator for ``seed`` and the given stream ids.

    Ids may be ints or strings (strings are hashed with CRC32, which is stable
    across interpreter runs, unlike ``hash``).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_base(rng):
    """Draw one base seed from ``rng`` for keying a family of child streams."""
    return int(rng.integers(0, 2**63 - 1))
