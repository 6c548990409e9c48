"""Named, reproducible random substreams.

Every source of randomness in an experiment is derived from one root seed
plus a descriptive key, so changing how one stage consumes draws can never
perturb another stage.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(part: object) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(root_seed: int, *key: object) -> np.random.Generator:
    """Return a generator for the substream identified by ``key``.

    Identical (root_seed, key) pairs always yield identical draw sequences;
    distinct keys yield statistically independent streams.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(p) for p in key]
    return np.random.default_rng(np.random.SeedSequence(entropy))
