"""Named, independent random streams.

Each stream is keyed by ``(master_seed, rollout_index, group, purpose)`` and
backed by a Philox counter-based generator seeded through numpy's
SeedSequence spawn keys. Two different keys never share state, so consuming
one stream can never shift the draws of another.
"""

from __future__ import annotations

import numpy as np

GROUP_CODES = {
    "adv_model": 0,
    "world_p_model": 1,
    "world_o_model": 2,
}

PURPOSE_CODES = {
    "predict": 0,
    "sample": 1,
}

_SEED_MASK = (1 << 64) - 1


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return a fresh generator for ``master_seed`` and an integer key path."""
    if any(k < 0 for k in key):
        raise ValueError(f"stream key components must be non-negative, got {key}")
    seq = np.random.SeedSequence(int(master_seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def group_stream(master_seed: int, rollout_index: int, group_tag: str, purpose: str) -> np.random.Generator:
    """Stream for one group's ``purpose`` within one rollout."""
    return stream(master_seed, rollout_index, GROUP_CODES[group_tag], PURPOSE_CODES[purpose])
