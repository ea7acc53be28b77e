"""Named, independent random streams derived from one master seed.

Streams use the counter-based Philox generator keyed through
``SeedSequence`` spawn keys, so each (name, index) pair gets its own
stream and adding agents never perturbs the streams of existing ones.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {"disturbance": 0, "sensor": 1, "jitter": 2}


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    if name not in STREAM_IDS:
        raise KeyError(f"unknown random stream {name!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAM_IDS[name], int(index)))
    return np.random.Generator(np.random.Philox(ss))
