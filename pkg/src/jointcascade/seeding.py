"""Deterministic, collision-free random streams.

Every piece of randomness in the package is drawn from a counter-based
generator keyed by ``(seed, *path)``.  Distinct paths give statistically
independent streams, and the same ``(seed, path)`` always reproduces the
same draws regardless of how many other streams were consumed before it.
"""

from __future__ import annotations

import numpy as np

# Stream namespaces.  Different consumers of a shared user seed key their
# streams with distinct leading constants so they never collide.
STREAM_CD = 101          # contrastive-divergence training
STREAM_AUGMENT = 201     # cascade training-set augmentation
STREAM_FIELDS = 301      # synthetic label-model fields
STREAM_DEFORM = 302      # synthetic deformation basis
STREAM_MARKS = 303       # synthetic appearance-mark geometry
STREAM_SAMPLE = 310      # per-sample synthetic draws


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *path)``.

    Built on ``SeedSequence`` spawn keys over a Philox counter generator,
    so streams are independent for distinct paths and cheap to create
    (no generator state is shared or advanced between calls).
    """
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=tuple(int(p) for p in path)
    )
    key = ss.generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
