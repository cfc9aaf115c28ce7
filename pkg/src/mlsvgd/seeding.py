"""Deterministic, splittable random streams.

Every stochastic component draws from ``rng_for(seed, *stream)``, a
``numpy.random.Generator`` seeded with the SeedSequence entropy
``(seed..., stream...)``.  Distinct stream tuples give statistically
independent generators, and the same tuple always reproduces the same
draws, which is what makes whole sweeps byte-reproducible.

Reserved stream ids (chosen far above any plausible level index):

* ``STREAM_BASE``  - initial ensemble of the multilevel base level
* ``STREAM_REF``   - the reference run of the experiment harness
* ``STREAM_DATA``  - observation-noise draw when synthesizing data
* ``STREAM_TRUTH`` - the ground-truth parameter draw

Coupled pairs use the plain level index as their stream id.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

STREAM_BASE = 1 << 20
STREAM_REF = (1 << 20) + 1
STREAM_DATA = (1 << 20) + 2
STREAM_TRUTH = (1 << 20) + 3

Seed = int | Sequence[int]


def seed_parts(seed: Seed) -> list[int]:
    """Normalize a seed (int or tuple of ints) to a list of nonnegative ints."""
    parts: Iterable[int]
    if isinstance(seed, (tuple, list)):
        parts = seed
    else:
        parts = (seed,)
    out = [int(p) for p in parts]
    if any(p < 0 for p in out):
        raise ValueError(f"seed components must be nonnegative, got {out}")
    return out


def rng_for(seed: Seed, *stream: int) -> np.random.Generator:
    """Generator for the substream identified by ``(seed..., stream...)``."""
    return np.random.default_rng(seed_parts(seed) + [int(s) for s in stream])
