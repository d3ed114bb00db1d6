"""Deterministic, addressable random-number streams.

Every stochastic routine in the package takes an explicit generator (or a
``(seed, index)`` address) and never reads ambient randomness.  Substreams
are counter-based: ``substream(seed, *key)`` builds a Philox generator from
``SeedSequence(seed, spawn_key=key)``, so stream ``key`` is addressable in
O(1) without generating any other stream.

Key layout (first component is a domain tag):

====  =============================================
tag   meaning
====  =============================================
0     environment sampling, one index per chunk
1     branching offspring draws, one index per chunk
2     per-site walk environment, index = folded site
3     per-site / per-walk move coins
4     proposal draws (importance sampling)
====  =============================================

Replications are processed in fixed-size chunks (`CHUNK_SIZE`); chunk ``c``
covers replications ``[c*CHUNK_SIZE, (c+1)*CHUNK_SIZE)`` and all its draws
come from streams keyed by ``c``, so results do not depend on how chunks are
distributed over workers.
"""
from __future__ import annotations

import numpy as np

DOMAIN_ENV = 0
DOMAIN_BRANCH = 1
DOMAIN_SITE_ENV = 2
DOMAIN_COINS = 3
DOMAIN_PROPOSAL = 4

#: Replications per chunk.  Fixed: changing it changes which substream serves
#: which replication and therefore the sampled values (never the law).
CHUNK_SIZE = 16384


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the addressable stream ``(seed, key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def fold_site(i: int) -> int:
    """Map a signed site index to a distinct nonnegative stream index."""
    return 2 * i if i >= 0 else -2 * i - 1


def chunk_bounds(reps: int):
    """Yield ``(chunk_index, size)`` covering ``reps`` replications."""
    c = 0
    left = int(reps)
    while left > 0:
        size = min(CHUNK_SIZE, left)
        yield c, size
        c += 1
        left -= size
