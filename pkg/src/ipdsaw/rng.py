"""Deterministic random streams.

Every stochastic routine in the toolkit draws from a counter-based Philox
generator keyed by (seed, stream_index).  Replica r of an experiment uses
stream_index = r, so replicas are independent and results do not depend on
scheduling or on how work is sharded across processes.

Routines that internally need several independent lanes (e.g. a coarse
simulation lane and a refinement lane) space their stream indices by
LANE_STRIDE, which keeps lanes collision-free for any replica index below
2**48.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# Sub-purpose spacing inside a single routine; replica indices must stay below this.
LANE_STRIDE = 1 << 48


def stream(seed: int, stream_index: int = 0) -> np.random.Generator:
    """Return the Philox generator for (seed, stream_index).

    The key is the pair itself; Philox is counter-based, so streams with
    distinct keys are statistically independent by construction.
    """
    key = np.array([seed & MASK64, stream_index & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replica_streams(seed: int, n: int, base: int = 0) -> list[np.random.Generator]:
    """Streams for replicas base..base+n-1 of one experiment."""
    return [stream(seed, base + r) for r in range(n)]
