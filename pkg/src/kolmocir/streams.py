"""Counter-based random streams with reproducible shard substreams.

Substreams are keyed Philox counters: shard s, channel c uses the 128-bit
key (seed, s * SHARD_STRIDE + c).  Keyed counter-based streams are
independent by construction and bit-reproducible across runs and platforms
for a fixed numpy version; scheduling of shards cannot change any draw.
Channels separate independent uses inside one estimate (main draws,
nested inner sampling, ...) without consuming each other's sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SHARD_STRIDE = 1 << 40

# Channel assignments within a shard substream.
CHANNEL_MAIN = 0
CHANNEL_OUTER = 1
CHANNEL_INNER = 2


@dataclass(frozen=True)
class RngStream:
    """Handle identifying one reproducible substream."""

    seed: int
    shard: int = 0
    channel: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 1 << 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.shard < 0 or self.channel < 0 or self.channel >= SHARD_STRIDE:
            raise ValueError(
                f"invalid substream indices shard={self.shard} channel={self.channel}"
            )

    def generator(self) -> np.random.Generator:
        key = np.array(
            [self.seed, self.shard * SHARD_STRIDE + self.channel], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def with_shard(self, shard: int) -> "RngStream":
        return replace(self, shard=shard)

    def with_channel(self, channel: int) -> "RngStream":
        return replace(self, channel=channel)


def shard_sizes(paths: int, shards: int) -> list[int]:
    """Deterministic split of a path budget over shards (earlier shards take the remainder)."""
    if paths < 1 or shards < 1:
        raise ValueError(f"paths and shards must be >= 1, got {paths}, {shards}")
    base, rem = divmod(paths, shards)
    return [base + (1 if s < rem else 0) for s in range(shards)]
