"""HBM timing: channel-interleaved blocks with occupancy and a seeded latency draw."""
from __future__ import annotations

import random


class HbmModel:
    def __init__(self, channels: int = 16, lat_min: int = 80, lat_max: int = 150,
                 occupancy: int = 8, seed: int = 0):
        if channels < 1:
            raise ValueError("channels must be >= 1")
        if not 0 <= lat_min <= lat_max:
            raise ValueError("need 0 <= lat_min <= lat_max")
        self.channels = channels
        self.lat_min = lat_min
        self.lat_max = lat_max
        self.occupancy = occupancy
        self.rng = random.Random(seed)
        self.free_at = [0] * channels
        self.reads = 0
        self.writes = 0

    def channel_of(self, block: int) -> int:
        return block % self.channels

    def draw(self) -> int:
        if self.lat_min == self.lat_max:
            return self.lat_min
        return self.rng.randint(self.lat_min, self.lat_max)

    def request(self, block: int, cycle: int, draw: int | None = None) -> int:
        """Schedule a block read; returns the cycle its data is back at the L2."""
        ch = block % self.channels
        start = max(self.free_at[ch], cycle)
        self.free_at[ch] = start + self.occupancy
        self.reads += 1
        return start + self.occupancy + (self.draw() if draw is None else draw)

    def write(self, block: int, cycle: int) -> None:
        """Posted write-back; only occupies the channel."""
        ch = block % self.channels
        self.free_at[ch] = max(self.free_at[ch], cycle) + self.occupancy
        self.writes += 1


def hbm_request(h: HbmModel, block_address: int, cycle: int, block_size: int = 64,
                draw: int | None = None) -> int:
    """Byte-address front end of :meth:`HbmModel.request`."""
    return h.request(block_address // block_size, cycle, draw)
