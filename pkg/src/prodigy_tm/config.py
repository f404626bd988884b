"""Simulation configuration.  Defaults follow the evaluated 4x16 design point."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from .memory.cache import MODES, SHARED, CacheConfig, CacheConfigError


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PrefetchConfig:
    enabled: bool = False
    distance: int = 8
    max_range: int = 64
    inbox_depth: int = 16
    entries_per_gpe: int = 8
    ablate_handshake: bool = False
    ablate_fused_pfhr: bool = False

    def __post_init__(self):
        if self.distance < 1:
            raise ConfigError("prefetch distance must be >= 1")
        if self.max_range < 1 or self.inbox_depth < 1 or self.entries_per_gpe < 1:
            raise ConfigError("pf_max_range, pf_inbox_depth and pfhr_entries_per_gpe must be >= 1")


@dataclass(frozen=True)
class TmConfig:
    """Flat, JSON-friendly description of one simulated Transmuter instance."""

    tiles: int = 4
    gpes_per_tile: int = 16
    l1_size_kb_per_bank: float = 16
    l1_assoc: int = 4
    l1_mshrs: int = 8
    block_bytes: int = 64
    l2_banks_per_tile: int = 4
    l2_total_kb: float = 64
    l2_assoc: int = 4
    l2_mshrs: int = 8
    cache_mode: str = SHARED
    hbm_channels: int = 16
    hbm_lat_min: int = 80
    hbm_lat_max: int = 150
    hbm_occupancy: int = 8
    pf_enabled: bool = False
    pf_distance: int = 8
    pf_max_range: int = 64
    pf_inbox_depth: int = 16
    pfhr_entries_per_gpe: int = 8
    ablate_handshake: bool = False
    ablate_fused_pfhr: bool = False
    contention_window: int = 1000
    seed: int = 0
    max_cycles: int = 2_000_000_000

    def __post_init__(self):
        if self.tiles < 1 or self.gpes_per_tile < 1:
            raise ConfigError("tiles and gpes_per_tile must be >= 1")
        if self.cache_mode not in MODES:
            raise ConfigError(f"cache_mode must be one of {MODES}")
        if self.l2_banks_per_tile < 1:
            raise ConfigError("l2_banks_per_tile must be >= 1")
        try:
            self.l1_config()
            self.l2_config()
        except CacheConfigError as exc:
            raise ConfigError(str(exc)) from exc
        self.prefetch_config()

    @property
    def num_gpes(self) -> int:
        return self.tiles * self.gpes_per_tile

    @property
    def num_l2_banks(self) -> int:
        return self.tiles * self.l2_banks_per_tile

    def l1_config(self) -> CacheConfig:
        size = self.l1_size_kb_per_bank * 1024
        if size != int(size):
            raise CacheConfigError("l1_size_kb_per_bank must give a whole number of bytes")
        return CacheConfig(int(size), self.l1_assoc, self.block_bytes, self.l1_mshrs, 1,
                           self.cache_mode)

    def l2_config(self) -> CacheConfig:
        """Per-bank L2 geometry; the total L2 size is held fixed across bank counts."""
        per_bank = self.l2_total_kb * 1024 / self.num_l2_banks
        if per_bank != int(per_bank):
            raise CacheConfigError("l2_total_kb does not split evenly over the L2 banks")
        return CacheConfig(int(per_bank), self.l2_assoc, self.block_bytes, self.l2_mshrs, 1,
                           SHARED)

    def prefetch_config(self) -> PrefetchConfig:
        return PrefetchConfig(self.pf_enabled, self.pf_distance, self.pf_max_range,
                              self.pf_inbox_depth, self.pfhr_entries_per_gpe,
                              self.ablate_handshake, self.ablate_fused_pfhr)

    def with_(self, **changes) -> "TmConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]
