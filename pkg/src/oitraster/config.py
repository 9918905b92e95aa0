from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RasterLimits:
    """Capacity limits that decide between the low and the high raster path.

    The low path abandons a bin as soon as one of its limits is exceeded and
    hands it to the high path; exceeding a high-path limit is a hard error.
    """

    low_tris_per_bin: int = 1024
    low_block_row_records: int = 1024
    low_block_tris: int = 256
    high_block_row_records: int = 16384
    high_half_block_records: int = 4096

    def __post_init__(self):
        if self.low_block_row_records > self.high_block_row_records:
            raise ValueError("low block-row limit exceeds the high one")
        if self.low_block_tris > self.high_half_block_records:
            raise ValueError("low block limit exceeds the high half-block limit")
        if self.low_block_tris >= 1024:
            raise ValueError("low-path tri-block index must fit in 10 bits")


@dataclass(frozen=True)
class RenderConfig:
    backface_culling: bool = False
    alpha_threshold: bool = False
    visualize_errors: bool = False
    depth_filter_size: int = 3
    worker_count: int = 1
    force_high_path: bool = False
    light_dir: tuple[float, float, float] = (0.3, 0.5, 0.8)
    ambient: float = 0.2
    background: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    limits: RasterLimits = field(default_factory=RasterLimits)
    max_visible_quads: int = 1 << 23

    def __post_init__(self):
        if self.depth_filter_size < 1:
            raise ValueError("depth_filter_size must be >= 1")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must be in [0, 1]")
