"""Seeded synthetic sites for exercising the whole pipeline.

Ground truth per band is a seasonal sinusoid plus a static per-pixel
offset. The fine sensor observes truth with additive noise and cloud
gaps; the coarse sensor observes the blockwise mean of truth mapped
through the inverse of the configured fusion line, plus its own noise.
Because the fine signal is ``slope * coarse + intercept`` by construction,
the fusion fit has a known right answer.

Randomness is split into named substreams keyed by (seed, band index,
field code) and every field is drawn as one array in a fixed
record-major, pixel-minor layout, so results are bit-reproducible and do
not depend on how the consumer parallelises.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .grids import GridGeometry, SceneGrid, write_grid
from .series import CompositeStack, write_series_csv

log = logging.getLogger(__name__)

# Substream codes; drawing order never matters because each stream is
# derived independently from (seed, band, code).
_OFFSETS = 0
_ARCHIVE_NOISE = 1
_ARCHIVE_GAPS = 2
_TARGET_NOISE = 3
_TARGET_GAPS = 4
_COARSE_ARCHIVE_NOISE = 5
_COARSE_ARCHIVE_GAPS = 6
_COARSE_TARGET_NOISE = 7
_COARSE_TARGET_GAPS = 8


@dataclass(frozen=True)
class BandSpec:
    """Truth and cross-sensor parameters for one synthetic band."""

    name: str
    baseline: float
    amplitude: float
    phase: float
    fusion_slope: float
    fusion_intercept: float

    def truth_cycle(self) -> np.ndarray:
        """Seasonal mean for months 1..12, before pixel offsets."""
        months = np.arange(1, 13, dtype=np.float64)
        return self.baseline + self.amplitude * np.sin(
            2.0 * math.pi * (months - self.phase) / 12.0
        )


def default_bands() -> list[BandSpec]:
    return [
        BandSpec("band3", baseline=0.08, amplitude=0.04, phase=4.0,
                 fusion_slope=0.9, fusion_intercept=0.01),
        BandSpec("band4", baseline=0.25, amplitude=0.15, phase=10.0,
                 fusion_slope=0.85, fusion_intercept=0.03),
    ]


@dataclass
class SyntheticConfig:
    width: int = 100
    height: int = 100
    start_year: int = 2000
    archive_years: int = 10
    bands: list[BandSpec] = field(default_factory=default_bands)
    coarse_block: int = 16
    fine_noise_sd: float = 0.02
    coarse_noise_sd: float = 0.015
    cloud_gap_fraction: float = 0.3
    coarse_gap_fraction: float = 0.0
    heterogeneity_sd: float = 0.02
    spike_magnitude: float = 0.0
    spike_months: tuple[int, ...] = ()
    masked_months: tuple[int, ...] = ()
    seed: int = 0

    @property
    def target_year(self) -> int:
        return self.start_year + self.archive_years

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if self.archive_years < 1:
            raise ConfigError(f"need at least one archive year, got {self.archive_years}")
        if self.coarse_block < 1:
            raise ConfigError(f"coarse block must be >= 1, got {self.coarse_block}")
        if not self.bands:
            raise ConfigError("at least one band is required")
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ConfigError(f"band names must be unique, got {names}")
        for frac, label in (
            (self.cloud_gap_fraction, "cloud_gap_fraction"),
            (self.coarse_gap_fraction, "coarse_gap_fraction"),
        ):
            if not 0.0 <= frac <= 1.0:
                raise ConfigError(f"{label} must be in [0, 1], got {frac}")
        for sd, label in (
            (self.fine_noise_sd, "fine_noise_sd"),
            (self.coarse_noise_sd, "coarse_noise_sd"),
            (self.heterogeneity_sd, "heterogeneity_sd"),
        ):
            if sd < 0.0 or not math.isfinite(sd):
                raise ConfigError(f"{label} must be finite and >= 0, got {sd}")
        for b in self.bands:
            if b.fusion_slope == 0.0 or not math.isfinite(b.fusion_slope):
                raise ConfigError(f"band {b.name}: fusion slope must be finite and nonzero")
        for months, label in ((self.spike_months, "spike_months"),
                              (self.masked_months, "masked_months")):
            for m in months:
                if not 1 <= int(m) <= 12:
                    raise ConfigError(f"{label} entries must be calendar months 1..12, got {m}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticConfig":
        data = dict(raw)
        band_dicts = data.pop("bands", None)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if band_dicts is not None:
            try:
                cfg.bands = [BandSpec(**b) for b in band_dicts]
            except TypeError as exc:
                raise ConfigError(f"bad band spec: {exc}") from None
        for tup in ("spike_months", "masked_months"):
            setattr(cfg, tup, tuple(int(m) for m in getattr(cfg, tup)))
        cfg.validate()
        return cfg


@dataclass
class SyntheticBandData:
    """Everything generated for one band."""

    spec: BandSpec
    truth: np.ndarray  # (12, n_pixels) target-year truth, float64
    fine_archive: CompositeStack
    fine_target: CompositeStack
    coarse_archive: CompositeStack
    coarse_target: CompositeStack


@dataclass
class SyntheticSite:
    config: SyntheticConfig
    fine_geometry: GridGeometry
    coarse_geometry: GridGeometry
    coarse_shape: tuple[int, int]
    bands: dict[str, SyntheticBandData]


def _rng(seed: int, band_index: int, code: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(band_index, code)))


def _block_mean(plane: np.ndarray, block: int) -> np.ndarray:
    """Blockwise mean with partial edge blocks averaged over what exists."""
    height, width = plane.shape
    ch = -(-height // block)
    cw = -(-width // block)
    padded = np.full((ch * block, cw * block), np.nan)
    padded[:height, :width] = plane
    cells = padded.reshape(ch, block, cw, block)
    with np.errstate(invalid="ignore"):
        return np.nanmean(cells, axis=(1, 3))


def _gaps(rng: np.random.Generator, fraction: float, shape: tuple[int, ...]) -> np.ndarray:
    # Drawn even when the fraction is 0 so stream consumption is stable
    # across configs that differ only in gap fraction.
    return rng.random(shape) < fraction


def _archive_months(cfg: SyntheticConfig) -> list[tuple[int, int]]:
    return [
        (year, month)
        for year in range(cfg.start_year, cfg.start_year + cfg.archive_years)
        for month in range(1, 13)
    ]


def generate_site(config: SyntheticConfig) -> SyntheticSite:
    """Generate a full site; identical configs give bit-identical sites."""
    config.validate()
    height, width = config.height, config.width
    n_px = config.n_pixels
    fine_geometry = GridGeometry(0.0, 0.0, 1.0, 1.0)
    block = config.coarse_block
    coarse_shape = (-(-height // block), -(-width // block))
    coarse_geometry = GridGeometry(0.0, 0.0, float(block), float(block))
    n_cpx = coarse_shape[0] * coarse_shape[1]
    archive_months = _archive_months(config)
    n_archive = len(archive_months)
    target_months = [(config.target_year, m) for m in range(1, 13)]

    bands: dict[str, SyntheticBandData] = {}
    for bi, spec in enumerate(config.bands):
        offsets = _rng(config.seed, bi, _OFFSETS).normal(0.0, config.heterogeneity_sd, n_px)
        cycle = spec.truth_cycle()
        base_truth = cycle[:, None] + offsets[None, :]  # (12, n_px)
        truth_target = base_truth.copy()
        if config.spike_magnitude != 0.0:
            for m in config.spike_months:
                truth_target[m - 1] += config.spike_magnitude

        # Fine archive: every archive year repeats the base seasonal truth.
        noise = _rng(config.seed, bi, _ARCHIVE_NOISE).normal(
            0.0, config.fine_noise_sd, (n_archive, n_px)
        )
        gaps = _gaps(_rng(config.seed, bi, _ARCHIVE_GAPS), config.cloud_gap_fraction,
                     (n_archive, n_px))
        month_idx = np.array([m - 1 for _, m in archive_months])
        fine_archive_values = base_truth[month_idx] + noise
        fine_archive_values[gaps] = np.nan

        # Fine target year.
        noise_t = _rng(config.seed, bi, _TARGET_NOISE).normal(
            0.0, config.fine_noise_sd, (12, n_px)
        )
        gaps_t = _gaps(_rng(config.seed, bi, _TARGET_GAPS), config.cloud_gap_fraction, (12, n_px))
        fine_target_values = truth_target + noise_t
        fine_target_values[gaps_t] = np.nan
        for m in config.masked_months:
            fine_target_values[m - 1, :] = np.nan

        # Coarse truth is the blockwise mean of (truth - b) / a.
        def coarse_of(truth_rows: np.ndarray) -> np.ndarray:
            inv = (truth_rows - spec.fusion_intercept) / spec.fusion_slope
            return np.stack(
                [_block_mean(inv[k].reshape(height, width), block).reshape(-1) for k in range(12)]
            )

        coarse_base = coarse_of(base_truth)  # (12, n_cpx)
        coarse_target_truth = coarse_of(truth_target)

        cnoise = _rng(config.seed, bi, _COARSE_ARCHIVE_NOISE).normal(
            0.0, config.coarse_noise_sd, (n_archive, n_cpx)
        )
        cgaps = _gaps(_rng(config.seed, bi, _COARSE_ARCHIVE_GAPS), config.coarse_gap_fraction,
                      (n_archive, n_cpx))
        coarse_archive_values = coarse_base[month_idx] + cnoise
        coarse_archive_values[cgaps] = np.nan

        cnoise_t = _rng(config.seed, bi, _COARSE_TARGET_NOISE).normal(
            0.0, config.coarse_noise_sd, (12, n_cpx)
        )
        cgaps_t = _gaps(_rng(config.seed, bi, _COARSE_TARGET_GAPS), config.coarse_gap_fraction,
                        (12, n_cpx))
        coarse_target_values = coarse_target_truth + cnoise_t
        coarse_target_values[cgaps_t] = np.nan

        bands[spec.name] = SyntheticBandData(
            spec=spec,
            truth=truth_target,
            fine_archive=CompositeStack(spec.name, fine_geometry, (height, width),
                                        list(archive_months), fine_archive_values),
            fine_target=CompositeStack(spec.name, fine_geometry, (height, width),
                                       list(target_months), fine_target_values),
            coarse_archive=CompositeStack(spec.name, coarse_geometry, coarse_shape,
                                          list(archive_months), coarse_archive_values),
            coarse_target=CompositeStack(spec.name, coarse_geometry, coarse_shape,
                                         list(target_months), coarse_target_values),
        )
    return SyntheticSite(
        config=config,
        fine_geometry=fine_geometry,
        coarse_geometry=coarse_geometry,
        coarse_shape=coarse_shape,
        bands=bands,
    )


def _iter_stack(stack: CompositeStack) -> Iterator[tuple[int, int, SceneGrid]]:
    height, width = stack.shape
    for i, (year, month) in enumerate(stack.months):
        values = stack.values[i].reshape(height, width).astype(np.float32)
        yield year, month, SceneGrid(stack.band, values, stack.geometry)


def write_site(site: SyntheticSite, workspace: Path | str) -> Path:
    """Emit the site in the pipeline's on-disk layout.

    fine/<band>/<year>-<mm>.grid      monthly fine composites (archive + target)
    coarse/<band>/<year>-<mm>.grid    monthly coarse composites (archive + target)
    truth/<band>/<year>-<mm>.grid     target-year truth, for skill scoring
    series/<band>_observations.csv    target-year fine series in CSV form
    site.json                         manifest of what was generated
    """
    workspace = Path(workspace)
    cfg = site.config
    for name in (b.name for b in cfg.bands):
        data = site.bands[name]
        for stack, subdir in (
            (data.fine_archive, "fine"),
            (data.fine_target, "fine"),
            (data.coarse_archive, "coarse"),
            (data.coarse_target, "coarse"),
        ):
            for year, month, scene in _iter_stack(stack):
                write_grid(workspace / subdir / name / f"{year}-{month:02d}", scene)
        height, width = data.fine_target.shape
        for k in range(12):
            scene = SceneGrid(
                name, data.truth[k].reshape(height, width).astype(np.float32), site.fine_geometry
            )
            write_grid(workspace / "truth" / name / f"{cfg.target_year}-{k + 1:02d}", scene)
        series = [data.fine_target.pixel_series(p) for p in range(data.fine_target.n_pixels)]
        write_series_csv(workspace / "series" / f"{name}_observations.csv", series)

    manifest = {
        "bands": [b.name for b in cfg.bands],
        "width": cfg.width,
        "height": cfg.height,
        "coarse_block": cfg.coarse_block,
        "coarse_width": site.coarse_shape[1],
        "coarse_height": site.coarse_shape[0],
        "archive_start": cfg.start_year,
        "archive_end": cfg.start_year + cfg.archive_years - 1,
        "target_year": cfg.target_year,
        "seed": cfg.seed,
        "generator": {k: v for k, v in asdict(cfg).items() if k != "bands"},
        "band_specs": [asdict(b) for b in cfg.bands],
    }
    path = workspace / "site.json"
    workspace.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote synthetic site to %s (%d bands, %dx%d)",
             workspace, len(cfg.bands), cfg.width, cfg.height)
    return path
