"""Per-pixel monthly climatology built from a multi-year composite archive.

For every pixel and calendar month the climatology stores the median and
the population standard deviation of the valid archive values, plus the
sample count. Lookup turns a cell into a Gaussian belief: variance is the
squared std, inflated for thinly sampled cells and floored so it can feed
the filter; cells with no samples at all fall back to band-wide statistics.

Statistics are computed on value-sorted samples, so shuffling the year
order of the archive cannot change a single output bit.

Persistence uses the binary grid format: one grid per (month, statistic)
with statistics median, std and count, plus a JSON sidecar carrying the
fallback values, per-month totals and the lookup parameters.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyArchiveError
from .filtering import VAR_FLOOR, GaussianBelief
from .grids import GridGeometry, SceneGrid, read_grid, write_grid
from .series import CompositeStack

log = logging.getLogger(__name__)

MONTHS = range(1, 13)

# Cells with fewer samples than this get their variance inflated: a median
# over one or two values says little about the real spread.
LOW_SAMPLE_MIN = 3
LOW_SAMPLE_INFLATION = 4.0


@dataclass
class Climatology:
    """Monthly reference statistics for one band on one grid."""

    band: str
    geometry: GridGeometry
    shape: tuple[int, int]
    median: np.ndarray  # (12, n_pixels) float64, NaN where count == 0
    std: np.ndarray  # (12, n_pixels) float64, NaN where count == 0
    count: np.ndarray  # (12, n_pixels) int64
    fallback_mean: float
    fallback_variance: float
    period: tuple[int, int] | None = None
    min_samples: int = LOW_SAMPLE_MIN
    inflation: float = LOW_SAMPLE_INFLATION
    extra: dict = field(default_factory=dict)

    @property
    def n_pixels(self) -> int:
        return self.shape[0] * self.shape[1]

    def lookup(self, pixel_id: int, month: int) -> GaussianBelief:
        """Belief for one cell; month is the calendar month 1..12."""
        m = month - 1
        n = int(self.count[m, pixel_id])
        if n == 0:
            return GaussianBelief(self.fallback_mean, max(self.fallback_variance, VAR_FLOOR))
        s = float(self.std[m, pixel_id])
        var = s * s
        if n < self.min_samples:
            var = var * self.inflation
        var = max(var, VAR_FLOOR)
        return GaussianBelief(float(self.median[m, pixel_id]), var)

    def belief_arrays(self, month: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised lookup: (means, variances) for every pixel of a month.

        Bit-identical to calling lookup per pixel.
        """
        m = month - 1
        s = self.std[m]
        var = s * s
        var = np.where(self.count[m] < self.min_samples, var * self.inflation, var)
        var = np.maximum(var, VAR_FLOOR)
        mean = self.median[m]
        absent = self.count[m] == 0
        mean = np.where(absent, self.fallback_mean, mean)
        var = np.where(absent, max(self.fallback_variance, VAR_FLOOR), var)
        return mean, var


def _sorted_columns(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort each column ascending with NaN pushed to the end; also counts."""
    counts = np.isfinite(values).sum(axis=0)
    return np.sort(values, axis=0), counts


def _median_from_sorted(sorted_vals: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Columnwise median of the leading ``counts`` entries.

    Even counts average the two central values, matching the textbook rule.
    """
    n_pixels = sorted_vals.shape[1]
    out = np.full(n_pixels, np.nan)
    nonzero = counts > 0
    if not nonzero.any():
        return out
    hi = np.clip(counts // 2, 0, sorted_vals.shape[0] - 1)
    lo = np.clip((counts - 1) // 2, 0, sorted_vals.shape[0] - 1)
    cols = np.arange(n_pixels)
    upper = sorted_vals[hi, cols]
    lower = sorted_vals[lo, cols]
    out[nonzero] = ((lower + upper) / 2.0)[nonzero]
    return out


def _population_std_from_sorted(sorted_vals: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Columnwise population std (divide by n) over the valid entries.

    Operates on sorted data so the summation order is a function of the
    values alone. Columns with one sample get std exactly 0.
    """
    n_pixels = sorted_vals.shape[1]
    out = np.full(n_pixels, np.nan)
    nonzero = counts > 0
    if not nonzero.any():
        return out
    with np.errstate(invalid="ignore"):
        sums = np.nansum(sorted_vals, axis=0)
        safe_counts = np.maximum(counts, 1)
        means = sums / safe_counts
        dev = sorted_vals - means[None, :]
        ss = np.nansum(dev * dev, axis=0)
        var = ss / safe_counts
    out[nonzero] = np.sqrt(var)[nonzero]
    return out


def build_climatology(
    archive: CompositeStack,
    period: tuple[int, int] | None = None,
    min_samples: int = LOW_SAMPLE_MIN,
    inflation: float = LOW_SAMPLE_INFLATION,
) -> Climatology:
    """Reduce a multi-year archive to monthly per-pixel statistics.

    ``period`` restricts the archive to [start, end] years inclusive before
    anything is computed. Raises EmptyArchiveError when not a single valid
    value remains.
    """
    if period is not None:
        archive = archive.year_window(*period)
    n_pixels = archive.n_pixels
    median = np.full((12, n_pixels), np.nan)
    std = np.full((12, n_pixels), np.nan)
    count = np.zeros((12, n_pixels), dtype=np.int64)
    record_months = archive.month_numbers()
    for month in MONTHS:
        rows = archive.values[record_months == month]
        if rows.shape[0] == 0:
            continue
        sorted_vals, counts = _sorted_columns(rows)
        count[month - 1] = counts
        median[month - 1] = _median_from_sorted(sorted_vals, counts)
        std[month - 1] = _population_std_from_sorted(sorted_vals, counts)
    total = int(count.sum())
    if total == 0:
        raise EmptyArchiveError(
            f"band {archive.band!r}: no valid composite value in the archive"
            + (f" window {period}" if period else "")
        )
    all_valid = np.sort(archive.values[np.isfinite(archive.values)])
    fallback_mean = float(_median_from_sorted(all_valid[:, None], np.array([all_valid.size]))[0])
    mean_all = float(all_valid.sum() / all_valid.size)
    dev = all_valid - mean_all
    fallback_variance = float((dev * dev).sum() / all_valid.size)
    return Climatology(
        band=archive.band,
        geometry=archive.geometry,
        shape=archive.shape,
        median=median,
        std=std,
        count=count,
        fallback_mean=fallback_mean,
        fallback_variance=fallback_variance,
        period=period,
        min_samples=min_samples,
        inflation=inflation,
    )


def _stat_path(directory: Path, band: str, month: int, stat: str) -> Path:
    return directory / f"{band}_m{month:02d}_{stat}"


def save_climatology(clim: Climatology, directory: Path | str) -> Path:
    """One grid per (month, statistic) plus ``<band>_climatology.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    height, width = clim.shape
    for month in MONTHS:
        for stat, plane in (
            ("median", clim.median),
            ("std", clim.std),
            ("count", clim.count.astype(np.float64)),
        ):
            scene = SceneGrid(clim.band, plane[month - 1].reshape(height, width), clim.geometry)
            write_grid(_stat_path(directory, clim.band, month, stat), scene)
    sidecar = {
        "band": clim.band,
        "fallback_mean": clim.fallback_mean,
        "fallback_variance": clim.fallback_variance,
        "period": list(clim.period) if clim.period else None,
        "min_samples": clim.min_samples,
        "inflation": clim.inflation,
        "samples_per_month": {str(m): int(clim.count[m - 1].sum()) for m in MONTHS},
    }
    path = directory / f"{clim.band}_climatology.json"
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_climatology(directory: Path | str, band: str) -> Climatology:
    directory = Path(directory)
    sidecar = json.loads((directory / f"{band}_climatology.json").read_text(encoding="utf-8"))
    medians, stds, counts = [], [], []
    geometry = None
    shape = None
    for month in MONTHS:
        med = read_grid(_stat_path(directory, band, month, "median"))
        # std and count planes are statistics, not reflectance; no range mask.
        std = read_grid(_stat_path(directory, band, month, "std"), mask_range=False)
        cnt = read_grid(_stat_path(directory, band, month, "count"), mask_range=False)
        geometry, shape = med.geometry, med.shape
        medians.append(med.values.astype(np.float64).reshape(-1))
        stds.append(std.values.astype(np.float64).reshape(-1))
        counts.append(cnt.values.astype(np.int64).reshape(-1))
    period = sidecar.get("period")
    return Climatology(
        band=band,
        geometry=geometry,
        shape=shape,
        median=np.stack(medians),
        std=np.stack(stds),
        count=np.stack(counts),
        fallback_mean=float(sidecar["fallback_mean"]),
        fallback_variance=float(sidecar["fallback_variance"]),
        period=tuple(period) if period else None,
        min_samples=int(sidecar.get("min_samples", LOW_SAMPLE_MIN)),
        inflation=float(sidecar.get("inflation", LOW_SAMPLE_INFLATION)),
    )
