"""Cross-sensor fusion: per-pixel linear regression of fine reflectance on
collocated coarse reflectance, and its application as a filter prior.

The fit is ordinary least squares over every month in the training window
where both sensors have a valid composite for the pixel. Pixels without
enough pairs, or whose coarse values barely vary, get a degenerate
passthrough model: slope 1, intercept 0, and a deliberately pessimistic
residual variance so the filter leans on the climatology instead.

Persistence: one grid per coefficient (slope, intercept, residual_variance,
n_pairs, degenerate) plus a JSON sidecar recording the thresholds used.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInputError
from .filtering import VAR_FLOOR, GaussianBelief
from .grids import GridGeometry, SceneGrid, read_grid, write_grid

log = logging.getLogger(__name__)

# Fewest collocated pairs worth fitting a line through.
MIN_PAIRS = 6

# Coarse-value variance below this means the regressor is effectively
# constant and the slope is unidentifiable.
REGRESSOR_VAR_EPS = 1e-12

# Residual variance assigned to degenerate passthrough models: wide enough
# that the climatology prior dominates whenever the fit was untrustworthy.
DEGENERATE_VAR = 0.05


@dataclass(frozen=True)
class CollocatedPair:
    """One (coarse, fine) sample for one pixel and month."""

    coarse: float
    fine: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.coarse) and math.isfinite(self.fine)):
            raise ValueError("collocated pairs must be finite; drop gaps before fitting")


@dataclass(frozen=True)
class FusionModel:
    """Affine map from coarse to fine reflectance for a single pixel."""

    slope: float
    intercept: float
    residual_variance: float
    n_pairs: int
    degenerate: bool


def fit_fusion_model(
    pairs: Sequence[CollocatedPair],
    min_pairs: int = MIN_PAIRS,
    degenerate_variance: float = DEGENERATE_VAR,
) -> FusionModel:
    """OLS fit of fine on coarse; degenerate fallback when unidentifiable.

    Residual variance is SSR / max(n - 2, 1), computed from explicitly
    reconstructed residuals so an exactly linear input yields an exactly
    tiny result instead of accumulated cancellation noise.
    """
    n = len(pairs)
    x = np.array([p.coarse for p in pairs], dtype=np.float64)
    y = np.array([p.fine for p in pairs], dtype=np.float64)
    return _fit_arrays(x, y, n, min_pairs, degenerate_variance)


def _fit_arrays(
    x: np.ndarray, y: np.ndarray, n: int, min_pairs: int, degenerate_variance: float
) -> FusionModel:
    if n < min_pairs:
        return FusionModel(1.0, 0.0, degenerate_variance, n, True)
    xm = float(x.sum() / n)
    ym = float(y.sum() / n)
    dx = x - xm
    dy = y - ym
    sxx = float((dx * dx).sum())
    var_x = sxx / n
    if var_x < REGRESSOR_VAR_EPS:
        return FusionModel(1.0, 0.0, degenerate_variance, n, True)
    slope = float((dx * dy).sum()) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ssr = float((resid * resid).sum())
    residual_variance = ssr / max(n - 2, 1)
    return FusionModel(slope, intercept, residual_variance, n, False)


def apply_fusion(model: FusionModel, coarse_value: float) -> GaussianBelief:
    """Turn one coarse value into a fine-scale prior belief.

    Degenerate models pass the coarse value through with the pessimistic
    variance; healthy models map it through the fitted line with the
    residual variance (floored like every belief).
    """
    if not math.isfinite(coarse_value):
        raise ValueError("cannot fuse an invalid coarse value; skip the prior instead")
    if model.degenerate:
        return GaussianBelief(coarse_value, model.residual_variance)
    mean = model.slope * coarse_value + model.intercept
    return GaussianBelief(mean, max(model.residual_variance, VAR_FLOOR))


@dataclass
class FusionGrid:
    """FusionModel coefficients for every pixel of a grid, as arrays."""

    band: str
    geometry: GridGeometry
    shape: tuple[int, int]
    slope: np.ndarray  # (n_pixels,) float64
    intercept: np.ndarray
    residual_variance: np.ndarray
    n_pairs: np.ndarray  # (n_pixels,) int64
    degenerate: np.ndarray  # (n_pixels,) bool
    min_pairs: int = MIN_PAIRS
    degenerate_variance: float = DEGENERATE_VAR

    @property
    def n_pixels(self) -> int:
        return self.shape[0] * self.shape[1]

    def degenerate_fraction(self) -> float:
        return float(self.degenerate.mean())

    def model(self, pixel_id: int) -> FusionModel:
        return FusionModel(
            slope=float(self.slope[pixel_id]),
            intercept=float(self.intercept[pixel_id]),
            residual_variance=float(self.residual_variance[pixel_id]),
            n_pairs=int(self.n_pairs[pixel_id]),
            degenerate=bool(self.degenerate[pixel_id]),
        )

    def prior_arrays(self, coarse_values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised apply_fusion over one month of coarse values.

        Returns (means, variances, has_prior); lanes without a finite
        coarse value have no prior. Bit-identical to the scalar path.
        """
        has = np.isfinite(coarse_values)
        with np.errstate(invalid="ignore"):
            mean = self.slope * coarse_values + self.intercept
            mean = np.where(self.degenerate, coarse_values, mean)
        var = np.maximum(self.residual_variance, VAR_FLOOR)
        var = np.where(has, var, np.nan)
        mean = np.where(has, mean, np.nan)
        return mean, var, has


def fit_fusion_grid(
    coarse: np.ndarray,
    fine: np.ndarray,
    band: str,
    geometry: GridGeometry,
    shape: tuple[int, int],
    min_pairs: int = MIN_PAIRS,
    degenerate_variance: float = DEGENERATE_VAR,
) -> FusionGrid:
    """Fit every pixel at once from aligned (n_months, n_pixels) stacks.

    Pairs are the months where both stacks are finite for the pixel. The
    arithmetic follows fit_fusion_model exactly, so grid and scalar fits
    agree bit for bit on the same pairs.
    """
    if coarse.shape != fine.shape:
        raise EmptyInputError(f"coarse {coarse.shape} and fine {fine.shape} stacks must align")
    paired = np.isfinite(coarse) & np.isfinite(fine)
    n = paired.sum(axis=0)
    x = np.where(paired, coarse, 0.0)
    y = np.where(paired, fine, 0.0)
    safe_n = np.maximum(n, 1)
    xm = x.sum(axis=0) / safe_n
    ym = y.sum(axis=0) / safe_n
    dx = np.where(paired, coarse - xm[None, :], 0.0)
    dy = np.where(paired, fine - ym[None, :], 0.0)
    sxx = (dx * dx).sum(axis=0)
    var_x = sxx / safe_n
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (dx * dy).sum(axis=0) / sxx
    intercept = ym - slope * xm
    with np.errstate(invalid="ignore"):
        resid = np.where(paired, fine - (slope[None, :] * coarse + intercept[None, :]), 0.0)
    ssr = (resid * resid).sum(axis=0)
    residual_variance = ssr / np.maximum(n - 2, 1)
    degenerate = (n < min_pairs) | (var_x < REGRESSOR_VAR_EPS)
    slope = np.where(degenerate, 1.0, slope)
    intercept = np.where(degenerate, 0.0, intercept)
    residual_variance = np.where(degenerate, degenerate_variance, residual_variance)
    if degenerate.all():
        log.warning("band %s: every pixel fused degenerately (no usable pairs)", band)
    return FusionGrid(
        band=band,
        geometry=geometry,
        shape=shape,
        slope=slope.astype(np.float64),
        intercept=intercept.astype(np.float64),
        residual_variance=residual_variance.astype(np.float64),
        n_pairs=n.astype(np.int64),
        degenerate=degenerate,
        min_pairs=min_pairs,
        degenerate_variance=degenerate_variance,
    )


_STATS = ("slope", "intercept", "residual_variance", "n_pairs", "degenerate")


def save_fusion_grid(grid: FusionGrid, directory: Path | str) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    height, width = grid.shape
    planes = {
        "slope": grid.slope,
        "intercept": grid.intercept,
        "residual_variance": grid.residual_variance,
        "n_pairs": grid.n_pairs.astype(np.float64),
        "degenerate": grid.degenerate.astype(np.float64),
    }
    for stat in _STATS:
        scene = SceneGrid(grid.band, planes[stat].reshape(height, width), grid.geometry)
        write_grid(directory / f"{grid.band}_{stat}", scene)
    sidecar = {
        "band": grid.band,
        "min_pairs": grid.min_pairs,
        "degenerate_variance": grid.degenerate_variance,
        "regressor_variance_eps": REGRESSOR_VAR_EPS,
        "degenerate_fraction": grid.degenerate_fraction(),
    }
    path = directory / f"{grid.band}_fusion.json"
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_fusion_grid(directory: Path | str, band: str) -> FusionGrid:
    directory = Path(directory)
    sidecar = json.loads((directory / f"{band}_fusion.json").read_text(encoding="utf-8"))
    planes = {
        stat: read_grid(directory / f"{band}_{stat}", mask_range=False) for stat in _STATS
    }
    first = planes["slope"]
    return FusionGrid(
        band=band,
        geometry=first.geometry,
        shape=first.shape,
        slope=planes["slope"].values.astype(np.float64).reshape(-1),
        intercept=planes["intercept"].values.astype(np.float64).reshape(-1),
        residual_variance=planes["residual_variance"].values.astype(np.float64).reshape(-1),
        n_pairs=planes["n_pairs"].values.astype(np.int64).reshape(-1),
        degenerate=planes["degenerate"].values.reshape(-1) != 0.0,
        min_pairs=int(sidecar.get("min_pairs", MIN_PAIRS)),
        degenerate_variance=float(sidecar.get("degenerate_variance", DEGENERATE_VAR)),
    )
