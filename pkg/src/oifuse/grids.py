"""Scene grids: in-memory container, quality masking, compositing,
coarse-to-fine collocation, and the on-disk binary format.

A scene is a single-band value plane on an axis-aligned grid. Invalid
pixels are NaN in the value plane; an optional integer QA plane carries
the producer's quality codes until apply_quality_mask folds them in.

On disk a scene is two files: ``<name>.grid`` holding the row-major
little-endian float32 value plane (NaN for invalid) and ``<name>.json``
holding dimensions, georeference, band, scale factor and any extra
metadata. Values whose physical range is implausible for reflectance
(outside [-0.2, 1.2] after scaling) are masked invalid at load time;
nothing is ever clamped.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, GeometryMismatchError, NoOverlapError

log = logging.getLogger(__name__)

# Reflectance outside this window is treated as sensor garbage and masked.
PLAUSIBLE_MIN = -0.2
PLAUSIBLE_MAX = 1.2

GRID_SUFFIX = ".grid"
SIDECAR_SUFFIX = ".json"
_GRID_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned georeference: map coordinate of the (0, 0) pixel corner
    plus signed pixel sizes. Column c spans x in
    [origin_x + c * pixel_size_x, origin_x + (c + 1) * pixel_size_x)."""

    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float

    def __post_init__(self) -> None:
        if self.pixel_size_x == 0.0 or self.pixel_size_y == 0.0:
            raise ValueError("pixel sizes must be nonzero")

    def pixel_centers(self, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """(ys, xs) map coordinates of pixel centers for a grid of ``shape``."""
        height, width = shape
        xs = self.origin_x + (np.arange(width) + 0.5) * self.pixel_size_x
        ys = self.origin_y + (np.arange(height) + 0.5) * self.pixel_size_y
        return ys, xs


@dataclass
class SceneGrid:
    """One band of one scene (or composite) on a fixed grid."""

    band: str
    values: np.ndarray
    geometry: GridGeometry
    qa: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError(f"scene values must be 2-D, got shape {self.values.shape}")
        if self.qa is not None and self.qa.shape != self.values.shape:
            raise GeometryMismatchError(
                f"qa plane shape {self.qa.shape} != value plane shape {self.values.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def valid_fraction(self) -> float:
        return float(np.isfinite(self.values).mean())


@dataclass(frozen=True)
class QualityPolicy:
    """QA codes considered maximum quality; everything else is discarded."""

    accepted: frozenset[int]

    @classmethod
    def from_codes(cls, codes: Iterable[int]) -> "QualityPolicy":
        return cls(frozenset(int(c) for c in codes))


def apply_quality_mask(scene: SceneGrid, policy: QualityPolicy) -> SceneGrid:
    """Invalidate every pixel whose QA code is not in the accepted set.

    Scenes without a QA plane pass through unchanged (already screened
    upstream). The input scene is never modified.
    """
    if scene.qa is None:
        return SceneGrid(scene.band, scene.values.copy(), scene.geometry, None, dict(scene.meta))
    keep = np.isin(scene.qa, sorted(policy.accepted))
    values = np.where(keep, scene.values, np.nan).astype(scene.values.dtype)
    return SceneGrid(scene.band, values, scene.geometry, None, dict(scene.meta))


def mask_implausible(values: np.ndarray) -> tuple[np.ndarray, int]:
    """NaN out reflectance outside the plausible window; returns (values, n_masked)."""
    with np.errstate(invalid="ignore"):
        bad = np.isfinite(values) & ((values < PLAUSIBLE_MIN) | (values > PLAUSIBLE_MAX))
    n_bad = int(bad.sum())
    if n_bad:
        values = np.where(bad, np.nan, values).astype(values.dtype)
    return values, n_bad


def monthly_composite(scenes: Sequence[SceneGrid]) -> SceneGrid:
    """Median of the valid values at each pixel across same-month scenes.

    All scenes must share band, shape and georeference. Pixels valid in no
    scene stay invalid. The median of an even count is the mean of the two
    central values, so the result is invariant to scene order.
    """
    if not scenes:
        raise EmptyInputError("cannot composite zero scenes")
    first = scenes[0]
    for s in scenes[1:]:
        if s.shape != first.shape or s.geometry != first.geometry:
            raise GeometryMismatchError(
                f"scene {s.band} {s.shape} @ {s.geometry} does not match "
                f"{first.shape} @ {first.geometry}"
            )
        if s.band != first.band:
            raise GeometryMismatchError(f"cannot composite bands {first.band!r} and {s.band!r}")
    stack = np.stack([s.values.astype(np.float64) for s in scenes])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN pixels are fine
        values = np.nanmedian(stack, axis=0)
    return SceneGrid(first.band, values.astype(first.values.dtype), first.geometry, None, {})


def collocation_index(
    coarse_geometry: GridGeometry,
    coarse_shape: tuple[int, int],
    fine_geometry: GridGeometry,
    fine_shape: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map each fine pixel center to the coarse cell containing it.

    Containment is half-open in the direction of the pixel size: a center
    sitting exactly on a cell edge belongs to the cell that starts there.
    Returns (rows, cols, inside) where rows/cols index the coarse grid and
    ``inside`` flags fine pixels whose center falls within it at all.
    """
    fy, fx = fine_geometry.pixel_centers(fine_shape)
    ic = np.floor((fx - coarse_geometry.origin_x) / coarse_geometry.pixel_size_x).astype(np.int64)
    ir = np.floor((fy - coarse_geometry.origin_y) / coarse_geometry.pixel_size_y).astype(np.int64)
    ch, cw = coarse_shape
    col_ok = (ic >= 0) & (ic < cw)
    row_ok = (ir >= 0) & (ir < ch)
    inside = row_ok[:, None] & col_ok[None, :]
    if not inside.any():
        raise NoOverlapError("no fine pixel center falls inside the coarse footprint")
    rows = np.broadcast_to(np.clip(ir, 0, ch - 1)[:, None], fine_shape)
    cols = np.broadcast_to(np.clip(ic, 0, cw - 1)[None, :], fine_shape)
    return rows, cols, inside


def collocate(
    coarse: SceneGrid, fine_geometry: GridGeometry, fine_shape: tuple[int, int]
) -> SceneGrid:
    """Sample a coarse scene onto a fine grid by cell containment.

    Every fine pixel receives the value of the coarse cell its center lies
    in, or NaN outside the coarse footprint. Collocating a grid onto its
    own geometry is the identity.
    """
    rows, cols, inside = collocation_index(coarse.geometry, coarse.shape, fine_geometry, fine_shape)
    values = coarse.values[rows, cols]
    values = np.where(inside, values, np.nan).astype(coarse.values.dtype)
    return SceneGrid(coarse.band, values, fine_geometry, None, dict(coarse.meta))


def write_grid(path: Path | str, scene: SceneGrid) -> Path:
    """Write ``<path>.grid`` + ``<path>.json`` (suffix added if missing)."""
    path = Path(path)
    if path.suffix == GRID_SUFFIX:
        path = path.with_suffix("")
    grid_path = path.with_suffix(GRID_SUFFIX)
    grid_path.parent.mkdir(parents=True, exist_ok=True)
    height, width = scene.shape
    grid_path.write_bytes(np.ascontiguousarray(scene.values, dtype=_GRID_DTYPE).tobytes())
    sidecar = {
        "width": width,
        "height": height,
        "band": scene.band,
        "origin_x": scene.geometry.origin_x,
        "origin_y": scene.geometry.origin_y,
        "pixel_size_x": scene.geometry.pixel_size_x,
        "pixel_size_y": scene.geometry.pixel_size_y,
        "scale_factor": 1.0,
        "dtype": "<f4",
        "nodata": "nan",
    }
    extra = {k: v for k, v in scene.meta.items() if k not in sidecar}
    sidecar.update(extra)
    path.with_suffix(SIDECAR_SUFFIX).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return grid_path


def read_grid(path: Path | str, mask_range: bool = True) -> SceneGrid:
    """Read a scene written by write_grid (or any conforming producer).

    The sidecar's scale factor is applied on the way in (integer-scaled
    products conventionally use 10,000), after which values landing outside
    the plausible reflectance window are masked invalid. In-memory values
    are therefore always physical reflectance with scale 1.
    """
    path = Path(path)
    if path.suffix == GRID_SUFFIX:
        path = path.with_suffix("")
    sidecar = json.loads(path.with_suffix(SIDECAR_SUFFIX).read_text(encoding="utf-8"))
    width = int(sidecar["width"])
    height = int(sidecar["height"])
    raw = np.frombuffer(path.with_suffix(GRID_SUFFIX).read_bytes(), dtype=_GRID_DTYPE)
    if raw.size != width * height:
        raise ValueError(
            f"{path}: plane holds {raw.size} values, sidecar says {width}x{height}"
        )
    values = raw.reshape(height, width).copy()
    scale = float(sidecar.get("scale_factor", 1.0))
    meta = {
        k: v
        for k, v in sidecar.items()
        if k
        not in {
            "width",
            "height",
            "band",
            "origin_x",
            "origin_y",
            "pixel_size_x",
            "pixel_size_y",
            "scale_factor",
            "dtype",
            "nodata",
        }
    }
    if scale != 1.0:
        values = (values / scale).astype(_GRID_DTYPE)
        meta["source_scale_factor"] = scale
    if mask_range:
        values, n_bad = mask_implausible(values)
        if n_bad:
            log.warning("%s: masked %d values outside [%.1f, %.1f]",
                        path.name, n_bad, PLAUSIBLE_MIN, PLAUSIBLE_MAX)
    geometry = GridGeometry(
        origin_x=float(sidecar["origin_x"]),
        origin_y=float(sidecar["origin_y"]),
        pixel_size_x=float(sidecar["pixel_size_x"]),
        pixel_size_y=float(sidecar["pixel_size_y"]),
    )
    return SceneGrid(str(sidecar["band"]), values, geometry, None, meta)
