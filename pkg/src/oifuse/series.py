"""Monthly time series: stacked composites, per-pixel series, and CSV I/O.

A CompositeStack is the array form used everywhere internally: one row per
(year, month) record, one column per pixel in row-major grid order. A
PixelSeries is the single-pixel view handed to the scalar filter. The CSV
format (UTF-8, LF, '.' decimal) is the interchange format shared by the
synthetic generator and the evaluation harness:

    pixel_id,band,year,month,value,valid

Gaps are real rows with valid=false, never omissions, so a series always
has exactly one entry per month of its period.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryMismatchError, UnsortedInputError
from .filtering import Observation
from .grids import GridGeometry, SceneGrid


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(x))


def _check_month_order(months: Sequence[tuple[int, int]], what: str) -> None:
    for a, b in zip(months, months[1:]):
        if b <= a:
            raise UnsortedInputError(f"{what}: {a} followed by {b} breaks (year, month) order")


@dataclass
class CompositeStack:
    """Monthly composites for one band, stacked over time.

    ``values`` is (n_records, n_pixels) float64 with NaN for invalid;
    ``months`` holds the strictly increasing (year, month) keys. Pixel ids
    are row-major flat indices into the grid of ``shape``.
    """

    band: str
    geometry: GridGeometry
    shape: tuple[int, int]
    months: list[tuple[int, int]]
    values: np.ndarray

    def __post_init__(self) -> None:
        _check_month_order(self.months, f"stack for band {self.band!r}")
        n_pixels = self.shape[0] * self.shape[1]
        if self.values.shape != (len(self.months), n_pixels):
            raise GeometryMismatchError(
                f"stack values {self.values.shape} != "
                f"({len(self.months)} records, {n_pixels} pixels)"
            )

    @property
    def n_pixels(self) -> int:
        return self.shape[0] * self.shape[1]

    def year_window(self, start_year: int, end_year: int) -> "CompositeStack":
        """Records whose year lies in [start_year, end_year] inclusive."""
        keep = [i for i, (y, _) in enumerate(self.months) if start_year <= y <= end_year]
        return CompositeStack(
            band=self.band,
            geometry=self.geometry,
            shape=self.shape,
            months=[self.months[i] for i in keep],
            values=self.values[keep],
        )

    def month_numbers(self) -> np.ndarray:
        return np.array([m for _, m in self.months], dtype=np.int64)

    def pixel_series(self, pixel_id: int) -> "PixelSeries":
        column = self.values[:, pixel_id]
        observations = [
            Observation(float(v)) if math.isfinite(v) else Observation.missing() for v in column
        ]
        return PixelSeries(pixel_id, self.band, list(self.months), observations)


def stack_from_composites(
    composites: Sequence[tuple[int, int, SceneGrid]],
) -> CompositeStack:
    """Stack (year, month, scene) records, validating order and geometry."""
    if not composites:
        raise UnsortedInputError("cannot stack zero composites")
    months = [(y, m) for y, m, _ in composites]
    _check_month_order(months, "composites")
    first = composites[0][2]
    rows = []
    for y, m, scene in composites:
        if scene.shape != first.shape or scene.geometry != first.geometry:
            raise GeometryMismatchError(
                f"composite {y}-{m:02d} does not share grid with the first record"
            )
        if scene.band != first.band:
            raise GeometryMismatchError(
                f"composite {y}-{m:02d} band {scene.band!r} != {first.band!r}"
            )
        rows.append(scene.values.astype(np.float64).reshape(-1))
    return CompositeStack(
        band=first.band,
        geometry=first.geometry,
        shape=first.shape,
        months=months,
        values=np.stack(rows),
    )


@dataclass
class PixelSeries:
    """One pixel's monthly observations over a contiguous period."""

    pixel_id: int
    band: str
    months: list[tuple[int, int]]
    observations: list[Observation]

    def __post_init__(self) -> None:
        if len(self.months) != len(self.observations):
            raise GeometryMismatchError(
                f"pixel {self.pixel_id}: {len(self.months)} months vs "
                f"{len(self.observations)} observations"
            )
        _check_month_order(self.months, f"pixel {self.pixel_id}")

    @property
    def start_month(self) -> int:
        return self.months[0][1]

    def n_valid(self) -> int:
        return sum(1 for o in self.observations if o.valid)


def extract_series(
    composites: Sequence[tuple[int, int, SceneGrid]],
    pixels: Iterable[int] | None = None,
) -> list[PixelSeries]:
    """Per-pixel series from sorted monthly composites.

    ``pixels`` selects flat pixel ids (default: every pixel). Months missing
    from the input must be supplied as all-invalid grids by the caller so
    the period stays contiguous; within a grid, gaps are NaN.
    """
    stack = stack_from_composites(composites)
    ids = range(stack.n_pixels) if pixels is None else pixels
    return [stack.pixel_series(int(p)) for p in ids]


SERIES_HEADER = ["pixel_id", "band", "year", "month", "value", "valid"]


def write_series_csv(path: Path | str, series: Iterable[PixelSeries]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for s in series:
            for (year, month), o in zip(s.months, s.observations):
                writer.writerow(
                    [
                        s.pixel_id,
                        s.band,
                        year,
                        month,
                        format_float(o.value),
                        "true" if o.valid else "false",
                    ]
                )
    return path


def read_series_csv(path: Path | str) -> list[PixelSeries]:
    """Inverse of write_series_csv; returns series grouped in file order."""
    path = Path(path)
    order: list[tuple[int, str]] = []
    months: dict[tuple[int, str], list[tuple[int, int]]] = {}
    obs: dict[tuple[int, str], list[Observation]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SERIES_HEADER:
            raise UnsortedInputError(f"{path}: unexpected header {header}")
        for row in reader:
            pixel_id, band = int(row[0]), row[1]
            key = (pixel_id, band)
            if key not in months:
                order.append(key)
                months[key] = []
                obs[key] = []
            months[key].append((int(row[2]), int(row[3])))
            value = float(row[4])
            valid = row[5] == "true"
            obs[key].append(Observation(value) if valid else Observation(value, valid=False))
    return [PixelSeries(pid, band, months[(pid, band)], obs[(pid, band)]) for pid, band in order]
