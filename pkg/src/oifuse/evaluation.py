"""Cross-validated skill scores and observation-noise estimation.

Validation is leave-one-out over valid observations: each one is masked in
turn, the filter is rerun on the modified series, and the posterior mean at
the masked step is paired with the held-out value. Climatology and fusion
models are deliberately not refit per fold; they are treated as fixed
reference fields, so the score isolates the filter's blending skill.

Scores per site and band: mean error, RMSE, MAE, and the mean of per-pixel
Pearson correlations. Pixels contribute to the correlation average only
with at least three pairs and nonzero variance on both sides; when no
pixel qualifies the average is reported as 0.0 with a zero pixel count,
never NaN. RMSE >= MAE >= |ME| holds for every report by construction.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .climatology import Climatology
from .errors import EmptyInputError
from .filtering import R_FLOOR, FilterInputs, ObservationModel, filter_grid
from .series import CompositeStack, format_float

log = logging.getLogger(__name__)

MIN_OBS_PER_PIXEL = 2
MIN_PAIRS_FOR_RHO = 3

CI_Z = 1.96  # two-sided 95% interval half-width in standard deviations


@dataclass
class LoocvResult:
    """Held-out predictions in (pixel, step) order."""

    pixel_ids: np.ndarray
    steps: np.ndarray
    predictions: np.ndarray
    truths: np.ndarray
    n_skipped_pixels: int

    @property
    def n_folds(self) -> int:
        return self.predictions.size


def leave_one_out(
    inputs: FilterInputs,
    obs: ObservationModel,
    pixel_ids: np.ndarray | None = None,
) -> LoocvResult:
    """Mask each valid observation in turn and predict it from the rest.

    ``pixel_ids`` optionally restricts scoring to a subset of lanes (flat
    ids into the input arrays). Pixels with fewer than two valid
    observations cannot be cross-validated and are skipped with a logged
    count. Folds come back sorted by (pixel, step).
    """
    if pixel_ids is None:
        lanes = np.arange(inputs.n_pixels)
    else:
        lanes = np.asarray(pixel_ids, dtype=np.int64)
    valid_counts = inputs.obs_valid[:, lanes].sum(axis=0)
    eligible = valid_counts >= MIN_OBS_PER_PIXEL
    n_skipped = int((~eligible).sum())
    if n_skipped:
        log.info("leave-one-out: skipped %d pixel(s) with < %d valid observations",
                 n_skipped, MIN_OBS_PER_PIXEL)
    keep = lanes[eligible]
    px_chunks, step_chunks, pred_chunks, truth_chunks = [], [], [], []
    for k in range(inputs.n_steps):
        held_out = inputs.obs_valid[k, keep]
        if not held_out.any():
            continue
        result = filter_grid(inputs.with_step_masked(k), obs)
        px = keep[held_out]
        px_chunks.append(px)
        step_chunks.append(np.full(px.size, k, dtype=np.int64))
        pred_chunks.append(result.posterior_mean[k, px])
        truth_chunks.append(inputs.obs_value[k, px])
    if not px_chunks:
        return LoocvResult(
            np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
            np.empty(0), np.empty(0), n_skipped,
        )
    px = np.concatenate(px_chunks)
    steps = np.concatenate(step_chunks)
    preds = np.concatenate(pred_chunks)
    truths = np.concatenate(truth_chunks)
    order = np.lexsort((steps, px))
    return LoocvResult(px[order], steps[order], preds[order], truths[order], n_skipped)


@dataclass
class MetricsRow:
    """One (site, band) line of a report."""

    site: str
    band: str
    me: float
    rmse: float
    mae: float
    mean_rho: float
    n_heldout: int
    n_rho_pixels: int = 0
    rho_by_pixel: dict[int, float] = field(default_factory=dict)


def metrics(
    predictions: np.ndarray,
    truths: np.ndarray,
    pixel_ids: np.ndarray | None = None,
    site: str = "",
    band: str = "",
) -> MetricsRow:
    """Error statistics over prediction/truth pairs.

    ``pixel_ids`` groups pairs for the per-pixel correlation average; without
    it every pair is treated as one anonymous pixel. Raises EmptyInputError
    for an empty pair set.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if predictions.size == 0:
        raise EmptyInputError("metrics need at least one (prediction, truth) pair")
    if predictions.shape != truths.shape:
        raise EmptyInputError(
            f"predictions {predictions.shape} and truths {truths.shape} must align"
        )
    err = predictions - truths
    me = float(err.mean())
    rmse = float(np.sqrt((err * err).mean()))
    mae = float(np.abs(err).mean())
    rho_by_pixel: dict[int, float] = {}
    if pixel_ids is None:
        groups = [(0, np.arange(predictions.size))]
    else:
        pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
        uniques, inverse = np.unique(pixel_ids, return_inverse=True)
        groups = [(int(u), np.nonzero(inverse == i)[0]) for i, u in enumerate(uniques)]
    for pid, idx in groups:
        if idx.size < MIN_PAIRS_FOR_RHO:
            continue
        p = predictions[idx]
        t = truths[idx]
        dp = p - p.mean()
        dt = t - t.mean()
        denom_sq = float((dp * dp).sum()) * float((dt * dt).sum())
        if denom_sq <= 0.0:
            continue  # constant series carry no correlation information
        rho_by_pixel[pid] = float((dp * dt).sum() / np.sqrt(denom_sq))
    if rho_by_pixel:
        mean_rho = float(np.mean(list(rho_by_pixel.values())))
    else:
        mean_rho = 0.0
    return MetricsRow(
        site=site,
        band=band,
        me=me,
        rmse=rmse,
        mae=mae,
        mean_rho=mean_rho,
        n_heldout=int(predictions.size),
        n_rho_pixels=len(rho_by_pixel),
        rho_by_pixel=rho_by_pixel,
    )


@dataclass
class MetricsReport:
    """Ordered collection of per-(site, band) rows."""

    rows: list[MetricsRow] = field(default_factory=list)

    def add(self, row: MetricsRow) -> None:
        self.rows.append(row)

    def bands(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.band not in seen:
                seen.append(row.band)
        return seen


METRICS_HEADER = ["site", "band", "me", "rmse", "mae", "mean_rho", "n_heldout"]


def write_metrics_csv(report: MetricsReport, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in report.rows:
            writer.writerow(
                [
                    row.site,
                    row.band,
                    format_float(row.me),
                    format_float(row.rmse),
                    format_float(row.mae),
                    format_float(row.mean_rho),
                    row.n_heldout,
                ]
            )
    return path


def read_metrics_csv(path: Path | str) -> MetricsReport:
    report = MetricsReport()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_HEADER:
            raise EmptyInputError(f"{path}: unexpected metrics header {header}")
        for row in reader:
            report.add(
                MetricsRow(
                    site=row[0], band=row[1],
                    me=float(row[2]), rmse=float(row[3]), mae=float(row[4]),
                    mean_rho=float(row[5]), n_heldout=int(row[6]),
                )
            )
    return report


def band_title(band: str) -> str:
    """Display form of a band id: 'band3' -> 'Band 3', anything else as-is."""
    match = re.fullmatch(r"band[_\s-]?(\w+)", band, flags=re.IGNORECASE)
    if match:
        return f"Band {match.group(1)}"
    return band


def render_metrics_table(report: MetricsReport) -> str:
    """Fixed-width text table: one block per band, one row per site.

    Columns are Site, ME, RMSE, MAE and Mean rho, aligned for reading
    alongside the CSV (which keeps full precision).
    """
    lines: list[str] = []
    site_width = max([len(r.site) for r in report.rows] + [len("Site")])
    header = (
        f"{'Site':<{site_width}}  {'ME':>8}  {'RMSE':>8}  {'MAE':>8}  {'Mean rho':>9}"
    )
    for band in report.bands():
        lines.append(band_title(band))
        lines.append(header)
        for row in report.rows:
            if row.band != band:
                continue
            lines.append(
                f"{row.site:<{site_width}}  "
                f"{row.me:>8.4f}  {row.rmse:>8.4f}  {row.mae:>8.4f}  {row.mean_rho:>9.2f}"
            )
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def estimate_r(
    archive: CompositeStack, clim: Climatology, factor: float = 0.25
) -> float:
    """Observation-noise variance from archive scatter about the climatology.

    The residual of every valid archive value against its cell's monthly
    median is collected; R is ``factor`` times the population variance of
    those residuals, floored at R_FLOOR. An archive that replays the
    climatology exactly therefore lands on the floor.
    """
    if factor <= 0.0:
        raise EmptyInputError(f"scaling factor must be positive, got {factor}")
    month_numbers = archive.month_numbers()
    residual_rows = []
    for i in range(len(archive.months)):
        m = month_numbers[i] - 1
        vals = archive.values[i]
        usable = np.isfinite(vals) & (clim.count[m] > 0)
        if usable.any():
            residual_rows.append(vals[usable] - clim.median[m, usable])
    if not residual_rows:
        raise EmptyInputError(
            f"band {archive.band!r}: no usable (value, climatology) residuals"
        )
    residuals = np.sort(np.concatenate(residual_rows))
    mean = residuals.sum() / residuals.size
    dev = residuals - mean
    variance = float((dev * dev).sum() / residuals.size)
    return max(factor * variance, R_FLOOR)
