"""Run configuration and the five pipeline stages behind the CLI.

Stages communicate through files in a workspace directory:

    fine/<band>/<year>-<mm>.grid      monthly fine composites (input)
    coarse/<band>/<year>-<mm>.grid    monthly coarse composites (input)
    truth/<band>/<year>-<mm>.grid     optional truth for skill scoring
    climatology/                      build-climatology output
    fusion/                           fit-fusion output
    filtered/filtered_<band>.csv      filter output
    evaluation/metrics.csv|.txt       evaluate output

Work is split over fixed-size pixel chunks; the chunk layout depends only
on the grid, never on the worker count, and chunk results are merged in
chunk order, so reruns are bit-identical no matter how many workers run.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .climatology import Climatology, build_climatology, load_climatology, save_climatology
from .errors import ConfigError, EmptyArchiveError, GeometryMismatchError
from .evaluation import (
    CI_Z,
    LoocvResult,
    MetricsReport,
    estimate_r,
    leave_one_out,
    metrics,
    render_metrics_table,
    write_metrics_csv,
)
from .filtering import FilteredGrid, FilterInputs, ObservationModel, filter_grid
from .fusion import FusionGrid, fit_fusion_grid, load_fusion_grid, save_fusion_grid
from .grids import GridGeometry, SceneGrid, collocation_index, read_grid
from .series import CompositeStack, format_float, stack_from_composites
from .synthetic import SyntheticConfig, generate_site, write_site

log = logging.getLogger(__name__)

PIXEL_CHUNK = 4096

_MONTH_FILE = re.compile(r"^(\d{4})-(\d{2})$")


@dataclass
class SiteWindow:
    """Named rectangular pixel window, in grid (column, row) coordinates."""

    name: str
    x0: int
    y0: int
    width: int
    height: int

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"site {self.name!r}: window must be at least 1x1")
        if self.x0 < 0 or self.y0 < 0:
            raise ConfigError(f"site {self.name!r}: window origin must be non-negative")
        if not self.name:
            raise ConfigError("site windows need a name")

    def pixel_ids(self, grid_shape: tuple[int, int]) -> np.ndarray:
        grid_h, grid_w = grid_shape
        if self.x0 + self.width > grid_w or self.y0 + self.height > grid_h:
            raise ConfigError(
                f"site {self.name!r}: window {self.width}x{self.height}+{self.x0}+{self.y0} "
                f"exceeds the {grid_w}x{grid_h} grid"
            )
        rows = np.arange(self.y0, self.y0 + self.height)
        cols = np.arange(self.x0, self.x0 + self.width)
        return (rows[:, None] * grid_w + cols[None, :]).reshape(-1)


_RUN_KEYS = {
    "workspace", "out", "bands", "archive_start", "archive_end", "target_year",
    "h", "r", "r_factor", "quality_codes", "sites", "threads", "seed", "synth",
}


@dataclass
class RunConfig:
    """Parsed, validated run configuration (one JSON file per run)."""

    workspace: Path
    out_root: Path
    bands: list[str]
    archive_start: int = 1999
    archive_end: int = 2009
    target_year: int = 2010
    h: float = 1.0
    r: float | dict[str, float] | None = None
    r_factor: float = 0.25
    quality_codes: list[int] = field(default_factory=lambda: [0])
    sites: list[SiteWindow] = field(default_factory=list)
    threads: int = 1
    seed: int = 0
    synth: SyntheticConfig | None = None

    def validate(self) -> None:
        if not self.bands:
            raise ConfigError("config needs at least one band")
        if len(set(self.bands)) != len(self.bands):
            raise ConfigError(f"duplicate band names: {self.bands}")
        if self.archive_start > self.archive_end:
            raise ConfigError(
                f"archive window [{self.archive_start}, {self.archive_end}] is empty"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.h == 0.0:
            raise ConfigError("observation factor h must be nonzero")
        if self.r_factor <= 0.0:
            raise ConfigError(f"r_factor must be positive, got {self.r_factor}")
        if isinstance(self.r, (int, float)) and self.r <= 0.0:
            raise ConfigError(f"r must be positive when given, got {self.r}")
        if isinstance(self.r, dict):
            for band, value in self.r.items():
                if value <= 0.0:
                    raise ConfigError(f"r[{band!r}] must be positive, got {value}")
        for site in self.sites:
            site.validate()
        names = [s.name for s in self.sites]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate site names: {names}")

    def r_for_band(self, band: str) -> float | None:
        if self.r is None:
            return None
        if isinstance(self.r, dict):
            value = self.r.get(band)
            return float(value) if value is not None else None
        return float(self.r)

    @classmethod
    def from_json(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        unknown = set(raw) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        if "workspace" not in raw:
            raise ConfigError(f"{path}: 'workspace' is required")
        base = path.parent
        workspace = (base / raw["workspace"]).resolve()
        out_root = (base / raw["out"]).resolve() if "out" in raw else workspace
        sites = []
        for s in raw.get("sites", []):
            extra = set(s) - {"name", "x0", "y0", "width", "height"}
            if extra:
                raise ConfigError(f"site {s.get('name')!r}: unknown keys {sorted(extra)}")
            try:
                sites.append(
                    SiteWindow(str(s["name"]), int(s["x0"]), int(s["y0"]),
                               int(s["width"]), int(s["height"]))
                )
            except KeyError as exc:
                raise ConfigError(f"site definition missing {exc}") from None
        synth = None
        if raw.get("synth") is not None:
            synth = SyntheticConfig.from_dict(raw["synth"])
        r = raw.get("r")
        if isinstance(r, dict):
            r = {str(k): float(v) for k, v in r.items()}
        elif r is not None:
            r = float(r)
        cfg = cls(
            workspace=workspace,
            out_root=out_root,
            bands=[str(b) for b in raw.get("bands", ["band3", "band4"])],
            archive_start=int(raw.get("archive_start", 1999)),
            archive_end=int(raw.get("archive_end", 2009)),
            target_year=int(raw.get("target_year", 2010)),
            h=float(raw.get("h", 1.0)),
            r=r,
            r_factor=float(raw.get("r_factor", 0.25)),
            quality_codes=[int(c) for c in raw.get("quality_codes", [0])],
            sites=sites,
            threads=int(raw.get("threads", 1)),
            seed=int(raw.get("seed", 0)),
            synth=synth,
        )
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Workspace I/O


def discover_composites(directory: Path, band: str) -> list[tuple[int, int, Path]]:
    """Sorted (year, month, path) for every grid under ``directory/band``."""
    band_dir = directory / band
    found = []
    if band_dir.is_dir():
        for grid_path in band_dir.glob("*.grid"):
            match = _MONTH_FILE.match(grid_path.stem)
            if match:
                found.append((int(match.group(1)), int(match.group(2)), grid_path))
    found.sort(key=lambda t: (t[0], t[1]))
    return found


def load_stack(
    directory: Path,
    band: str,
    years: tuple[int, int],
    fill_months: bool = False,
) -> CompositeStack:
    """Load every composite for ``band`` whose year lies in ``years``.

    With ``fill_months`` the result is padded to complete calendar coverage
    of the window using all-invalid planes (needed for target-year series,
    where a missing file is a gap, not an error).
    """
    start, end = years
    records = [
        (y, m, p) for y, m, p in discover_composites(directory, band) if start <= y <= end
    ]
    if not records:
        raise EmptyArchiveError(
            f"no {band!r} composites under {directory} for years {start}-{end}"
        )
    scenes = [(y, m, read_grid(p)) for y, m, p in records]
    if fill_months:
        have = {(y, m) for y, m, _ in records}
        template = scenes[0][2]
        blank = np.full(template.shape, np.nan, dtype=np.float32)
        for year in range(start, end + 1):
            for month in range(1, 13):
                if (year, month) not in have:
                    scenes.append(
                        (year, month, SceneGrid(band, blank.copy(), template.geometry))
                    )
        scenes.sort(key=lambda t: (t[0], t[1]))
    return stack_from_composites(scenes)


def coarse_at_fine_stack(
    coarse: CompositeStack, fine_geometry: GridGeometry, fine_shape: tuple[int, int]
) -> CompositeStack:
    """Resample a coarse stack onto the fine grid by cell containment."""
    rows, cols, inside = collocation_index(
        coarse.geometry, coarse.shape, fine_geometry, fine_shape
    )
    flat = (rows * coarse.shape[1] + cols).reshape(-1)
    inside_flat = inside.reshape(-1)
    values = coarse.values[:, flat]
    values[:, ~inside_flat] = np.nan
    return CompositeStack(
        band=coarse.band,
        geometry=fine_geometry,
        shape=fine_shape,
        months=list(coarse.months),
        values=values,
    )


def resolve_r(cfg: RunConfig, band: str, archive: CompositeStack, clim: Climatology) -> float:
    """Explicit per-band R if configured, else estimated from the archive."""
    explicit = cfg.r_for_band(band)
    if explicit is not None:
        return explicit
    r = estimate_r(archive, clim, cfg.r_factor)
    log.info("band %s: estimated observation variance R = %.6g (factor %.3g)",
             band, r, cfg.r_factor)
    return r


# ---------------------------------------------------------------------------
# Deterministic chunked parallelism


def _pixel_chunks(lanes: np.ndarray) -> list[np.ndarray]:
    return [lanes[i : i + PIXEL_CHUNK] for i in range(0, lanes.size, PIXEL_CHUNK)]


def _map_chunks(fn: Callable, payloads: list, threads: int) -> list:
    if threads <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, payloads))


def _slice_inputs(inputs: FilterInputs, lanes: np.ndarray) -> FilterInputs:
    return FilterInputs(
        clim_mean=inputs.clim_mean[:, lanes],
        clim_var=inputs.clim_var[:, lanes],
        fusion_mean=inputs.fusion_mean[:, lanes],
        fusion_var=inputs.fusion_var[:, lanes],
        has_fusion=inputs.has_fusion[:, lanes],
        obs_value=inputs.obs_value[:, lanes],
        obs_valid=inputs.obs_valid[:, lanes],
    )


def _filter_chunk(payload: tuple[FilterInputs, ObservationModel]) -> FilteredGrid:
    return filter_grid(*payload)


def _loocv_chunk(
    payload: tuple[FilterInputs, ObservationModel, np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    inputs, obs, global_ids = payload
    result = leave_one_out(inputs, obs)
    return (
        global_ids[result.pixel_ids],
        result.steps,
        result.predictions,
        result.truths,
        result.n_skipped_pixels,
    )


def filter_grid_chunked(
    inputs: FilterInputs, obs: ObservationModel, threads: int
) -> FilteredGrid:
    """filter_grid over fixed pixel chunks; identical output for any thread count."""
    lanes = np.arange(inputs.n_pixels)
    chunks = _pixel_chunks(lanes)
    payloads = [(_slice_inputs(inputs, c), obs) for c in chunks]
    parts = _map_chunks(_filter_chunk, payloads, threads)
    return FilteredGrid(
        predicted_mean=np.hstack([p.predicted_mean for p in parts]),
        predicted_var=np.hstack([p.predicted_var for p in parts]),
        posterior_mean=np.hstack([p.posterior_mean for p in parts]),
        posterior_var=np.hstack([p.posterior_var for p in parts]),
        gain=np.hstack([p.gain for p in parts]),
        observed=np.hstack([p.observed for p in parts]),
    )


def leave_one_out_chunked(
    inputs: FilterInputs, obs: ObservationModel, lanes: np.ndarray, threads: int
) -> LoocvResult:
    """leave_one_out over fixed chunks of ``lanes``; merge preserves order."""
    chunks = _pixel_chunks(np.asarray(lanes, dtype=np.int64))
    payloads = [(_slice_inputs(inputs, c), obs, c) for c in chunks]
    parts = _map_chunks(_loocv_chunk, payloads, threads)
    if not parts:
        return LoocvResult(np.empty(0, np.int64), np.empty(0, np.int64),
                           np.empty(0), np.empty(0), 0)
    return LoocvResult(
        pixel_ids=np.concatenate([p[0] for p in parts]),
        steps=np.concatenate([p[1] for p in parts]),
        predictions=np.concatenate([p[2] for p in parts]),
        truths=np.concatenate([p[3] for p in parts]),
        n_skipped_pixels=int(sum(p[4] for p in parts)),
    )


# ---------------------------------------------------------------------------
# Stages


def stage_simulate(cfg: RunConfig, seed: int | None = None) -> Path:
    synth = cfg.synth if cfg.synth is not None else SyntheticConfig()
    if seed is not None:
        synth.seed = seed
    synth.validate()
    site = generate_site(synth)
    return write_site(site, cfg.workspace)


def stage_build_climatology(cfg: RunConfig, bands: Sequence[str] | None = None) -> dict:
    out = {}
    window = (cfg.archive_start, cfg.archive_end)
    for band in bands or cfg.bands:
        archive = load_stack(cfg.workspace / "fine", band, window)
        clim = build_climatology(archive, period=window)
        save_climatology(clim, cfg.out_root / "climatology")
        log.info("band %s: climatology built from %d records (%d total samples)",
                 band, len(archive.months), int(clim.count.sum()))
        out[band] = clim
    return out


def stage_fit_fusion(cfg: RunConfig, bands: Sequence[str] | None = None) -> dict:
    out = {}
    window = (cfg.archive_start, cfg.archive_end)
    for band in bands or cfg.bands:
        fine = load_stack(cfg.workspace / "fine", band, window)
        coarse = load_stack(cfg.workspace / "coarse", band, window)
        resampled = coarse_at_fine_stack(coarse, fine.geometry, fine.shape)
        shared = sorted(set(fine.months) & set(resampled.months))
        if not shared:
            raise EmptyArchiveError(
                f"band {band!r}: fine and coarse archives share no (year, month)"
            )
        fine_idx = [fine.months.index(m) for m in shared]
        coarse_idx = [resampled.months.index(m) for m in shared]
        grid = fit_fusion_grid(
            coarse=resampled.values[coarse_idx],
            fine=fine.values[fine_idx],
            band=band,
            geometry=fine.geometry,
            shape=fine.shape,
        )
        frac = grid.degenerate_fraction()
        if frac > 0.0:
            log.warning("band %s: %.1f%% of pixels have degenerate fusion fits",
                        band, 100.0 * frac)
        save_fusion_grid(grid, cfg.out_root / "fusion")
        log.info("band %s: fusion fitted on %d shared months", band, len(shared))
        out[band] = grid
    return out


def assemble_filter_inputs(
    cfg: RunConfig, band: str, clim: Climatology, fgrid: FusionGrid
) -> tuple[FilterInputs, list[tuple[int, int]]]:
    """Expand per-month beliefs and priors into (12, n_pixels) arrays."""
    target = (cfg.target_year, cfg.target_year)
    fine = load_stack(cfg.workspace / "fine", band, target, fill_months=True)
    if fine.shape != clim.shape:
        raise GeometryMismatchError(
            f"band {band}: target grid {fine.shape} != climatology grid {clim.shape}"
        )
    try:
        coarse = load_stack(cfg.workspace / "coarse", band, target, fill_months=True)
        coarse_fine = coarse_at_fine_stack(coarse, fine.geometry, fine.shape).values
    except EmptyArchiveError:
        log.warning("band %s: no coarse composites for %d; filtering without fusion priors",
                    band, cfg.target_year)
        coarse_fine = np.full(fine.values.shape, np.nan)
    n_steps = len(fine.months)
    n_px = fine.n_pixels
    clim_mean = np.empty((n_steps, n_px))
    clim_var = np.empty((n_steps, n_px))
    fusion_mean = np.empty((n_steps, n_px))
    fusion_var = np.empty((n_steps, n_px))
    has_fusion = np.zeros((n_steps, n_px), dtype=bool)
    for k, (_, month) in enumerate(fine.months):
        clim_mean[k], clim_var[k] = clim.belief_arrays(month)
        fusion_mean[k], fusion_var[k], has_fusion[k] = fgrid.prior_arrays(coarse_fine[k])
    obs_valid = np.isfinite(fine.values)
    inputs = FilterInputs(
        clim_mean=clim_mean,
        clim_var=clim_var,
        fusion_mean=fusion_mean,
        fusion_var=fusion_var,
        has_fusion=has_fusion,
        obs_value=fine.values,
        obs_valid=obs_valid,
    )
    return inputs, list(fine.months)


def _load_band_artifacts(cfg: RunConfig, band: str) -> tuple[Climatology, FusionGrid]:
    clim = load_climatology(cfg.out_root / "climatology", band)
    fgrid = load_fusion_grid(cfg.out_root / "fusion", band)
    return clim, fgrid


def _observation_model(cfg: RunConfig, band: str, clim: Climatology) -> ObservationModel:
    explicit = cfg.r_for_band(band)
    if explicit is not None:
        return ObservationModel(h=cfg.h, r=explicit)
    window = (cfg.archive_start, cfg.archive_end)
    archive = load_stack(cfg.workspace / "fine", band, window)
    return ObservationModel(h=cfg.h, r=resolve_r(cfg, band, archive, clim))


FILTERED_HEADER = [
    "pixel_id", "band", "year", "month",
    "estimate", "variance", "ci_low", "ci_high", "observed",
]


def write_filtered_csv(
    path: Path,
    band: str,
    months: list[tuple[int, int]],
    result: FilteredGrid,
) -> Path:
    """Row-per-(pixel, month) CSV with 95% intervals, pixel-major order."""
    import csv as _csv

    path.parent.mkdir(parents=True, exist_ok=True)
    n_steps, n_px = result.posterior_mean.shape
    sd = np.sqrt(result.posterior_var)
    ci_low = result.posterior_mean - CI_Z * sd
    ci_high = result.posterior_mean + CI_Z * sd
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(FILTERED_HEADER)
        for pixel in range(n_px):
            for k, (year, month) in enumerate(months):
                writer.writerow(
                    [
                        pixel,
                        band,
                        year,
                        month,
                        format_float(result.posterior_mean[k, pixel]),
                        format_float(result.posterior_var[k, pixel]),
                        format_float(ci_low[k, pixel]),
                        format_float(ci_high[k, pixel]),
                        "true" if result.observed[k, pixel] else "false",
                    ]
                )
    return path


@dataclass
class FilteredRow:
    pixel_id: int
    band: str
    year: int
    month: int
    estimate: float
    variance: float
    ci_low: float
    ci_high: float
    observed: bool


def read_filtered_csv(path: Path | str) -> list[FilteredRow]:
    import csv as _csv

    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header != FILTERED_HEADER:
            raise ConfigError(f"{path}: unexpected filtered header {header}")
        for r in reader:
            rows.append(
                FilteredRow(
                    pixel_id=int(r[0]), band=r[1], year=int(r[2]), month=int(r[3]),
                    estimate=float(r[4]), variance=float(r[5]),
                    ci_low=float(r[6]), ci_high=float(r[7]), observed=r[8] == "true",
                )
            )
    return rows


def _skill_rmse(estimates: np.ndarray, truth: np.ndarray, slots: np.ndarray) -> tuple[float, int]:
    err = estimates[slots] - truth[slots]
    return float(np.sqrt((err * err).mean())), int(slots.sum())


def stage_filter(cfg: RunConfig, bands: Sequence[str] | None = None, threads: int | None = None) -> dict:
    threads = cfg.threads if threads is None else threads
    out = {}
    for band in bands or cfg.bands:
        clim, fgrid = _load_band_artifacts(cfg, band)
        obs = _observation_model(cfg, band, clim)
        inputs, months = assemble_filter_inputs(cfg, band, clim, fgrid)
        result = filter_grid_chunked(inputs, obs, threads)
        n_out = int(((result.posterior_mean < 0.0) | (result.posterior_mean > 1.0)).sum())
        if n_out:
            log.warning("band %s: %d estimates fall outside [0, 1]; left unclamped",
                        band, n_out)
        path = write_filtered_csv(
            cfg.out_root / "filtered" / f"filtered_{band}.csv", band, months, result
        )
        _write_skill(cfg, band, months, inputs, result)
        log.info("band %s: filtered %d pixels x %d months -> %s",
                 band, inputs.n_pixels, inputs.n_steps, path)
        out[band] = result
    return out


SKILL_HEADER = ["band", "method", "rmse", "n_slots"]


def _write_skill(
    cfg: RunConfig,
    band: str,
    months: list[tuple[int, int]],
    inputs: FilterInputs,
    result: FilteredGrid,
) -> Path | None:
    """Against-truth RMSE for filtered, climatology-only and fusion-only
    estimates, written only when truth grids exist (synthetic runs)."""
    import csv as _csv

    truth_dir = cfg.workspace / "truth"
    if not discover_composites(truth_dir, band):
        return None
    truth = load_stack(truth_dir, band, (cfg.target_year, cfg.target_year), fill_months=True)
    if truth.values.shape != result.posterior_mean.shape:
        raise GeometryMismatchError(f"band {band}: truth grids do not match the filtered grid")
    slots = np.isfinite(truth.values)
    filtered_rmse, n_all = _skill_rmse(result.posterior_mean, truth.values, slots)
    clim_rmse, _ = _skill_rmse(inputs.clim_mean, truth.values, slots)
    fusion_slots = slots & inputs.has_fusion
    if fusion_slots.any():
        fusion_rmse, n_fusion = _skill_rmse(inputs.fusion_mean, truth.values, fusion_slots)
    else:
        fusion_rmse, n_fusion = float("nan"), 0
    path = cfg.out_root / "filtered" / f"skill_{band}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(SKILL_HEADER)
        writer.writerow([band, "filtered", format_float(filtered_rmse), n_all])
        writer.writerow([band, "climatology_only", format_float(clim_rmse), n_all])
        writer.writerow([band, "fusion_only", format_float(fusion_rmse), n_fusion])
    log.info(
        "band %s skill vs truth: filtered %.5f | climatology-only %.5f | fusion-only %.5f",
        band, filtered_rmse, clim_rmse, fusion_rmse,
    )
    return path


def stage_evaluate(
    cfg: RunConfig, bands: Sequence[str] | None = None, threads: int | None = None
) -> MetricsReport:
    threads = cfg.threads if threads is None else threads
    report = MetricsReport()
    for band in bands or cfg.bands:
        clim, fgrid = _load_band_artifacts(cfg, band)
        obs = _observation_model(cfg, band, clim)
        inputs, _ = assemble_filter_inputs(cfg, band, clim, fgrid)
        sites = cfg.sites or [
            SiteWindow("all", 0, 0, clim.shape[1], clim.shape[0])
        ]
        for site in sites:
            lanes = site.pixel_ids(clim.shape)
            folds = leave_one_out_chunked(inputs, obs, lanes, threads)
            if folds.n_folds == 0:
                log.warning("site %s band %s: nothing to cross-validate", site.name, band)
                continue
            row = metrics(
                folds.predictions, folds.truths, folds.pixel_ids,
                site=site.name, band=band,
            )
            report.add(row)
            log.info(
                "site %s band %s: ME %.5f RMSE %.5f MAE %.5f mean-rho %.3f (%d folds)",
                site.name, band, row.me, row.rmse, row.mae, row.mean_rho, row.n_heldout,
            )
    out_dir = cfg.out_root / "evaluation"
    write_metrics_csv(report, out_dir / "metrics.csv")
    (out_dir / "metrics_table.txt").write_text(render_metrics_table(report), encoding="utf-8")
    return report
