import json
import math

import numpy as np
import pytest

import oifuse.pipeline as pipeline
from oifuse.errors import ConfigError, EmptyArchiveError
from oifuse.evaluation import read_metrics_csv
from oifuse.filtering import FilterInputs, ObservationModel, filter_grid
from oifuse.grids import GridGeometry, SceneGrid, collocate, read_grid, write_grid
from oifuse.pipeline import (
    RunConfig,
    SiteWindow,
    coarse_at_fine_stack,
    discover_composites,
    filter_grid_chunked,
    leave_one_out_chunked,
    load_stack,
    read_filtered_csv,
    resolve_r,
    stage_filter,
    stage_simulate,
)
from oifuse.series import CompositeStack, read_series_csv

from helpers import write_config

FINE = GridGeometry(0.0, 0.0, 1.0, 1.0)


def parse_config(tmp_path, **kw):
    path = write_config(tmp_path, tmp_path / "ws", tmp_path / "out", **kw)
    return RunConfig.from_json(path)


class TestRunConfig:
    def test_parses_a_full_config(self, tmp_path):
        cfg = parse_config(
            tmp_path,
            bands=["band3"],
            r={"band3": 1e-4},
            sites=[{"name": "n", "x0": 0, "y0": 0, "width": 4, "height": 4}],
            threads=3,
        )
        assert cfg.bands == ["band3"]
        assert cfg.r_for_band("band3") == 1e-4
        assert cfg.r_for_band("band4") is None
        assert cfg.sites[0].name == "n"
        assert cfg.threads == 3

    def test_scalar_r(self, tmp_path):
        cfg = parse_config(tmp_path, r=2e-4)
        assert cfg.r_for_band("band3") == 2e-4
        assert cfg.r_for_band("band4") == 2e-4

    def test_r_defaults_to_estimation(self, tmp_path):
        assert parse_config(tmp_path).r_for_band("band3") is None

    def test_paths_resolve_relative_to_the_config_file(self, tmp_path):
        nested = tmp_path / "configs"
        nested.mkdir()
        path = write_config(nested, "../ws", "../out")
        cfg = RunConfig.from_json(path)
        assert cfg.workspace == (tmp_path / "ws").resolve()
        assert cfg.out_root == (tmp_path / "out").resolve()

    def test_missing_file_is_a_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_json(tmp_path / "nope.json")

    def test_invalid_json_is_a_config_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            RunConfig.from_json(path)

    def test_non_object_top_level_rejected(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            RunConfig.from_json(path)

    def test_unknown_keys_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path, bandz=["band3"])

    def test_unknown_site_keys_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(
                tmp_path,
                sites=[{"name": "n", "x0": 0, "y0": 0, "width": 4, "height": 4, "rot": 1}],
            )

    def test_missing_workspace_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bands": ["band3"]}))
        with pytest.raises(ConfigError):
            RunConfig.from_json(path)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"bands": []},
            {"bands": ["b", "b"]},
            {"archive_start": 2005, "archive_end": 2001},
            {"threads": 0},
            {"h": 0.0},
            {"r": -1.0},
            {"r": {"band3": 0.0}},
            {"r_factor": 0.0},
            {"sites": [{"name": "", "x0": 0, "y0": 0, "width": 1, "height": 1}]},
            {"sites": [{"name": "n", "x0": -1, "y0": 0, "width": 1, "height": 1}]},
            {
                "sites": [
                    {"name": "n", "x0": 0, "y0": 0, "width": 1, "height": 1},
                    {"name": "n", "x0": 1, "y0": 0, "width": 1, "height": 1},
                ]
            },
        ],
    )
    def test_validation_failures(self, tmp_path, overrides):
        with pytest.raises(ConfigError):
            parse_config(tmp_path, **overrides)


class TestSiteWindow:
    def test_pixel_ids_row_major(self):
        win = SiteWindow("w", x0=1, y0=1, width=2, height=2)
        assert win.pixel_ids((4, 4)).tolist() == [5, 6, 9, 10]

    def test_window_must_fit_the_grid(self):
        win = SiteWindow("w", x0=3, y0=0, width=2, height=1)
        with pytest.raises(ConfigError):
            win.pixel_ids((4, 4))


class TestWorkspaceIO:
    def _write_month(self, directory, band, year, month, value):
        scene = SceneGrid(band, np.full((2, 3), value, dtype=np.float32), FINE)
        write_grid(directory / band / f"{year}-{month:02d}", scene)

    def test_discovery_sorts_and_filters(self, tmp_path):
        self._write_month(tmp_path, "band3", 2001, 2, 0.2)
        self._write_month(tmp_path, "band3", 2000, 12, 0.1)
        (tmp_path / "band3" / "notes.txt").write_text("x")
        (tmp_path / "band3" / "junk.grid").write_bytes(b"")
        found = discover_composites(tmp_path, "band3")
        assert [(y, m) for y, m, _ in found] == [(2000, 12), (2001, 2)]

    def test_load_stack_filters_years(self, tmp_path):
        for year in (2000, 2001, 2002):
            self._write_month(tmp_path, "band3", year, 6, 0.1 * (year - 1999))
        stack = load_stack(tmp_path, "band3", (2000, 2001))
        assert stack.months == [(2000, 6), (2001, 6)]

    def test_load_stack_raises_when_empty(self, tmp_path):
        with pytest.raises(EmptyArchiveError):
            load_stack(tmp_path, "band3", (2000, 2001))

    def test_fill_months_pads_missing_files_with_gaps(self, tmp_path):
        self._write_month(tmp_path, "band3", 2004, 3, 0.25)
        self._write_month(tmp_path, "band3", 2004, 7, 0.4)
        stack = load_stack(tmp_path, "band3", (2004, 2004), fill_months=True)
        assert stack.months == [(2004, m) for m in range(1, 13)]
        assert np.isfinite(stack.values[2]).all()
        assert np.isfinite(stack.values[6]).all()
        others = [k for k in range(12) if k not in (2, 6)]
        assert np.isnan(stack.values[others]).all()


class TestCoarseResampling:
    def test_matches_per_scene_collocation(self):
        rng = np.random.default_rng(3)
        coarse_geom = GridGeometry(0.0, 0.0, 4.0, 4.0)
        values = rng.uniform(0.0, 1.0, size=(3, 6))
        values[1, 2] = np.nan
        stack = CompositeStack(
            band="band3",
            geometry=coarse_geom,
            shape=(2, 3),
            months=[(2004, m) for m in (1, 2, 3)],
            values=values,
        )
        out = coarse_at_fine_stack(stack, FINE, (8, 12))
        for k in range(3):
            scene = SceneGrid("band3", values[k].reshape(2, 3), coarse_geom)
            expected = collocate(scene, FINE, (8, 12)).values
            assert np.array_equal(out.values[k].reshape(8, 12), expected, equal_nan=True)


def _random_inputs(rng, n_steps=12, n_pixels=50):
    shape = (n_steps, n_pixels)
    return FilterInputs(
        clim_mean=rng.uniform(0.0, 1.0, shape),
        clim_var=rng.uniform(1e-6, 0.05, shape),
        fusion_mean=rng.uniform(0.0, 1.0, shape),
        fusion_var=rng.uniform(1e-6, 0.05, shape),
        has_fusion=rng.random(shape) > 0.2,
        obs_value=rng.uniform(0.0, 1.0, shape),
        obs_valid=rng.random(shape) > 0.3,
    )


class TestChunkedParallelism:
    def test_chunking_never_changes_filter_output(self, monkeypatch):
        rng = np.random.default_rng(23)
        inputs = _random_inputs(rng)
        obs = ObservationModel(h=1.0, r=3e-4)
        whole = filter_grid(inputs, obs)
        monkeypatch.setattr(pipeline, "PIXEL_CHUNK", 7)
        for threads in (1, 2):
            part = filter_grid_chunked(inputs, obs, threads)
            assert np.array_equal(part.posterior_mean, whole.posterior_mean)
            assert np.array_equal(part.posterior_var, whole.posterior_var)
            assert np.array_equal(part.predicted_mean, whole.predicted_mean)
            assert np.array_equal(part.gain, whole.gain)

    def test_chunking_never_changes_loocv_output(self, monkeypatch):
        from oifuse.evaluation import leave_one_out

        rng = np.random.default_rng(29)
        inputs = _random_inputs(rng)
        obs = ObservationModel(h=1.0, r=3e-4)
        lanes = np.arange(inputs.n_pixels)
        whole = leave_one_out(inputs, obs, lanes)
        monkeypatch.setattr(pipeline, "PIXEL_CHUNK", 11)
        for threads in (1, 2):
            part = leave_one_out_chunked(inputs, obs, lanes, threads)
            assert np.array_equal(part.pixel_ids, whole.pixel_ids)
            assert np.array_equal(part.steps, whole.steps)
            assert np.array_equal(part.predictions, whole.predictions)
            assert np.array_equal(part.truths, whole.truths)
            assert part.n_skipped_pixels == whole.n_skipped_pixels


class TestResolveR:
    def test_explicit_r_wins(self, tmp_path):
        cfg = parse_config(tmp_path, r=5e-4)
        assert resolve_r(cfg, "band3", None, None) == 5e-4


class TestProcessedWorkspace:
    """Checks against the shared end-to-end run (16x16, two bands)."""

    def test_artifact_layout(self, processed_workspace):
        out = processed_workspace["out"]
        for band in ("band3", "band4"):
            assert (out / "climatology" / f"{band}_climatology.json").is_file()
            grids = list((out / "climatology").glob(f"{band}_m*_median.grid"))
            assert len(grids) == 12
            assert (out / "fusion" / f"{band}_fusion.json").is_file()
            assert (out / "filtered" / f"filtered_{band}.csv").is_file()
            assert (out / "filtered" / f"skill_{band}.csv").is_file()
        assert (out / "evaluation" / "metrics.csv").is_file()
        assert (out / "evaluation" / "metrics_table.txt").is_file()

    def test_filtered_csv_shape_and_order(self, processed_workspace):
        rows = read_filtered_csv(
            processed_workspace["out"] / "filtered" / "filtered_band3.csv"
        )
        assert len(rows) == 16 * 16 * 12
        first = rows[:12]
        assert all(r.pixel_id == 0 for r in first)
        assert [r.month for r in first] == list(range(1, 13))
        assert all(r.year == 2004 for r in first)

    def test_confidence_intervals_consistent(self, processed_workspace):
        rows = read_filtered_csv(
            processed_workspace["out"] / "filtered" / "filtered_band3.csv"
        )
        for r in rows[::97]:
            sd = math.sqrt(r.variance)
            assert r.ci_low == r.estimate - 1.96 * sd
            assert r.ci_high == r.estimate + 1.96 * sd
            assert r.variance >= 0.0

    def test_observed_flags_match_the_series_csv(self, processed_workspace):
        rows = read_filtered_csv(
            processed_workspace["out"] / "filtered" / "filtered_band3.csv"
        )
        series = read_series_csv(
            processed_workspace["workspace"] / "series" / "band3_observations.csv"
        )
        by_pixel = {s.pixel_id: s for s in series}
        for r in rows[: 12 * 40]:
            obs = by_pixel[r.pixel_id].observations[r.month - 1]
            assert r.observed == obs.valid

    def test_gap_rows_carry_wider_intervals_overall(self, processed_workspace):
        # With an estimated R the ordering is not pointwise guaranteed
        # (months differ in climatology tightness), but the separation
        # between unobserved and observed rows is large in aggregate.
        rows = read_filtered_csv(
            processed_workspace["out"] / "filtered" / "filtered_band3.csv"
        )
        gap_vars = [r.variance for r in rows if not r.observed]
        obs_vars = [r.variance for r in rows if r.observed]
        assert gap_vars and obs_vars
        assert np.mean(gap_vars) > 2.0 * np.mean(obs_vars)
        by_key = {(r.pixel_id, r.month): r for r in rows}
        wins = total = 0
        for (pid, month), row in by_key.items():
            if row.observed or not (1 < month < 12):
                continue
            before = by_key[(pid, month - 1)]
            after = by_key[(pid, month + 1)]
            if before.observed and after.observed:
                total += 1
                wins += row.variance > before.variance and row.variance > after.variance
        assert total > 100
        assert wins / total > 0.6

    def test_skill_table_lists_all_three_methods(self, processed_workspace):
        text = (processed_workspace["out"] / "filtered" / "skill_band4.csv").read_text()
        lines = text.splitlines()
        assert lines[0] == "band,method,rmse,n_slots"
        methods = [line.split(",")[1] for line in lines[1:]]
        assert methods == ["filtered", "climatology_only", "fusion_only"]

    def test_metrics_report_covers_both_bands(self, processed_workspace):
        report = read_metrics_csv(processed_workspace["out"] / "evaluation" / "metrics.csv")
        assert {(r.site, r.band) for r in report.rows} == {
            ("all", "band3"),
            ("all", "band4"),
        }
        for row in report.rows:
            assert row.rmse >= row.mae >= abs(row.me)
            assert row.n_heldout > 0

    def test_metrics_table_groups_by_band(self, processed_workspace):
        text = (processed_workspace["out"] / "evaluation" / "metrics_table.txt").read_text()
        lines = text.splitlines()
        assert lines[0] == "Band 3"
        assert "Band 4" in lines


class TestFilterWithoutCoarseTarget:
    def test_falls_back_to_climatology_priors(self, tmp_path, caplog):
        import logging

        ws = tmp_path / "ws"
        out = tmp_path / "out"
        synth = {
            "width": 8,
            "height": 8,
            "start_year": 2000,
            "archive_years": 2,
            "coarse_block": 4,
            "cloud_gap_fraction": 0.2,
            "seed": 3,
            "bands": [
                {
                    "name": "band3",
                    "baseline": 0.1,
                    "amplitude": 0.05,
                    "phase": 3.0,
                    "fusion_slope": 0.9,
                    "fusion_intercept": 0.01,
                }
            ],
        }
        config = write_config(
            tmp_path,
            ws,
            out,
            synth=synth,
            bands=["band3"],
            archive_start=2000,
            archive_end=2001,
            target_year=2002,
        )
        cfg = RunConfig.from_json(config)
        stage_simulate(cfg)
        for path in (ws / "coarse" / "band3").glob("2002-*"):
            path.unlink()
        from oifuse.pipeline import stage_build_climatology, stage_fit_fusion

        stage_build_climatology(cfg)
        stage_fit_fusion(cfg)
        with caplog.at_level(logging.WARNING, logger="oifuse.pipeline"):
            stage_filter(cfg)
        assert any("without fusion priors" in r.message for r in caplog.records)
        rows = read_filtered_csv(out / "filtered" / "filtered_band3.csv")
        assert len(rows) == 64 * 12
        assert all(math.isfinite(r.estimate) for r in rows)
