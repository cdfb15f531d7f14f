import json

import numpy as np
import pytest

from oifuse.errors import ConfigError
from oifuse.fusion import fit_fusion_grid
from oifuse.series import read_series_csv
from oifuse.synthetic import (
    BandSpec,
    SyntheticConfig,
    default_bands,
    generate_site,
    write_site,
)

ONE_BAND = [BandSpec("band3", 0.1, 0.05, 3.0, 0.9, 0.01)]


def small_config(**overrides):
    base = dict(
        width=10,
        height=8,
        start_year=2000,
        archive_years=2,
        bands=list(ONE_BAND),
        coarse_block=4,
        seed=5,
    )
    base.update(overrides)
    return SyntheticConfig(**base)


def _stacks_equal(a, b):
    return a.months == b.months and np.array_equal(a.values, b.values, equal_nan=True)


class TestReproducibility:
    def test_same_config_same_bits(self):
        s1 = generate_site(small_config())
        s2 = generate_site(small_config())
        d1, d2 = s1.bands["band3"], s2.bands["band3"]
        assert np.array_equal(d1.truth, d2.truth)
        for attr in ("fine_archive", "fine_target", "coarse_archive", "coarse_target"):
            assert _stacks_equal(getattr(d1, attr), getattr(d2, attr))

    def test_seed_changes_everything(self):
        a = generate_site(small_config(seed=5)).bands["band3"]
        b = generate_site(small_config(seed=6)).bands["band3"]
        assert not np.array_equal(a.fine_archive.values, b.fine_archive.values, equal_nan=True)

    def test_gap_fraction_does_not_shift_other_streams(self):
        a = generate_site(small_config(cloud_gap_fraction=0.0)).bands["band3"]
        b = generate_site(small_config(cloud_gap_fraction=0.5)).bands["band3"]
        va, vb = a.fine_archive.values, b.fine_archive.values
        both = np.isfinite(va) & np.isfinite(vb)
        assert both.any()
        assert np.array_equal(va[both], vb[both])


class TestStructure:
    def test_truth_is_cycle_plus_static_offset(self):
        cfg = small_config(heterogeneity_sd=0.03)
        site = generate_site(cfg)
        data = site.bands["band3"]
        cycle = ONE_BAND[0].truth_cycle()
        offsets = data.truth - cycle[:, None]
        for k in range(1, 12):
            assert offsets[k] == pytest.approx(offsets[0], abs=1e-12)

    def test_spike_months_shift_target_truth_only(self):
        plain = generate_site(small_config())
        spiked = generate_site(small_config(spike_magnitude=0.05, spike_months=(7,)))
        diff = spiked.bands["band3"].truth - plain.bands["band3"].truth
        assert diff[6] == pytest.approx(0.05, abs=1e-12)
        mask = np.ones(12, dtype=bool)
        mask[6] = False
        assert np.all(diff[mask] == 0.0)

    def test_masked_months_blank_the_fine_target(self):
        site = generate_site(small_config(masked_months=(3, 4)))
        values = site.bands["band3"].fine_target.values
        assert np.isnan(values[2]).all()
        assert np.isnan(values[3]).all()
        assert np.isfinite(values[0]).any()

    def test_archive_and_target_calendars(self):
        cfg = small_config()
        site = generate_site(cfg)
        data = site.bands["band3"]
        assert data.fine_archive.months[0] == (2000, 1)
        assert data.fine_archive.months[-1] == (2001, 12)
        assert data.fine_target.months == [(2002, m) for m in range(1, 13)]
        assert cfg.target_year == 2002

    def test_gap_count_tracks_the_binomial(self):
        cfg = small_config(width=50, height=50, cloud_gap_fraction=0.3)
        site = generate_site(cfg)
        gaps = np.isnan(site.bands["band3"].fine_archive.values).reshape(-1)[:10_000]
        assert 2800 <= int(gaps.sum()) <= 3200

    def test_coarse_is_block_mean_of_inverted_truth(self):
        cfg = small_config(
            width=10,
            height=8,
            coarse_block=4,
            fine_noise_sd=0.0,
            coarse_noise_sd=0.0,
            cloud_gap_fraction=0.0,
            heterogeneity_sd=0.015,
        )
        site = generate_site(cfg)
        data = site.bands["band3"]
        spec = data.spec
        assert site.coarse_shape == (2, 3)
        record = 5  # arbitrary archive month
        fine_plane = data.fine_archive.values[record].reshape(8, 10)
        inverted = (fine_plane - spec.fusion_intercept) / spec.fusion_slope
        coarse_plane = data.coarse_archive.values[record].reshape(2, 3)
        for r in range(2):
            for c in range(3):
                blk = inverted[r * 4 : (r + 1) * 4, c * 4 : (c + 1) * 4]
                assert coarse_plane[r, c] == pytest.approx(blk.mean(), rel=1e-12)

    def test_noiseless_site_reveals_the_fusion_line(self):
        cfg = small_config(
            width=12,
            height=12,
            coarse_block=1,
            fine_noise_sd=0.0,
            coarse_noise_sd=0.0,
            cloud_gap_fraction=0.0,
            heterogeneity_sd=0.02,
        )
        site = generate_site(cfg)
        data = site.bands["band3"]
        grid = fit_fusion_grid(
            data.coarse_archive.values,
            data.fine_archive.values,
            "band3",
            site.fine_geometry,
            (12, 12),
        )
        assert not grid.degenerate.any()
        assert grid.slope == pytest.approx(0.9, rel=1e-9)
        assert grid.intercept == pytest.approx(0.01, rel=1e-9)
        assert np.all(grid.residual_variance <= 1e-18)


class TestConfigValidation:
    def test_rejects_unknown_keys(self):
        with pytest.raises(ConfigError):
            SyntheticConfig.from_dict({"widht": 10})

    def test_rejects_bad_band_spec(self):
        with pytest.raises(ConfigError):
            SyntheticConfig.from_dict({"bands": [{"name": "b", "nope": 1}]})

    @pytest.mark.parametrize(
        "overrides",
        [
            {"width": 0},
            {"archive_years": 0},
            {"coarse_block": 0},
            {"cloud_gap_fraction": 1.5},
            {"coarse_gap_fraction": -0.1},
            {"fine_noise_sd": -1.0},
            {"spike_months": (13,)},
            {"masked_months": (0,)},
            {"seed": -1},
        ],
    )
    def test_rejects_out_of_range_values(self, overrides):
        with pytest.raises(ConfigError):
            small_config(**overrides).validate()

    def test_rejects_duplicate_band_names(self):
        cfg = small_config(bands=[ONE_BAND[0], ONE_BAND[0]])
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_rejects_zero_fusion_slope(self):
        cfg = small_config(bands=[BandSpec("b", 0.1, 0.05, 3.0, 0.0, 0.0)])
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_default_bands_are_two(self):
        assert [b.name for b in default_bands()] == ["band3", "band4"]


class TestWriteSite:
    def test_layout_and_manifest(self, tmp_path):
        cfg = small_config()
        site = generate_site(cfg)
        manifest_path = write_site(site, tmp_path)

        fine = sorted(p.name for p in (tmp_path / "fine" / "band3").glob("*.grid"))
        assert len(fine) == (2 + 1) * 12
        assert fine[0] == "2000-01.grid"
        assert fine[-1] == "2002-12.grid"
        coarse = list((tmp_path / "coarse" / "band3").glob("*.grid"))
        assert len(coarse) == (2 + 1) * 12
        truth = sorted(p.name for p in (tmp_path / "truth" / "band3").glob("*.grid"))
        assert truth == [f"2002-{m:02d}.grid" for m in range(1, 13)]

        series = read_series_csv(tmp_path / "series" / "band3_observations.csv")
        assert len(series) == cfg.n_pixels
        assert all(len(s.months) == 12 for s in series)

        manifest = json.loads(manifest_path.read_text())
        assert manifest["bands"] == ["band3"]
        assert manifest["archive_start"] == 2000
        assert manifest["archive_end"] == 2001
        assert manifest["target_year"] == 2002
        assert manifest["coarse_width"] == 3
        assert manifest["coarse_height"] == 2
