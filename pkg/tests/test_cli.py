import json
import subprocess

import pytest

from oifuse import cli
from oifuse.pipeline import read_filtered_csv

from helpers import cli_subprocess_args, hash_tree, run_cli, write_config

SMALL_SYNTH = {
    "width": 10,
    "height": 10,
    "start_year": 2000,
    "archive_years": 2,
    "coarse_block": 5,
    "cloud_gap_fraction": 0.2,
    "seed": 11,
}


def small_config(tmp_path, **overrides):
    return write_config(
        tmp_path,
        tmp_path / "ws",
        tmp_path / "out",
        synth=SMALL_SYNTH,
        archive_start=2000,
        archive_end=2001,
        target_year=2002,
        **overrides,
    )


class TestArgumentHandling:
    def test_help_exits_zero(self):
        assert cli.main(["--help"]) == 0

    def test_missing_subcommand_is_usage_error(self):
        assert cli.main([]) == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert cli.main(["frobnicate", "--config", "x.json"]) == 2

    def test_config_flag_is_required(self):
        assert cli.main(["simulate"]) == 2


class TestBadInputs:
    def test_missing_config_file(self, tmp_path):
        assert run_cli("simulate", "--config", str(tmp_path / "nope.json")) == 2

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{oops")
        assert run_cli("simulate", "--config", str(path)) == 2

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"workspace": "ws", "bandz": []}))
        assert run_cli("simulate", "--config", str(path)) == 2

    def test_unknown_band_flag(self, tmp_path):
        config = small_config(tmp_path)
        assert run_cli("simulate", "--config", str(config)) == 0
        rc = run_cli("build-climatology", "--config", str(config), "--band", "band9")
        assert rc == 2

    def test_nonpositive_threads(self, tmp_path):
        config = small_config(tmp_path)
        rc = run_cli("simulate", "--config", str(config), "--threads", "0")
        assert rc == 2

    def test_filter_before_artifacts_exist(self, tmp_path):
        config = small_config(tmp_path)
        assert run_cli("simulate", "--config", str(config)) == 0
        assert run_cli("filter", "--config", str(config)) == 2

    def test_internal_errors_return_one(self, tmp_path, monkeypatch):
        config = small_config(tmp_path)

        def boom(cfg, seed=None):
            raise RuntimeError("wires crossed")

        monkeypatch.setattr(cli, "stage_simulate", boom)
        assert run_cli("simulate", "--config", str(config)) == 1


class TestStreams:
    def test_errors_are_one_json_line_on_stderr(self, tmp_path):
        proc = subprocess.run(
            cli_subprocess_args("simulate", "--config", str(tmp_path / "nope.json")),
            capture_output=True,
        )
        assert proc.returncode == 2
        assert proc.stdout == b""
        report = json.loads(proc.stderr.decode().splitlines()[-1])
        assert report["error"] == "ConfigError"
        assert "nope.json" in report["message"]

    def test_data_never_goes_to_stdout(self, tmp_path):
        config = small_config(tmp_path)
        for command in (
            "simulate",
            "build-climatology",
            "fit-fusion",
            "filter",
            "evaluate",
        ):
            proc = subprocess.run(
                cli_subprocess_args(command, "--config", str(config)),
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr.decode()
            assert proc.stdout == b""
            assert proc.stderr  # progress logging lands on stderr


class TestOverrides:
    def test_seed_flag_changes_the_site(self, tmp_path):
        c1 = write_config(tmp_path, tmp_path / "w1", tmp_path / "o1",
                          synth=SMALL_SYNTH, name="c1.json")
        c2 = write_config(tmp_path, tmp_path / "w2", tmp_path / "o2",
                          synth=SMALL_SYNTH, name="c2.json")
        assert run_cli("simulate", "--config", str(c1)) == 0
        assert run_cli("simulate", "--config", str(c2), "--seed", "99") == 0
        h1 = hash_tree(tmp_path / "w1", exclude={"site.json"})
        h2 = hash_tree(tmp_path / "w2", exclude={"site.json"})
        assert set(h1) == set(h2)
        assert h1 != h2

    def test_same_seed_reproduces_the_site(self, tmp_path):
        c1 = write_config(tmp_path, tmp_path / "w1", tmp_path / "o1",
                          synth=SMALL_SYNTH, name="c1.json")
        c2 = write_config(tmp_path, tmp_path / "w2", tmp_path / "o2",
                          synth=SMALL_SYNTH, name="c2.json")
        assert run_cli("simulate", "--config", str(c1)) == 0
        assert run_cli("simulate", "--config", str(c2)) == 0
        h1 = hash_tree(tmp_path / "w1", exclude={"site.json"})
        h2 = hash_tree(tmp_path / "w2", exclude={"site.json"})
        assert h1 == h2

    def test_out_flag_redirects_artifacts(self, tmp_path):
        config = small_config(tmp_path)
        alt = tmp_path / "elsewhere"
        assert run_cli("simulate", "--config", str(config)) == 0
        rc = run_cli("build-climatology", "--config", str(config), "--out", str(alt))
        assert rc == 0
        assert (alt / "climatology" / "band3_climatology.json").is_file()
        assert not (tmp_path / "out" / "climatology").exists()

    def test_band_flag_restricts_processing(self, tmp_path):
        config = small_config(tmp_path)
        assert run_cli("simulate", "--config", str(config)) == 0
        assert run_cli("build-climatology", "--config", str(config)) == 0
        assert run_cli("fit-fusion", "--config", str(config)) == 0
        rc = run_cli("filter", "--config", str(config), "--band", "band3")
        assert rc == 0
        out = tmp_path / "out" / "filtered"
        assert (out / "filtered_band3.csv").is_file()
        assert not (out / "filtered_band4.csv").exists()
        rows = read_filtered_csv(out / "filtered_band3.csv")
        assert {r.band for r in rows} == {"band3"}
