"""Command-line workflow tests, run in process through ``main``."""

import json

import numpy as np
import pytest

from xmodreg import CORR_HEADER, ENV_PROFILE, read_config
from xmodreg.cli import main

SMALL_SPEC = [
    "--image", "64x64", "--n-points", "64", "--stride", "16",
    "--dim", "8", "--geometric-dim", "4",
]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(ENV_PROFILE, raising=False)


@pytest.fixture
def run(capsys):
    def invoke(*argv):
        code = main(list(argv))
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    return invoke


@pytest.fixture
def pair_dir(tmp_path, run):
    out = tmp_path / "pair"
    code, _, _ = run("synth", "--out", str(out), "--seed", "3", *SMALL_SPEC)
    assert code == 0
    return out


class TestSynth:
    def test_single_pair_layout(self, pair_dir):
        for name in ("scene.ply", "depth.frgd", "feats_rgb.frgf", "config.cfg",
                     "gt_pose.txt", "labels.csv"):
            assert (pair_dir / name).exists()

    def test_multiple_pairs_get_numbered_dirs(self, tmp_path, run):
        out = tmp_path / "set"
        code, _, _ = run("synth", "--out", str(out), "--count", "2", *SMALL_SPEC)
        assert code == 0
        assert (out / "pair_0000" / "scene.ply").exists()
        assert (out / "pair_0001" / "scene.ply").exists()

    def test_bad_image_size_is_input_error(self, tmp_path, run):
        code, _, err = run("synth", "--out", str(tmp_path / "x"), "--image", "64by64")
        assert code == 2
        assert "error" in err

    def test_env_profile_is_honored(self, tmp_path, run, monkeypatch):
        monkeypatch.setenv(ENV_PROFILE, "outdoor")
        out = tmp_path / "o"
        assert run("synth", "--out", str(out), *SMALL_SPEC)[0] == 0
        assert read_config(out / "config.cfg").profile == "outdoor"

    def test_explicit_profile_beats_env(self, tmp_path, run, monkeypatch):
        monkeypatch.setenv(ENV_PROFILE, "outdoor")
        out = tmp_path / "i"
        assert run("synth", "--out", str(out), "--profile", "indoor", *SMALL_SPEC)[0] == 0
        assert read_config(out / "config.cfg").profile == "indoor"


class TestRegister:
    def test_pair_dir_registers_successfully(self, tmp_path, run, pair_dir):
        out = tmp_path / "run"
        code, stdout, stderr = run(
            "register", "--pair", str(pair_dir), "--iters", "500", "--out", str(out)
        )
        assert code == 0
        summary = json.loads(stdout)
        assert summary["success"] is True
        assert summary["solver"] == "kabsch"
        assert (out / "pose.txt").exists()
        assert (out / "corr.txt").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["metrics"]["rr_hit"] is True
        assert report["used_geometry"] is True

    def test_stderr_is_json_lines(self, tmp_path, run, pair_dir):
        out = tmp_path / "run"
        _, _, stderr = run(
            "register", "--pair", str(pair_dir), "--iters", "500", "--out", str(out)
        )
        events = [json.loads(line) for line in stderr.splitlines()]
        assert all("event" in e for e in events)
        assert any(e.get("stage") == "solve" for e in events)

    def test_rerun_writes_identical_pose(self, tmp_path, run, pair_dir):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        for out in (out1, out2):
            assert run(
                "register", "--pair", str(pair_dir), "--iters", "500", "--out", str(out)
            )[0] == 0
        assert (out1 / "pose.txt").read_bytes() == (out2 / "pose.txt").read_bytes()
        assert (out1 / "corr.txt").read_bytes() == (out2 / "corr.txt").read_bytes()

    def test_register_is_match_then_solve(self, tmp_path, run, pair_dir):
        reg = tmp_path / "reg"
        assert run(
            "register", "--pair", str(pair_dir), "--iters", "500", "--out", str(reg)
        )[0] == 0

        matched = tmp_path / "matched"
        assert run(
            "match", "--pair", str(pair_dir), "--out", str(matched)
        )[0] == 0
        assert (matched / "corr.txt").read_bytes() == (reg / "corr.txt").read_bytes()

        solved = tmp_path / "solved"
        code, stdout, _ = run(
            "solve",
            "--corr", str(matched / "corr.txt"),
            "--k-img", str(pair_dir / "k_img.json"),
            "--img-depth", str(pair_dir / "depth.frgd"),
            "--config", str(pair_dir / "config.cfg"),
            "--iters", "500",
            "--out", str(solved),
        )
        assert code == 0
        assert (solved / "pose.txt").read_bytes() == (reg / "pose.txt").read_bytes()

    def test_missing_inputs_exit_two(self, tmp_path, run):
        code, _, err = run("register", "--out", str(tmp_path / "x"))
        assert code == 2
        assert "missing required inputs" in err

    def test_corrupt_input_file_exit_two(self, tmp_path, run, pair_dir):
        (pair_dir / "scene.ply").write_bytes(b"not a ply")
        code, _, _ = run(
            "register", "--pair", str(pair_dir), "--out", str(tmp_path / "x")
        )
        assert code == 2

    def test_config_and_profile_flags_conflict(self, run, pair_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main([
                "register", "--pair", str(pair_dir),
                "--config", str(pair_dir / "config.cfg"), "--profile", "indoor",
                "--out", str(tmp_path / "x"),
            ])
        assert exc.value.code == 2


class TestSolve:
    def write_noise_corr(self, path, rng):
        rows = []
        pixels = rng.choice(64 * 64, size=30, replace=False)
        for i, pid in enumerate(pixels):
            u, v = int(pid % 64), int(pid // 64)
            q = rng.uniform(-5.0, 5.0, 3)
            rows.append(f"{u} {v} {u} {v} {q[0]:.17g} {q[1]:.17g} {q[2]:.17g} 0")
        path.write_text(CORR_HEADER + "\n" + "\n".join(rows) + "\n")

    def test_unsolvable_correspondences_exit_three(self, tmp_path, run, pair_dir, rng):
        corr = tmp_path / "noise.txt"
        self.write_noise_corr(corr, rng)
        out = tmp_path / "out"
        code, stdout, _ = run(
            "solve", "--corr", str(corr),
            "--k-img", str(pair_dir / "k_img.json"),
            "--img-depth", str(pair_dir / "depth.frgd"),
            "--solver", "kabsch", "--iters", "300",
            "--out", str(out),
        )
        assert code == 3
        assert json.loads(stdout)["success"] is False
        assert not (out / "pose.txt").exists()
        assert json.loads((out / "report.json").read_text())["success"] is False

    def test_malformed_correspondence_file_exit_two(self, tmp_path, run, pair_dir):
        corr = tmp_path / "bad.txt"
        corr.write_text("not a corr file\n")
        code, _, _ = run(
            "solve", "--corr", str(corr),
            "--k-img", str(pair_dir / "k_img.json"),
            "--out", str(tmp_path / "out"),
        )
        assert code == 2


class TestEval:
    def register_set(self, tmp_path, run, count=2):
        gt_root = tmp_path / "gt"
        code, _, _ = run(
            "synth", "--out", str(gt_root), "--count", str(count), *SMALL_SPEC
        )
        assert code == 0
        results = tmp_path / "results"
        for pair in sorted(gt_root.iterdir()):
            assert run(
                "register", "--pair", str(pair), "--iters", "500",
                "--out", str(results / pair.name),
            )[0] == 0
        return gt_root, results

    def test_aggregates_over_pairs(self, tmp_path, run):
        gt_root, results = self.register_set(tmp_path, run)
        out = tmp_path / "eval"
        code, stdout, _ = run(
            "eval", "--results", str(results), "--gt", str(gt_root), "--out", str(out)
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["n_pairs"] == 2
        assert payload["rr"] == 1.0
        assert payload["skipped"] == 0
        assert (out / "aggregate.json").exists()
        csv_lines = (out / "pairs.csv").read_text().splitlines()
        assert len(csv_lines) == 3
        assert csv_lines[0].startswith("pair,")

    def test_broken_pair_is_skipped_not_fatal(self, tmp_path, run):
        gt_root, results = self.register_set(tmp_path, run)
        broken = results / "pair_zzzz"
        broken.mkdir()
        (broken / "report.json").write_text("{\"success\": true}\n")
        out = tmp_path / "eval"
        code, stdout, err = run(
            "eval", "--results", str(results), "--gt", str(gt_root), "--out", str(out)
        )
        assert code == 0
        payload = json.loads(stdout)
        assert payload["n_pairs"] == 2
        assert payload["skipped"] == 1
        assert any(
            json.loads(line).get("event") == "warning" for line in err.splitlines()
        )

    def test_no_results_exit_two(self, tmp_path, run):
        empty = tmp_path / "results"
        empty.mkdir()
        code, _, _ = run(
            "eval", "--results", str(empty), "--gt", str(tmp_path),
            "--out", str(tmp_path / "eval"),
        )
        assert code == 2


class TestSweep:
    def test_grid_of_cells(self, tmp_path, run):
        out = tmp_path / "sweep"
        code, stdout, _ = run(
            "sweep", "--out", str(out), "--seeds", "2",
            "--solver-list", "kabsch", "--w-list", "0.5", "--iters", "300",
            *SMALL_SPEC,
        )
        assert code == 0
        summary = json.loads(stdout)
        assert list(summary) == ["kabsch,w=0.5,iters=300"]
        assert summary["kabsch,w=0.5,iters=300"]["n_pairs"] == 2
        cells = (out / "cells.csv").read_text().splitlines()
        assert len(cells) == 3
        assert (out / "summary.json").exists()

    def test_bad_w_list_exit_two(self, tmp_path, run):
        code, _, _ = run(
            "sweep", "--out", str(tmp_path / "s"), "--w-list", "0.5;0.7", *SMALL_SPEC
        )
        assert code == 2


class TestTopLevel:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        from xmodreg import __version__

        assert capsys.readouterr().out.strip() == __version__

    def test_command_is_required(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
