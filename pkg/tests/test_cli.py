"""End-to-end command line coverage over a small generated dataset."""

from __future__ import annotations

import filecmp
from pathlib import Path

import pytest

from plelidar import cli, synth
from plelidar.ssl_mini import read_history

from conftest import corridor_config, one_box_config


def _scene_file(tmp_path, cfg) -> Path:
    path = tmp_path / "scene.config"
    path.write_text(synth.config_to_text(cfg))
    return path


def _tree_bytes(root: Path, skip_names=()) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip_names:
            out[str(p.relative_to(root))] = p.read_bytes()
    return out


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synthesized dataset with a split, reused by the read-only tests."""
    root = tmp_path_factory.mktemp("cliws")
    scene = _scene_file(root, one_box_config(frames=12, points_per_surface=1.0))
    data = root / "data"
    assert cli.main(["synth", "--config", str(scene), "--out", str(data)]) == 0
    split = root / "labeled.split"
    assert (
        cli.main(
            ["split", "--root", str(data), "--ratio", "10%", "--out", str(split)]
        )
        == 0
    )
    return {"root": root, "data": data, "split": split}


def test_synth_writes_dataset_and_echo(tmp_path, capsys):
    scene = _scene_file(tmp_path, corridor_config(frames=3, points_per_surface=1.0))
    out = tmp_path / "ds"
    assert cli.main(["synth", "--config", str(scene), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "frames=3" in printed and "out=" in printed
    assert (out / "sequences" / "00" / "velodyne" / "000000.bin").is_file()
    assert (out / "sequences" / "00" / "labels" / "000002.label").is_file()
    assert (out / "sequences" / "00" / "poses.txt").is_file()
    assert (out / "sequences" / "00" / "calib.txt").is_file()
    # the echoed config parses back to the same scene
    echoed = synth.parse_config((out / "synth.config").read_text())
    assert echoed == synth.parse_config(scene.read_text())


def test_synth_requires_config(tmp_path, capsys):
    assert cli.main(["synth", "--out", str(tmp_path / "x")]) == 2
    assert "requires --config" in capsys.readouterr().err


def test_synth_is_reproducible(tmp_path):
    scene = _scene_file(tmp_path, corridor_config(frames=3, points_per_surface=1.0))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["synth", "--config", str(scene), "--out", str(a)]) == 0
    assert cli.main(["synth", "--config", str(scene), "--out", str(b)]) == 0
    assert _tree_bytes(a) == _tree_bytes(b)


def test_split_counts_and_files(workspace, capsys):
    out = workspace["root"] / "fresh.split"
    code = cli.main(
        ["split", "--root", str(workspace["data"]), "--ratio", "0.25", "--out", str(out)]
    )
    assert code == 0
    assert "labeled=3 unlabeled=9 total=12" in capsys.readouterr().out
    text = out.read_text()
    assert text.startswith("[labeled]\n")
    assert (workspace["root"] / "fresh.split.config").is_file()


def test_split_bad_ratio_exits_config(workspace, capsys):
    code = cli.main(
        ["split", "--root", str(workspace["data"]), "--ratio", "0", "--out", "/tmp/x"]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_missing_dataset_exits_data(tmp_path, capsys):
    code = cli.main(
        ["split", "--root", str(tmp_path / "void"), "--ratio", "10%", "--out", "/tmp/x"]
    )
    assert code == 3


def test_ple_naive_then_eval(workspace, tmp_path, capsys):
    est = tmp_path / "est"
    code = cli.main(
        [
            "ple",
            "--root", str(workspace["data"]),
            "--split", str(workspace["split"]),
            "--out", str(est),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert printed.startswith("frames=")
    ple_files = sorted((est / "00").glob("*.ple"))
    assert len(ple_files) > 0
    assert all(p.with_suffix(".meta").is_file() for p in ple_files)

    rep = tmp_path / "rep"
    code = cli.main(
        [
            "eval",
            "--root", str(workspace["data"]),
            "--ple-dir", str(est),
            "--split", str(workspace["split"]),
            "--group-by-offset",
            "--format", "both",
            "--out", str(rep),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "miou=" in printed and "mprecision=" in printed
    for name in ("report.csv", "report.jsonl", "curve.csv", "curve.jsonl", "eval.config"):
        assert (rep / name).is_file()
    curve_rows = (rep / "curve.csv").read_text().splitlines()
    assert curve_rows[0] == "offset,accuracy"
    assert len(curve_rows) > 1


def test_ple_worker_count_keeps_bytes_identical(workspace, tmp_path):
    outs = []
    for workers in ("1", "8"):
        est = tmp_path / f"w{workers}"
        code = cli.main(
            [
                "ple",
                "--root", str(workspace["data"]),
                "--split", str(workspace["split"]),
                "--workers", workers,
                "--progressive",
                "--out", str(est),
            ]
        )
        assert code == 0
        outs.append(_tree_bytes(est, skip_names=("ple.config",)))
    assert outs[0] == outs[1]


def test_ple_rerun_from_echoed_config(workspace, tmp_path):
    first = tmp_path / "first"
    args = [
        "ple",
        "--root", str(workspace["data"]),
        "--split", str(workspace["split"]),
        "--window-seconds", "0.5",
        "--out", str(first),
    ]
    assert cli.main(args) == 0
    again = tmp_path / "again"
    code = cli.main(
        ["ple", "--config", str(first / "ple.config"), "--out", str(again)]
    )
    assert code == 0
    assert _tree_bytes(first, skip_names=("ple.config",)) == _tree_bytes(
        again, skip_names=("ple.config",)
    )


def test_ple_fully_labeled_notice(workspace, tmp_path, capsys):
    full = tmp_path / "full.split"
    assert (
        cli.main(
            [
                "split",
                "--root", str(workspace["data"]),
                "--ratio", "100%",
                "--out", str(full),
            ]
        )
        == 0
    )
    capsys.readouterr()
    code = cli.main(
        [
            "ple",
            "--root", str(workspace["data"]),
            "--split", str(full),
            "--out", str(tmp_path / "none"),
        ]
    )
    assert code == 0
    assert "already labeled" in capsys.readouterr().out


def test_ple_unreachable_frames_exit_empty(workspace, tmp_path, capsys):
    # a window too small to reach any neighbor leaves everything uncovered
    code = cli.main(
        [
            "ple",
            "--root", str(workspace["data"]),
            "--split", str(workspace["split"]),
            "--window-seconds", "0.01",
            "--out", str(tmp_path / "e"),
        ]
    )
    assert code == 4


def test_eval_without_estimates_exits_empty(workspace, tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    code = cli.main(
        [
            "eval",
            "--root", str(workspace["data"]),
            "--ple-dir", str(empty),
            "--out", str(tmp_path / "r"),
        ]
    )
    assert code == 4


def test_eval_offset_grouping_needs_split(workspace, tmp_path):
    code = cli.main(
        [
            "eval",
            "--root", str(workspace["data"]),
            "--ple-dir", str(tmp_path),
            "--group-by-offset",
            "--out", str(tmp_path / "r"),
        ]
    )
    assert code == 2


def test_train_writes_models_and_history(workspace, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(
        [
            "train",
            "--root", str(workspace["data"]),
            "--split", str(workspace["split"]),
            "--steps", "12",
            "--batch-size", "64",
            "--hidden", "8",
            "--max-points", "2000",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert "final_pseudo_label_accuracy=" in capsys.readouterr().out
    for name in ("history.csv", "student.model", "teacher.model", "train.config"):
        assert (out / name).is_file()
    history = read_history(out / "history.csv")
    assert [row[0] for row in history] == [12]


def test_train_zero_steps(workspace, tmp_path):
    out = tmp_path / "zero"
    code = cli.main(
        [
            "train",
            "--root", str(workspace["data"]),
            "--split", str(workspace["split"]),
            "--steps", "0",
            "--max-points", "1000",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert read_history(out / "history.csv") == []


def test_train_threshold_sweep(workspace, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = cli.main(
        [
            "train",
            "--root", str(workspace["data"]),
            "--split", str(workspace["split"]),
            "--steps", "6",
            "--batch-size", "32",
            "--hidden", "4",
            "--max-points", "800",
            "--threshold-sweep",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert "sweep=" in capsys.readouterr().out
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "tau,pseudo_label_accuracy"
    assert len(rows) == 1 + len(cli.TAU_SWEEP)


def test_config_echo_round_trips_through_read_flat(workspace, tmp_path):
    out = tmp_path / "e"
    assert (
        cli.main(
            [
                "ple",
                "--root", str(workspace["data"]),
                "--split", str(workspace["split"]),
                "--out", str(out),
            ]
        )
        == 0
    )
    values = cli.read_flat(out / "ple.config")
    assert values["workers"] == "1"
    assert values["progressive"] == "false"
    assert values["max_distance"] == "inf"
