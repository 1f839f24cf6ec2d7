import json

import pytest
from PIL import Image

from fsenav.cli import main, parse_seeds
from fsenav.core import ArgumentError

SMALL_CONFIG = """
[scene]
world_size = 12.0
rooms_min = 3
rooms_max = 4
[map]
size_cells = 240
resolution = 0.1
crop_cells = 120
downsample_factor = 4
[planner]
inflation_cells = 2
stop_margin = 0.15
[agent]
success_radius = 1.0
max_steps = 120
[run]
episodes_per_scene = 5
"""


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.ini").write_text(SMALL_CONFIG)
    assert main(["gen", "--config", str(d / "small.ini"), "--out", str(d / "w"), "--seeds", "1..2"]) == 0
    return d


def test_parse_seeds():
    assert parse_seeds("3..5") == [3, 4, 5]
    assert parse_seeds("7") == [7]
    for bad in ("5..3", "a..b", "-1..2"):
        with pytest.raises(ArgumentError):
            parse_seeds(bad)


def test_gen_writes_files(world):
    w = world / "w"
    assert len(list(w.glob("*.fse"))) == 2
    assert len((w / "episodes.jsonl").read_text().splitlines()) == 10
    assert (w / "config.ini").exists()


def test_run_random_walk_and_determinism(world):
    out1, out2 = world / "r1.jsonl", world / "r2.jsonl"
    args = ["run", "--scenes", str(world / "w"), "--policy", "random_walk", "--seed", "4"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2), "--workers", "2"]) == 0
    lines = out1.read_text().splitlines()
    header = json.loads(lines[0])["header"]
    assert header["seed"] == 4 and len(header["config_hash"]) == 16 and header["success_radius"] == 1.0
    assert len(lines) == 11
    assert out1.read_bytes() == out2.read_bytes()


def test_report_hand_written(tmp_path, capsys):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps({"success": True, "optimal_length": 2, "path_length": 4, "dtg": 0.1, "policy": "hand"}) + "\n")
    assert main(["report", "--in", str(p), "--csv", str(tmp_path / "t.csv")]) == 0
    row = capsys.readouterr().out.splitlines()[1].split()
    assert row[0] == "hand" and row[3] == "0.500"
    assert "0.500000" in (tmp_path / "t.csv").read_text()


def test_render_with_log(world, tmp_path):
    rdir = tmp_path / "img"
    args = ["run", "--scenes", str(world / "w"), "--policy", "cost_utility", "--limit", "1"]
    assert main(args + ["--out", str(tmp_path / "r.jsonl"), "--render", str(rdir)]) == 0
    scene = sorted((world / "w").glob("*.fse"))[0]
    out = tmp_path / "x.png"
    assert main(["render", "--scene", str(scene), "--episode-log", str(rdir / "episode_00000.steps.jsonl"), "--out", str(out)]) == 0
    img = Image.open(out)
    assert img.size[0] > 100
    assert (rdir / "episode_00000.png").exists()


@pytest.mark.parametrize(
    "argv, kind",
    [
        (["run", "--scenes", "/nonexistent", "--policy", "random_walk", "--out", "x"], "data"),
        (["gen", "--out", "y"], "argument"),
        (["report", "--in", "/nonexistent.jsonl"], "io"),
        (["gen", "--config", "/nonexistent.ini", "--out", "y", "--seeds", "1"], "config"),
    ],
)
def test_errors_one_line(argv, kind, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"error: {kind}:")


def test_unknown_policy(world, capsys):
    assert main(["run", "--scenes", str(world / "w"), "--policy", "bogus", "--out", "x"]) == 2
    assert capsys.readouterr().err.startswith("error: argument:")


def test_unknown_config_key(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[agent]\nradius_m = 3\n")
    assert main(["gen", "--config", str(p), "--out", str(tmp_path / "o"), "--seeds", "1"]) == 2
    assert capsys.readouterr().err.startswith("error: config:")
