import json
import subprocess
import sys

import numpy as np
import pytest

from oitraster.cli import EXIT_DIFFERENT, EXIT_ERROR, EXIT_OK, main
from oitraster.image import load_png, save_png
from oitraster.pipeline import RunReport

REPORT_FIELDS = set(RunReport.__dataclass_fields__)


def run(tmp_path, *argv, name="out"):
    png, js = tmp_path / f"{name}.png", tmp_path / f"{name}.json"
    code = main([*argv, "--output", str(png), "--stats", str(js)])
    return code, png, json.loads(js.read_text())


def test_boxes_render_writes_png_and_report(tmp_path):
    code, png, report = run(tmp_path, "--scene", "boxes", "--width", "128", "--height", "96")
    assert code == EXIT_OK
    img = load_png(png)
    assert img.shape == (96, 128, 4)
    assert REPORT_FIELDS <= set(report)
    row = report["table_row"]
    assert set(row) == {"setup", "binning", "low_raster", "hi_raster", "Samples", "S/THB"}
    assert row["Samples"] == report["samples"] > 0
    assert all(row[k] >= 0 for k in ("setup", "binning", "low_raster", "hi_raster"))


def test_compare_self_and_different(tmp_path, capsys):
    _, png, _ = run(tmp_path, "--scene", "boxes", "--width", "64", "--height", "64")
    assert main(["--compare", str(png), str(png)]) == EXIT_OK
    assert "differing pixels: 0" in capsys.readouterr().out
    img = load_png(png)
    img[5, 7, 2] ^= 1
    other = tmp_path / "other.png"
    save_png(other, img)
    stats = tmp_path / "cmp.json"
    assert main(["--compare", str(png), str(other), "--stats", str(stats)]) == EXIT_DIFFERENT
    assert json.loads(stats.read_text())["differing_pixels"] == 1


def test_compare_size_mismatch_is_error(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_png(a, np.zeros((4, 4, 4), np.uint8))
    save_png(b, np.zeros((4, 5, 4), np.uint8))
    assert main(["--compare", str(a), str(b)]) == EXIT_ERROR


def test_larger_filter_fewer_invalid_pixels(tmp_path):
    common = ["--scene", "intersecting_shells", "--width", "128", "--height", "128"]
    _, _, r3 = run(tmp_path, *common, "--depth-filter-size", "3", name="d3")
    _, _, r8 = run(tmp_path, *common, "--depth-filter-size", "8", name="d8")
    assert r3["invalid_percent"] > 0
    assert r8["invalid_percent"] < r3["invalid_percent"]


def test_repeat_runs_are_identical(tmp_path):
    common = ["--scene", "random_soup", "--seed", "3", "--width", "96", "--height", "96", "--threads", "4"]
    _, p1, r1 = run(tmp_path, *common, name="a")
    _, p2, r2 = run(tmp_path, *common, name="b")
    assert p1.read_bytes() == p2.read_bytes()
    for r in (r1, r2):
        r.pop("timings_us")
        r.pop("table_row")
    assert r1 == r2


def test_reference_matches_default(tmp_path):
    common = ["--scene", "layered_quads", "--seed", "2", "--width", "96", "--height", "64", "--depth-filter-size", "8"]
    _, p1, _ = run(tmp_path, *common, name="a")
    _, p2, ref = run(tmp_path, *common, "--reference", name="b")
    assert ref["renderer"] != ""
    assert np.array_equal(load_png(p1), load_png(p2))


def test_group_quads_on_obj(tmp_path):
    obj = tmp_path / "grid.obj"
    lines = [f"v {x} {y} 0" for y in range(4) for x in range(5)]
    for y in range(3):
        for x in range(4):
            a = y * 5 + x + 1
            lines += [f"f {a} {a + 1} {a + 6}", f"f {a} {a + 6} {a + 5}"]
    obj.write_text("\n".join(lines) + "\n")
    code, _, report = run(tmp_path, "--scene", str(obj), "--group-quads", "--width", "64", "--height", "64")
    assert code == EXIT_OK
    assert report["grouping"] == {"triangles": 24, "quads": 12, "degenerate_percent": 0.0}
    assert report["input_quads"] == 12


@pytest.mark.parametrize(
    "argv",
    [["--scene", "boxes", "--depth-filter-size", "0"], ["--scene", "boxes", "--bogus"], ["--scene", "boxes", "--threads", "0"]],
)
def test_bad_arguments_exit_nonzero(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0


def test_missing_scene_is_error(tmp_path):
    assert main(["--scene", str(tmp_path / "nope.obj")]) == EXIT_ERROR


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.png"
    proc = subprocess.run(
        [sys.executable, "-m", "oitraster.cli", "--scene", "boxes", "--width", "32", "--height", "32", "--output", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists() and "samples" in proc.stdout
