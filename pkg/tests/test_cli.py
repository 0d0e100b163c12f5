"""End-to-end command-line pipeline checks on a tiny synthetic scene."""

import json

import numpy as np
import pytest

from citysplat.cli import main
from citysplat.colmap import load_colmap
from citysplat.images import load_png
from citysplat.lod import load_lod
from citysplat.partition import import_manifests
from citysplat.ply import load_ply

SYNTH_ARGS = ["--extent", "60", "--buildings", "6", "--cameras", "16",
              "--gaussians", "1200", "--width", "64", "--height", "48"]

CONFIG_TEXT = """\
foreground_min = -10 -10
foreground_max = 10 10
block_dims = 2 2
enlarge_min_count = 100
"""


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    root = tmp_path_factory.mktemp("city")
    assert main(["synth", str(root), "--seed", "5", *SYNTH_ARGS]) == 0
    (root / "city.cfg").write_text(CONFIG_TEXT)
    return root


@pytest.fixture(scope="module")
def partitioned(city, tmp_path_factory):
    out = tmp_path_factory.mktemp("part")
    code = main(["partition", str(city / "scene.ply"), str(out),
                 "--colmap", str(city / "sparse"),
                 "--config", str(city / "city.cfg")])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def bundle(city, tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    code = main(["compress", str(city / "scene.ply"), str(out),
                 "--colmap", str(city / "sparse"),
                 "--config", str(city / "city.cfg")])
    assert code == 0
    return out


class TestSynth:
    def test_writes_scene_and_cameras(self, city):
        cloud = load_ply(city / "scene.ply")
        assert cloud.count == 1200
        records = load_colmap(city / "sparse")
        assert len(records) == 16

    def test_deterministic(self, city, tmp_path):
        assert main(["synth", str(tmp_path), "--seed", "5", *SYNTH_ARGS]) == 0
        assert (tmp_path / "scene.ply").read_bytes() == (city / "scene.ply").read_bytes()

    def test_gt_renders(self, tmp_path):
        args = ["synth", str(tmp_path), "--seed", "2", "--extent", "40",
                "--buildings", "3", "--cameras", "4", "--gaussians", "300",
                "--width", "32", "--height", "24", "--gt"]
        assert main(args) == 0
        pngs = sorted((tmp_path / "gt").glob("*.png"))
        assert len(pngs) == 4
        assert load_png(pngs[0]).pixels.shape == (24, 32, 3)


class TestPartition:
    def test_manifests_partition_the_cloud(self, city, partitioned):
        cloud = load_ply(city / "scene.ply")
        seen = []
        for path in sorted(partitioned.glob("block_*.json")):
            seen.extend(json.loads(path.read_text())["gaussian_indices"])
        assert sorted(seen) == list(range(cloud.count))

    def test_assignment_round_trips(self, partitioned):
        matrix = import_manifests(partitioned)
        assert matrix.entries.any()

    def test_block_slices_written(self, city, partitioned):
        cloud = load_ply(city / "scene.ply")
        total = sum(load_ply(p).count for p in sorted((partitioned / "blocks").glob("*.ply")))
        assert total == cloud.count

    def test_missing_ply_is_data_error(self, city, tmp_path):
        code = main(["partition", str(tmp_path / "nope.ply"), str(tmp_path),
                     "--colmap", str(city / "sparse")])
        assert code == 3

    def test_bad_config_is_config_error(self, city, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("ssim_threshold = 7\n")
        code = main(["partition", str(city / "scene.ply"), str(tmp_path / "o"),
                     "--colmap", str(city / "sparse"), "--config", str(cfg)])
        assert code == 2


class TestFuse:
    def test_round_trip_multiset(self, city, partitioned, tmp_path):
        blocks = sorted((partitioned / "blocks").glob("block_*.ply"))
        out = tmp_path / "fused.ply"
        code = main(["fuse", str(out), *map(str, blocks),
                     "--grid", str(partitioned)])
        assert code == 0
        original = load_ply(city / "scene.ply")
        fused = load_ply(out)
        assert fused.count == original.count
        a = np.sort(original.positions.view([("x", float), ("y", float), ("z", float)]).ravel())
        b = np.sort(fused.positions.view([("x", float), ("y", float), ("z", float)]).ravel())
        assert np.array_equal(a, b)

    def test_unindexed_file_name_rejected(self, partitioned, tmp_path):
        anon = tmp_path / "noindex.ply"
        anon.write_bytes((partitioned / "blocks" / "block_0.ply").read_bytes())
        code = main(["fuse", str(tmp_path / "f.ply"), str(anon),
                     "--grid", str(partitioned)])
        assert code == 3


class TestCompress:
    def test_bundle_structure(self, city, bundle):
        scene = load_lod(bundle)
        cloud = load_ply(city / "scene.ply")
        assert scene.n_levels == 3
        assert scene.full.count == cloud.count
        sizes = [scene.level_size(i) for i in range(3)]
        assert sizes[0] < sizes[1] < sizes[2]

    def test_levels_on_disk(self, bundle):
        index = json.loads((bundle / "index.json").read_text())
        for level in range(index["n_levels"]):
            files = list((bundle / "levels" / str(level) / "blocks").glob("*.ply"))
            assert len(files) == index["n_blocks"]


class TestRender:
    def test_renders_and_metrics(self, city, bundle, tmp_path):
        gt = tmp_path / "gtcity"
        assert main(["synth", str(gt), "--seed", "5", *SYNTH_ARGS, "--gt"]) == 0
        out = tmp_path / "out"
        code = main(["render", str(bundle), str(out),
                     "--colmap", str(city / "sparse"),
                     "--split", "test", "--gt", str(gt / "gt")])
        assert code == 0
        report = json.loads((out / "metrics.json").read_text())
        assert report["frames"]
        for row in report["frames"]:
            assert (out / "renders" / row["name"]).exists()
            assert np.isfinite(row["psnr"]) and 0 <= row["ssim"] <= 1

    def test_no_lod_renders_full_cloud(self, city, bundle, tmp_path):
        out_lod = tmp_path / "lod"
        out_full = tmp_path / "full"
        base = ["--colmap", str(city / "sparse"), "--split", "test"]
        assert main(["render", str(bundle), str(out_lod), *base]) == 0
        assert main(["render", str(bundle), str(out_full), *base, "--no-lod"]) == 0
        lod_rows = json.loads((out_lod / "metrics.json").read_text())["frames"]
        full_rows = json.loads((out_full / "metrics.json").read_text())["frames"]
        for a, b in zip(lod_rows, full_rows):
            assert a["assembled"] <= b["assembled"]

    def test_plain_ply_input(self, city, tmp_path):
        code = main(["render", str(city / "scene.ply"), str(tmp_path / "o"),
                     "--colmap", str(city / "sparse"), "--split", "test"])
        assert code == 0

    def test_deterministic_bytes(self, city, bundle, tmp_path):
        base = ["render", str(bundle), None, "--colmap", str(city / "sparse"),
                "--split", "test"]
        outs = []
        for name in ("a", "b"):
            argv = list(base)
            argv[2] = str(tmp_path / name)
            assert main(argv) == 0
            outs.append(sorted((tmp_path / name / "renders").glob("*.png")))
        for pa, pb in zip(*outs):
            assert pa.read_bytes() == pb.read_bytes()

    def test_pointwise_mode_runs(self, city, bundle, tmp_path):
        code = main(["render", str(bundle), str(tmp_path / "pw"),
                     "--colmap", str(city / "sparse"), "--split", "test",
                     "--lod-mode", "pointwise"])
        assert code == 0


class TestBench:
    def test_report_schema_and_invariants(self, bundle, tmp_path):
        code = main(["bench", str(bundle), str(tmp_path),
                     "--altitudes", "30,120", "--frames", "3",
                     "--width", "48", "--height", "36"])
        assert code == 0
        report = json.loads((tmp_path / "bench.json").read_text())
        assert len(report["rows"]) == 2 * 3 * 3  # altitudes x frames x modes
        for agg in report["aggregates"]:
            assert agg["min_fps"] <= agg["mean_fps"] + 1e-9
        csv_text = (tmp_path / "bench.csv").read_text().splitlines()
        assert csv_text[0].startswith("altitude,")
        assert len(csv_text) == 1 + len(report["rows"])

    def test_lod_never_exceeds_full_budget(self, bundle, tmp_path):
        assert main(["bench", str(bundle), str(tmp_path), "--altitudes", "80",
                     "--frames", "4", "--width", "48", "--height", "36"]) == 0
        rows = json.loads((tmp_path / "bench.json").read_text())["rows"]
        by_frame = {}
        for r in rows:
            by_frame.setdefault(r["frame"], {})[r["mode"]] = r
        for modes in by_frame.values():
            assert modes["lod"]["visible"] <= modes["finest"]["visible"]
            assert modes["finest"]["visible"] <= modes["full"]["visible"]

    def test_bad_altitudes_is_config_error(self, bundle, tmp_path):
        assert main(["bench", str(bundle), str(tmp_path),
                     "--altitudes", "fast"]) == 2

    def test_ply_input_is_data_error(self, city, tmp_path):
        assert main(["bench", str(city / "scene.ply"), str(tmp_path)]) == 3


class TestServe:
    def test_rejects_non_bundle_before_binding(self, city):
        assert main(["serve", str(city / "scene.ply")]) == 3
