"""Detail levels: significance ranking, compression, robust block bounds,
visibility, level selection, assembly, and the on-disk bundle."""

import math

import numpy as np
import pytest

from citysplat.config import RunConfig
from citysplat.core import CameraView, GaussianCloud, build_covariances
from citysplat.errors import DataError
from citysplat.lod import (
    AssembledSet,
    LodScene,
    assemble_render_set,
    block_visible,
    build_lod,
    compress,
    decide_visibility,
    load_lod,
    mad_bounds,
    save_lod,
    select_level,
    significance_scores,
)
from citysplat.partition import ContractionMap, grid_partition
from citysplat.render import RenderSettings, rasterize_stats
from citysplat.synthetic import generate_synthetic_city

from conftest import cloud_in_view, identity_camera, random_camera
from oracles import center_projects_on_screen

INTERVALS = ((0.0, 200.0), (200.0, 400.0), (400.0, math.inf))


def lattice_cloud(rng, k, span=8.0, sh_coeffs=16):
    quats = rng.normal(size=(k, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianCloud(
        positions=rng.uniform(-span, span, (k, 3)),
        opacities=rng.uniform(0.05, 1.0, k),
        scales=rng.uniform(0.05, 0.6, (k, 3)),
        rotations=quats,
        sh=rng.normal(0.0, 0.3, (k, 3, sh_coeffs)),
    )


def score_reference(cloud, cams, settings):
    """Per-view recount of hits with an eigenvalue-based footprint radius."""
    sigma = build_covariances(cloud.scales, cloud.rotations)
    hits = np.zeros(cloud.count)
    for cam in cams:
        for i in range(cloud.count):
            t = cam.rotation_w2c @ cloud.positions[i] + cam.translation_w2c
            if t[2] <= settings.near_plane:
                continue
            u = cam.fx * t[0] / t[2] + cam.cx
            v = cam.fy * t[1] / t[2] + cam.cy
            if not (0.0 <= u <= cam.width and 0.0 <= v <= cam.height):
                continue
            jac = np.array([
                [cam.fx / t[2], 0.0, -cam.fx * t[0] / t[2] ** 2],
                [0.0, cam.fy / t[2], -cam.fy * t[1] / t[2] ** 2],
            ])
            cov = jac @ cam.rotation_w2c @ sigma[i] @ cam.rotation_w2c.T @ jac.T
            lam = np.linalg.eigvalsh(cov + 0.3 * np.eye(2)).max()
            if settings.support_sigmas * math.sqrt(lam) >= 0.5:
                hits[i] += 1.0
    vol = np.prod(cloud.scales, axis=1)
    vol = np.minimum(vol, np.percentile(vol, 90.0))
    return hits * cloud.opacities * vol ** 0.1


class TestSignificance:
    def test_matches_per_view_recount(self):
        rng = np.random.default_rng(11)
        cams = [random_camera(rng) for _ in range(4)]
        cloud = cloud_in_view(rng, cams[0], 120)
        settings = RenderSettings()
        got = significance_scores(cloud, cams, settings)
        want = score_reference(cloud, cams, settings)
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_unseen_gaussians_score_zero(self):
        cam = identity_camera()
        rng = np.random.default_rng(3)
        k = 40
        cloud = GaussianCloud(
            positions=np.column_stack([
                rng.uniform(-0.5, 0.5, k), rng.uniform(-0.5, 0.5, k),
                np.full(k, -5.0),  # behind the camera
            ]),
            opacities=np.full(k, 0.9),
            scales=np.full((k, 3), 0.2),
            rotations=np.tile([1.0, 0, 0, 0], (k, 1)),
            sh=np.zeros((k, 3, 16)),
        )
        assert np.all(significance_scores(cloud, [cam]) == 0.0)

    def test_volume_clamped_at_percentile(self):
        cam = identity_camera()
        k = 20
        scales = np.full((k, 3), 0.3)
        scales[-1] = 5.0  # outlier volume must not dominate
        cloud = GaussianCloud(
            positions=np.tile([0.0, 0.0, 6.0], (k, 1)),
            opacities=np.full(k, 0.8),
            scales=scales,
            rotations=np.tile([1.0, 0, 0, 0], (k, 1)),
            sh=np.zeros((k, 3, 16)),
        )
        scores = significance_scores(cloud, [cam])
        cap = np.percentile(np.prod(scales, axis=1), 90.0)
        assert scores[-1] == pytest.approx(0.8 * cap ** 0.1)

    def test_empty_cloud(self):
        assert significance_scores(GaussianCloud.empty(), []).shape == (0,)


class TestCompress:
    def test_keep_count_exact(self):
        from citysplat.lod import _keep_count

        # round() guards the reference against float error in rate * k, e.g.
        # 0.34 * 50000 evaluating a hair above 17000
        for k, rate in [(50_000, 0.34), (50_000, 0.5), (50_000, 0.25), (3, 1 / 3),
                        (7, 0.25), (10, 1.0), (1, 0.01), (997, 0.142857)]:
            assert _keep_count(rate, k) == min(k, max(1, math.ceil(round(rate * k, 6))))

        rng = np.random.default_rng(5)
        for k, rate in [(3, 1 / 3), (7, 0.25), (10, 1.0), (33, 0.6)]:
            cloud = lattice_cloud(rng, k)
            out = compress(cloud, rate, scores=rng.uniform(size=k))
            assert out.count == math.ceil(round(rate * k, 6))

    def test_identity_at_full_rate(self):
        rng = np.random.default_rng(8)
        cloud = lattice_cloud(rng, 33)
        out = compress(cloud, 1.0, 3, scores=rng.uniform(size=33))
        assert np.array_equal(out.positions, cloud.positions)
        assert np.array_equal(out.sh, cloud.sh)

    def test_keeps_top_scores_in_original_order(self):
        rng = np.random.default_rng(9)
        cloud = lattice_cloud(rng, 10)
        scores = np.array([5.0, 1.0, 9.0, 2.0, 9.0, 0.0, 7.0, 3.0, 1.0, 4.0])
        out = compress(cloud, 0.4, scores=scores)
        np.testing.assert_array_equal(out.positions, cloud.positions[[0, 2, 4, 6]])

    def test_ties_break_toward_lower_index(self):
        rng = np.random.default_rng(10)
        cloud = lattice_cloud(rng, 6)
        out = compress(cloud, 0.5, scores=np.ones(6))
        np.testing.assert_array_equal(out.positions, cloud.positions[:3])

    def test_drops_high_sh_bands(self):
        rng = np.random.default_rng(12)
        cloud = lattice_cloud(rng, 8)
        assert compress(cloud, 1.0, 1, scores=np.arange(8.0)).sh.shape[2] == 4
        assert compress(cloud, 1.0, 0, scores=np.arange(8.0)).sh.shape[2] == 1

    def test_nested_rates(self):
        rng = np.random.default_rng(13)
        cams = [random_camera(rng) for _ in range(3)]
        cloud = cloud_in_view(rng, cams[0], 90)
        kept = {}
        for rate in (0.25, 0.5, 0.75):
            out = compress(cloud, rate, cameras=cams)
            kept[rate] = {tuple(p) for p in out.positions}
        assert kept[0.25] <= kept[0.5] <= kept[0.75]

    def test_rejects_bad_rate(self):
        cloud = lattice_cloud(np.random.default_rng(1), 4)
        with pytest.raises(ValueError):
            compress(cloud, 0.0, scores=np.zeros(4))
        with pytest.raises(ValueError):
            compress(cloud, 1.2, scores=np.zeros(4))


class TestMadBounds:
    def _cloud(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        k = xs.size
        return GaussianCloud(
            positions=np.column_stack([xs, np.zeros(k), np.zeros(k)]),
            opacities=np.full(k, 0.5),
            scales=np.full((k, 3), 0.1),
            rotations=np.tile([1.0, 0, 0, 0], (k, 1)),
            sh=np.zeros((k, 3, 16)),
        )

    def test_symmetric_points_keep_extremes(self):
        lo, hi = mad_bounds(self._cloud([-1.0, 0.0, 1.0]), 4.0)
        assert lo[0] == -1.0 and hi[0] == 1.0

    def test_outlier_is_clipped(self):
        xs = list(range(10)) + [1000.0]
        lo, hi = mad_bounds(self._cloud(xs), 4.0)
        assert lo[0] == 0.0
        assert hi[0] == 17.0  # median 5 + 4 * MAD 3

    def test_zero_deviation_falls_back_to_extremes(self):
        lo, hi = mad_bounds(self._cloud([2.0, 2.0, 2.0]), 4.0)
        assert lo[0] == 2.0 and hi[0] == 2.0

    def test_infinite_n_mad_disables_clipping(self):
        xs = [0.0, 1.0, 2.0, 500.0]
        lo, hi = mad_bounds(self._cloud(xs), math.inf)
        assert lo[0] == 0.0 and hi[0] == 500.0

    def test_rejects_empty_and_bad_n(self):
        with pytest.raises(ValueError):
            mad_bounds(GaussianCloud.empty(), 4.0)
        with pytest.raises(ValueError):
            mad_bounds(self._cloud([1.0]), 0.0)


class TestBlockVisible:
    def test_camera_inside_is_visible_at_zero(self):
        cam = identity_camera()
        visible, dist = block_visible((np.full(3, -1.0), np.full(3, 1.0)), cam)
        assert visible and dist == 0.0

    def test_box_behind_camera(self):
        cam = identity_camera()
        visible, dist = block_visible((np.array([-1.0, -1, -9]), np.array([1.0, 1, -5])), cam)
        assert not visible
        assert dist == pytest.approx(math.sqrt(1 + 1 + 25))

    def test_box_straddling_camera_plane(self):
        cam = identity_camera()
        bounds = (np.array([3.0, -1.0, -2.0]), np.array([5.0, 1.0, 2.0]))
        visible, dist = block_visible(bounds, cam)
        assert visible
        assert dist == pytest.approx(math.sqrt(9 + 1 + 4))

    def test_box_ahead_on_screen(self):
        cam = identity_camera()
        visible, dist = block_visible((np.array([-1.0, -1, 5]), np.array([1.0, 1, 7])), cam)
        assert visible
        assert dist == pytest.approx(math.sqrt(1 + 1 + 25))

    def test_box_ahead_off_screen(self):
        cam = identity_camera(width=64, height=48, f=55.0)
        # at z=10 the screen's right edge sits at x = (w/2)/f * z ~ 5.8
        bounds = (np.array([8.0, -1.0, 9.0]), np.array([10.0, 1.0, 11.0]))
        visible, _ = block_visible(bounds, cam)
        assert not visible

    def test_on_screen_members_imply_visible_block(self):
        # with clipping disabled the box contains every member, so any member
        # whose center lands on screen forces the block visible
        rng = np.random.default_rng(21)
        for trial in range(12):
            cam = random_camera(rng)
            cloud = cloud_in_view(rng, cam, 400)
            lo, hi = mad_bounds(cloud, math.inf)
            visible, _ = block_visible((lo, hi), cam)
            on_screen = any(
                center_projects_on_screen(p, cam, 0.0) for p in cloud.positions
            )
            if on_screen:
                assert visible


class TestSelectLevel:
    def test_interval_to_level_mapping(self):
        assert select_level(100.0, INTERVALS) == 2
        assert select_level(250.0, INTERVALS) == 1
        assert select_level(10_000.0, INTERVALS) == 0

    def test_lower_edge_inclusive(self):
        assert select_level(0.0, INTERVALS) == 2
        assert select_level(200.0, INTERVALS) == 1
        assert select_level(400.0, INTERVALS) == 0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            select_level(-1.0, INTERVALS)


def city_scene(seed=7, n_cameras=16, target=3000):
    bundle = generate_synthetic_city(seed=seed, extent=60.0, n_buildings=8,
                                     n_cameras=n_cameras, target_gaussians=target,
                                     image_size=(64, 48))
    cmap = ContractionMap.central_third(bundle.cloud)
    grid = grid_partition(bundle.cloud, cmap, (2, 2))
    config = RunConfig()
    cams = [r.view for r in bundle.train_cameras()]
    return build_lod(bundle.cloud, grid, cams, config), bundle, grid


@pytest.fixture(scope="module")
def scene():
    return city_scene()


class TestBuildLod:

    def test_structure(self, scene):
        lod, bundle, grid = scene
        assert lod.n_levels == 3
        assert lod.n_blocks == grid.n_blocks
        assert len(lod.distance_intervals) == lod.n_levels
        assert lod.sh_degrees == (1, 2, 3)  # coarsest first
        assert np.isfinite(lod.bounds_min).all() and np.isfinite(lod.bounds_max).all()

    def test_level_sizes_match_rates(self, scene):
        lod, bundle, _ = scene
        k = bundle.cloud.count
        for level, rate in zip(range(3), (0.25, 0.34, 0.5)):
            assert lod.level_size(level) == math.ceil(round(rate * k, 6))

    def test_levels_are_nested(self, scene):
        lod, _, _ = scene
        for j in range(lod.n_blocks):
            sets = [
                {tuple(p) for p in lod.levels[level][j].positions}
                for level in range(3)
            ]
            assert sets[0] <= sets[1] <= sets[2]

    def test_sh_width_per_level(self, scene):
        lod, _, _ = scene
        widths = [max(c.sh.shape[2] for c in level) for level in lod.levels]
        assert widths == [4, 9, 16]

    def test_block_split_matches_grid(self, scene):
        lod, bundle, grid = scene
        fine = lod.levels[2]
        for j in range(lod.n_blocks):
            members = {tuple(p) for p in bundle.cloud.positions[grid.members(j)]}
            assert {tuple(p) for p in fine[j].positions} <= members

    def test_bounds_cover_medians_not_floaters(self, scene):
        lod, bundle, grid = scene
        for j in range(lod.n_blocks):
            members = grid.members(j)
            if members.size == 0:
                continue
            p = bundle.cloud.positions[members]
            med = np.median(p, axis=0)
            assert np.all(med >= lod.bounds_min[j]) and np.all(med <= lod.bounds_max[j])
            assert np.all(lod.bounds_min[j] >= p.min(axis=0))
            assert np.all(lod.bounds_max[j] <= p.max(axis=0))


class TestAssembly:
    def test_budget_dominance(self, scene):
        lod, bundle, _ = scene
        for record in bundle.cameras[::3]:
            cam = record.view
            adaptive = assemble_render_set(lod, cam).cloud.count
            finest = assemble_render_set(lod, cam, force_level=lod.finest).cloud.count
            assert adaptive <= finest <= lod.full.count

    def test_counts_match_decisions(self, scene):
        lod, bundle, _ = scene
        cam = bundle.cameras[1].view
        out = assemble_render_set(lod, cam)
        expect = sum(
            lod.levels[d.level][d.block].count for d in out.decisions if d.visible
        )
        assert out.cloud.count == expect
        assert out.selection_ms >= 0.0

    def test_visible_blocks_carry_levels_and_boxes(self, scene):
        lod, bundle, _ = scene
        cam = bundle.cameras[2].view
        for d in decide_visibility(lod, cam):
            if d.visible:
                assert 0 <= d.level < lod.n_levels
                assert d.screen_box is not None
                assert d.distance >= 0.0
            else:
                assert d.level is None

    def test_camera_inside_block_selects_finest(self, scene):
        lod, _, _ = scene
        j = next(j for j in range(lod.n_blocks) if lod.occupied(j))
        center = 0.5 * (lod.bounds_min[j] + lod.bounds_max[j])
        cam = CameraView(width=64, height=48, fx=50.0, fy=50.0, cx=32.0, cy=24.0,
                         rotation_w2c=np.eye(3), translation_w2c=-center)
        d = decide_visibility(lod, cam)[j]
        assert d.visible and d.distance == 0.0 and d.level == lod.finest

    def test_pointwise_matches_per_gaussian_rule(self, scene):
        lod, bundle, _ = scene
        cam = bundle.cameras[4].view
        out = assemble_render_set(lod, cam, mode="pointwise")
        center = cam.camera_center
        expected = []
        for level in range(lod.n_levels):
            for block in lod.levels[level]:
                for i in range(block.count):
                    d = float(np.linalg.norm(block.positions[i] - center))
                    if select_level(d, lod.distance_intervals) == level:
                        expected.append(tuple(block.positions[i]))
        got = [tuple(p) for p in out.cloud.positions]
        assert sorted(got) == sorted(expected)

    def test_unknown_mode_rejected(self, scene):
        lod, bundle, _ = scene
        with pytest.raises(ValueError):
            assemble_render_set(lod, bundle.cameras[0].view, mode="sideways")

    def test_far_camera_renders_coarse(self, scene):
        lod, bundle, _ = scene
        high = bundle.cloud.positions.mean(axis=0) + np.array([0.0, 0.0, 2000.0])
        from citysplat.synthetic import look_at
        cam = look_at(high, bundle.cloud.positions.mean(axis=0), 64, 48, 54.0)
        out = assemble_render_set(lod, cam)
        levels = {d.level for d in out.decisions if d.visible}
        assert levels <= {0}

    def test_assembled_set_renders(self, scene):
        lod, bundle, _ = scene
        cam = bundle.cameras[5].view
        out = assemble_render_set(lod, cam)
        img, stats = rasterize_stats(out.cloud, cam)
        assert img.pixels.shape == (48, 64, 3)
        assert stats.visible_splats > 0


class TestBundle(object):
    def test_round_trip(self, tmp_path):
        lod, _, _ = city_scene(seed=3, n_cameras=8, target=800)
        save_lod(lod, tmp_path / "bundle")
        back = load_lod(tmp_path / "bundle")
        assert back.n_levels == lod.n_levels
        assert back.distance_intervals == lod.distance_intervals
        assert back.sh_degrees == lod.sh_degrees
        assert back.n_mad == lod.n_mad
        np.testing.assert_array_equal(back.bounds_min, lod.bounds_min)
        np.testing.assert_array_equal(back.bounds_max, lod.bounds_max)
        # block files store float32, so reload equals the float32 quantization
        def f32(a):
            return a.astype(np.float32).astype(np.float64)

        for level in range(lod.n_levels):
            for j in range(lod.n_blocks):
                a, b = lod.levels[level][j], back.levels[level][j]
                np.testing.assert_array_equal(f32(a.positions), b.positions)
                np.testing.assert_array_equal(f32(a.sh), b.sh)
                assert a.sh.shape == b.sh.shape
        np.testing.assert_array_equal(f32(lod.full.positions), back.full.positions)

    def test_missing_index_raises(self, tmp_path):
        with pytest.raises(DataError):
            load_lod(tmp_path)

    def test_missing_block_raises(self, tmp_path):
        lod, _, _ = city_scene(seed=3, n_cameras=8, target=800)
        save_lod(lod, tmp_path / "b")
        (tmp_path / "b" / "levels" / "1" / "blocks" / "0.ply").unlink()
        with pytest.raises(DataError):
            load_lod(tmp_path / "b")
