import json

import numpy as np
import pytest

from qcreg import (
    DegenerateImageError,
    InvalidDimensionError,
    QCMap,
    build_grid_mesh,
    compute_metrics,
    count_flips,
    e_sim,
    e_smooth,
    e_total,
    identity_map,
)

from helpers import smooth_test_image


def reflection_map(mesh):
    pos = mesh.vertices.copy()
    pos[:, 0] = mesh.width - pos[:, 0]
    return QCMap(mesh, pos)


class TestESim:
    def test_hand_computed_two_by_two(self):
        # mismatch 1, all four normalizers are 1, 3, 1, 3
        moving = np.array([[1.0, 0.0], [0.0, 0.0]])
        static = np.array([[0.0, 1.0], [0.0, 0.0]])
        mesh = build_grid_mesh(2, 2)
        val = e_sim(moving, static, identity_map(mesh))
        assert val == pytest.approx(8.0 / 3.0)
        assert val == pytest.approx(2.6667, abs=5e-5)

    def test_perfect_alignment_is_zero(self):
        rng = np.random.default_rng(0)
        img = smooth_test_image(rng, 10, 10)
        assert e_sim(img, img, identity_map(build_grid_mesh(10, 10))) == 0.0

    def test_degenerate_sums_are_named(self):
        mesh = build_grid_mesh(3, 3)
        f = identity_map(mesh)
        ok = np.full((3, 3), 0.5)
        with pytest.raises(DegenerateImageError) as err:
            e_sim(np.zeros((3, 3)), ok, f)
        assert err.value.which == "sum I_M"
        with pytest.raises(DegenerateImageError) as err:
            e_sim(np.ones((3, 3)), ok, f)
        assert err.value.which == "sum (1 - I_M)"
        with pytest.raises(DegenerateImageError) as err:
            e_sim(ok, np.zeros((3, 3)), f)
        assert err.value.which == "sum I_S(f)"
        with pytest.raises(DegenerateImageError) as err:
            e_sim(ok, np.ones((3, 3)), f)
        assert err.value.which == "sum (1 - I_S(f))"

    def test_symmetric_in_mismatch_magnitude(self):
        # doubling every per-pixel deviation doubles the numerator while the
        # normalizers stay fixed
        mesh = build_grid_mesh(4, 4)
        f = identity_map(mesh)
        base = np.full((4, 4), 0.5)
        d = np.zeros((4, 4))
        d[1, 1] = 0.1
        d[2, 2] = -0.1
        assert e_sim(base + 2 * d, base, f) == pytest.approx(
            2.0 * e_sim(base + d, base, f)
        )


class TestESmooth:
    def test_identity_value(self):
        for side in (8, 64):
            mesh = build_grid_mesh(side, side)
            assert e_smooth(identity_map(mesh)) == pytest.approx(
                np.sqrt(2.0 / side**2)
            )
        assert e_smooth(identity_map(build_grid_mesh(64, 64))) == pytest.approx(
            0.022097, abs=1e-6
        )

    def test_translation_invariant(self):
        mesh = build_grid_mesh(9, 13)
        base = identity_map(mesh)
        shifted = QCMap(mesh, base.positions + np.array([4.0, -2.5]))
        assert e_smooth(shifted) == e_smooth(base)

    def test_scaling_scales_linearly(self):
        mesh = build_grid_mesh(8, 8)
        doubled = QCMap(mesh, identity_map(mesh).positions * 2.0)
        assert e_smooth(doubled) == pytest.approx(2.0 * e_smooth(identity_map(mesh)))


class TestETotal:
    def test_is_exact_sum_of_terms(self):
        rng = np.random.default_rng(1)
        moving = smooth_test_image(rng, 12, 12)
        static = smooth_test_image(rng, 12, 12)
        mesh = build_grid_mesh(12, 12)
        pos = identity_map(mesh).positions + 0.15 * rng.standard_normal(
            (mesh.n_vertices, 2)
        )
        f = QCMap(mesh, pos)
        assert e_total(moving, static, f) == e_sim(moving, static, f) + e_smooth(f)


class TestCountFlips:
    def test_identity_has_none(self):
        assert count_flips(identity_map(build_grid_mesh(7, 11))) == 0

    def test_reflection_flips_every_triangle(self):
        mesh = build_grid_mesh(6, 9)
        assert count_flips(reflection_map(mesh)) == 2 * 6 * 9

    def test_single_pulled_vertex_folds_locally(self):
        mesh = build_grid_mesh(5, 5)
        pos = identity_map(mesh).positions.copy()
        v = 2 * 6 + 2  # vertex (2, 2)
        pos[v] = [4.2, 2.0]  # far past its right neighbor
        n = count_flips(QCMap(mesh, pos))
        assert 1 <= n < 2 * 5 * 5

    def test_custom_grid_resamples_map(self):
        mesh = build_grid_mesh(8, 8)
        assert count_flips(identity_map(mesh), 2, 2) == 0
        assert count_flips(reflection_map(mesh), 3, 4) == 2 * 3 * 4

    def test_grid_validation(self):
        with pytest.raises(InvalidDimensionError):
            count_flips(identity_map(build_grid_mesh(4, 4)), 0, 4)


class TestMetricsReport:
    def test_bundles_consistent_values(self):
        rng = np.random.default_rng(2)
        moving = smooth_test_image(rng, 10, 10)
        static = smooth_test_image(rng, 10, 10)
        mesh = build_grid_mesh(10, 10)
        f = identity_map(mesh)
        report = compute_metrics(moving, static, f)
        assert report.e_sim == e_sim(moving, static, f)
        assert report.e_smooth == e_smooth(f)
        assert report.e_total == report.e_sim + report.e_smooth
        assert report.n_flips == 0
        assert (report.height, report.width) == (10, 10)

    def test_json_round_trip(self):
        rng = np.random.default_rng(3)
        moving = smooth_test_image(rng, 8, 8)
        static = smooth_test_image(rng, 8, 8)
        report = compute_metrics(moving, static, identity_map(build_grid_mesh(8, 8)))
        data = json.loads(report.to_json())
        assert set(data) == {"e_sim", "e_smooth", "e_total", "n_flips", "height", "width"}
        assert data["e_sim"] == report.e_sim
        assert data["n_flips"] == 0
