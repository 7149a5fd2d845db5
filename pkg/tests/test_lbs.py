import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcreg import (
    BoundaryCondition,
    FieldShapeError,
    InvalidDimensionError,
    NearSingularError,
    NonQuasiconformalError,
    build_grid_mesh,
    compute_mu,
    identity_boundary,
    identity_map,
    lbs_coefficients,
    signed_areas,
    solve_lbs,
)

from helpers import random_diffeo


@pytest.fixture(scope="module")
def mesh16():
    return build_grid_mesh(16, 16)


class TestCoefficients:
    def test_conformal_gives_identity_tensor(self):
        c = lbs_coefficients(np.zeros(3, dtype=complex))
        assert np.allclose(c.a1, 1.0)
        assert np.allclose(c.a2, 0.0)
        assert np.allclose(c.a3, 1.0)

    def test_real_one_third(self):
        c = lbs_coefficients(np.array([1 / 3 + 0j]))
        assert c.a1[0] == pytest.approx(0.5)
        assert c.a2[0] == pytest.approx(0.0)
        assert c.a3[0] == pytest.approx(2.0)

    def test_imaginary_half(self):
        c = lbs_coefficients(np.array([0.5j]))
        assert c.a1[0] == pytest.approx(5.0 / 3.0)
        assert c.a2[0] == pytest.approx(-4.0 / 3.0)
        assert c.a3[0] == pytest.approx(5.0 / 3.0)

    @given(st.complex_numbers(max_magnitude=0.97, allow_nan=False, allow_infinity=False))
    @settings(max_examples=60, deadline=None)
    def test_determinant_is_one(self, value):
        c = lbs_coefficients(np.array([value]))
        det = c.a1[0] * c.a3[0] - c.a2[0] ** 2
        assert det == pytest.approx(1.0, rel=1e-9)

    def test_near_unit_modulus_rejected(self):
        with pytest.raises(NearSingularError) as err:
            lbs_coefficients(np.array([0.0 + 0j, (1.0 - 1e-9) + 0j]))
        assert err.value.face_index == 1


class TestBoundaryCondition:
    def test_too_few_vertices(self):
        with pytest.raises(InvalidDimensionError):
            BoundaryCondition(np.array([0, 1]), np.array([[0.0, 0.0], [1.0, 0.0]]))

    def test_collinear_targets(self):
        with pytest.raises(InvalidDimensionError):
            BoundaryCondition(
                np.array([0, 1, 2]),
                np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
            )

    def test_duplicate_indices(self):
        with pytest.raises(InvalidDimensionError):
            BoundaryCondition(
                np.array([0, 1, 1]),
                np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            )

    def test_shape_mismatch(self):
        with pytest.raises(FieldShapeError):
            BoundaryCondition(np.array([0, 1, 2]), np.zeros((2, 2)))

    def test_identity_boundary_covers_rectangle(self, mesh16):
        bc = identity_boundary(mesh16)
        assert bc.vertex_indices.shape[0] == 4 * 16
        assert np.allclose(bc.positions, mesh16.vertices[bc.vertex_indices])


class TestSolveLBS:
    def test_zero_mu_recovers_identity(self, mesh16):
        f = solve_lbs(np.zeros(mesh16.n_faces, dtype=complex), mesh16)
        err = np.abs(f.positions - mesh16.vertices).max()
        assert err <= 1e-8

    def test_constant_mu_recovers_affine(self, mesh16):
        # f(z) = z + mu * conj(z) has constant coefficient mu and is an exact
        # solution of the reconstruction PDE, so P1 FEM reproduces it exactly.
        mu_c = 0.3 + 0.2j
        z = mesh16.vertices[:, 0] + 1j * mesh16.vertices[:, 1]
        w = z + mu_c * np.conj(z)
        exact = np.column_stack([w.real, w.imag])
        bc = BoundaryCondition(
            np.nonzero(mesh16.boundary)[0],
            exact[mesh16.boundary],
        )
        f = solve_lbs(np.full(mesh16.n_faces, mu_c), mesh16, bc=bc)
        assert np.abs(f.positions - exact).max() <= 1e-8

    def test_sup_mu_at_least_one_rejected(self, mesh16):
        mu = np.zeros(mesh16.n_faces, dtype=complex)
        mu[5] = 1.0
        with pytest.raises(NonQuasiconformalError):
            solve_lbs(mu, mesh16)

    def test_wrong_mu_length_rejected(self, mesh16):
        with pytest.raises(FieldShapeError):
            solve_lbs(np.zeros(7, dtype=complex), mesh16)

    def test_deterministic(self, mesh16):
        rng = np.random.default_rng(0)
        diffeo = random_diffeo(rng, 16, 16, target_sup=0.4)
        mu = diffeo.mu_on_faces(mesh16)
        a = solve_lbs(mu, mesh16).positions
        b = solve_lbs(mu, mesh16).positions
        assert np.array_equal(a, b)

    def test_round_trip_moderate_field(self):
        mesh = build_grid_mesh(32, 32)
        rng = np.random.default_rng(7)
        diffeo = random_diffeo(rng, 32, 32, target_sup=0.45)
        target = diffeo.map_on(mesh)
        f = solve_lbs(diffeo.mu_on_faces(mesh), mesh)
        err = np.abs(f.positions - target.positions).max()
        assert err <= 0.1

    def test_reconstruction_is_fold_free_at_high_distortion(self):
        mesh = build_grid_mesh(24, 24)
        rng = np.random.default_rng(21)
        for _ in range(3):
            diffeo = random_diffeo(rng, 24, 24, target_sup=0.9)
            f = solve_lbs(diffeo.mu_on_faces(mesh), mesh)
            assert np.all(signed_areas(mesh, f.positions) > 0.0)

    def test_reconstructed_coefficient_matches_input(self):
        # self-consistency: coefficient of the reconstruction approximates
        # the prescribed coefficient
        mesh = build_grid_mesh(48, 48)
        rng = np.random.default_rng(5)
        diffeo = random_diffeo(rng, 48, 48, target_sup=0.35)
        mu_in = diffeo.mu_on_faces(mesh)
        f = solve_lbs(mu_in, mesh)
        mu_out = compute_mu(f)
        assert np.abs(mu_out - mu_in).max() <= 0.08

    def test_partial_boundary_condition(self, mesh16):
        # pinning only the four corners still yields a well-posed system
        w1 = 17
        corners = np.array([0, 16, 16 * w1, 16 * w1 + 16])
        bc = BoundaryCondition(corners, mesh16.vertices[corners] * 1.5)
        f = solve_lbs(np.zeros(mesh16.n_faces, dtype=complex), mesh16, bc=bc)
        assert np.allclose(f.positions[corners], mesh16.vertices[corners] * 1.5)
        assert np.all(np.isfinite(f.positions))

    def test_identity_map_has_zero_mu_round_trip(self, mesh16):
        f = identity_map(mesh16)
        mu = compute_mu(f)
        g = solve_lbs(mu, mesh16)
        assert np.abs(g.positions - f.positions).max() <= 1e-8
