import numpy as np
import pytest

from oracles import random_orthonormal
from sphere_precoding.channel import KLBasis, ZoneSampling, covariance_zone, kl_decompose, steering_vector, steering_vectors
from sphere_precoding.geometry import ArrayGeometry, SphericalZone, wavelength
from sphere_precoding.precoding import (
    PrecoderConfig,
    PrecodingError,
    beam_gain,
    beampattern_grid,
    check_precoder,
    conjugate_beamforming,
    dominant_eigenvector,
    equal_projection,
    slice_region,
    sphere_precode,
    write_beampattern_csv,
    zero_forcing,
)
from sphere_precoding.numerics import SolverTolerances

LAM = wavelength(28e9)


def basis_from(u, weights=None):
    r = u.shape[1]
    w = np.ones(r) if weights is None else np.asarray(weights, float)
    return KLBasis(u, w, 0.0)


class TestSphere:
    def test_single_user_is_equal_projection(self):
        b = basis_from(random_orthonormal(np.random.default_rng(0), 10, 3))
        f = sphere_precode([b])
        np.testing.assert_allclose(f[:, 0], equal_projection(b), atol=1e-5)

    def test_orthogonal_bases(self):
        q = random_orthonormal(np.random.default_rng(1), 12, 5)
        b1, b2 = basis_from(q[:, :2]), basis_from(q[:, 2:5])
        f = sphere_precode([b1, b2])
        np.testing.assert_allclose(f[:, 0], equal_projection(b1), atol=1e-5)
        np.testing.assert_allclose(f[:, 1], equal_projection(b2), atol=1e-5)

    def test_identical_rank_one(self):
        b = basis_from(random_orthonormal(np.random.default_rng(2), 6, 1))
        f = sphere_precode([b, b])
        for k in range(2):
            assert np.linalg.norm(b.basis.conj().T @ f[:, k] - 1.0) == pytest.approx(0.999, abs=1e-5)

    def test_failure_names_user(self):
        rng = np.random.default_rng(3)
        bases = [basis_from(random_orthonormal(rng, 8, 3)) for _ in range(2)]
        with pytest.raises(PrecodingError) as info:
            sphere_precode(bases, tol=SolverTolerances(max_iterations=1))
        assert info.value.user == 0

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            sphere_precode([basis_from(random_orthonormal(rng, 4, 1)), basis_from(random_orthonormal(rng, 5, 1))])

    def test_workers_identical(self):
        rng = np.random.default_rng(5)
        bases = [basis_from(random_orthonormal(rng, 10, 2)) for _ in range(3)]
        assert sphere_precode(bases).tobytes() == sphere_precode(bases, workers=3).tobytes()

    def test_statistical_interference_bound(self):
        geom = ArrayGeometry(4, 8, LAM / 2, 3.0)
        centres = [[1.0, -0.4, 1.5], [1.2, 0.3, 1.5], [0.9, 0.05, 1.5]]
        covs = [covariance_zone(geom, SphericalZone(c, 0.1), LAM, ZoneSampling(100, i)) for i, c in enumerate(centres)]
        bases = [kl_decompose(r) for r in covs]
        eps = 1e-3
        f = sphere_precode(bases, PrecoderConfig(1.0, eps))
        check_precoder(f)
        for k in range(3):
            for l in range(3):
                if l != k:
                    lhs = np.real(f[:, k].conj() @ covs[l] @ f[:, k])
                    assert lhs <= bases[l].weights[0] * eps**2 + bases[l].next_weight + 1e-6

    def test_in_zone_projections_equal_when_unconstrained(self):
        q = random_orthonormal(np.random.default_rng(6), 16, 6)
        b1, b2 = basis_from(q[:, :4]), basis_from(q[:, 4:])
        f = sphere_precode([b1, b2])
        proj = b1.basis.conj().T @ f[:, 0]
        np.testing.assert_allclose(proj, np.full(4, proj[0]), atol=1e-5)


class TestEqualProjection:
    def test_rank_one(self):
        u = random_orthonormal(np.random.default_rng(0), 5, 1)
        np.testing.assert_allclose(equal_projection(basis_from(u)), u[:, 0])

    def test_rank_four(self):
        u = random_orthonormal(np.random.default_rng(1), 8, 4)
        f = equal_projection(basis_from(u))
        np.testing.assert_allclose(u.conj().T @ f, np.full(4, 0.5), atol=1e-12)
        assert np.linalg.norm(u.conj().T @ f - 1.0) == pytest.approx(1.0)

    def test_small_level(self):
        u = random_orthonormal(np.random.default_rng(2), 8, 2)
        f = equal_projection(basis_from(u), 0.5)
        np.testing.assert_allclose(u.conj().T @ f, [0.5, 0.5], atol=1e-12)
        assert np.linalg.norm(f) == pytest.approx(1 / np.sqrt(2))


class TestConjugate:
    @pytest.mark.parametrize("shape", [(1, 1), (2, 3), (4, 8)])
    def test_focal_gain_is_n(self, shape):
        geom = ArrayGeometry(*shape, LAM / 2, 3.0)
        x = [1.5, 0.2, 1.0]
        f = conjugate_beamforming(geom, x, LAM)
        assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-15)
        assert beam_gain(geom, f, x, LAM) == pytest.approx(geom.num_elements)

    def test_gain_bounded(self):
        geom = ArrayGeometry(4, 8, LAM / 2, 3.0)
        f = conjugate_beamforming(geom, [1.5, 0.2, 1.0], LAM)
        pts = np.random.default_rng(0).uniform(-3, 3, size=(500, 3)) + [4, 0, 0]
        for p in pts[:50]:
            assert 0 <= beam_gain(geom, f, p, LAM) <= geom.num_elements + 1e-9


class TestEig:
    def test_rank_one(self):
        geom = ArrayGeometry(2, 4, LAM / 2, 1.0)
        a = steering_vector(geom, [2, 0, 0], LAM)
        f = dominant_eigenvector(kl_decompose(np.outer(a, a.conj())))
        assert abs(np.vdot(f, a / np.sqrt(8))) == pytest.approx(1.0)

    def test_diag(self):
        f = dominant_eigenvector(kl_decompose(np.diag([2.0, 1.0]).astype(complex)))
        assert abs(f[0]) == pytest.approx(1.0)
        assert np.linalg.norm(f) == pytest.approx(1.0)


class TestZeroForcing:
    def test_single_user(self):
        h = steering_vector(ArrayGeometry(2, 2, LAM / 2, 0.0), [1, 0.5, 0], LAM)
        f = zero_forcing(h[:, None])
        assert abs(h.conj() @ f[:, 0]) == pytest.approx(np.linalg.norm(h))

    def test_orthogonal_columns(self):
        h = np.eye(4, dtype=complex)[:, :2] * 2
        f = zero_forcing(h)
        np.testing.assert_allclose(f, np.eye(4)[:, :2], atol=1e-15)

    def test_nulls(self):
        geom = ArrayGeometry(8, 8, LAM / 2, 3.0)
        rng = np.random.default_rng(7)
        pts = np.column_stack([rng.uniform(1, 3, 3), rng.uniform(-1, 1, 3), np.full(3, 1.5)])
        h = steering_vectors(geom, pts, LAM).T
        f = zero_forcing(h)
        np.testing.assert_allclose(np.linalg.norm(f, axis=0), 1.0, atol=1e-12)
        cross = np.abs(h.conj().T @ f)
        for k in range(3):
            for l in range(3):
                if l != k:
                    assert cross[l, k] <= 1e-8 * np.linalg.norm(h[:, l])

    def test_colliding_users(self):
        h = np.ones((4, 2), dtype=complex)
        with pytest.raises(Exception):
            zero_forcing(h)


class TestBeampattern:
    geom = ArrayGeometry(4, 8, LAM / 2, 3.0)

    def test_single_entry(self):
        f = np.zeros(32, dtype=complex)
        f[0] = 1
        assert beam_gain(self.geom, f, [2, 1, 1], LAM) == pytest.approx(1.0)

    def test_orthogonal_gives_zero(self):
        x = [2, 1, 1]
        a = steering_vector(self.geom, x, LAM)
        f = np.zeros(32, dtype=complex)
        f[0], f[1] = a[0], -a[1]
        assert beam_gain(self.geom, f / np.sqrt(2), x, LAM) == pytest.approx(0.0, abs=1e-24)

    def test_small_grid(self):
        f = np.full(32, 1 / np.sqrt(32), dtype=complex)
        g = beampattern_grid(self.geom, f, [1, -1, 1], [2, 1, 1], 2, LAM)
        assert g.gains.size == 4
        assert np.all((g.gains >= 0) & (g.gains <= 32))

    def test_focus_is_max(self):
        x = np.array([1.0, 0.0, 3.0])
        f = conjugate_beamforming(self.geom, x, LAM)
        lo, hi = slice_region(x, 0.2)
        g = beampattern_grid(self.geom, f, lo, hi, 41, LAM)
        assert g.gains.max() == pytest.approx(32.0, rel=1e-9)

    def test_mirror_symmetry(self):
        x = np.array([1.0, 0.0, 3.0])
        f = conjugate_beamforming(self.geom, x, LAM)
        lo, hi = slice_region(x, 0.3)
        g = beampattern_grid(self.geom, f, lo, hi, 31, LAM)
        np.testing.assert_allclose(g.gains, g.gains[:, ::-1, :], atol=1e-9)

    def test_bad_regions(self):
        f = np.ones(32) / np.sqrt(32)
        with pytest.raises(ValueError):
            beampattern_grid(self.geom, f, [1, 1, 1], [1, 1, 1], 5, LAM)
        with pytest.raises(ValueError):
            beampattern_grid(self.geom, f, [1, 1, 1], [0, 2, 2], 5, LAM)
        with pytest.raises(ValueError):
            beampattern_grid(self.geom, f, [1, 1, 1], [2, 2, 1], 1, LAM)
        with pytest.raises(ValueError):
            slice_region([0, 0, 0], 1.0, "diagonal")

    def test_csv(self, tmp_path):
        f = np.ones(32) / np.sqrt(32)
        g = beampattern_grid(self.geom, f, [1, -1, 1], [2, 1, 1], 3, LAM)
        p = tmp_path / "bp.csv"
        write_beampattern_csv(p, g)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,y,z,gain_linear,gain_db"
        assert len(lines) == 10
        row = [float(v) for v in lines[1].split(",")]
        assert row[4] == pytest.approx(10 * np.log10(row[3]))


def test_check_precoder():
    check_precoder(np.eye(3)[:, :2])
    with pytest.raises(ValueError):
        check_precoder(np.full((2, 1), 1.0))


def test_sphere_phase_invariance():
    rng = np.random.default_rng(9)
    us = [random_orthonormal(rng, 8, 2) for _ in range(3)]
    f = sphere_precode([basis_from(u) for u in us])
    # one common phase per basis; per-column phases move the equal-projection target
    rotated = [u * np.exp(1j * rng.uniform(0, 2 * np.pi)) for u in us]
    g = sphere_precode([basis_from(u) for u in rotated])
    for k in range(3):
        for l in range(3):
            if l != k:
                assert np.linalg.norm(us[l].conj().T @ f[:, k]) == pytest.approx(
                    np.linalg.norm(rotated[l].conj().T @ g[:, k]), abs=1e-6
                )
