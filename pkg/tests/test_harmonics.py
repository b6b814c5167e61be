import numpy as np
import pytest

from sphgp import harmonics as H
from sphgp.special_math import GegenbauerParams, gegenbauer, gegenbauer_at_one, num_harmonics

import oracles
from conftest import random_sphere


def addition_rhs(ell, dim, t):
    alpha = (dim - 2) / 2.0
    return H.addition_scale(ell, dim) * gegenbauer(GegenbauerParams(alpha, ell), t)


class TestFundamentalSets:
    def test_full_set_low_dim(self):
        fs = H.build_fundamental_set(1, 3, 3, seed=0)
        assert fs.num_phases == 3 and fs.is_full
        assert np.isfinite(fs.cond)
        # Cholesky succeeded, so the Gram has full rank 3
        assert np.all(np.diag(fs.gram_chol) > 0)

    def test_single_phase_gram_is_scalar_count(self):
        # Gram of one direction is the addition-theorem value at t=1: N(1,3)=3
        fs = H.build_fundamental_set(1, 3, 1, seed=0)
        assert fs.gram_chol.shape == (1, 1)
        assert fs.gram_chol[0, 0] ** 2 == pytest.approx(3.0, rel=1e-14)

    def test_invalid_phase_counts(self):
        with pytest.raises(ValueError):
            H.build_fundamental_set(1, 3, 0)
        with pytest.raises(ValueError):
            H.build_fundamental_set(1, 3, 4)  # N(1,3) = 3
        with pytest.raises(ValueError):
            H.build_fundamental_set(0, 3, 1)

    def test_rows_are_unit(self):
        fs = H.build_fundamental_set(3, 5, 8, seed=2)
        assert np.allclose(np.linalg.norm(fs.directions, axis=1), 1.0, atol=1e-12)

    def test_conditioning_below_limit(self):
        for ell, dim in ((2, 3), (4, 5), (2, 8)):
            fs = H.build_fundamental_set(ell, dim, num_harmonics(ell, dim), seed=0)
            assert fs.cond < 1e8


class TestReorthogonalize:
    def test_idempotent_on_clean_sets(self):
        fs = H.build_fundamental_set(4, 5, 10, seed=0)
        again = H.reorthogonalize(fs)
        assert np.max(np.abs(again.directions - fs.directions)) <= 1e-14
        assert np.max(np.abs(again.gram_chol - fs.gram_chol)) <= 1e-14
        assert again.jitter == 0.0

    def test_scaled_rows_equal_unit_rows(self):
        fs = H.build_fundamental_set(2, 4, 5, seed=1)
        scaled = H.FundamentalSet(
            frequency=2,
            directions=2.0 * fs.directions,
            gram_chol=fs.gram_chol,
            cond=fs.cond,
        )
        fixed = H.reorthogonalize(scaled)
        assert np.allclose(fixed.directions, fs.directions, atol=1e-15)
        assert np.allclose(fixed.gram_chol, fs.gram_chol, atol=1e-12)

    def test_nearly_coincident_pair_is_near_singular(self):
        # inner product 1 - 1e-12: still PD in float64, but conditioned ~1e12
        v1 = np.array([1.0, 0.0, 0.0])
        eps = 1e-12
        v2 = np.array([1.0 - eps, np.sqrt(2 * eps - eps * eps), 0.0])
        v2 /= np.linalg.norm(v2)
        gram = H.fundamental_gram(np.stack([v1, v2]), 1, 3)
        assert H._condition_number(gram) > 1e10

    def test_duplicate_directions_take_jitter(self, caplog):
        v = np.array([[0.6, 0.8, 0.0], [0.6, 0.8, 0.0]])
        fs = H.FundamentalSet(frequency=1, directions=v, gram_chol=np.eye(2), cond=1.0)
        with caplog.at_level("WARNING"):
            fixed = H.reorthogonalize(fs)
        assert fixed.jitter > 0
        assert any("jitter" in rec.message for rec in caplog.records)

    def test_unrecoverable_failure_exhausts_ladder(self):
        # coincident points give a PSD Gram any jitter rescues; the ladder
        # only gives up on a genuinely indefinite matrix
        with pytest.raises(np.linalg.LinAlgError, match="collapsed"):
            H._chol_with_jitter(np.diag([1.0, -1.0]))


class TestFeatures:
    def test_constant_block_is_one(self):
        basis = H.build_basis(3, 2, seed=0)
        rng = np.random.default_rng(0)
        X = random_sphere(rng, 50, 3)
        F = H.features(basis, X)
        assert np.all(F[:, 0] == 1.0)

    def test_single_phase_feature_at_its_direction(self):
        fs = H.build_fundamental_set(1, 3, 1, seed=0)
        basis = H.HarmonicBasis(dim=3, max_frequency=1, sets=(fs,))
        f = H.features(basis, fs.directions[0])
        assert f == pytest.approx([1.0, np.sqrt(3.0)], rel=1e-12)

    def test_full_set_reproduces_legendre_d3(self):
        basis = H.build_basis(3, 2, seed=0)
        rng = np.random.default_rng(1)
        X, Y = random_sphere(rng, 40, 3), random_sphere(rng, 40, 3)
        FX, FY = H.features(basis, X), H.features(basis, Y)
        t = np.sum(X * Y, axis=1)
        for ell, cols, _ in basis.blocks():
            if ell == 0:
                continue
            lhs = np.sum(FX[:, cols] * FY[:, cols], axis=1)
            rhs = (2 * ell + 1) * oracles.legendre_value(ell, t)
            assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (2 * ell + 1)

    @pytest.mark.parametrize("dim,lmax", [(3, 5), (5, 4), (8, 3)])
    def test_addition_theorem_full_sets(self, dim, lmax):
        basis = H.build_basis(dim, lmax, seed=0)
        rng = np.random.default_rng(dim)
        X, Y = random_sphere(rng, 30, dim), random_sphere(rng, 30, dim)
        FX, FY = H.features(basis, X), H.features(basis, Y)
        t = np.sum(X * Y, axis=1)
        for ell, cols, _ in basis.blocks():
            if ell == 0:
                continue
            lhs = np.sum(FX[:, cols] * FY[:, cols], axis=1)
            rhs = addition_rhs(ell, dim, t)
            ref = H.addition_scale(ell, dim) * gegenbauer_at_one((dim - 2) / 2, ell)
            assert np.max(np.abs(lhs - rhs)) <= 1e-8 * ref

    def test_exact_orthonormality_via_cholesky(self):
        fs = H.build_fundamental_set(4, 5, 10, seed=0)
        gram = H.fundamental_gram(fs.directions, 4, 5)
        L = fs.gram_chol
        ident = np.linalg.solve(L, np.linalg.solve(L, gram).T)
        assert np.max(np.abs(ident - np.eye(10))) <= 1e-10

    def test_dimension_mismatch(self):
        basis = H.build_basis(3, 1, seed=0)
        with pytest.raises(ValueError):
            H.features(basis, np.ones(4) / 2.0)

    def test_sphere_point_input(self):
        basis = H.build_basis(3, 1, seed=0)
        p = H.SpherePoint(coords=np.array([0.0, 0.0, 1.0]), stored_norm=2.5)
        f = H.features(basis, p)
        assert f.shape == (basis.num_features,)


class TestMonteCarloGram:
    def test_constant_only(self):
        basis = H.HarmonicBasis(dim=3, max_frequency=0, sets=())
        gram = H.monte_carlo_gram(basis, 100, seed=0)
        assert gram == pytest.approx(np.ones((1, 1)))

    def test_full_first_frequency_identity(self):
        basis = H.build_basis(3, 1, seed=0)
        gram = H.monte_carlo_gram(basis, 1_000_000, seed=1)
        assert np.max(np.abs(gram - np.eye(basis.num_features))) <= 5e-3

    def test_truncated_sets_still_orthonormal(self):
        basis = H.build_basis(4, 3, phase_limit=4, seed=0)
        gram = H.monte_carlo_gram(basis, 400_000, seed=2)
        assert np.max(np.abs(gram - np.eye(basis.num_features))) <= 5.0 / np.sqrt(400_000) * 3

    def test_invalid_sample_count(self):
        basis = H.build_basis(3, 1, seed=0)
        with pytest.raises(ValueError):
            H.monte_carlo_gram(basis, 0)


class TestBasisStructure:
    def test_counts_and_frequencies(self):
        basis = H.build_basis(4, 3, phase_limit=5, seed=0)
        assert basis.num_features == 1 + sum(
            min(5, num_harmonics(ell, 4)) for ell in (1, 2, 3)
        )
        freqs = basis.feature_frequencies()
        assert freqs[0] == 0
        assert np.all(np.diff(freqs) >= 0)

    def test_zero_count_skips_frequency(self):
        basis = H.build_basis(3, 3, counts={1: 3, 2: 0, 3: 2}, seed=0)
        assert [fs.frequency for fs in basis.sets] == [1, 3]

    def test_duplicate_frequency_rejected(self):
        fs = H.build_fundamental_set(1, 3, 2, seed=0)
        with pytest.raises(ValueError):
            H.HarmonicBasis(dim=3, max_frequency=1, sets=(fs, fs))

    def test_serialization_round_trip(self):
        basis = H.build_basis(4, 3, phase_limit=4, seed=0)
        arrays = H.basis_to_arrays(basis)
        rebuilt = H.basis_from_arrays(arrays)
        rng = np.random.default_rng(3)
        X = random_sphere(rng, 20, 4)
        assert np.array_equal(H.features(basis, X), H.features(rebuilt, X))

    def test_serialization_rejects_unknown_version(self):
        basis = H.build_basis(3, 1, seed=0)
        arrays = H.basis_to_arrays(basis)
        arrays["basis_version"] = np.asarray(99)
        with pytest.raises(ValueError):
            H.basis_from_arrays(arrays)


class TestSpherePoint:
    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError):
            H.SpherePoint(coords=np.array([1.0, 1.0]))

    def test_norm_tolerance(self):
        H.SpherePoint(coords=np.array([1.0 + 5e-13, 0.0, 0.0]))
