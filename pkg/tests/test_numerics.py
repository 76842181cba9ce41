import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import hadamard

from radar_backscatter.numerics import (
    InvalidInputError,
    RankDeficiencyError,
    RankPolicy,
    exact_rank,
    null_space_basis,
    numerical_rank,
    regularized_ls_solve,
)

from conftest import SHARED_P1, SHARED_P2, crandn

EXACT = RankPolicy(exact_mode=True)


def with_ones(P):
    return np.hstack([P, np.ones((P.shape[0], 1))])


class TestRankPolicy:
    def test_defaults(self):
        p = RankPolicy()
        assert p.relative_tolerance == 1e-9
        assert not p.exact_mode

    @pytest.mark.parametrize("tol", [0.0, -1e-3])
    def test_rejects_nonpositive_tolerance(self, tol):
        with pytest.raises(InvalidInputError):
            RankPolicy(relative_tolerance=tol)


class TestNumericalRank:
    def test_hadamard_full_rank(self):
        assert numerical_rank(hadamard(4)) == 4
        assert numerical_rank(hadamard(4), EXACT) == 4

    def test_stacked_two_subchannel_pilots(self):
        stacked = np.vstack([with_ones(SHARED_P1), with_ones(SHARED_P2)])
        assert stacked.shape == (5, 4)
        assert numerical_rank(stacked) == 4
        assert numerical_rank(stacked, EXACT) == 4

    def test_zero_matrix(self):
        assert numerical_rank(np.zeros((3, 3))) == 0
        assert numerical_rank(np.zeros((3, 3)), EXACT) == 0

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_rejected(self, bad):
        A = np.eye(3)
        A[1, 2] = bad
        with pytest.raises(InvalidInputError):
            numerical_rank(A)
        with pytest.raises(InvalidInputError):
            null_space_basis(A)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            numerical_rank(np.zeros((0, 3)))

    def test_exact_mode_needs_gaussian_integers(self):
        with pytest.raises(InvalidInputError):
            numerical_rank(np.array([[0.5, 1.0]]), EXACT)

    def test_exact_rank_gaussian_integers(self):
        # rank-1 over C: second row is i times the first
        A = np.array([[1, 1j, -1], [1j, -1, -1j]])
        assert exact_rank(A) == 1
        assert numerical_rank(A) == 1

    def test_invariant_under_permutation_and_unitary_scaling(self, rng):
        A = crandn(rng, 6, 4) @ crandn(rng, 4, 5)  # rank 4
        r = numerical_rank(A)
        assert r == 4
        perm_rows, perm_cols = rng.permutation(6), rng.permutation(5)
        assert numerical_rank(A[perm_rows][:, perm_cols]) == r
        assert numerical_rank(np.exp(0.7j) * A) == r

    def test_exact_and_tolerance_modes_agree_on_sign_matrices(self, rng):
        for _ in range(300):
            m, n = rng.integers(1, 13, size=2)
            A = rng.choice([-1.0, 1.0], size=(m, n))
            if rng.random() < 0.5 and m > 1:
                A[-1] = A[0]  # force some deficiency
            assert numerical_rank(A) == numerical_rank(A, EXACT)


class TestNullSpace:
    def test_identity_trivial(self):
        assert null_space_basis(np.eye(3)).shape == (3, 0)

    def test_second_pilot_block(self):
        B = null_space_basis(with_ones(SHARED_P2))
        assert B.shape == (4, 2)
        assert np.allclose(with_ones(SHARED_P2) @ B, 0, atol=1e-12)
        assert np.allclose(B.conj().T @ B, np.eye(2), atol=1e-12)

    def test_single_row(self):
        B = null_space_basis(np.array([[1.0, 1.0]]))
        assert B.shape == (2, 1)
        v = B[:, 0] / B[0, 0] * abs(B[0, 0])  # remove the arbitrary phase
        assert np.allclose(v, np.array([1, -1]) / np.sqrt(2))

    def test_rank_nullity_identity(self, rng):
        for _ in range(1000):
            m, n = rng.integers(1, 9, size=2)
            r = rng.integers(0, min(m, n) + 1)
            A = crandn(rng, m, r) @ crandn(rng, r, n)
            assert numerical_rank(A) + null_space_basis(A).shape[1] == n


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 6),
    st.integers(1, 6),
    st.integers(0, 2**31 - 1),
)
def test_rank_nullity_property(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.choice([-1.0, 0.0, 1.0], size=(m, n)) + 1j * rng.choice([-1.0, 0.0, 1.0], size=(m, n))
    for policy in (RankPolicy(), EXACT):
        assert numerical_rank(A, policy) + null_space_basis(A, policy).shape[1] == n


class TestRegularizedLS:
    def test_identity_no_regularization(self, rng):
        Y = crandn(rng, 4, 3)
        assert np.allclose(regularized_ls_solve(np.eye(4), Y, 0.0), Y)

    def test_identity_unit_regularization(self):
        assert np.allclose(regularized_ls_solve(np.eye(2), np.eye(2), 1.0), 0.5 * np.eye(2))

    def test_stationarity(self, rng):
        T, Y = crandn(rng, 8, 3), crandn(rng, 8, 5)
        V = regularized_ls_solve(T, Y, 0.1)
        grad = T.conj().T @ (T @ V - Y) + 0.1 * V
        assert np.linalg.norm(grad) <= 1e-10 * (1 + np.linalg.norm(Y))

    def test_vector_rhs(self, rng):
        T, y = crandn(rng, 6, 2), crandn(rng, 6)
        v = regularized_ls_solve(T, y, 0.5)
        assert v.shape == (2,)
        assert np.allclose(v, regularized_ls_solve(T, y[:, None], 0.5)[:, 0])

    def test_singular_without_regularization(self):
        T = np.ones((4, 2))
        with pytest.raises(RankDeficiencyError):
            regularized_ls_solve(T, np.ones((4, 1)), 0.0)

    def test_singular_is_fine_with_regularization(self):
        V = regularized_ls_solve(np.ones((4, 2)), np.ones((4, 1)), 1.0)
        assert np.all(np.isfinite(V))

    @pytest.mark.parametrize("lam", [-0.1, np.nan])
    def test_bad_lambda(self, lam):
        with pytest.raises(InvalidInputError):
            regularized_ls_solve(np.eye(2), np.eye(2), lam)

    def test_row_mismatch(self):
        with pytest.raises(InvalidInputError):
            regularized_ls_solve(np.eye(3), np.eye(2), 0.1)

    def test_random_stationarity_property(self, rng):
        for _ in range(200):
            L, r, K = rng.integers(1, 10), rng.integers(1, 5), rng.integers(1, 6)
            lam = float(rng.uniform(0.01, 5))
            T, Y = crandn(rng, L, r), crandn(rng, L, K)
            V = regularized_ls_solve(T, Y, lam)
            resid = T.conj().T @ (Y - T @ V) - lam * V
            assert np.linalg.norm(resid) <= 1e-9 * (1 + np.linalg.norm(Y))
