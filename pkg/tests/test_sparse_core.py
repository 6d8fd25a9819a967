import numpy as np
import pytest
import scipy.linalg as sla

from schwarzkit.sparse_core import (
    IndexSet,
    MatrixMarketError,
    NotSPDError,
    SparseMatrix,
    StructuralError,
    cholesky_factor,
    extract_submatrix,
    from_triplets,
    generalized_sym_eig,
    read_matrix_market,
    truncated_pod,
    write_matrix_market,
)


class TestFromTriplets:
    def test_duplicate_triplets_sum(self):
        A = from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 1.0)])
        assert A.todense()[0, 0] == 2.0

    def test_empty_triplets(self):
        A = from_triplets(3, 3, [])
        assert A.nnz == 0
        assert A.todense().shape == (3, 3)

    def test_tridiagonal_row_counts(self):
        trip = []
        for i in range(3):
            trip.append((i, i, 2.0))
            if i > 0:
                trip.append((i, i - 1, -1.0))
                trip.append((i - 1, i, -1.0))
        A = from_triplets(3, 3, trip, symmetric=True)
        row1 = A.row_offsets[2] - A.row_offsets[1]
        assert row1 == 3

    def test_out_of_bounds_raises(self):
        with pytest.raises(StructuralError):
            from_triplets(2, 2, [(2, 0, 1.0)])

    def test_csr_invariants(self):
        A = from_triplets(4, 4, [(2, 3, 1.0), (2, 1, 2.0), (0, 0, 1.0)])
        assert np.all(np.diff(A.row_offsets) >= 0)
        for i in range(A.n_rows):
            cols = A.col_indices[A.row_offsets[i]:A.row_offsets[i + 1]]
            assert np.all(np.diff(cols) > 0)

    def test_symmetry_flag_validated(self):
        with pytest.raises(StructuralError):
            from_triplets(2, 2, [(0, 1, 1.0)], symmetric=True)


class TestExtractSubmatrix:
    def test_identity_extraction(self):
        rng = np.random.default_rng(3)
        dense = rng.standard_normal((5, 5))
        A = SparseMatrix.from_dense(dense)
        sub = extract_submatrix(A, range(5), range(5))
        np.testing.assert_allclose(sub.todense(), dense)

    def test_singleton(self):
        A = SparseMatrix.from_dense(np.diag([1.0, 5.0, 3.0]))
        sub = extract_submatrix(A, [1], [1])
        assert sub.todense()[0, 0] == 5.0

    def test_schur_recombination_energy(self):
        # split a small SPD grid matrix into (interior, boundary-ish) blocks;
        # the Schur quadratic form must equal the full energy of the
        # discretely harmonic extension
        rng = np.random.default_rng(7)
        n = 12
        M = rng.standard_normal((n, n))
        dense = M @ M.T + n * np.eye(n)
        A = SparseMatrix.from_dense(dense, symmetric=True)
        interior = IndexSet.make(range(0, 8))
        gamma = IndexSet.make(range(8, 12))
        A_ii = extract_submatrix(A, interior, interior).todense()
        A_ig = extract_submatrix(A, interior, gamma).todense()
        A_gg = extract_submatrix(A, gamma, gamma).todense()
        S = A_gg - A_ig.T @ np.linalg.solve(A_ii, A_ig)
        v_g = rng.standard_normal(4)
        v = np.concatenate([-np.linalg.solve(A_ii, A_ig @ v_g), v_g])
        np.testing.assert_allclose(v @ dense @ v, v_g @ S @ v_g, rtol=1e-10)

    def test_block_reassembly_identity(self):
        rng = np.random.default_rng(11)
        dense = rng.standard_normal((6, 6))
        dense = dense + dense.T
        A = SparseMatrix.from_dense(dense, symmetric=True)
        I = IndexSet.make([0, 2, 4])
        G = IndexSet.make([1, 3, 5])
        out = np.zeros((6, 6))
        for rows in (I, G):
            for cols in (I, G):
                block = extract_submatrix(A, rows, cols).todense()
                out[np.ix_(rows.indices, cols.indices)] = block
        np.testing.assert_allclose(out, dense)

    def test_invalid_index_set(self):
        A = SparseMatrix.from_dense(np.eye(3))
        with pytest.raises(StructuralError):
            extract_submatrix(A, [0, 5], [0])


class TestCholesky:
    def test_identity(self):
        A = SparseMatrix.from_dense(np.eye(4), symmetric=True)
        f = cholesky_factor(A)
        b = np.arange(4.0)
        np.testing.assert_allclose(f.solve(b), b)

    def test_diagonal(self):
        f = cholesky_factor(np.diag([2.0, 3.0]))
        np.testing.assert_allclose(f.solve(np.array([2.0, 3.0])), [1.0, 1.0])

    def test_random_spd_residual(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((50, 50))
        A = M.T @ M + np.eye(50)
        f = cholesky_factor(A)
        b = rng.standard_normal(50)
        x = f.solve(b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_solve_involution(self):
        rng = np.random.default_rng(1)
        M = rng.standard_normal((30, 30))
        A = M.T @ M + np.eye(30)
        f = cholesky_factor(A)
        x = rng.standard_normal(30)
        np.testing.assert_allclose(f.solve(A @ x), x, rtol=1e-10, atol=1e-12)

    def test_not_spd_reports_pivot(self):
        A = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(NotSPDError) as err:
            cholesky_factor(A)
        assert err.value.pivot >= 0

    def test_sparse_path_not_spd(self):
        import scipy.sparse as sp
        A = sp.diags([1.0] * 400 + [-1.0] + [1.0] * 99).tocsr()
        with pytest.raises(NotSPDError):
            cholesky_factor(SparseMatrix.from_scipy(A, symmetric=True))

    def test_sparse_path_solve(self):
        import scipy.sparse as sp
        n = 500
        A = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()
        f = cholesky_factor(SparseMatrix.from_scipy(A, symmetric=True))
        rng = np.random.default_rng(2)
        x = rng.standard_normal(n)
        np.testing.assert_allclose(f.solve(A @ x), x, rtol=1e-9, atol=1e-11)


class TestGeneralizedEig:
    def test_identity_pair(self):
        pairs = generalized_sym_eig(np.eye(3), np.eye(3))
        np.testing.assert_allclose(pairs.values, np.ones(3))

    def test_scaling_identity(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((6, 6))
        A = M.T @ M + np.eye(6)
        pairs = generalized_sym_eig(A, 2.0 * np.eye(6))
        np.testing.assert_allclose(pairs.values, np.linalg.eigvalsh(A) / 2.0,
                                   rtol=1e-12)

    def test_against_dense_oracle(self):
        # independent oracle: scipy.linalg.eigh on the same pencil
        rng = np.random.default_rng(9)
        M = rng.standard_normal((5, 5))
        A = M.T @ M
        N = rng.standard_normal((5, 5))
        B = N.T @ N + np.eye(5)
        pairs = generalized_sym_eig(A, B)
        expected = sla.eigh(A, B, eigvals_only=True)
        np.testing.assert_allclose(pairs.values, expected, rtol=1e-10, atol=1e-12)

    def test_residuals_and_b_orthonormality(self):
        rng = np.random.default_rng(12)
        M = rng.standard_normal((8, 8))
        A = M.T @ M
        N = rng.standard_normal((8, 8))
        B = N.T @ N + np.eye(8)
        pairs = generalized_sym_eig(A, B)
        V = pairs.vectors
        gram = V.T @ B @ V
        assert np.max(np.abs(gram - np.eye(8))) <= 1e-8
        for k, lam in enumerate(pairs.values):
            v = V[:, k]
            res = np.linalg.norm(A @ v - lam * (B @ v))
            denom = np.linalg.norm(A @ v) + abs(lam) * np.linalg.norm(B @ v)
            assert res <= 1e-8 * max(denom, 1e-30)

    def test_b_not_pd_raises(self):
        with pytest.raises(NotSPDError):
            generalized_sym_eig(np.eye(2), np.diag([1.0, 0.0]))


class TestTruncatedPod:
    def test_identical_columns_collapse(self):
        col = np.array([[1.0], [2.0], [3.0]])
        basis = truncated_pod(np.hstack([col, col]), 1e-5)
        assert basis.shape[1] == 1

    def test_orthonormal_input_preserved(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)))
        basis = truncated_pod(Q, 1e-5)
        assert basis.shape[1] == 3
        # same span: projector difference is zero
        np.testing.assert_allclose(basis @ basis.T, Q @ Q.T, atol=1e-12)

    def test_all_zero_input(self):
        basis = truncated_pod(np.zeros((4, 2)), 1e-5)
        assert basis.shape == (4, 0)

    def test_output_orthonormal(self):
        rng = np.random.default_rng(4)
        cols = rng.standard_normal((7, 5))
        basis = truncated_pod(cols, 1e-8)
        gram = basis.T @ basis
        assert np.max(np.abs(gram - np.eye(basis.shape[1]))) <= 1e-10

    def test_correlation_eigenvalue_cut(self):
        # a direction whose squared singular value falls below tol_o of the
        # leading one is dropped even though its sigma alone would survive
        u = np.zeros((5, 1)); u[0] = 1.0
        v = np.zeros((5, 1)); v[1] = 1.0
        cols = np.hstack([u, 2e-3 * v])
        assert truncated_pod(cols, 1e-5).shape[1] == 1
        assert truncated_pod(cols, 1e-7).shape[1] == 2

    def test_bad_tol(self):
        with pytest.raises(StructuralError):
            truncated_pod(np.eye(2), 0.0)


class TestMatrixMarket:
    def test_roundtrip_symmetric(self, tmp_path):
        rng = np.random.default_rng(8)
        M = rng.standard_normal((6, 6))
        dense = M + M.T
        dense[np.abs(dense) < 0.8] = 0.0
        A = SparseMatrix.from_dense(dense, symmetric=True)
        path = tmp_path / "a.mtx"
        write_matrix_market(A, path)
        B = read_matrix_market(path)
        assert B.symmetric
        np.testing.assert_allclose(B.todense(), A.todense(), atol=1e-15)

    def test_roundtrip_general(self, tmp_path):
        dense = np.array([[1.0, 2.0], [0.0, 3.0]])
        A = SparseMatrix.from_dense(dense)
        path = tmp_path / "g.mtx"
        write_matrix_market(A, path)
        np.testing.assert_allclose(read_matrix_market(path).todense(), dense)

    def test_malformed_reports_line(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text("%%MatrixMarket matrix coordinate real general\n"
                        "2 2 1\n"
                        "1 oops 3.0\n")
        with pytest.raises(MatrixMarketError) as err:
            read_matrix_market(path)
        assert err.value.line == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "h.mtx"
        path.write_text("%%NotMatrixMarket\n1 1 0\n")
        with pytest.raises(MatrixMarketError) as err:
            read_matrix_market(path)
        assert err.value.line == 1


class TestIndexSet:
    def test_make_sorts_and_dedups(self):
        s = IndexSet.make([3, 1, 2, 1])
        np.testing.assert_array_equal(s.indices, [1, 2, 3])

    def test_rejects_unsorted(self):
        with pytest.raises(StructuralError):
            IndexSet(np.array([2, 1]))

    def test_positions_of(self):
        s = IndexSet.make([2, 5, 7, 9])
        sub = IndexSet.make([5, 9])
        np.testing.assert_array_equal(s.positions_of(sub), [1, 3])

    def test_positions_of_missing(self):
        s = IndexSet.make([1, 2])
        with pytest.raises(StructuralError):
            s.positions_of(IndexSet.make([3]))
