"""Tests for the ring format: slices, entries, reconstruction, subchain oracle."""

import itertools

import numpy as np
import pytest

from trcomplete.tensors import unfold
from trcomplete.tr import (
    TangentVector,
    factor_inner,
    factor_norm,
    make_point,
    make_tangent,
    point_as_tangent,
    point_axpy,
    slice_matrix,
    subchain_dense,
    tangent_combine,
    tangent_scale,
    tr_entry,
    tr_full,
)


def random_point(dims, ranks, seed=0):
    rng = np.random.default_rng(seed)
    d = len(dims)
    factors = [rng.standard_normal((dims[k], ranks[k] * ranks[(k + 1) % d]))
               for k in range(d)]
    return make_point(dims, ranks, factors)


class TestSlice:
    def test_rank_one_slice_is_scalar_entry(self):
        p = random_point((3, 3, 3), (1, 1, 1), seed=1)
        for k in range(1, 4):
            for i in range(1, 4):
                s = slice_matrix(p, k, i)
                assert s.shape == (1, 1)
                assert s[0, 0] == p.factors[k - 1][i - 1, 0]

    def test_layout_example(self):
        # row [1 2 3 4] vectorizes the slice column-major: [[1,3],[2,4]]
        p = make_point((1, 1, 1), (2, 2, 2),
                       [np.array([[1.0, 2.0, 3.0, 4.0]])] * 3)
        np.testing.assert_array_equal(slice_matrix(p, 1, 1), [[1.0, 3.0], [2.0, 4.0]])

    def test_zero_factor(self):
        p = make_point((2, 2, 2), (2, 2, 2), [np.zeros((2, 4))] * 3)
        assert not slice_matrix(p, 2, 1).any()

    def test_index_out_of_range(self):
        p = random_point((2, 2, 2), (1, 1, 1))
        with pytest.raises(IndexError):
            slice_matrix(p, 1, 3)


class TestEntry:
    def test_rank_one_product(self):
        p = make_point((1, 1, 1), (1, 1, 1),
                       [np.array([[2.0]])] * 3)
        assert tr_entry(p, (1, 1, 1)) == 8.0

    def test_all_ones_rank_one(self):
        p = make_point((2, 3, 4), (1, 1, 1),
                       [np.ones((2, 1)), np.ones((3, 1)), np.ones((4, 1))])
        for idx in itertools.product(range(1, 3), range(1, 4), range(1, 5)):
            assert tr_entry(p, idx) == 1.0

    def test_trace_of_slice_product(self):
        p = random_point((2, 2, 2), (2, 3, 2), seed=2)
        for idx in itertools.product(range(1, 3), repeat=3):
            m = slice_matrix(p, 1, idx[0]) @ slice_matrix(p, 2, idx[1]) @ slice_matrix(p, 3, idx[2])
            assert tr_entry(p, idx) == pytest.approx(np.trace(m), abs=1e-13)

    def test_cyclic_relabeling_invariance(self):
        p = random_point((2, 3, 4), (2, 3, 2), seed=3)
        shifted = make_point((3, 4, 2), (3, 2, 2),
                             (p.factors[1], p.factors[2], p.factors[0]))
        for idx in itertools.product(range(1, 3), range(1, 4), range(1, 5)):
            a = tr_entry(p, idx)
            b = tr_entry(shifted, (idx[1], idx[2], idx[0]))
            assert a == pytest.approx(b, abs=1e-13 * (1 + abs(a)))


class TestFullReconstruction:
    def test_rank_one_all_ones(self):
        p = make_point((2, 2, 3), (1, 1, 1),
                       [np.ones((2, 1)), np.ones((2, 1)), np.ones((3, 1))])
        np.testing.assert_array_equal(tr_full(p), np.ones((2, 2, 3)))

    def test_scalar_product_case(self):
        p = make_point((1, 1, 1), (1, 1, 1),
                       [np.array([[2.0]]), np.array([[3.0]]), np.array([[4.0]])])
        np.testing.assert_array_equal(tr_full(p), np.full((1, 1, 1), 24.0))

    def test_entrywise_equals_trace_evaluation(self):
        p = random_point((2, 3, 2), (2, 2, 3), seed=4)
        dense = tr_full(p)
        for idx in itertools.product(range(1, 3), range(1, 4), range(1, 3)):
            assert dense[tuple(i - 1 for i in idx)] == pytest.approx(
                tr_entry(p, idx), abs=1e-13)

    def test_memory_guard(self):
        p = random_point((2, 2, 2), (1, 1, 1))
        with pytest.raises(MemoryError):
            tr_full(p, guard=4)

    def test_rank_one_outer_product_exact(self):
        rng = np.random.default_rng(5)
        vecs = [rng.standard_normal((n, 1)) for n in (3, 4, 2)]
        p = make_point((3, 4, 2), (1, 1, 1), vecs)
        expect = np.einsum("i,j,k->ijk", vecs[0][:, 0], vecs[1][:, 0], vecs[2][:, 0])
        np.testing.assert_array_equal(tr_full(p), expect)


class TestSubchainOracle:
    def test_rank_one_all_ones(self):
        p = make_point((2, 2, 2), (1, 1, 1), [np.ones((2, 1))] * 3)
        for k in range(1, 4):
            np.testing.assert_array_equal(subchain_dense(p, k), np.ones((4, 1)))

    def test_rank_one_products(self):
        p = random_point((2, 3, 2), (1, 1, 1), seed=6)
        sub = subchain_dense(p, 2)
        # column vector of products of the other modes' scalars
        w1, w3 = p.factors[0][:, 0], p.factors[2][:, 0]
        expect = np.array([w3[i3] * w1[i1] for i3 in range(2) for i1 in range(2)])
        np.testing.assert_allclose(sub[:, 0], expect, atol=1e-15)

    @pytest.mark.parametrize("dims,ranks", [
        ((2, 2, 2), (2, 2, 2)),
        ((3, 2, 4), (2, 3, 2)),
        ((2, 3, 2, 3), (2, 2, 3, 1)),
    ])
    def test_unfolding_identity(self, dims, ranks):
        p = random_point(dims, ranks, seed=hash((dims, ranks)) % 2**32)
        dense = tr_full(p)
        scale = np.linalg.norm(dense)
        for k in range(1, len(dims) + 1):
            lhs = unfold(dense, k)
            rhs = p.factors[k - 1] @ subchain_dense(p, k).T
            assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale

    def test_memory_guard(self):
        p = random_point((4, 4, 4), (2, 2, 2))
        with pytest.raises(MemoryError):
            subchain_dense(p, 1, guard=8)


class TestPointArithmetic:
    def test_axpy_zero_step(self):
        p = random_point((2, 2, 2), (2, 2, 2), seed=7)
        v = make_tangent(p.dims, p.ranks,
                         [np.ones_like(w) for w in p.factors])
        q = point_axpy(p, 0.0, v)
        for a, b in zip(q.factors, p.factors):
            np.testing.assert_array_equal(a, b)

    def test_axpy_cancels_point(self):
        p = random_point((2, 2, 2), (2, 2, 2), seed=8)
        v = tangent_scale(-0.5, point_as_tangent(p))
        q = point_axpy(p, 2.0, v)
        for w in q.factors:
            np.testing.assert_array_equal(w, np.zeros_like(w))

    def test_norm_flat_oracle(self):
        p = random_point((2, 3, 2), (2, 2, 2), seed=9)
        flat = np.concatenate([w.ravel() for w in p.factors])
        assert factor_norm(p) == pytest.approx(np.linalg.norm(flat), abs=1e-14)
        assert factor_inner(p, p) == pytest.approx(float(flat @ flat), abs=1e-14)

    def test_combine_and_scale(self):
        p = random_point((2, 2, 2), (1, 2, 1), seed=10)
        u = point_as_tangent(p)
        w = tangent_combine(2.0, u, -1.0, u)
        for a, b in zip(w.components, u.components):
            np.testing.assert_allclose(a, b, atol=1e-15)

    def test_shape_mismatch_rejected(self):
        p = random_point((2, 2, 2), (1, 1, 1))
        v = make_tangent((2, 2, 2), (2, 2, 2), [np.zeros((2, 4))] * 3)
        with pytest.raises(ValueError):
            point_axpy(p, 1.0, v)

    def test_tangent_is_distinct_type(self):
        p = random_point((2, 2, 2), (1, 1, 1))
        assert isinstance(point_as_tangent(p), TangentVector)


def test_make_point_validates_factors():
    with pytest.raises(ValueError):
        make_point((2, 2, 2), (2, 2, 2), [np.zeros((2, 4)), np.zeros((2, 3)), np.zeros((2, 4))])
    with pytest.raises(ValueError):
        make_point((2, 2, 2), (1, 1, 1), [np.full((2, 1), np.nan)] * 3)
