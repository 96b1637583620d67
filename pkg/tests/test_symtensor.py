import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wienerchaos.symtensor import (
    DenseTensor,
    ShapeError,
    SymmetricTensor,
    basis_vector,
    contract,
    dump_tensor,
    inner_product,
    load_tensor,
    outer,
    perm_count,
    random_symmetric,
    scale_add,
    symmetrize,
    symmetrize_axes,
    tensor_from_dict,
    tensor_power,
    tensor_to_dict,
)


def full_entry(f, idx):
    """Full-tensor entry read through the value convention."""
    return f.entries.get(tuple(sorted(idx)), 0.0)


def naive_contract(f, g, i):
    m = f.dim
    p, q = f.order, g.order
    out = np.zeros((m,) * (p + q - 2 * i))
    for t in itertools.product(range(1, m + 1), repeat=p - i):
        for s in itertools.product(range(1, m + 1), repeat=q - i):
            total = 0.0
            for u in itertools.product(range(1, m + 1), repeat=i):
                total += full_entry(f, t + u) * full_entry(g, s + u)
            out[tuple(k - 1 for k in t + s)] = total
    return out


def brute_symmetrize(arr):
    perms = list(itertools.permutations(range(arr.ndim)))
    return sum(np.transpose(arr, p) for p in perms) / len(perms)


sym12 = SymmetricTensor(2, 2, {(1, 2): 0.5})
e11 = SymmetricTensor(2, 2, {(1, 1): 1.0})


class TestPermCount:
    @pytest.mark.parametrize("alpha,expected", [((1, 2), 2), ((1, 1), 1), ((1, 1, 2), 3), ((), 1)])
    def test_examples(self, alpha, expected):
        assert perm_count(alpha) == expected

    @given(st.lists(st.integers(1, 4), max_size=6))
    def test_matches_enumeration(self, alpha):
        assert perm_count(tuple(sorted(alpha))) == len(set(itertools.permutations(alpha)))


class TestSymmetricTensor:
    def test_rejects_unsorted(self):
        with pytest.raises(ShapeError):
            SymmetricTensor(2, 2, {(2, 1): 1.0})

    def test_rejects_out_of_range(self):
        with pytest.raises(ShapeError):
            SymmetricTensor(2, 1, {(3,): 1.0})
        with pytest.raises(ShapeError):
            SymmetricTensor(2, 1, {(0,): 1.0})

    def test_rejects_wrong_length_and_nonfinite(self):
        with pytest.raises(ShapeError):
            SymmetricTensor(2, 2, {(1,): 1.0})
        with pytest.raises(ValueError):
            SymmetricTensor(2, 1, {(1,): float("nan")})

    def test_order_zero_is_scalar(self):
        assert SymmetricTensor.zeros(3, 0).value == 0.0
        assert SymmetricTensor.scalar(2.5, 3).value == 2.5

    def test_entries_immutable(self):
        with pytest.raises(TypeError):
            sym12.entries[(1, 1)] = 3.0

    def test_dense_expansion_follows_value_convention(self):
        d = sym12.to_dense()
        assert d[0, 1] == d[1, 0] == 0.5
        assert d[0, 0] == d[1, 1] == 0.0


class TestInnerProduct:
    def test_examples(self):
        assert inner_product(e11, e11) == 1.0
        assert inner_product(sym12, sym12) == pytest.approx(0.5, abs=1e-15)
        a, b = SymmetricTensor.scalar(3.0, 2), SymmetricTensor.scalar(-2.0, 2)
        assert inner_product(a, b) == -6.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            inner_product(e11, basis_vector(1, 2))
        with pytest.raises(ShapeError):
            inner_product(e11, SymmetricTensor(3, 2, {}))

    @pytest.mark.parametrize("m,p", [(1, 3), (2, 2), (3, 3), (4, 2), (3, 4)])
    def test_equals_frobenius(self, rng, m, p):
        f, g = random_symmetric(rng, m, p), random_symmetric(rng, m, p)
        frob = float(np.sum(f.to_dense() * g.to_dense()))
        assert inner_product(f, g) == pytest.approx(frob, rel=1e-12, abs=1e-12)

    @given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
    def test_symmetric_and_positive(self, m, p, seed):
        rng = np.random.default_rng(seed)
        f, g = random_symmetric(rng, m, p), random_symmetric(rng, m, p)
        assert inner_product(f, g) == pytest.approx(inner_product(g, f), rel=1e-14, abs=1e-14)
        assert inner_product(f, f) >= 0.0


class TestOuterContract:
    def test_outer_examples(self):
        e1 = basis_vector(1, 2)
        o = outer(e1, e1).array
        assert o[0, 0] == 1.0 and o.sum() == 1.0
        two = SymmetricTensor.scalar(2.0, 2)
        np.testing.assert_array_equal(outer(two, sym12).array, 2 * sym12.to_dense())
        t = outer(sym12, e1).array
        expected = np.zeros((2, 2, 2))
        expected[0, 1, 0] = expected[1, 0, 0] = 0.5
        np.testing.assert_array_equal(t, expected)

    def test_contract_examples(self):
        full = contract(e11, e11, 2)
        assert full.order == 0 and float(full.array) == 1.0
        c = contract(e11, sym12, 1).array
        expected = np.zeros((2, 2))
        expected[0, 1] = 0.5
        np.testing.assert_array_equal(c, expected)
        np.testing.assert_array_equal(contract(e11, sym12, 0).array, outer(e11, sym12).array)

    def test_contract_errors(self):
        with pytest.raises(ShapeError):
            contract(e11, basis_vector(1, 2), 2)
        with pytest.raises(ShapeError):
            contract(e11, SymmetricTensor(3, 2, {}), 1)

    @pytest.mark.parametrize("m", [1, 2, 3, 4])
    @pytest.mark.parametrize("p,q", [(p, q) for p in range(5) for q in range(p, 5)])
    def test_contract_matches_naive_loops(self, rng, m, p, q):
        f, g = random_symmetric(rng, m, p), random_symmetric(rng, m, q)
        for i in range(min(p, q) + 1):
            np.testing.assert_allclose(contract(f, g, i).array, naive_contract(f, g, i),
                                       rtol=0, atol=1e-12)

    def test_full_contraction_is_inner_product(self, rng):
        f, g = random_symmetric(rng, 3, 3), random_symmetric(rng, 3, 3)
        assert float(contract(f, g, 3).array) == pytest.approx(inner_product(f, g), abs=1e-12)


class TestSymmetrize:
    def test_examples(self):
        arr = np.zeros((2, 2))
        arr[0, 1] = 0.5
        s = symmetrize(DenseTensor(2, arr))
        assert dict(s.entries) == {(1, 2): 0.25}
        v = symmetrize(DenseTensor(3, np.array([1.0, 0.0, -2.0])))
        assert dict(v.entries) == {(1,): 1.0, (3,): -2.0}
        assert symmetrize(DenseTensor(2, np.array(4.0))).value == 4.0

    def test_symmetric_input_unchanged(self, rng):
        f = random_symmetric(rng, 3, 3)
        back = symmetrize(DenseTensor(3, f.to_dense()))
        for key, v in f.entries.items():
            assert back[key] == pytest.approx(v, rel=1e-15, abs=1e-16)

    @pytest.mark.parametrize("m,p", [(2, 3), (3, 3), (2, 5), (4, 2)])
    def test_matches_permutation_average(self, rng, m, p):
        arr = rng.standard_normal((m,) * p)
        np.testing.assert_allclose(symmetrize(DenseTensor(m, arr)).to_dense(),
                                   brute_symmetrize(arr), atol=1e-12)

    def test_idempotent(self, rng):
        arr = rng.standard_normal((3,) * 4)
        once = symmetrize(DenseTensor(3, arr))
        twice = symmetrize(DenseTensor(3, once.to_dense()))
        np.testing.assert_allclose(twice.to_dense(), once.to_dense(), rtol=0, atol=1e-12)

    def test_symmetrize_axes_subset(self, rng):
        arr = rng.standard_normal((3, 3, 3, 3))
        out = symmetrize_axes(arr, [1, 3])
        expected = (arr + np.transpose(arr, (0, 3, 2, 1))) / 2
        np.testing.assert_allclose(out, expected, atol=1e-14)

    @given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
    def test_symmetrized_outer_commutes(self, m, p, q, seed):
        rng = np.random.default_rng(seed)
        f, g = random_symmetric(rng, m, p), random_symmetric(rng, m, q)
        fg = symmetrize(outer(f, g)).to_dense()
        gf = symmetrize(outer(g, f)).to_dense()
        np.testing.assert_allclose(fg, gf, atol=1e-12)


class TestScaleAdd:
    def test_examples(self, rng):
        f, g = random_symmetric(rng, 3, 2), random_symmetric(rng, 3, 2)
        assert dict(scale_add(1, f, 0, g).entries) == dict(f.entries)
        assert scale_add(1, f, -1, f).is_zero()
        e1, e2 = basis_vector(1, 2), basis_vector(2, 2)
        np.testing.assert_array_equal(scale_add(2, e1, 3, e2).to_dense(), [2.0, 3.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            scale_add(1, e11, 1, basis_vector(1, 2))


def test_tensor_power_values():
    h = SymmetricTensor(2, 1, {(1,): 2.0, (2,): -1.0})
    h3 = tensor_power(h, 3)
    dense = np.einsum("i,j,k->ijk", [2.0, -1.0], [2.0, -1.0], [2.0, -1.0])
    np.testing.assert_allclose(h3.to_dense(), dense)
    assert tensor_power(h, 0).value == 1.0


class TestJson:
    def test_round_trip(self, rng, tmp_path):
        f = random_symmetric(rng, 3, 3)
        path = tmp_path / "f.json"
        dump_tensor(f, path)
        assert load_tensor(path) == f
        data = json.loads(path.read_text())
        assert set(data) == {"dim", "order", "entries"}

    @pytest.mark.parametrize("entries", [
        [{"index": [2, 1], "value": 1.0}],
        [{"index": [1, 4], "value": 1.0}],
        [{"index": [1, 1], "value": 1.0}, {"index": [1, 1], "value": 2.0}],
    ])
    def test_loader_rejects(self, entries):
        with pytest.raises(ValueError):
            tensor_from_dict({"dim": 3, "order": 2, "entries": entries})

    def test_scalar_format(self):
        d = tensor_to_dict(SymmetricTensor.scalar(1.5, 2))
        assert d["entries"] == [{"index": [], "value": 1.5}]
