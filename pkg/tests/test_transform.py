import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spinfd import spinner as sp
from spinfd.transform import apply, apply_inverse, apply_transpose, fwht, naive_matvec

finite = st.floats(-1e6, 1e6, allow_nan=False)


def sylvester(n):
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_fwht_examples():
    np.testing.assert_array_equal(fwht([3.5]), [3.5])
    np.testing.assert_array_equal(fwht([1.0, 0, 0, 0]), [1, 1, 1, 1])
    np.testing.assert_array_equal(fwht([1.0, 2, 3, 4]), [10, -2, -4, 0])


@pytest.mark.parametrize("n", [0, 3, 6, 12])
def test_fwht_rejects_bad_length(n):
    with pytest.raises(ValueError):
        fwht(np.ones(n))


def test_fwht_does_not_mutate_input():
    v = np.arange(8.0)
    fwht(v)
    np.testing.assert_array_equal(v, np.arange(8.0))


@pytest.mark.parametrize("l", range(1, 11))
def test_fwht_matches_naive(l):
    n = 2**l
    h = sylvester(n)
    v = np.random.default_rng(l).standard_normal((n, 100))
    assert rel_err(fwht(v), naive_matvec(h, v)) <= 1e-10


@given(arrays(float, st.sampled_from([1, 2, 8, 64]), elements=finite))
def test_parseval(v):
    n = v.size
    np.testing.assert_allclose(np.linalg.norm(fwht(v) / np.sqrt(n)), np.linalg.norm(v),
                               rtol=1e-10, atol=1e-300)


def test_naive_examples():
    v = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(naive_matvec(np.eye(3), v), v)
    np.testing.assert_array_equal(naive_matvec([[1, 1], [1, -1]], [1.0, 1.0]), [2, 0])
    with pytest.raises(ValueError):
        naive_matvec(np.eye(3), np.ones(4))


def test_apply_examples():
    h4 = sp.build_hadamard(2)
    np.testing.assert_array_equal(apply(h4, [1.0, 0, 0, 0]), [1, 1, 1, 1])
    neg = sp.Spinner(n=4, kind=sp.SpinnerKind.HADAMARD_RANDOM, sign_diagonals=(-np.ones(4),),
                     base=sp.SpinnerKind.HADAMARD, order=2)
    v = np.array([0.3, -1.0, 2.0, 5.0])
    np.testing.assert_array_equal(apply(neg, v), -fwht(v))
    q3 = sp.build_quadratic_residue(3)
    np.testing.assert_array_equal(apply(q3, [1.0, 0, 0, 0]), [-1, -1, -1, -1])
    with pytest.raises(ValueError):
        apply(h4, np.ones(5))


def test_apply_inverse_examples():
    h4 = sp.build_hadamard(2)
    np.testing.assert_array_equal(apply_inverse(h4, np.zeros(4)), np.zeros(4))
    np.testing.assert_array_equal(apply_inverse(h4, np.ones(4)), [1, 0, 0, 0])
    with pytest.raises(TypeError):
        apply_inverse(sp.explicit(np.eye(2)), np.ones(2))
    with pytest.raises(ValueError):
        apply_inverse(h4, np.ones(3))


def all_spinners():
    yield sp.build_hadamard(3)
    yield sp.randomize(sp.build_hadamard(5), 2)
    yield sp.build_quadratic_residue(11)
    yield sp.randomize(sp.build_quadratic_residue(19), 2)
    for k in (2, 3):
        yield sp.build_multispinner("hadamard", k, 7, 64)
        yield sp.build_multispinner("quadratic_residue", k, 7, 23)


@pytest.mark.parametrize("s", list(all_spinners()), ids=lambda s: f"{s.kind.value}-{s.n}")
def test_fast_paths_match_dense_oracle(s):
    rng = np.random.default_rng(0)
    v = rng.standard_normal((s.n, 100))
    m = s.dense()
    assert rel_err(apply(s, v), naive_matvec(m, v)) <= 1e-10
    assert rel_err(apply_transpose(s, v), naive_matvec(m.T, v)) <= 1e-10
    assert rel_err(apply_inverse(s, v), np.linalg.solve(m, v)) <= 1e-10
    assert rel_err(apply(s, apply_inverse(s, v)), v) <= 1e-10
    assert rel_err(apply_inverse(s, apply(s, v)), v) <= 1e-10


def test_multispinner_composition():
    s = sp.build_multispinner("hadamard", 3, 5, 32)
    v = np.random.default_rng(1).standard_normal(32)
    out = v
    for d in reversed(s.sign_diagonals):
        out = fwht(d * out)
    np.testing.assert_allclose(apply(s, v), out / s.normalization, rtol=1e-12)
    assert s.normalization == 32.0


def test_random_8x8_matches_apply():
    s = sp.randomize(sp.build_hadamard(3), 3)
    m = s.dense()
    for seed in range(20):
        v = np.random.default_rng(seed).standard_normal(8)
        assert rel_err(apply(s, v), naive_matvec(m, v)) <= 1e-10


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_roundtrip_property(seed, k):
    s = sp.build_multispinner("hadamard", k, seed, 16)
    v = np.random.default_rng(seed).standard_normal(16)
    assert rel_err(apply_inverse(s, apply(s, v)), v) <= 1e-10
