import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rlabtest.basis import BasisSpec, ContrastVector, ReferenceDistribution, basis_eval, compute_contrast
from rlabtest.errors import InputError

J4D2 = BasisSpec(4, 2)


def test_q():
    assert J4D2.q == 9
    assert BasisSpec(0, 3).q == 1


@pytest.mark.parametrize(
    "s, expected",
    [
        ((0.0, 0.0), [1, 0, 0, 0, 0, 0, 0, 0, 0]),
        ((1.0, 1.0), [1] * 9),
        ((2.0, 0.0), [1, 2, 4, 8, 16, 0, 0, 0, 0]),
    ],
)
def test_basis_eval_examples(s, expected):
    np.testing.assert_array_equal(basis_eval(J4D2, s), expected)


def test_basis_eval_batch_matches_rows():
    s = np.array([[0.5, -1.5], [2.0, 3.0]])
    out = basis_eval(J4D2, s)
    assert out.shape == (2, 9)
    for i in range(2):
        np.testing.assert_array_equal(out[i], basis_eval(J4D2, s[i]))


def test_basis_eval_dimension_mismatch():
    with pytest.raises(InputError):
        basis_eval(J4D2, [1.0, 2.0, 3.0])


@given(arrays(np.float64, 2, elements=st.floats(-10, 10)))
def test_leading_feature_is_one(s):
    assert basis_eval(J4D2, s)[0] == 1.0


def test_point_mass_contrast():
    s0 = np.array([0.3, -0.7])
    c = compute_contrast(J4D2, ReferenceDistribution.at(s0))
    psi = basis_eval(J4D2, s0)
    np.testing.assert_array_equal(c.u, np.concatenate([-psi, psi]))


def test_constant_basis_contrast():
    g = ReferenceDistribution(np.random.default_rng(1).normal(size=(50, 2)))
    np.testing.assert_array_equal(compute_contrast(BasisSpec(0, 2), g).u, [-1.0, 1.0])


def test_two_point_sample_set():
    g = ReferenceDistribution(np.array([[0.0, 0.0], [1.0, 1.0]]))
    c = compute_contrast(J4D2, g)
    np.testing.assert_allclose(c.g, [1.0] + [0.5] * 8, rtol=0, atol=1e-15)


def test_empty_and_mismatched_reference():
    with pytest.raises(InputError):
        compute_contrast(J4D2, ReferenceDistribution(np.empty((0, 2))))
    with pytest.raises(InputError):
        compute_contrast(J4D2, ReferenceDistribution(np.zeros((3, 1))))


@settings(max_examples=30)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_contrast_linear_in_measure(half, seed):
    states = np.random.default_rng(seed).normal(size=(2 * half, 2))
    whole = compute_contrast(J4D2, ReferenceDistribution(states)).g
    a = compute_contrast(J4D2, ReferenceDistribution(states[:half])).g
    b = compute_contrast(J4D2, ReferenceDistribution(states[half:])).g
    np.testing.assert_allclose((a + b) / 2, whole, rtol=1e-12, atol=1e-12)


def test_antisymmetric_halves_bit_exact():
    c = ContrastVector(np.array([1.0, 0.1, -3.3]))
    assert np.array_equal(c.u[:3], -c.u[3:])
