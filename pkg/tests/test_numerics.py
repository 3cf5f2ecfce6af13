import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mimodet.errors import DimensionError, ParameterError, SingularMatrixError
from mimodet.numerics import (SeededRng, derive_seed, pivoted_solve, real_embed_matrix,
                              real_embed_vector, sample_complex_gaussian, solve_hermitian)


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_embed_vector_definition():
    np.testing.assert_array_equal(real_embed_vector([1 + 2j, 3 - 1j]), [1, 3, 2, -1])


def test_embed_vector_zero_and_width():
    np.testing.assert_array_equal(real_embed_vector(np.zeros(4, complex)), np.zeros(8))
    assert real_embed_vector(np.ones(4) * (1 + 1j)).shape == (8,)


def test_embed_matrix_identity_and_i():
    np.testing.assert_array_equal(real_embed_matrix(np.eye(2, dtype=complex)), np.eye(4))
    m = real_embed_matrix(1j * np.eye(2))
    zero, eye = np.zeros((2, 2)), np.eye(2)
    np.testing.assert_array_equal(m, np.block([[zero, -eye], [eye, zero]]))


def test_embed_empty_raises():
    with pytest.raises(DimensionError):
        real_embed_vector(np.array([], dtype=complex))
    with pytest.raises(DimensionError):
        real_embed_matrix(np.zeros((0, 3), dtype=complex))


def test_embed_homomorphism_random_4x4():
    rng = np.random.default_rng(0)
    h, x = _crandn(rng, 4, 4), _crandn(rng, 4)
    lhs = real_embed_matrix(h) @ real_embed_vector(x)
    rhs = real_embed_vector(h @ x)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


finite = st.floats(-10, 10, allow_nan=False)


@given(st.integers(1, 5), st.integers(1, 5), st.data())
@settings(max_examples=60, deadline=None)
def test_embed_homomorphism_property(r, c, data):
    re = data.draw(arrays(np.float64, (r, c), elements=finite))
    im = data.draw(arrays(np.float64, (r, c), elements=finite))
    xr = data.draw(arrays(np.float64, (c,), elements=finite))
    xi = data.draw(arrays(np.float64, (c,), elements=finite))
    h, x = re + 1j * im, xr + 1j * xi
    np.testing.assert_allclose(real_embed_matrix(h) @ real_embed_vector(x),
                               real_embed_vector(h @ x), atol=1e-12 * (1 + np.abs(h).sum() * 10))


def test_solve_identity_and_scaling():
    b = np.arange(6).reshape(3, 2) + 1j
    np.testing.assert_allclose(solve_hermitian(np.eye(3), b), b)
    np.testing.assert_allclose(solve_hermitian(2 * np.eye(4), np.eye(4)), 0.5 * np.eye(4))


def test_solve_residual_well_conditioned():
    rng = np.random.default_rng(1)
    g = _crandn(rng, 6, 6)
    a = g.conj().T @ g + np.eye(6)
    b = _crandn(rng, 6, 3)
    x = solve_hermitian(a, b)
    assert np.max(np.abs(a @ x - b)) < 1e-10


@pytest.mark.parametrize("cond", [1e2, 1e4, 1e6])
def test_solve_recovers_known_solution(cond):
    rng = np.random.default_rng(int(cond))
    q, _ = np.linalg.qr(_crandn(rng, 8, 8))
    a = q @ np.diag(np.geomspace(1, 1 / cond, 8)) @ q.conj().T
    a = (a + a.conj().T) / 2
    x0 = _crandn(rng, 8, 2)
    x = solve_hermitian(a, a @ x0)
    assert np.linalg.norm(x - x0) / np.linalg.norm(x0) < 1e-9


def test_solve_batched_matches_loop():
    rng = np.random.default_rng(2)
    g = _crandn(rng, 50, 4, 4)
    a = np.conj(np.swapaxes(g, -1, -2)) @ g
    b = _crandn(rng, 50, 4, 1)
    x = solve_hermitian(a, b)
    for k in range(50):
        np.testing.assert_allclose(a[k] @ x[k], b[k], atol=1e-10)


def test_solve_singular_detected():
    h = np.array([[1, 1], [2, 2], [0.5, 0.5]], dtype=complex)
    with pytest.raises(SingularMatrixError):
        solve_hermitian(h.conj().T @ h, np.ones((2, 1)))
    a = np.stack([np.eye(2), np.zeros((2, 2))])
    _, singular = pivoted_solve(a, np.ones((2, 2, 1)))
    np.testing.assert_array_equal(singular, [False, True])


def test_rng_determinism_and_spawn():
    a = SeededRng(42).complex_normal(10)
    b = SeededRng(42).complex_normal(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, SeededRng(43).complex_normal(10))
    assert SeededRng(42).spawn(3).seed == 42 ^ 3 == derive_seed(42, 3)
    with pytest.raises(ParameterError):
        SeededRng(-1)


def test_gaussian_zero_variance():
    np.testing.assert_array_equal(sample_complex_gaussian(SeededRng(0), 5, 0.0), np.zeros(5))
    with pytest.raises(ParameterError):
        sample_complex_gaussian(SeededRng(0), 5, -1.0)


def test_gaussian_moments():
    z = sample_complex_gaussian(SeededRng(7), 1_000_000, 1.0)
    assert 0.98 <= np.mean(np.abs(z) ** 2) <= 1.02
    assert abs(np.mean(z.real * z.imag)) < 0.01
    assert abs(np.var(z.real) - 0.5) < 0.01 and abs(np.var(z.imag) - 0.5) < 0.01


def test_real_normal_moments():
    z = SeededRng(8).normal(1_000_001)
    assert z.shape == (1_000_001,)
    assert abs(z.mean()) < 0.005 and abs(z.var() - 1) < 0.02
