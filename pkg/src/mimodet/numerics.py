"""Complex/real linear algebra helpers and the seeded random stream.

Complex quantities are plain numpy arrays. Vectors keep the antenna axis
last and matrices keep their two axes last, so every function here also
accepts leading batch dimensions.
"""

import numpy as np

from .errors import DimensionError, ParameterError, SingularMatrixError

# relative pivot magnitude below which a system is declared singular
SINGULAR_RTOL = 1e-12


def real_embed_vector(v):
    """Stack the real part of ``v`` above its imaginary part.

    A length-n complex vector becomes a length-2n real vector. Leading axes
    are treated as a batch.
    """
    v = np.asarray(v)
    if v.ndim == 0 or v.shape[-1] == 0:
        raise DimensionError("cannot embed an empty vector")
    return np.concatenate([v.real, v.imag], axis=-1).astype(np.float64)


def real_embed_matrix(h):
    """Map a complex (r, c) matrix to the real (2r, 2c) block matrix

        [[Re h, -Im h],
         [Im h,  Re h]]

    so that ``real_embed_matrix(h) @ real_embed_vector(x)`` equals
    ``real_embed_vector(h @ x)``.
    """
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] == 0 or h.shape[-2] == 0:
        raise DimensionError(f"cannot embed matrix of shape {h.shape}")
    re, im = h.real.astype(np.float64), h.imag.astype(np.float64)
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def hermitian(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def pivoted_solve(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    a : array (..., n, n)
    b : array (..., n, m)

    Returns
    -------
    x : array (..., n, m)
    singular : bool array (...)
        True where the smallest pivot magnitude is below
        ``SINGULAR_RTOL`` times the largest. Entries of ``x`` for those
        systems are not meaningful.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] == 0:
        raise DimensionError(f"expected square matrices, got shape {a.shape}")
    if b.ndim < 2 or b.shape[-2] != a.shape[-1]:
        raise DimensionError(f"right-hand side {b.shape} does not match {a.shape}")
    batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    n, m = a.shape[-1], b.shape[-1]
    dtype = np.result_type(a.dtype, b.dtype, np.float64)

    aug = np.concatenate(
        [np.broadcast_to(a, batch + (n, n)), np.broadcast_to(b, batch + (n, m))],
        axis=-1,
    ).astype(dtype, copy=True).reshape(-1, n, n + m)
    count = aug.shape[0]
    rows = np.arange(count)
    pivots = np.empty((count, n), dtype=dtype)

    for k in range(n):
        p = k + np.argmax(np.abs(aug[:, k:, k]), axis=1)
        swap = aug[rows, p].copy()
        aug[rows, p] = aug[rows, k]
        aug[rows, k] = swap
        piv = aug[:, k, k]
        pivots[:, k] = piv
        if k + 1 < n:
            safe = np.where(piv == 0, 1, piv)
            factors = aug[:, k + 1:, k] / safe[:, None]
            aug[:, k + 1:, k:] -= factors[:, :, None] * aug[:, None, k, k:]

    mags = np.abs(pivots)
    top = mags.max(axis=1)
    singular = (top == 0) | (mags.min(axis=1) < SINGULAR_RTOL * top)
    safe_piv = np.where(pivots == 0, 1, pivots)

    x = np.zeros((count, n, m), dtype=dtype)
    for i in range(n - 1, -1, -1):
        acc = aug[:, i, n:].copy()
        if i + 1 < n:
            acc -= np.einsum("bj,bjm->bm", aug[:, i, i + 1:n], x[:, i + 1:])
        x[:, i] = acc / safe_piv[:, i, None]

    return x.reshape(batch + (n, m)), singular.reshape(batch)


def solve_hermitian(a, b):
    """Solve ``a @ x = b`` for Hermitian positive semidefinite ``a``.

    Raises SingularMatrixError if any system in the batch is numerically
    singular (pivot magnitude below 1e-12 of the largest pivot).
    """
    x, singular = pivoted_solve(a, b)
    if np.any(singular):
        raise SingularMatrixError(
            f"{int(np.sum(singular))} numerically singular system(s)",
            singular=singular,
        )
    return x


def derive_seed(base_seed, index):
    """Seed for worker/shard ``index``: ``base_seed XOR index``."""
    return (int(base_seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


class SeededRng:
    """Deterministic random stream on a Philox-4x64 counter-based generator.

    Gaussian variates come from the Box-Muller transform applied to the
    generator's uniform doubles, so the stream depends only on the seed and
    the order of calls.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(seed))

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"

    def spawn(self, index):
        return SeededRng(derive_seed(self.seed, index))

    def uniform(self, size=None):
        """Uniform doubles on [0, 1)."""
        return self._gen.random(size)

    def bits(self, size):
        return self._gen.integers(0, 2, size=size, dtype=np.uint8)

    def permutation(self, n):
        return self._gen.permutation(n)

    def _polar(self, size):
        u1 = 1.0 - self._gen.random(size)  # (0, 1], keeps log finite
        u2 = self._gen.random(size)
        return np.sqrt(-2.0 * np.log(u1)), 2.0 * np.pi * u2

    def normal(self, size):
        """Standard normal doubles (Box-Muller, using both branches)."""
        size = (size,) if np.isscalar(size) else tuple(size)
        total = int(np.prod(size))
        r, theta = self._polar((total + 1) // 2)
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:total]
        return z.reshape(size)

    def complex_normal(self, size):
        """CN(0, 1) variates: real and imaginary parts each N(0, 1/2)."""
        r, theta = self._polar(size)
        return (r / np.sqrt(2.0)) * np.exp(1j * theta)


def sample_complex_gaussian(rng, n, variance):
    """Draw i.i.d. CN(0, variance) entries.

    ``n`` may be an int or a shape tuple. The stream is consumed even when
    ``variance`` is 0 so that runs differing only in a variance stay aligned.
    """
    if variance < 0:
        raise ParameterError(f"variance must be >= 0, got {variance}")
    z = rng.complex_normal(n)
    if variance == 0:
        return np.zeros_like(z)
    return np.sqrt(variance) * z
