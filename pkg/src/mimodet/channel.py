"""Flat Rayleigh block-fading channels, AWGN and the pilot-error CSI model.

SNR convention: constellations have unit average symbol energy and

    SNR_dB = 10 log10(N_t / sigma_n^2),

i.e. total average received signal power per receive antenna over the
noise power per receive antenna. ``noise_variance`` applies it.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import sample_complex_gaussian

SNR_CONVENTION = (
    "unit-energy symbols; SNR_dB = 10*log10(N_t*E_s/sigma_n^2), E_s = 1; "
    "sigma_n^2 = N_t*10^(-SNR_dB/10) per receive antenna"
)


@dataclass(frozen=True)
class CorrelationSpec:
    """Exponential transmit correlation R[i, j] = rho**|i - j|."""

    rho: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")

    def matrix(self, n_t):
        idx = np.arange(n_t)
        return self.rho ** np.abs(idx[:, None] - idx[None, :])

    def sqrt_factor(self, n_t):
        """Upper factor U with U^H U = R (Cholesky), so H = G @ U."""
        if self.rho == 0.0:
            return np.eye(n_t)
        return np.linalg.cholesky(self.matrix(n_t)).conj().T


@dataclass(frozen=True)
class BlockFadingSpec:
    period_t: int = 1

    def __post_init__(self):
        if int(self.period_t) != self.period_t or self.period_t < 1:
            raise ParameterError(f"period_t must be a positive integer, got {self.period_t}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma_n_sq: float

    def __post_init__(self):
        if not self.sigma_n_sq >= 0:
            raise ParameterError(f"noise variance must be >= 0, got {self.sigma_n_sq}")


@dataclass(frozen=True)
class ChannelRealization:
    """True channel ``h`` with shape (..., n_r, n_t)."""

    h: np.ndarray

    @property
    def n_r(self):
        return self.h.shape[-2]

    @property
    def n_t(self):
        return self.h.shape[-1]


@dataclass(frozen=True)
class CsiEstimate:
    """Receiver-side channel knowledge H_hat = H + dH, dH ~ CN(0, sigma_e_sq)."""

    h_hat: np.ndarray
    sigma_e_sq: float = 0.0


@dataclass(frozen=True)
class ChannelSpec:
    n_t: int
    n_r: int
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    block: BlockFadingSpec = field(default_factory=BlockFadingSpec)

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ParameterError(f"antenna counts must be >= 1, got ({self.n_t}, {self.n_r})")


@dataclass(frozen=True)
class CsiSpec:
    """Pilot budget ``np_ep`` = N_p * E_p; infinity means perfect CSI."""

    np_ep: float = math.inf

    def __post_init__(self):
        if not self.np_ep > 0:
            raise ParameterError(f"np_ep must be > 0, got {self.np_ep}")

    @property
    def perfect(self):
        return math.isinf(self.np_ep)

    def sigma_e_sq(self, n_t):
        return pilot_error_variance(n_t, self.np_ep)


def noise_variance(snr_db, n_t):
    return n_t * 10.0 ** (-snr_db / 10.0)


def draw_channel(rng, n_t, n_r, corr=None, size=()):
    """Draw H = G R^(1/2) with G i.i.d. CN(0, 1).

    ``size`` adds leading batch axes; the default draws a single matrix.
    """
    if int(n_t) != n_t or int(n_r) != n_r or n_t < 1 or n_r < 1:
        raise ParameterError(f"invalid channel dimensions ({n_r}, {n_t})")
    corr = corr or CorrelationSpec()
    size = (size,) if np.isscalar(size) else tuple(size)
    g = rng.complex_normal(size + (n_r, n_t))
    if corr.rho != 0.0:
        g = g @ corr.sqrt_factor(n_t)
    return ChannelRealization(g)


def pilot_error_variance(n_t, np_ep):
    """sigma_e^2 = N_t / (N_p * E_p); 0 for an infinite pilot budget."""
    if not np_ep > 0:
        raise ParameterError(f"np_ep must be > 0, got {np_ep}")
    return n_t / np_ep


def corrupt_csi(h, sigma_e_sq, rng):
    """Add i.i.d. CN(0, sigma_e_sq) estimation error to the true channel."""
    if sigma_e_sq < 0:
        raise ParameterError(f"sigma_e_sq must be >= 0, got {sigma_e_sq}")
    h_true = h.h if isinstance(h, ChannelRealization) else np.asarray(h)
    err = sample_complex_gaussian(rng, h_true.shape, sigma_e_sq)
    if sigma_e_sq == 0:
        return CsiEstimate(h_true.copy(), 0.0)
    return CsiEstimate(h_true + err, float(sigma_e_sq))


def apply_channel(h, x, noise, rng):
    """y = H x + n with n ~ CN(0, sigma_n_sq I).

    ``x`` has shape (..., n_t); ``h`` broadcasts against it.
    """
    h_arr = h.h if isinstance(h, ChannelRealization) else np.asarray(h)
    x = np.asarray(x)
    sigma_n_sq = noise.sigma_n_sq if isinstance(noise, NoiseSpec) else float(noise)
    if x.shape[-1] != h_arr.shape[-1]:
        raise DimensionError(f"symbol length {x.shape[-1]} != n_t {h_arr.shape[-1]}")
    hx = np.einsum("...ij,...j->...i", h_arr, x)
    n = sample_complex_gaussian(rng, hx.shape, sigma_n_sq)
    return hx + n


def equivalent_noise_variance(n_t, sigma_e_sq, sigma_n_sq):
    """Per-antenna variance of n - dH x: N_t sigma_e^2 + sigma_n^2."""
    if n_t < 0 or sigma_e_sq < 0 or sigma_n_sq < 0:
        raise ParameterError("inputs must be non-negative")
    return n_t * sigma_e_sq + sigma_n_sq


def block_channels(rng, n_slots, spec):
    """Channels for ``n_slots`` consecutive slots under block fading.

    Returns ``(h, block_index)``: rows within one period share the very
    same matrix values.
    """
    period = spec.block.period_t
    n_blocks = -(-n_slots // period)
    blocks = draw_channel(rng, spec.n_t, spec.n_r, spec.correlation, size=n_blocks).h
    index = np.arange(n_slots) // period
    return blocks[index], index
