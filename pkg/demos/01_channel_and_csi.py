"""
Rayleigh channels and imperfect channel estimates
=================================================

Draw a 4x4 channel, see how noise variance follows from SNR, and check
that pilot-based estimation error adds N_t * sigma_e^2 to the noise.
"""

import numpy as np

from mimodet.channel import (SNR_CONVENTION, BlockFadingSpec, ChannelSpec, CorrelationSpec,
                             CsiSpec, block_channels, corrupt_csi, draw_channel,
                             equivalent_noise_variance, noise_variance)
from mimodet.modem import BPSK, modulate
from mimodet.numerics import SeededRng

rng = SeededRng(1)

# one channel use: entries are CN(0, 1)
h = draw_channel(rng, 4, 4)
print("H =\n", np.round(h.h, 3))

# SNR is total transmit power over per-antenna noise power
print(SNR_CONVENTION)
for snr in (0, 8, 12):
    print(f"{snr:>3} dB -> sigma_n^2 = {noise_variance(snr, 4):.4f}")

# transmit-side correlation rho^|i-j| shows up between neighbouring columns
corr = draw_channel(rng, 4, 4, CorrelationSpec(0.7), size=50_000).h
print("adjacent column correlation:",
      np.round(np.mean(np.conj(corr[:, :, 0]) * corr[:, :, 1]).real, 3))

# a pilot budget of N_p * E_p = 400 gives sigma_e^2 = 4 / 400
csi = CsiSpec(400)
sigma_e_sq = csi.sigma_e_sq(4)
print("sigma_e^2 =", sigma_e_sq)

# the receiver sees y - H_hat x = n - dH x
n = 200_000
hs = draw_channel(rng, 4, 4, size=n)
est = corrupt_csi(hs, sigma_e_sq, rng)
x = modulate(rng.bits((n, 4)), BPSK)
dh_x = np.einsum("bij,bj->bi", est.h_hat - hs.h, x)
noise = rng.complex_normal((n, 4))
print("measured equivalent noise:", np.round(np.mean(np.abs(noise - dh_x) ** 2), 4),
      "predicted:", equivalent_noise_variance(4, sigma_e_sq, 1.0))

# block fading keeps H fixed for T slots
hb, index = block_channels(rng, 10, ChannelSpec(4, 4, block=BlockFadingSpec(4)))
print("block index per slot:", index.tolist())
print("slots 0 and 3 share H:", bool(np.array_equal(hb[0], hb[3])))
