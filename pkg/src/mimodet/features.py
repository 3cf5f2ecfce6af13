"""Network input features: the real joint matrix [y_dot | H_dot], flattened."""

import numpy as np

from .errors import DimensionError
from .numerics import real_embed_matrix, real_embed_vector


def feature_width(n_t, n_r):
    return 2 * n_r * (2 * n_t + 1)


def build_features(y, csi):
    """Flatten the (2 N_r, 2 N_t + 1) real joint matrix row-major.

    Column 0 is the embedded received vector, columns 1..2 N_t the embedded
    channel estimate. ``csi`` may be a CsiEstimate or a bare H_hat array.
    Leading batch axes are kept.
    """
    h_hat = getattr(csi, "h_hat", csi)
    y = np.asarray(y)
    h_hat = np.asarray(h_hat)
    if h_hat.ndim < 2 or y.shape[-1] != h_hat.shape[-2]:
        raise DimensionError(f"y {y.shape} does not match H_hat {h_hat.shape}")
    y_dot = real_embed_vector(y)[..., :, None]
    h_dot = real_embed_matrix(h_hat)
    batch = np.broadcast_shapes(y_dot.shape[:-2], h_dot.shape[:-2])
    joint = np.concatenate(
        [np.broadcast_to(y_dot, batch + y_dot.shape[-2:]),
         np.broadcast_to(h_dot, batch + h_dot.shape[-2:])],
        axis=-1,
    )
    return joint.reshape(joint.shape[:-2] + (-1,))
