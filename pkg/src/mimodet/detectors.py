"""ZF, MMSE and brute-force ML detectors behind one calling convention.

Every detector is a callable ``det(inp: DetectionInput) -> DetectionOutput``.
Inputs may carry leading batch axes: ``y`` is (..., N_r) and ``csi.h_hat``
(..., N_r, N_t).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import CsiEstimate
from .errors import CapacityError, ParameterError, SingularMatrixError
from .modem import demodulate_hard, get_scheme, modulate, nearest_points
from .numerics import hermitian, pivoted_solve

ML_MAX_CANDIDATES = 2**20
# bound on the (batch x N_r x candidates) residual tensor
_ML_CHUNK_ELEMENTS = 2**21


@dataclass
class DetectionInput:
    y: np.ndarray
    csi: CsiEstimate
    sigma_n_sq: float
    scheme: object

    def __post_init__(self):
        self.scheme = get_scheme(self.scheme)
        if not isinstance(self.csi, CsiEstimate):
            self.csi = CsiEstimate(np.asarray(self.csi))
        self.y = np.asarray(self.y, dtype=np.complex128)
        h = self.csi.h_hat
        if h.ndim < 2 or self.y.shape[-1] != h.shape[-2]:
            raise ParameterError(f"y {self.y.shape} does not match H_hat {h.shape}")

    @property
    def h_hat(self):
        return self.csi.h_hat

    @property
    def n_t(self):
        return self.csi.h_hat.shape[-1]


@dataclass
class DetectionOutput:
    x_hat: np.ndarray
    b_hat: np.ndarray
    soft_estimate: np.ndarray = None
    # per-slot mask of systems that could not be solved
    erased: np.ndarray = None


@dataclass
class SerCounter:
    symbol_errors: int = 0
    bit_errors: int = 0
    total_symbols: int = 0
    total_bits: int = 0

    @property
    def ber(self):
        return self.bit_errors / self.total_bits if self.total_bits else float("nan")

    @property
    def ser(self):
        return self.symbol_errors / self.total_symbols if self.total_symbols else float("nan")

    def merge(self, other):
        return SerCounter(
            self.symbol_errors + other.symbol_errors,
            self.bit_errors + other.bit_errors,
            self.total_symbols + other.total_symbols,
            self.total_bits + other.total_bits,
        )


def _quantized_output(soft, scheme, erased=None):
    x_hat = nearest_points(soft, scheme)
    return DetectionOutput(x_hat=x_hat, b_hat=demodulate_hard(x_hat, scheme),
                           soft_estimate=soft, erased=erased)


def _linear(inp, regularization, on_singular):
    h = inp.h_hat
    if h.shape[-2] < h.shape[-1]:
        raise ParameterError(f"linear detection needs N_r >= N_t, got H_hat {h.shape}")
    hh = hermitian(h)
    gram = hh @ h
    if regularization:
        gram = gram + regularization * np.eye(h.shape[-1])
    rhs = hh @ inp.y[..., None]
    x, singular = pivoted_solve(gram, rhs)
    erased = None
    if np.any(singular):
        if on_singular == "raise":
            raise SingularMatrixError(
                f"{int(np.sum(singular))} singular Gram matrix(es)", singular=singular)
        erased = singular
        x = np.where(singular[..., None, None], 0, x)
    return _quantized_output(x[..., 0], inp.scheme, erased)


def detect_zf(inp, on_singular="raise"):
    """Zero forcing: (H^H H)^-1 H^H y, then per-antenna nearest point.

    With ``on_singular="erase"`` singular systems are flagged in
    ``DetectionOutput.erased`` instead of raising.
    """
    return _linear(inp, 0.0, on_singular)


def detect_mmse(inp, equivalent_noise=False, on_singular="raise"):
    """Linear MMSE: (H^H H + s I)^-1 H^H y.

    ``s`` is the nominal noise variance. With ``equivalent_noise`` it becomes
    N_t sigma_e^2 + sigma_n^2, which accounts for the CSI error.
    """
    s = inp.sigma_n_sq
    if s < 0:
        raise ParameterError(f"sigma_n_sq must be >= 0, got {s}")
    if equivalent_noise:
        s = s + inp.n_t * inp.csi.sigma_e_sq
    return _linear(inp, s, on_singular)


@lru_cache(maxsize=None)
def ml_candidates(scheme, n_t):
    """All (label bits, symbol vector) candidates, labels in lexicographic order."""
    scheme = get_scheme(scheme)
    n_bits = scheme.bits_per_symbol * n_t
    if 2**n_bits > ML_MAX_CANDIDATES:
        raise CapacityError(
            f"{2**n_bits} ML candidates exceed the guard of {ML_MAX_CANDIDATES}")
    k = np.arange(2**n_bits)
    labels = ((k[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1).astype(np.uint8)
    symbols = modulate(labels, scheme)
    labels.setflags(write=False)
    symbols.setflags(write=False)
    return labels, symbols


def ml_residuals(y, h_hat, candidates):
    """||y - H x_k||^2 for every slot and every candidate row x_k."""
    hx = h_hat @ candidates.T
    r = y[..., :, None] - hx
    return np.sum(r.real**2 + r.imag**2, axis=-2)


def detect_ml(inp):
    """Exhaustive minimum-distance search over all 2^(M N_t) symbol vectors.

    Ties resolve to the lexicographically smallest bit label.
    """
    labels, cands = ml_candidates(inp.scheme, inp.n_t)
    h = inp.h_hat
    batch = np.broadcast_shapes(inp.y.shape[:-1], h.shape[:-2])
    y = np.broadcast_to(inp.y, batch + inp.y.shape[-1:]).reshape(-1, h.shape[-2])
    hf = np.broadcast_to(h, batch + h.shape[-2:]).reshape((-1,) + h.shape[-2:])
    step = max(1, _ML_CHUNK_ELEMENTS // (len(cands) * h.shape[-2]))
    best = np.empty(len(y), dtype=np.intp)
    for start in range(0, len(y), step):
        sl = slice(start, start + step)
        best[sl] = np.argmin(ml_residuals(y[sl], hf[sl], cands), axis=-1)
    best = best.reshape(batch)
    return DetectionOutput(x_hat=cands[best], b_hat=labels[best])


def residual(inp, x):
    """Squared residual ||y - H_hat x||^2 per slot."""
    r = inp.y - np.einsum("...ij,...j->...i", inp.h_hat, x)
    return np.sum(r.real**2 + r.imag**2, axis=-1)


def count_errors(b_hat, b, x_hat, x, acc=None):
    """Accumulate Hamming bit errors and per-antenna symbol mismatches."""
    b_hat, b = np.asarray(b_hat), np.asarray(b)
    x_hat, x = np.asarray(x_hat), np.asarray(x)
    if b_hat.shape != b.shape or x_hat.shape != x.shape:
        raise ParameterError(
            f"shape mismatch: bits {b_hat.shape} vs {b.shape}, symbols {x_hat.shape} vs {x.shape}")
    acc = acc or SerCounter()
    return acc.merge(SerCounter(
        symbol_errors=int(np.count_nonzero(x_hat != x)),
        bit_errors=int(np.count_nonzero(b_hat != b)),
        total_symbols=int(x.size),
        total_bits=int(b.size),
    ))


class NeuralDetector:
    """Wrap a trained network as a detector: features -> sigmoid -> bits.

    Outputs >= 0.5 decide bit 1. Inference runs in chunks of ``batch_size``.
    """

    def __init__(self, model, batch_size=16384):
        self.model = model
        self.batch_size = batch_size

    def __call__(self, inp):
        from .features import build_features
        from .neuralnet import predict

        feats = build_features(inp.y, inp.csi)
        lead = feats.shape[:-1]
        flat = feats.reshape(-1, feats.shape[-1])
        probs = predict(self.model, flat, batch_size=self.batch_size)
        b_hat = (probs >= 0.5).astype(np.uint8).reshape(lead + (-1,))
        return DetectionOutput(x_hat=modulate(b_hat, inp.scheme), b_hat=b_hat)


DETECTOR_NAMES = ("zf", "mmse", "ml", "dnn")


def get_detector(name, model=None, mmse_equivalent_noise=False, on_singular="raise",
                 dnn_batch_size=16384):
    """Resolve a detector name ("zf" | "mmse" | "ml" | "dnn") to a callable."""
    if name == "zf":
        return lambda inp: detect_zf(inp, on_singular=on_singular)
    if name == "mmse":
        return lambda inp: detect_mmse(inp, equivalent_noise=mmse_equivalent_noise,
                                       on_singular=on_singular)
    if name == "ml":
        return detect_ml
    if name == "dnn":
        if model is None:
            raise ParameterError("the dnn detector needs a trained model")
        return NeuralDetector(model, batch_size=dnn_batch_size)
    raise ParameterError(f"unknown detector {name!r}; expected one of {DETECTOR_NAMES}")
