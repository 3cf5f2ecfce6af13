"""Gray-mapped BPSK/QPSK modulation and hard nearest-point demodulation.

Bits fill antennas in order, ``M`` consecutive bits per antenna. BPSK maps
0 -> -1 and 1 -> +1. QPSK maps (b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt 2.
Both constellations have unit average energy.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import ParameterError


class Modulation(str, Enum):
    BPSK = "bpsk"
    QPSK = "qpsk"


@dataclass(frozen=True)
class ModulationScheme:
    kind: Modulation

    @property
    def bits_per_symbol(self):
        return 1 if self.kind is Modulation.BPSK else 2

    @property
    def name(self):
        return self.kind.value

    def __str__(self):
        return self.kind.value


BPSK = ModulationScheme(Modulation.BPSK)
QPSK = ModulationScheme(Modulation.QPSK)


def get_scheme(name):
    """Look up a scheme by name ("bpsk" / "qpsk"); schemes pass through."""
    if isinstance(name, ModulationScheme):
        return name
    try:
        return ModulationScheme(Modulation(str(name).lower()))
    except ValueError:
        raise ParameterError(f"unknown modulation {name!r}") from None


@lru_cache(maxsize=None)
def _table(scheme):
    m = scheme.bits_per_symbol
    labels = np.array([[(k >> (m - 1 - j)) & 1 for j in range(m)] for k in range(2**m)],
                      dtype=np.uint8)
    if scheme.kind is Modulation.BPSK:
        points = (2.0 * labels[:, 0] - 1.0).astype(np.complex128)
    else:
        points = ((1.0 - 2.0 * labels[:, 0]) + 1j * (1.0 - 2.0 * labels[:, 1])) / np.sqrt(2.0)
    # tie-break order: more zero bits first, then lexicographic label
    order = sorted(range(2**m), key=lambda k: (-(m - int(labels[k].sum())), tuple(labels[k])))
    labels, points = labels[order], points[order]
    labels.setflags(write=False)
    points.setflags(write=False)
    return labels, points


def constellation(scheme):
    """List of ``(label_bits, point)`` pairs for the scheme."""
    labels, points = _table(get_scheme(scheme))
    return [(tuple(int(b) for b in lab), complex(p)) for lab, p in zip(labels, points)]


def modulate(bits, scheme):
    """Map a bit array (..., M * N_t) to symbols (..., N_t)."""
    scheme = get_scheme(scheme)
    bits = np.asarray(bits)
    m = scheme.bits_per_symbol
    if bits.ndim == 0 or bits.shape[-1] % m:
        raise ParameterError(f"bit length {bits.shape[-1:]} not divisible by {m}")
    if np.any((bits != 0) & (bits != 1)):
        raise ParameterError("bits must be 0 or 1")
    b = bits.reshape(bits.shape[:-1] + (-1, m)).astype(np.float64)
    if scheme.kind is Modulation.BPSK:
        return (2.0 * b[..., 0] - 1.0).astype(np.complex128)
    return ((1.0 - 2.0 * b[..., 0]) + 1j * (1.0 - 2.0 * b[..., 1])) / np.sqrt(2.0)


def quantize(x, scheme):
    """Index into the scheme's tie-break-ordered table for each entry of ``x``."""
    _, points = _table(get_scheme(scheme))
    x = np.asarray(x, dtype=np.complex128)
    d = np.abs(x[..., None] - points) ** 2
    return np.argmin(d, axis=-1)


def nearest_points(x, scheme):
    """Per-entry nearest constellation point."""
    _, points = _table(get_scheme(scheme))
    return points[quantize(x, scheme)]


def demodulate_hard(x_hat, scheme):
    """Nearest-point hard decisions (..., N_t) -> bits (..., M * N_t).

    Exact ties go to the label with more zero bits, then to the
    lexicographically smallest label.
    """
    labels, _ = _table(get_scheme(scheme))
    idx = quantize(x_hat, scheme)
    out = labels[idx]
    return out.reshape(out.shape[:-2] + (-1,))
