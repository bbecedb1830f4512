"""Constellations, bit mapping, Rayleigh fading, and the transmit chain.

The received vector is y = diag(h) F s + n with h the per-resource fading
gains, F the spreading frame, s the stacked user symbols and n circular
complex Gaussian noise. All randomness comes from explicit generator
arguments, so every operation is pure and replayable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import Frame


@dataclass
class Constellation:
    """Unit-average-energy complex alphabet with Gray bit labels.

    points[i] carries label labels[i]; points are ordered by label value so
    that a first-occurrence argmin over points breaks ties toward the
    lexicographically smallest label.
    """

    name: str
    points: np.ndarray
    labels: tuple[str, ...]
    bits_per_symbol: int
    constant_modulus: bool
    label_bits: np.ndarray  # (n_points, bits_per_symbol) int array


def _build(name: str, points: list[complex]) -> Constellation:
    n = len(points)
    b = int(np.log2(n))
    labels = tuple(format(i, f"0{b}b") for i in range(n))
    pts = np.asarray(points, dtype=np.complex128)
    moduli = np.abs(pts)
    return Constellation(
        name=name,
        points=pts,
        labels=labels,
        bits_per_symbol=b,
        constant_modulus=bool(np.max(moduli) - np.min(moduli) < 1e-12),
        label_bits=np.array([[int(ch) for ch in lab] for lab in labels]),
    )


def _qam16_points() -> list[complex]:
    # per-axis Gray map over two bits: 00 01 11 10 -> +3 +1 -1 -3
    amp = {(0, 0): 3.0, (0, 1): 1.0, (1, 1): -1.0, (1, 0): -3.0}
    pts = []
    for i in range(16):
        b = [(i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1]
        pts.append((amp[(b[0], b[1])] + 1j * amp[(b[2], b[3])]) / np.sqrt(10.0))
    return pts


_R2 = 1.0 / np.sqrt(2.0)
_CONSTELLATIONS = {
    "bpsk": _build("BPSK", [1.0 + 0.0j, -1.0 + 0.0j]),
    "qpsk": _build("QPSK", [
        (1.0 + 1.0j) * _R2, (1.0 - 1.0j) * _R2,
        (-1.0 + 1.0j) * _R2, (-1.0 - 1.0j) * _R2,
    ]),
    "16qam": _build("16QAM", _qam16_points()),
}


def get_constellation(name: str) -> Constellation:
    """Look up a built-in constellation by name (bpsk, qpsk, 16qam)."""
    key = name.lower()
    if key not in _CONSTELLATIONS:
        raise ValueError(
            f"unknown constellation {name!r}, have {sorted(_CONSTELLATIONS)}")
    return _CONSTELLATIONS[key]


def modulate(bits, c: Constellation, k: int) -> np.ndarray:
    """Map k blocks of bits_per_symbol bits to k constellation points.

    User i takes bits [i*b, (i+1)*b), most significant first, and the label
    equals the bit block. BPSK sends 0 -> +1, 1 -> -1; QPSK sends the pair
    (b0 b1) -> ((1-2 b0) + j (1-2 b1)) / sqrt(2).
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    b = c.bits_per_symbol
    if bits.size != k * b:
        raise ValueError(f"expected {k * b} bits for k={k} {c.name}, "
                         f"got {bits.size}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("bits must be 0 or 1")
    weights = 1 << np.arange(b - 1, -1, -1)
    idx = bits.reshape(k, b) @ weights
    return c.points[idx]


def demap(s, c: Constellation) -> np.ndarray:
    """Recover the bit sequence from exact constellation points.

    Inverse of modulate; raises when an entry is not a constellation point.
    """
    s = np.asarray(s, dtype=np.complex128).ravel()
    d = np.abs(s[:, None] - c.points[None, :])
    idx = np.argmin(d, axis=1)
    if s.size and float(np.max(d[np.arange(s.size), idx])) > 1e-9:
        raise ValueError("symbol vector contains non-constellation entries")
    return c.label_bits[idx].ravel()


def sample_channel(m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m i.i.d. Rayleigh-fading gains, CN(0, 1) per entry."""
    re = rng.standard_normal(m)
    im = rng.standard_normal(m)
    return (re + 1j * im) / np.sqrt(2.0)


def transmit(
    f: Frame,
    h: np.ndarray,
    s: np.ndarray,
    noise_variance: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """One channel use: y = diag(h) F s + n.

    Noise entries are circular complex Gaussian with total per-entry
    variance noise_variance (real and imaginary parts noise_variance/2
    each). The noise stream is consumed even at zero variance so trial
    streams stay aligned across SNR points.
    """
    h = np.asarray(h, dtype=np.complex128).ravel()
    s = np.asarray(s, dtype=np.complex128).ravel()
    if h.size != f.m or s.size != f.k:
        raise ValueError(f"dimension mismatch: frame {f.m}x{f.k}, "
                         f"h {h.size}, s {s.size}")
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    re = rng.standard_normal(f.m)
    im = rng.standard_normal(f.m)
    n = np.sqrt(noise_variance / 2.0) * (re + 1j * im)
    return h * (f.entries @ s) + n


def effective_matrix(f: Frame, h: np.ndarray) -> np.ndarray:
    """Composite matrix A = diag(h) F seen by the detector."""
    h = np.asarray(h, dtype=np.complex128).ravel()
    if h.size != f.m:
        raise ValueError(f"dimension mismatch: frame {f.m}x{f.k}, h {h.size}")
    return h[:, None] * f.entries
