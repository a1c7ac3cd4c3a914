"""Min-max normalization and m-bit binary encoding of continuous values."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


def normalize(series, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("degenerate normalization range (hi must exceed lo)")
    return (np.asarray(series, dtype=float) - lo) / (hi - lo)


def denormalize(values, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return np.asarray(values, dtype=float) * (hi - lo) + lo


def levels(v, m: int) -> np.ndarray:
    """Quantization level ``round(v * (2**m - 1))`` of values in [0, 1]."""
    v = np.asarray(v, dtype=float)
    if np.any((v < 0) | (v > 1)):
        warnings.warn("values outside [0, 1] clamped before encoding", stacklevel=3)
        v = np.clip(v, 0.0, 1.0)
    return np.rint(v * (2**m - 1)).astype(np.int64)


def level_bits(level, m: int) -> np.ndarray:
    """Big-endian bit expansion along a new trailing axis of length ``m``."""
    level = np.asarray(level, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return ((level[..., None] >> shifts) & 1).astype(float)


def encode(v, m: int) -> np.ndarray:
    """Encode scalars to ``m`` bits; output gains a trailing axis of length m."""
    if m < 1:
        raise ValueError("need at least one bit")
    return level_bits(levels(v, m), m)


def bits_level(bits) -> np.ndarray:
    bits = np.asarray(bits)
    m = bits.shape[-1]
    weights = 2 ** np.arange(m - 1, -1, -1)
    return (np.rint(bits).astype(np.int64) * weights).sum(axis=-1)


def decode(bits, m: int | None = None) -> np.ndarray:
    bits = np.asarray(bits, dtype=float)
    if m is not None and bits.shape[-1] != m:
        raise ValueError(f"expected {m} bits, got {bits.shape[-1]}")
    m = bits.shape[-1]
    return bits_level(bits) / (2**m - 1)


def encode_vector(v, m: int) -> np.ndarray:
    """Encode ``(..., n)`` channels into ``(..., n*m)`` bits, channel-major."""
    b = encode(v, m)
    return b.reshape(*b.shape[:-2], -1)


def decode_vector(bits, m: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=float)
    if bits.shape[-1] % m:
        raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {m}")
    return decode(bits.reshape(*bits.shape[:-1], -1, m))


@dataclass(frozen=True)
class EncodingConfig:
    """Per-channel min/max statistics and an optional bit depth.

    ``bits=None`` means data stay continuous after normalization.
    """

    lo: tuple
    hi: tuple
    bits: int | None = None

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi must have one entry per channel")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("each channel needs max > min")
        if self.bits is not None and self.bits < 1:
            raise ValueError("bits must be positive")

    @classmethod
    def fit(cls, channels, bits: int | None = None) -> "EncodingConfig":
        """Statistics from training data, one column per channel."""
        channels = np.atleast_2d(np.asarray(channels, dtype=float))
        return cls(tuple(channels.min(axis=0).tolist()),
                   tuple(channels.max(axis=0).tolist()), bits)

    def normalize(self, channels):
        return normalize(channels, self.lo, self.hi)

    def denormalize(self, channels):
        return denormalize(channels, self.lo, self.hi)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "bits": self.bits}

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingConfig":
        return cls(tuple(d["lo"]), tuple(d["hi"]), d.get("bits"))
