"""Truncated exponential families for continuous visible and output units.

Given binary hidden states, a continuous unit with natural parameter ``a``
(``a = b_i + sum_j w_ji h_j`` for a visible, ``a = d + V.h`` for the output)
has density proportional to ``exp(a * t)`` on its support. Three supports are
handled: ``[0, inf)``, ``[0, 1]`` and ``[-delta, delta]``.

All functions broadcast over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this |a| the closed forms are replaced by second-order expansions
SMALL = 1e-6


@dataclass(frozen=True)
class SupportInterval:
    """Support of a continuous unit: ``halfline``, ``unit`` or ``symmetric``."""

    kind: str
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("halfline", "unit", "symmetric"):
            raise ValueError(f"unknown interval kind {self.kind!r}")
        if self.kind == "symmetric" and not self.delta > 0:
            raise ValueError("symmetric interval needs delta > 0")

    @property
    def lo(self) -> float:
        return -self.delta if self.kind == "symmetric" else 0.0

    @property
    def hi(self) -> float:
        if self.kind == "halfline":
            return np.inf
        return self.delta if self.kind == "symmetric" else 1.0

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def bounded(self) -> bool:
        return self.kind != "halfline"

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.lo) & (t <= self.hi)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "symmetric":
            d["delta"] = self.delta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SupportInterval":
        return cls(d["kind"], float(d.get("delta", 1.0)))


@dataclass(frozen=True)
class BinaryUnits:
    """Marker domain for Bernoulli units (binary-encoded data)."""

    def to_dict(self) -> dict:
        return {"kind": "binary"}


HALFLINE = SupportInterval("halfline")
UNIT = SupportInterval("unit")
BINARY = BinaryUnits()


def symmetric(delta: float) -> SupportInterval:
    return SupportInterval("symmetric", float(delta))


def domain_from_dict(d: dict):
    if d["kind"] == "binary":
        return BINARY
    return SupportInterval.from_dict(d)


def _check_halfline(a):
    if np.any(a >= 0):
        raise ValueError("halfline support requires a negative natural parameter")


def log_normalizer(a, iv: SupportInterval):
    """``log of the integral of exp(a t)`` over the support."""
    a = np.asarray(a, dtype=float)
    if iv.kind == "halfline":
        _check_halfline(a)
        return -np.log(-a)
    L = iv.length
    aL = a * L
    small = np.abs(aL) < SMALL
    safe = np.where(small, 1.0, aL)
    abs_aL = np.abs(safe)
    # log((e^{aL} - 1) / a) + a*lo, written without overflow for either sign
    big = np.where(safe > 0, safe, 0.0) + np.log(-np.expm1(-abs_aL)) - np.log(abs_aL) + np.log(L)
    series = np.log(L) + aL / 2 + aL**2 / 24
    return np.where(small, series, big) + a * iv.lo


def density(a, iv: SupportInterval, t):
    """Normalized density at ``t``; zero outside the support."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    inside = iv.contains(t)
    tc = np.clip(t, iv.lo, iv.hi if iv.bounded else np.inf)
    logp = a * tc - log_normalizer(a, iv)
    return np.where(inside, np.exp(logp), 0.0)


def cdf(a, iv: SupportInterval, t):
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    if iv.kind == "halfline":
        _check_halfline(a)
        tc = np.maximum(t, 0.0)
        return np.clip(-np.expm1(a * tc), 0.0, 1.0)
    L = iv.length
    s = np.clip((t - iv.lo) / L, 0.0, 1.0)
    aL = a * L
    small = np.abs(aL) < SMALL
    safe = np.where(small, 1.0, aL)
    with np.errstate(over="ignore", invalid="ignore"):  # the unused branch may overflow
        pos = np.exp(safe * (s - 1)) * np.expm1(-safe * s) / np.expm1(-safe)
        neg = np.expm1(safe * s) / np.expm1(safe)
    exact = np.where(safe > 0, pos, neg)
    series = s + aL / 2 * (s * s - s)
    return np.clip(np.where(small, series, exact), 0.0, 1.0)


def mean(a, iv: SupportInterval):
    a = np.asarray(a, dtype=float)
    if iv.kind == "halfline":
        _check_halfline(a)
        return -1.0 / a
    return (iv.lo + iv.hi) / 2 + iv.length / 2 * _langevin(a * iv.length / 2)


def _langevin(x):
    """``coth(x) - 1/x`` without the cancellation near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.05
    safe = np.where(small, 1.0, x)
    x2 = x * x
    series = x * (1 / 3 - x2 * (1 / 45 - x2 * (2 / 945 - x2 / 4725)))
    return np.where(small, series, 1.0 / np.tanh(safe) - 1.0 / safe)


def sample(a, iv: SupportInterval, u):
    """Inverse-CDF transform of uniforms ``u`` in (0, 1)."""
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    if iv.kind == "halfline":
        _check_halfline(a)
        return np.log1p(-u) / a
    L = iv.length
    aL = a * L
    small = np.abs(aL) < SMALL
    safe = np.where(small, 1.0, a)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        pos = iv.hi + np.log(u + (1 - u) * np.exp(-safe * L)) / safe
        neg = iv.lo + np.log1p(u * np.expm1(safe * L)) / safe
    exact = np.where(safe > 0, pos, neg)
    series = iv.lo + L * (u + aL / 2 * u * (1 - u))
    return np.clip(np.where(small, series, exact), iv.lo, iv.hi)
