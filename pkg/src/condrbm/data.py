"""Series I/O, noise injection and benchmark data generators."""
from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np
from scipy import signal

from .sysid import IoSeries


class DataError(ValueError):
    """Malformed or unusable input data."""


def load_csv(path) -> IoSeries:
    """Read a ``k,u,y`` file into an ordered series."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != ["k", "u", "y"]:
            raise DataError(f"{path}:1: expected header 'k,u,y', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                k, u, y = (float(c) for c in row)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in (k, u, y)):
                raise DataError(f"{path}:{lineno}: non-finite value in {row!r}")
            rows.append((k, u, y))
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    order = np.argsort(arr[:, 0], kind="stable")
    return IoSeries(arr[order, 1], arr[order, 2])


def write_csv(path, s: IoSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "u", "y"])
        for k, (u, y) in enumerate(zip(s.u, s.y)):
            w.writerow([k, repr(float(u)), repr(float(y))])


def write_table(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in row.items()})


def read_table(path) -> list:
    """Read any CSV emitted by this package; numeric fields become floats."""
    def conv(v):
        try:
            return float(v)
        except ValueError:
            return v

    with open(path, newline="") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def add_noise(values, sigma: float, rng):
    """Element-wise ``values + N(0, sigma^2)``; works on series or arrays."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if isinstance(values, IoSeries):
        u = add_noise(values.u, sigma, rng)
        y = add_noise(values.y, sigma, rng)
        return IoSeries(u, y, values.sample_period)
    values = np.asarray(values, dtype=float)
    if sigma == 0:
        return values.copy()
    return values + rng.normal(0.0, sigma, values.shape)


# -- Wiener-Hammerstein generator ----------------------------------------------

WH_L1 = ([0.2, 0.1], [1.0, -1.2, 0.5])      # DC gain 1
WH_L2 = ([0.15, 0.05], [1.0, -1.0, 0.3])    # DC gain 2/3
WH_EXCITATION = signal.butter(4, 0.25)       # band limit for the random input


def dc_gain(filt) -> float:
    b, a = filt
    return float(np.sum(b) / np.sum(a))


def wh_nonlinearity(v):
    """Cubic ``v - v^3/3`` saturating at +-2/3 beyond |v| = 1."""
    v = np.asarray(v, dtype=float)
    return np.where(np.abs(v) <= 1, v - v**3 / 3, np.sign(v) * 2 / 3)


def wiener_hammerstein_response(u):
    """``L2(f(L1(u)))`` from rest."""
    v = signal.lfilter(*WH_L1, u)
    return signal.lfilter(*WH_L2, wh_nonlinearity(v))


def generate_wiener_hammerstein(n: int, seed: int = 0, u_std: float = 1.0) -> IoSeries:
    """Band-limited random excitation through the fixed W-H structure."""
    if n < 100:
        raise ValueError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    burn = 200
    e = rng.normal(0.0, 1.0, n + burn)
    u = signal.lfilter(*WH_EXCITATION, e)[burn:]
    u *= u_std / u.std()
    return IoSeries(u, wiener_hammerstein_response(u))


# -- gas furnace ---------------------------------------------------------------

GAS_FURNACE_ENV = "CONDRBM_GAS_FURNACE"
GAS_FURNACE_PERIOD = 9.0

# Published transfer-function model of the gas furnace series (Box & Jenkins):
# input AR(3), rational transfer with delay 3, AR(2) output noise.
_GF_INPUT_AR = [1.0, -1.97, 1.37, -0.34]
_GF_INPUT_VAR = 0.0353
_GF_TF_NUM = [-0.53, -0.37, -0.51]
_GF_TF_DEN = [1.0, -0.57]
_GF_DELAY = 3
_GF_NOISE_AR = [1.0, -1.53, 0.63]
_GF_NOISE_VAR = 0.0561
_GF_U_MEAN = -0.057
_GF_Y_MEAN = 53.51


def gas_furnace_surrogate(n: int = 296, seed: int = 0) -> IoSeries:
    """Synthetic series from the fitted gas furnace model; used when no data file exists."""
    rng = np.random.default_rng(seed)
    burn = 500
    a = rng.normal(0.0, math.sqrt(_GF_INPUT_VAR), n + burn)
    x = signal.lfilter([1.0], _GF_INPUT_AR, a)
    xd = np.concatenate([np.zeros(_GF_DELAY), x[:-_GF_DELAY]])
    transfer = signal.lfilter(_GF_TF_NUM, _GF_TF_DEN, xd)
    noise = signal.lfilter([1.0], _GF_NOISE_AR, rng.normal(0.0, math.sqrt(_GF_NOISE_VAR), n + burn))
    u = x[burn:] + _GF_U_MEAN
    y = transfer[burn:] + noise[burn:] + _GF_Y_MEAN
    return IoSeries(u, y, GAS_FURNACE_PERIOD)


def gas_furnace(path=None) -> IoSeries:
    """The gas furnace series from ``path`` (or ``$CONDRBM_GAS_FURNACE``), else the surrogate."""
    path = path or os.environ.get(GAS_FURNACE_ENV)
    if path:
        s = load_csv(path)
        return IoSeries(s.u, s.y, GAS_FURNACE_PERIOD)
    return gas_furnace_surrogate()
