"""RBM parameter containers, energies, activations and small-model oracles.

Sign convention used everywhere in the package::

    E(x, h)    = -b.x - c.h - h^T W x
    E(x, y, h) = -b.x - c.h - h^T W x - d.y - h^T V y

with ``W`` of shape (hidden, visible), ``b`` the visible bias, ``c`` the
hidden bias, ``V`` of shape (hidden, outputs) and ``d`` the output bias.
Continuous models have a single output, so ``V`` is one column and ``d`` has
length one.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

FORMAT_VERSION = 1


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


def sigmoid(z):
    return expit(z)


def softplus(z):
    return np.logaddexp(0.0, z)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded stream; equal seeds give bit-identical draws."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class GenerativeRbm:
    """One RBM layer modelling p(x)."""

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W, 2, "W"))
        object.__setattr__(self, "b", _frozen(self.b, 1, "b"))
        object.__setattr__(self, "c", _frozen(self.c, 1, "c"))
        s, n = self.W.shape
        if self.b.shape != (n,) or self.c.shape != (s,):
            raise ValueError(
                f"inconsistent shapes W{self.W.shape} b{self.b.shape} c{self.c.shape}")

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "GenerativeRbm":
        return cls(np.zeros((n_hidden, n_visible)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, rng, scale: float = 0.01) -> "GenerativeRbm":
        W = rng.uniform(-scale, scale, size=(n_hidden, n_visible)) / np.sqrt(max(n_visible, 1))
        return cls(W, np.zeros(n_visible), np.zeros(n_hidden))

    def params(self) -> dict:
        return {"W": self.W, "b": self.b, "c": self.c}

    def replace(self, **kw) -> "GenerativeRbm":
        p = self.params()
        p.update(kw)
        return type(self)(**p)


@dataclass(frozen=True)
class ConditionalRbm:
    """An RBM layer extended with output weights ``V`` and output bias ``d``."""

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray
    V: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name, nd in (("W", 2), ("b", 1), ("c", 1), ("d", 1)):
            object.__setattr__(self, name, _frozen(getattr(self, name), nd, name))
        V = np.array(self.V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        object.__setattr__(self, "V", _frozen(V, 2, "V"))
        s, n = self.W.shape
        if self.b.shape != (n,) or self.c.shape != (s,):
            raise ValueError(
                f"inconsistent shapes W{self.W.shape} b{self.b.shape} c{self.c.shape}")
        if self.V.shape[0] != s or self.d.shape != (self.V.shape[1],):
            raise ValueError(f"inconsistent output shapes V{self.V.shape} d{self.d.shape}")

    @property
    def base(self) -> GenerativeRbm:
        return GenerativeRbm(self.W, self.b, self.c)

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.V.shape[1]

    @classmethod
    def from_base(cls, base: GenerativeRbm, n_outputs: int = 1, rng=None,
                  scale: float = 0.01) -> "ConditionalRbm":
        s = base.n_hidden
        if rng is None:
            V = np.zeros((s, n_outputs))
        else:
            V = rng.uniform(-scale, scale, size=(s, n_outputs)) / np.sqrt(n_outputs)
        return cls(base.W, base.b, base.c, V, np.zeros(n_outputs))

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int, n_outputs: int = 1) -> "ConditionalRbm":
        return cls.from_base(GenerativeRbm.zeros(n_visible, n_hidden), n_outputs)

    def params(self) -> dict:
        return {"W": self.W, "b": self.b, "c": self.c, "V": self.V, "d": self.d}

    def replace(self, **kw) -> "ConditionalRbm":
        p = self.params()
        p.update(kw)
        return type(self)(**p)


def add_scaled(model, grad, step: float):
    """``model + step * grad`` parameter-wise; ``grad`` has the model's layout."""
    new = {k: v + step * grad[k] for k, v in model.params().items()}
    for k, v in new.items():
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"parameter {k} became non-finite during update")
    return type(model)(**new)


def _check_visible(x, m):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n_visible:
        raise ValueError(f"expected {m.n_visible} visibles, got {x.shape[-1]}")
    return x


def _check_hidden(h, m):
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != m.n_hidden:
        raise ValueError(f"expected {m.n_hidden} hidden units, got {h.shape[-1]}")
    return h


def _as_output(y, m: ConditionalRbm):
    y = np.asarray(y, dtype=float)
    if m.n_outputs == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    if y.shape[-1] != m.n_outputs:
        raise ValueError(f"expected {m.n_outputs} outputs, got {y.shape[-1]}")
    return y


def hidden_preactivation(x, m) -> np.ndarray:
    x = _check_visible(x, m)
    return x @ m.W.T + m.c


def energy(x, h, m) -> np.ndarray:
    x = _check_visible(x, m)
    h = _check_hidden(h, m)
    return -(x @ m.b) - (h @ m.c) - np.einsum("...j,...j->...", h, x @ m.W.T)


def joint_energy(x, y, h, m: ConditionalRbm) -> np.ndarray:
    y = _as_output(y, m)
    h = _check_hidden(h, m)
    out = y @ m.d + np.einsum("...j,...j->...", h, y @ m.V.T)
    return energy(x, h, m) - out


def free_energy(x, m) -> np.ndarray:
    """``F(x)`` with ``sum_h exp(-E(x, h)) = exp(-F(x))``."""
    x = _check_visible(x, m)
    return -(x @ m.b) - softplus(x @ m.W.T + m.c).sum(axis=-1)


def hidden_activation_probs(x, m) -> np.ndarray:
    return sigmoid(hidden_preactivation(x, m))


def hidden_given_xy_probs(x, y, m: ConditionalRbm) -> np.ndarray:
    y = _as_output(y, m)
    return sigmoid(hidden_preactivation(x, m) + y @ m.V.T)


def visible_preactivation(h, m) -> np.ndarray:
    """Natural parameter of each visible given hidden states: ``b + W^T h``."""
    h = _check_hidden(h, m)
    return h @ m.W + m.b


def output_preactivation(h, m: ConditionalRbm) -> np.ndarray:
    """Natural parameter of each output given hidden states: ``d + V^T h``."""
    h = _check_hidden(h, m)
    return h @ m.V + m.d


def sample_bernoulli(probs, rng: np.random.Generator) -> np.ndarray:
    """Bit ``j`` is 1 iff a uniform draw falls below ``probs[j]``."""
    probs = np.asarray(probs, dtype=float)
    return (rng.random(probs.shape) < probs).astype(float)


sample_hidden = sample_bernoulli


def all_binary_states(n: int) -> np.ndarray:
    """All ``2**n`` binary vectors, big-endian, in counting order."""
    if n == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)))


ENUMERATION_LIMIT = 20


def exact_log_partition(m: GenerativeRbm) -> float:
    """``log Z`` for binary visibles by enumerating x and summing h analytically."""
    if m.n_visible > ENUMERATION_LIMIT or m.n_hidden > ENUMERATION_LIMIT:
        raise ValueError(f"exact partition limited to {ENUMERATION_LIMIT} visible/hidden units")
    xs = all_binary_states(m.n_visible)
    return float(logsumexp(-free_energy(xs, m)))


def exact_log_likelihood(data, m: GenerativeRbm) -> float:
    """Mean ``log p(x)`` over rows of ``data`` (binary visibles)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return float(np.mean(-free_energy(data, m)) - exact_log_partition(m))


def kl_divergence(q, p) -> float:
    """``sum q log(q/p)``; ``inf`` when p vanishes where q does not."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError("distributions must share a support")
    mask = q > 0
    if np.any(p[mask] <= 0):
        return float("inf")
    return float(np.sum(q[mask] * (np.log(q[mask]) - np.log(p[mask]))))


# -- serialization ---------------------------------------------------------

def model_to_dict(m, interval=None, encoding=None) -> dict:
    d = {
        "version": FORMAT_VERSION,
        "n": m.n_visible,
        "s": m.n_hidden,
        "W": m.W.ravel().tolist(),
        "b": m.b.tolist(),
        "c": m.c.tolist(),
    }
    if isinstance(m, ConditionalRbm):
        d["q"] = m.n_outputs
        d["V"] = m.V.ravel().tolist()
        d["d"] = m.d.tolist()
    if interval is not None:
        d["interval"] = interval.to_dict()
    if encoding is not None:
        d["encoding"] = encoding
    return d


def model_from_dict(d: dict):
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    n, s = int(d["n"]), int(d["s"])
    W = np.array(d["W"], dtype=float).reshape(s, n)
    if "V" in d:
        q = int(d.get("q", 1))
        V = np.array(d["V"], dtype=float).reshape(s, q)
        return ConditionalRbm(W, d["b"], d["c"], V, d["d"])
    return GenerativeRbm(W, d["b"], d["c"])


def dumps(m, **kw) -> str:
    # repr-based float formatting in json round-trips doubles exactly
    return json.dumps(model_to_dict(m, **kw))


def loads(text: str):
    return model_from_dict(json.loads(text))
