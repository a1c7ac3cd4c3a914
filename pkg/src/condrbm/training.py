"""Generative, joint and conditional training of RBMs, plus cascade pre-training."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from . import inference
from .codec import decode
from .distributions import BINARY, UNIT, BinaryUnits, SupportInterval
from .distributions import mean as dist_mean
from .rbm_core import (
    ENUMERATION_LIMIT,
    ConditionalRbm,
    GenerativeRbm,
    add_scaled,
    all_binary_states,
    free_energy,
    hidden_activation_probs,
    hidden_given_xy_probs,
    make_rng,
    sample_bernoulli,
    sigmoid,
)

log = logging.getLogger(__name__)

REGIMES = ("generative", "joint", "conditional")
GRADIENT_MODES = ("cd", "exact")


@dataclass(frozen=True)
class TrainingConfig:
    eta1: float = 0.01
    eta2: float = 0.01
    eta3: float = 0.01
    gibbs_steps: int = 1
    epochs: int = 10
    pretrain_epochs: int | None = None
    batch_size: int = 1
    seed: int = 0
    regime: str = "conditional"
    gradient_mode: str = "cd"
    # mesh size for inverse-CDF draws of y during training
    cdf_grid: int = 512
    # fraction of the data used for the p(x) phase before joint training
    pretrain_fraction: float | None = None
    # half-width of the uniform weight initialization, before the 1/sqrt(n) factor
    init_scale: float = 0.01

    def __post_init__(self):
        if min(self.eta1, self.eta2, self.eta3) <= 0:
            raise ValueError("learning rates must be positive")
        if self.gibbs_steps < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("gibbs_steps and batch_size must be >= 1, epochs >= 0")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.pretrain_fraction is not None and not 0 < self.pretrain_fraction < 1:
            raise ValueError("pretrain_fraction must lie in (0, 1)")

    @property
    def n_pretrain_epochs(self) -> int:
        return self.epochs if self.pretrain_epochs is None else self.pretrain_epochs


@dataclass(frozen=True)
class StackSpec:
    """Hidden widths of a cascade of RBMs, bottom layer first."""

    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if not sizes or min(sizes) < 1:
            raise ValueError("need at least one layer, each with >= 1 hidden unit")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def uniform(cls, layers: int, hidden: int) -> "StackSpec":
        return cls((hidden,) * layers)


def _energy_grad_generative(x, h):
    B = x.shape[0]
    return {"W": -(h.T @ x) / B, "b": -x.mean(axis=0), "c": -h.mean(axis=0)}


def _diff(pos, neg):
    return {k: pos[k] - neg[k] for k in pos}


def _check_domain(data, domain, what):
    if isinstance(domain, SupportInterval) and np.any(~domain.contains(data)):
        raise ValueError(f"{what} lies outside the {domain.kind} support; normalize first")


def initial_visible_bias(data, domain):
    """Zero, except on [0, inf) where the bias must start negative."""
    data = np.atleast_2d(data)
    if isinstance(domain, SupportInterval) and domain.kind == "halfline":
        return -1.0 / np.maximum(data.mean(axis=0), 1e-3)
    return np.zeros(data.shape[1])


def init_generative(data, n_hidden, rng, domain=BINARY, scale: float = 0.01) -> GenerativeRbm:
    n = np.atleast_2d(data).shape[1]
    m = GenerativeRbm.random(n, n_hidden, rng, scale)
    return m.replace(b=initial_visible_bias(data, domain))


# -- generative regime ------------------------------------------------------

def cd_gradient_generative(m: GenerativeRbm, batch, k: int, rng, visible=BINARY) -> dict:
    """CD-k estimate of the gradient of the mean ``-log p(x)`` over ``batch``."""
    x0 = np.atleast_2d(np.asarray(batch, dtype=float))
    if x0.shape[0] == 0:
        raise ValueError("empty batch")
    h_probs = hidden_activation_probs(x0, m)
    pos = _energy_grad_generative(x0, h_probs)
    xk, hk = x0, h_probs
    for _ in range(k):
        bits = sample_bernoulli(hk, rng)
        xk = inference.sample_visible(bits, m, visible, rng)
        hk = hidden_activation_probs(xk, m)
    return _diff(pos, _energy_grad_generative(xk, hk))


def _free_energy_grad(x, m):
    return _energy_grad_generative(x, hidden_activation_probs(x, m))


def exact_gradient_generative(m: GenerativeRbm, batch) -> dict:
    """``dF(data)/dparam - sum_x p(x) dF(x)/dparam`` by enumerating binary x."""
    if m.n_visible > ENUMERATION_LIMIT:
        raise ValueError("exact gradient needs an enumerable visible layer")
    x0 = np.atleast_2d(np.asarray(batch, dtype=float))
    xs = all_binary_states(m.n_visible)
    logp = -free_energy(xs, m)
    p = np.exp(logp - logsumexp(logp))
    h = hidden_activation_probs(xs, m)
    model = {"W": -(h.T * p) @ xs, "b": -(p @ xs), "c": -(p @ h)}
    return _diff(_free_energy_grad(x0, m), model)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _step(m, grad, eta):
    try:
        return add_scaled(m, grad, -eta)
    except FloatingPointError as exc:
        raise FloatingPointError(f"training diverged: {exc}") from exc


def pretrain_generative(m: GenerativeRbm, data, cfg: TrainingConfig, visible=BINARY,
                        epochs: int | None = None, rng=None):
    """Stochastic gradient descent on ``-log p(x)``; returns (model, trace).

    The trace holds the mean free energy of the data before training and
    after every epoch. Exact gradients are used only for binary visibles;
    continuous layers always fall back to CD.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    _check_domain(data, visible, "training data")
    rng = make_rng(cfg.seed) if rng is None else rng
    epochs = cfg.n_pretrain_epochs if epochs is None else epochs
    trace = [float(free_energy(data, m).mean())]
    for _ in range(epochs):
        for idx in _batches(len(data), cfg.batch_size, rng):
            if cfg.gradient_mode == "exact" and isinstance(visible, BinaryUnits):
                grad = exact_gradient_generative(m, data[idx])
            else:
                grad = cd_gradient_generative(m, data[idx], cfg.gibbs_steps, rng, visible)
            m = _step(m, grad, cfg.eta1)
        trace.append(float(free_energy(data, m).mean()))
    return m, trace


def next_domain(visible):
    """Domain of the hidden-probability features fed to the next layer."""
    return BINARY if isinstance(visible, BinaryUnits) else UNIT


def cascade_pretrain(spec: StackSpec, data, cfg: TrainingConfig, visible=BINARY,
                     rng=None) -> list:
    """Train layer by layer; each frozen layer's hidden probabilities feed the next."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    rng = make_rng(cfg.seed) if rng is None else rng
    layers = []
    inputs, domain = data, visible
    for width in spec.layer_sizes:
        m = init_generative(inputs, width, rng, domain, cfg.init_scale)
        m, trace = pretrain_generative(m, inputs, cfg, domain, rng=rng)
        log.debug("layer %d pretrained, free energy %.4g -> %.4g", len(layers), trace[0], trace[-1])
        layers.append(m)
        inputs, domain = hidden_activation_probs(inputs, m), next_domain(domain)
    return layers


def forward_features(layers, x):
    """Hidden-probability representation after passing ``x`` up the stack."""
    for m in layers:
        if np.shape(x)[-1] != m.n_visible:
            raise ValueError(f"layer expects width {m.n_visible}, got {np.shape(x)[-1]}")
        x = hidden_activation_probs(x, m)
    return x


# -- joint regime -----------------------------------------------------------

def _outputs(y, iv):
    y = np.asarray(y, dtype=float)
    return y.reshape(y.shape[0], -1) if isinstance(iv, BinaryUnits) else y.reshape(-1, 1)


def joint_cd_gradient(m: ConditionalRbm, x, y, k: int, rng, iv, visible=None) -> dict:
    """CD-k estimate of the gradient of the mean ``-log p(x, y)``.

    Data phase ``(x, y, p(h|x, y))``; model phase after alternating
    ``h ~ p(h|x, y)``, ``x ~ p(x|h)``, ``y ~ p(y|h)`` k times.
    """
    visible = iv if visible is None else visible
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    Y = _outputs(y, iv)
    probs = hidden_given_xy_probs(X, Y, m)
    pos = inference.energy_gradient(X, Y, probs)
    xk, yk, hk = X, Y, probs
    for _ in range(k):
        bits = sample_bernoulli(hk, rng)
        xk = inference.sample_visible(bits, m, visible, rng)
        yk = _outputs(inference.sample_output(bits, m, iv, rng), iv)
        hk = hidden_given_xy_probs(xk, yk, m)
    return _diff(pos, inference.energy_gradient(xk, yk, hk))


def exact_joint_log_likelihood(data_x, data_y, m: ConditionalRbm) -> float:
    """Mean ``log p(x, y)`` for binary x and y by full enumeration."""
    _, _, logp = _joint_table(m)
    X = np.atleast_2d(data_x)
    Y = np.atleast_2d(data_y)
    return float(np.mean(-_joint_free_energy(X, Y, m)) - logsumexp(logp))


def _joint_free_energy(X, Y, m):
    pre = X @ m.W.T + m.c + Y @ m.V.T
    return -(X @ m.b) - (Y @ m.d) - np.logaddexp(0.0, pre).sum(axis=-1)


def _joint_table(m):
    if m.n_visible + m.n_outputs > ENUMERATION_LIMIT:
        raise ValueError("joint enumeration limited to 20 visible+output bits")
    states = all_binary_states(m.n_visible + m.n_outputs)
    xs, ys = states[:, :m.n_visible], states[:, m.n_visible:]
    return xs, ys, -_joint_free_energy(xs, ys, m)


def exact_gradient_joint(m: ConditionalRbm, x, y) -> dict:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    xs, ys, logp = _joint_table(m)
    p = np.exp(logp - logsumexp(logp))[:, None]
    h = hidden_given_xy_probs(xs, ys, m)
    model = {"W": -(h * p).T @ xs, "b": -(p * xs).sum(0), "c": -(p * h).sum(0),
             "V": -(h * p).T @ ys, "d": -(p * ys).sum(0)}
    data = inference.energy_gradient(X, Y, hidden_given_xy_probs(X, Y, m))
    return _diff(data, model)


def reconstruction_error(m: ConditionalRbm, x, y, iv) -> float:
    """Mean ``|y - E[y | h(x, y)]|`` with mean-field hidden probabilities."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = _outputs(y, iv)
    h = hidden_given_xy_probs(X, Y, m)
    gamma = h @ m.V + m.d
    if isinstance(iv, BinaryUnits):
        return float(np.mean(np.abs(decode(Y) - decode(sigmoid(gamma)))))
    return float(np.mean(np.abs(Y[:, 0] - dist_mean(gamma[:, 0], iv))))


def _split_pretrain(m, x, cfg, visible, rng):
    """Optional p(x) phase on a leading fraction of the data; returns the remainder index."""
    if cfg.pretrain_fraction is None:
        return m, 0
    cut = int(round(cfg.pretrain_fraction * len(x)))
    base, _ = pretrain_generative(m.base, x[:cut], cfg, visible, rng=rng)
    return ConditionalRbm(base.W, base.b, base.c, m.V, m.d), cut


def train_joint(m: ConditionalRbm, x, y, cfg: TrainingConfig, iv, visible=None, rng=None):
    """Maximize ``sum log p(x, y)``; returns (model, reconstruction-error trace)."""
    visible = iv if visible is None else visible
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = _outputs(y, iv)
    _check_domain(X, visible, "inputs")
    _check_domain(Y, iv, "outputs")
    if cfg.gradient_mode == "exact" and not (isinstance(visible, BinaryUnits)
                                             and isinstance(iv, BinaryUnits)):
        raise ValueError("exact joint gradients need binary inputs and outputs")
    rng = make_rng(cfg.seed) if rng is None else rng
    m, cut = _split_pretrain(m, X, cfg, visible, rng)
    X, Y = X[cut:], Y[cut:]
    trace = [reconstruction_error(m, X, Y, iv)]
    for _ in range(cfg.epochs):
        for idx in _batches(len(X), cfg.batch_size, rng):
            if cfg.gradient_mode == "exact":
                grad = exact_gradient_joint(m, X[idx], Y[idx])
            else:
                grad = joint_cd_gradient(m, X[idx], Y[idx], cfg.gibbs_steps, rng, iv, visible)
            m = _step(m, grad, cfg.eta2)
        trace.append(reconstruction_error(m, X, Y, iv))
    return m, trace


# -- conditional regime -----------------------------------------------------

def conditional_cd_gradient(m: ConditionalRbm, x, y, k: int, rng, iv,
                            grid: int = inference.CDF_GRID) -> dict:
    """Sampled gradient of the mean ``-log p(y|x)``.

    Clamped term: energy gradient at the data with ``p(h|x, y)``. Free
    term: ``k`` ancestral draws ``(y_a, h_a) ~ p(y, h|x)`` at the same data
    ``x``, using ``p(h|x, y_a)`` for the hidden statistics.
    """
    X, Y, probs = inference.clamped_statistics(x, y, m, iv)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    pos = inference.energy_gradient(X, Y, probs)
    Xk = np.repeat(X, k, axis=0)
    ya, _, ha = inference.sample_y_h_given_x(Xk, m, iv, rng, grid)
    neg = inference.energy_gradient(Xk, _outputs(ya, iv), ha)
    return _diff(pos, neg)


def mean_cond_nll(m: ConditionalRbm, x, y, iv) -> float:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    return float(-np.mean(inference.cond_loglik(X, np.asarray(y, dtype=float), m, iv)))


def train_conditional(m: ConditionalRbm, x, y, cfg: TrainingConfig, iv, rng=None):
    """Maximize ``sum log p(y|x)``; returns (model, mean negative log-likelihood trace)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.asarray(y, dtype=float)
    if not isinstance(iv, BinaryUnits):
        _check_domain(Y, iv, "outputs")
    rng = make_rng(cfg.seed) if rng is None else rng
    trace = [mean_cond_nll(m, X, Y, iv)]
    for _ in range(cfg.epochs):
        for idx in _batches(len(X), cfg.batch_size, rng):
            if cfg.gradient_mode == "exact":
                grad = inference.cond_loglik_grad(X[idx], Y[idx], m, iv)
            else:
                grad = conditional_cd_gradient(m, X[idx], Y[idx], cfg.gibbs_steps, rng, iv,
                                               cfg.cdf_grid)
            m = _step(m, grad, cfg.eta3)
        trace.append(mean_cond_nll(m, X, Y, iv))
    return m, trace


def train(m, x, y, cfg: TrainingConfig, iv, visible=None, rng=None):
    """Dispatch on ``cfg.regime``; generative mode updates only the base layer."""
    if cfg.regime == "joint":
        return train_joint(m, x, y, cfg, iv, visible, rng)
    if cfg.regime == "conditional":
        return train_conditional(m, x, y, cfg, iv, rng)
    visible = iv if visible is None else visible
    base, trace = pretrain_generative(m.base, x, replace(cfg, pretrain_epochs=cfg.epochs),
                                      visible, rng=rng)
    return ConditionalRbm(base.W, base.b, base.c, m.V, m.d), trace


def write_trace_csv(path, rows):
    """``rows`` of (epoch, regime, objective_value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "regime", "objective_value"])
        for row in rows:
            w.writerow([int(row[0]), row[1], repr(float(row[2]))])
