"""NARX regressors, RBM-based identification models and error metrics.

A fitted :class:`IdentificationModel` maps a regressor ``x(k)`` to the
conditional mean ``E[y(k) | x(k)]`` of a conditional RBM sitting on top of a
frozen cascade of feature RBMs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import codec, inference
from .distributions import UNIT, BinaryUnits, SupportInterval, domain_from_dict
from .rbm_core import ConditionalRbm, make_rng, model_from_dict, model_to_dict
from .training import (
    StackSpec,
    TrainingConfig,
    cascade_pretrain,
    forward_features,
    next_domain,
)
from . import training

MODES = ("prediction", "simulation")


@dataclass(frozen=True)
class RegressorSpec:
    n_y: int = 1
    n_u: int = 5
    mode: str = "prediction"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_y < 0 or self.n_u < 0:
            raise ValueError("lags must be non-negative")
        if self.mode == "simulation" and self.n_y != 0:
            raise ValueError("simulation models use input lags only (n_y = 0)")

    @property
    def dim(self) -> int:
        return self.n_y + self.n_u + 1

    @property
    def max_lag(self) -> int:
        return max(self.n_y, self.n_u)

    def to_dict(self) -> dict:
        return {"n_y": self.n_y, "n_u": self.n_u, "mode": self.mode}


@dataclass(frozen=True)
class IoSeries:
    u: np.ndarray
    y: np.ndarray
    sample_period: float = 1.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if u.shape != y.shape:
            raise ValueError(f"u and y lengths differ ({u.size} vs {y.size})")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.u.size

    def slice(self, start=None, stop=None) -> "IoSeries":
        return IoSeries(self.u[start:stop], self.y[start:stop], self.sample_period)


def build_regressors(s: IoSeries, spec: RegressorSpec):
    """Return ``(X, Y, k)`` for every sample ``k >= max(n_y, n_u)``.

    Rows of ``X`` are ``[y(k-1)..y(k-n_y), u(k)..u(k-n_u)]``.
    """
    T, lag = len(s), spec.max_lag
    if T <= lag:
        raise ValueError(f"series of length {T} too short for lag {lag}")
    k = np.arange(lag, T)
    cols = [s.y[k - i] for i in range(1, spec.n_y + 1)]
    cols += [s.u[k - i] for i in range(spec.n_u + 1)]
    return np.column_stack(cols), s.y[k].copy(), k


def regressor_channels(spec: RegressorSpec) -> np.ndarray:
    """Channel index (0 = u, 1 = y) of every regressor column."""
    return np.array([1] * spec.n_y + [0] * (spec.n_u + 1))


def mse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch {y.shape} vs {yhat.shape}")
    return float(np.mean((y - yhat) ** 2))


@dataclass(frozen=True)
class IdentificationModel:
    """Feature cascade + conditional RBM + the codec they were trained with.

    ``encoding`` holds (u, y) min/max statistics and the bit depth in
    binary mode; ``domain`` is the output/visible support in continuous mode
    or :data:`BINARY`.
    """

    features: tuple
    top: ConditionalRbm
    domain: object
    encoding: codec.EncodingConfig
    regressor: RegressorSpec

    @property
    def binary(self) -> bool:
        return isinstance(self.domain, BinaryUnits)

    def normalize_regressors(self, X):
        ch = regressor_channels(self.regressor)
        lo = np.asarray(self.encoding.lo)[ch]
        hi = np.asarray(self.encoding.hi)[ch]
        return codec.normalize(X, lo, hi)

    def normalize_output(self, y):
        return codec.normalize(y, self.encoding.lo[1], self.encoding.hi[1])

    def denormalize_output(self, y):
        return codec.denormalize(y, self.encoding.lo[1], self.encoding.hi[1])

    def visible_inputs(self, Xn):
        """Model-domain visibles for normalized regressors."""
        if self.binary:
            return codec.encode_vector(np.clip(Xn, 0.0, 1.0), self.encoding.bits)
        return clip_to(Xn, self.domain)

    def predict_normalized(self, Xn):
        feats = forward_features(self.features, self.visible_inputs(Xn))
        return inference.conditional_mean_y(feats, self.top, self.domain)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "identification_model",
            "features": [model_to_dict(m) for m in self.features],
            "model": model_to_dict(self.top, interval=self.domain, encoding=self.encoding.to_dict()),
            "regressor": self.regressor.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdentificationModel":
        if d.get("kind") != "identification_model":
            raise ValueError("not an identification model file")
        top = d["model"]
        return cls(
            tuple(model_from_dict(f) for f in d["features"]),
            model_from_dict(top),
            domain_from_dict(top["interval"]),
            codec.EncodingConfig.from_dict(top["encoding"]),
            RegressorSpec(**d["regressor"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "IdentificationModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def clip_to(values, domain):
    if isinstance(domain, SupportInterval):
        return np.clip(values, domain.lo, domain.hi)
    return np.clip(values, 0.0, 1.0)


def _initial_output_bias(Yv, domain):
    if isinstance(domain, SupportInterval) and domain.kind == "halfline":
        return np.array([-1.0 / max(float(np.mean(Yv)), 1e-3)])
    q = 1 if not isinstance(domain, BinaryUnits) else Yv.shape[-1]
    return np.zeros(q)


def fit_identifier(train: IoSeries, spec: RegressorSpec, stack: StackSpec,
                   cfg: TrainingConfig, domain=UNIT, bits: int | None = None,
                   noise_std: float = 0.0, encoding: codec.EncodingConfig | None = None,
                   untrained: bool = False, traces: dict | None = None,
                   pretrained: list | None = None):
    """Fit the full pipeline on a training series.

    Normalization statistics come from ``train`` unless ``encoding`` is
    given. ``noise_std`` adds Gaussian noise to the normalized regressors.
    The last layer of ``stack`` becomes the conditional RBM; the layers
    below it are frozen feature extractors. ``pretrained`` supplies already
    trained feature layers; only the output layer is then pre-trained. Returns the fitted model.
    """
    if isinstance(domain, BinaryUnits) and not bits:
        raise ValueError("binary mode needs a bit depth")
    if encoding is None:
        encoding = codec.EncodingConfig.fit(np.column_stack([train.u, train.y]),
                                            bits if isinstance(domain, BinaryUnits) else None)
    rng = make_rng(cfg.seed)
    X, Y, _ = build_regressors(train, spec)
    model = IdentificationModel((), ConditionalRbm.zeros(1, 1), domain, encoding, spec)
    Xn = model.normalize_regressors(X)
    if noise_std > 0:
        Xn = Xn + rng.normal(0.0, noise_std, Xn.shape)
    Yn = model.normalize_output(Y)
    Xv = model.visible_inputs(Xn)
    Yv = codec.encode(np.clip(Yn, 0, 1), bits) if model.binary else clip_to(Yn, domain)

    if untrained:
        cfg = replace(cfg, epochs=0, pretrain_epochs=0)
    if pretrained is None:
        layers = cascade_pretrain(stack, Xv, cfg, domain, rng=rng)
        features = tuple(layers[:-1])
        feats = forward_features(features, Xv)
    else:
        features = tuple(pretrained)
        feats = forward_features(features, Xv)
        feat_domain = next_domain(domain) if features else domain
        top_spec = StackSpec(stack.layer_sizes[-1:])
        layers = cascade_pretrain(top_spec, feats, cfg, feat_domain, rng=rng)
    top_visible = domain if not features else next_domain(domain)
    top = ConditionalRbm.from_base(layers[-1], 1 if not model.binary else bits, rng,
                                   cfg.init_scale)
    top = top.replace(d=_initial_output_bias(Yv, domain))
    top, trace = training.train(top, feats, Yv, cfg, domain, visible=top_visible, rng=rng)
    if traces is not None:
        traces[cfg.regime] = trace
    return IdentificationModel(features, top, domain, encoding, spec)


def predict_normalized_series(model: IdentificationModel, s: IoSeries):
    """Normalized targets and conditional-mean predictions for every valid k."""
    X, Y, k = build_regressors(s, model.regressor)
    Xn = model.normalize_regressors(X)
    return model.normalize_output(Y), model.predict_normalized(Xn), k


def _check_spec(model, spec):
    if spec is not None and spec != model.regressor:
        raise ValueError(f"model was trained with {model.regressor}, not {spec}")


def predict_series(model: IdentificationModel, s: IoSeries, spec: RegressorSpec | None = None):
    """One-step-ahead predictions using measured past outputs, in data units."""
    _check_spec(model, spec)
    _, yhat, _ = predict_normalized_series(model, s)
    return model.denormalize_output(yhat)


def simulate_series(model: IdentificationModel, u, spec: RegressorSpec | None = None):
    """Outputs from input lags only; ``u`` is the input series."""
    _check_spec(model, spec)
    if model.regressor.n_y != 0:
        raise ValueError("simulation needs a model without output lags")
    u = np.asarray(u, dtype=float)
    s = IoSeries(u, np.zeros_like(u))
    X, _, _ = build_regressors(s, model.regressor)
    return model.denormalize_output(model.predict_normalized(model.normalize_regressors(X)))
