"""Evaluation and sampling of p(y|x), p(y,h|x) and p(x|y,h).

Summing out the binary hidden layer of a conditional RBM leaves, up to
factors that do not involve ``y``::

    p(y|x)  ~  exp(d y) * prod_j (1 + exp(tau_j(x, y))),
    tau_j   =  w_j.x + c_j + v_j y.

The normalizer is a one-dimensional integral over the output support. It is
computed either by adaptive quadrature or by expanding the product over all
subsets ``S`` of hidden units, each term integrating in closed form to
``exp(sum_S (w_j.x + c_j)) * I(d + sum_S v_j)``.

For binary-encoded outputs the integral becomes a sum over all ``2**q``
output bit patterns.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from . import distributions as dist
from .distributions import BinaryUnits, SupportInterval
from .quadrature import adaptive_gauss_legendre
from .rbm_core import (
    ConditionalRbm,
    all_binary_states,
    hidden_preactivation,
    sample_bernoulli,
    sigmoid,
    softplus,
    visible_preactivation,
)

POWERSET_LIMIT = 20
AUTO_POWERSET = 12
EXACT_MIXTURE_LIMIT = 10
OUTPUT_ENUMERATION_LIMIT = 16
CDF_GRID = 4096
QUAD_TOL = 1e-10
# rows per chunk are chosen so temporaries stay near this many doubles
CHUNK_ELEMENTS = 1 << 22


class DivergentIntegralError(ValueError):
    pass


def _batch(x, m):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _unbatch(v, single):
    return v[0] if single else v


def _row_chunks(n_rows, per_row):
    step = max(1, CHUNK_ELEMENTS // max(per_row, 1))
    return [slice(i, min(i + step, n_rows)) for i in range(0, n_rows, step)]


def _slopes(m: ConditionalRbm):
    if m.n_outputs != 1:
        raise ValueError("continuous outputs require a single-output model")
    return m.V[:, 0], float(m.d[0])


def log_numerator(x, y, m: ConditionalRbm):
    """``d y + sum_j softplus(tau_j(x, y))`` for continuous scalar ``y``."""
    v, d = _slopes(m)
    a = hidden_preactivation(x, m)
    y = np.asarray(y, dtype=float)
    return d * y + softplus(a + v * y[..., None]).sum(axis=-1)


def _log_integrand(a, v, d, y):
    """``a`` (B, s), ``y`` (G,) -> (B, G)."""
    return d * y[None, :] + softplus(a[:, None, :] + y[None, :, None] * v).sum(axis=-1)


def halfline_decay(m: ConditionalRbm) -> float:
    """Positive asymptotic decay rate of the y-integrand on [0, inf).

    The largest subset slope ``d + sum_S v_j`` is attained by the subset of
    positive ``v_j``; integrability of every term needs it to be negative.
    """
    v, d = _slopes(m)
    worst = d + v[v > 0].sum()
    if worst >= 0:
        subset = sorted(np.flatnonzero(v > 0).tolist())
        raise DivergentIntegralError(
            f"integral over [0, inf) diverges: subset {subset} has slope d + sum v = {worst:.6g} >= 0")
    return -worst


# -- closed-form (power-set) route ----------------------------------------

def _subset_terms(a, m: ConditionalRbm, iv: SupportInterval):
    """Log weights (B, 2^s), subset slopes (2^s,) and membership matrix."""
    v, d = _slopes(m)
    s = m.n_hidden
    if s > POWERSET_LIMIT:
        raise ValueError(f"power-set expansion limited to {POWERSET_LIMIT} hidden units, got {s}")
    S = all_binary_states(s)
    gamma = d + S @ v
    if iv.kind == "halfline" and np.any(gamma >= 0):
        bad = int(np.argmax(gamma))
        subset = np.flatnonzero(S[bad]).tolist()
        raise DivergentIntegralError(
            f"integral over [0, inf) diverges: subset {subset} has slope {gamma[bad]:.6g} >= 0")
    logw = a @ S.T + dist.log_normalizer(gamma, iv)
    return logw, gamma, S


def _powerset_log_denominator(a, m, iv):
    logw, _, _ = _subset_terms(a, m, iv)
    return logsumexp(logw, axis=-1)


# -- quadrature route -------------------------------------------------------

def _quadrature(a, m, iv, extra=None, tol=QUAD_TOL):
    """Return (log shift, integrals) with integrals of ``f(y) exp(g(y) - shift)``.

    ``extra(y, a)`` returns the stacked weights ``f`` with shape (K, B, G);
    without it a single row of ones is integrated.
    """
    parts = [_quadrature_rows(a[rows], m, iv, extra, tol)
             for rows in _row_chunks(a.shape[0], 64 * (2 * m.n_hidden + 2))]
    if len(parts) == 1:
        return parts[0]
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts], axis=-1))


def _quadrature_rows(a, m, iv, extra, tol):
    v, d = _slopes(m)
    if iv.bounded:
        ends = _log_integrand(a, v, d, np.array([iv.lo, iv.hi]))
        # the log integrand is convex in y, so its maximum sits at an endpoint
        shift = ends.max(axis=1)

        def f(y):
            w = np.exp(_log_integrand(a, v, d, y) - shift[:, None])
            return w[None] if extra is None else extra(y, a) * w

        return shift, adaptive_gauss_legendre(f, iv.lo, iv.hi, tol=tol)

    kappa = halfline_decay(m)
    shift = _log_integrand(a, v, d, np.array([0.0]))[:, 0]

    def f(t):
        y = -np.log1p(-t) / kappa
        logw = _log_integrand(a, v, d, y) - shift[:, None] - np.log(kappa) - np.log1p(-t)
        w = np.exp(logw)
        return w[None] if extra is None else extra(y, a) * w

    return shift, adaptive_gauss_legendre(f, 0.0, 1.0, tol=tol)


def _quadrature_log_denominator(a, m, iv):
    shift, integral = _quadrature(a, m, iv)
    return shift + np.log(integral[0])


# -- binary outputs ---------------------------------------------------------

def output_states(m: ConditionalRbm) -> np.ndarray:
    q = m.n_outputs
    if q > OUTPUT_ENUMERATION_LIMIT:
        raise ValueError(f"binary output enumeration limited to {OUTPUT_ENUMERATION_LIMIT} bits")
    return all_binary_states(q)


def _binary_log_weights(a, m):
    """Unnormalized log p(y|x) over all output patterns: (B, 2^q)."""
    Y = output_states(m)
    return Y @ m.d + softplus(a[:, None, :] + (Y @ m.V.T)[None]).sum(axis=-1), Y


# -- public surface ---------------------------------------------------------

def _resolve(method, m):
    if method == "auto":
        return "powerset" if m.n_hidden <= AUTO_POWERSET else "quadrature"
    if method not in ("powerset", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    return method


def log_denominator(x, m: ConditionalRbm, iv, method: str = "auto"):
    """``log`` of the y-normalizer of p(y|x) (the ``b.x`` factor excluded)."""
    X, single = _batch(x, m)
    a = hidden_preactivation(X, m)
    if isinstance(iv, BinaryUnits):
        logw, _ = _binary_log_weights(a, m)
        return _unbatch(logsumexp(logw, axis=-1), single)
    if _resolve(method, m) == "powerset":
        out = _powerset_log_denominator(a, m, iv)
    else:
        out = _quadrature_log_denominator(a, m, iv)
    return _unbatch(out, single)


def cond_loglik(x, y, m: ConditionalRbm, iv, method: str = "auto"):
    """``log p(y|x)``; batched over leading axes of ``x`` and ``y``."""
    if isinstance(iv, BinaryUnits):
        y = np.asarray(y, dtype=float)
        a = hidden_preactivation(x, m)
        num = y @ m.d + softplus(a + y @ m.V.T).sum(axis=-1)
        return num - log_denominator(x, m, iv)
    y = np.asarray(y, dtype=float)
    if np.any(~iv.contains(y)):
        return np.where(iv.contains(y), log_numerator(x, y, m) - log_denominator(x, m, iv, method),
                        -np.inf)
    return log_numerator(x, y, m) - log_denominator(x, m, iv, method)


def conditional_density_y(x, y, m: ConditionalRbm, iv, method: str = "auto"):
    return np.exp(cond_loglik(x, y, m, iv, method))


def conditional_mean_y(x, m: ConditionalRbm, iv, method: str = "quadrature"):
    """``E[y|x]``; for binary outputs the mean of the decoded level in [0, 1]."""
    X, single = _batch(x, m)
    a = hidden_preactivation(X, m)
    if isinstance(iv, BinaryUnits):
        logw, Y = _binary_log_weights(a, m)
        p = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        q = m.n_outputs
        values = (Y @ (2.0 ** np.arange(q - 1, -1, -1))) / (2**q - 1)
        return _unbatch(p @ values, single)
    if method == "powerset":
        logw, gamma, _ = _subset_terms(a, m, iv)
        p = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        return _unbatch(p @ dist.mean(gamma, iv), single)

    def extra(y, a_):
        return np.stack([np.ones((a_.shape[0], y.size)), np.broadcast_to(y, (a_.shape[0], y.size))])

    _, integral = _quadrature(a, m, iv, extra)
    return _unbatch(integral[1] / integral[0], single)


def _grid_sample_y(a, m, iv, u, grid):
    """Inverse-CDF draws; one CDF table is built per distinct row of ``a``."""
    uniq, inv = np.unique(a, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(uniq.shape[0] + 1))
    out = np.empty(a.shape[0])
    for rows in _row_chunks(uniq.shape[0], grid * (m.n_hidden + 4)):
        t, cum = _cdf_table(uniq[rows], m, iv, grid)
        sel = order[bounds[rows.start]:bounds[rows.stop]]
        out[sel] = _invert_table(t, cum, inv[sel] - rows.start, u[sel])
    if iv.bounded:
        return out
    return -np.log1p(-out) / halfline_decay(m)


def _cdf_table(a, m, iv, grid):
    """Trapezoid CDF of the y-integrand on a uniform mesh of ``t``.

    On the half line ``t = 1 - exp(-kappa y)`` maps the support onto [0, 1).
    """
    v, d = _slopes(m)
    if iv.bounded:
        t = np.linspace(iv.lo, iv.hi, grid)
        logf = _log_integrand(a, v, d, t)
    else:
        kappa = halfline_decay(m)
        t = np.linspace(0.0, 1.0 - 1e-12, grid)
        logf = _log_integrand(a, v, d, -np.log1p(-t) / kappa) - np.log1p(-t)
    f = np.exp(logf - logf.max(axis=1, keepdims=True))
    cum = np.concatenate([np.zeros((f.shape[0], 1)),
                          np.cumsum(0.5 * (f[:, 1:] + f[:, :-1]), axis=1)], axis=1)
    return t, cum / cum[:, -1:]


def _invert_table(t, cum, row, u):
    grid = t.size
    # rows offset by 2 make the flattened table globally sorted
    flat = (cum + 2.0 * np.arange(cum.shape[0])[:, None]).ravel()
    idx = np.searchsorted(flat, u + 2.0 * row) - row * grid
    idx = np.clip(idx, 1, grid - 1)
    c0, c1 = cum[row, idx - 1], cum[row, idx]
    frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.0)
    return t[idx - 1] + frac * (t[idx] - t[idx - 1])


def _categorical(logw, rng):
    """One index per row of ``logw`` drawn with probability ``softmax``."""
    p = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
    cum = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[0]) * cum[:, -1]
    return np.minimum((cum < u[:, None]).sum(axis=-1), p.shape[-1] - 1)


def sample_y_given_x(x, m: ConditionalRbm, iv, rng, grid: int = CDF_GRID):
    """Draw ``y ~ p(y|x)`` for each row of ``x``.

    Binary outputs and models with few hidden units are sampled exactly
    (categorical draw over output patterns, or over the mixture components
    of the subset expansion followed by an inverse-CDF draw). Larger models
    invert a cached CDF on a ``grid``-point mesh.
    """
    X, single = _batch(x, m)
    a = hidden_preactivation(X, m)
    if isinstance(iv, BinaryUnits):
        logw, Y = _binary_log_weights(a, m)
        y = Y[_categorical(logw, rng)]
    elif m.n_hidden <= EXACT_MIXTURE_LIMIT:
        logw, gamma, _ = _subset_terms(a, m, iv)
        comp = _categorical(logw, rng)
        y = dist.sample(gamma[comp], iv, rng.random(comp.shape))
    else:
        y = _grid_sample_y(a, m, iv, rng.random(a.shape[0]), grid)
    return _unbatch(y, single)


def sample_y_h_given_x(x, m: ConditionalRbm, iv, rng, grid: int = CDF_GRID):
    """Ancestral draw ``y ~ p(y|x)``, ``h ~ p(h|x, y)``; returns (y, h, h probs)."""
    X, single = _batch(x, m)
    y = sample_y_given_x(X, m, iv, rng, grid)
    yy = y if isinstance(iv, BinaryUnits) else y[:, None]
    probs = sigmoid(hidden_preactivation(X, m) + yy @ m.V.T)
    h = sample_bernoulli(probs, rng)
    return _unbatch(y, single), _unbatch(h, single), _unbatch(probs, single)


def sample_visible(h, m, visible, rng):
    """Draw visibles given hidden states (Bernoulli or truncated exponential)."""
    alpha = visible_preactivation(h, m)
    if isinstance(visible, BinaryUnits):
        return sample_bernoulli(sigmoid(alpha), rng)
    return dist.sample(alpha, visible, rng.random(alpha.shape))


def sample_x_given_yh(y, h, m, visible, rng):
    """p(x|y, h) factorizes over visibles and does not depend on ``y``."""
    return sample_visible(h, m, visible, rng)


def sample_output(h, m: ConditionalRbm, iv, rng):
    """Draw ``y ~ p(y|h)``; continuous draws come back as shape (..., )."""
    gamma = h @ m.V + m.d
    if isinstance(iv, BinaryUnits):
        return sample_bernoulli(sigmoid(gamma), rng)
    return dist.sample(gamma[..., 0], iv, rng.random(gamma.shape[:-1]))


def conditional_gibbs_chain(x, m: ConditionalRbm, iv, rng, steps: int = 1,
                            visible=None, grid: int = CDF_GRID):
    """Run the x -> (y, h) -> x alternation starting from data ``x``.

    Returns the list of visited states ``(x, y, h)``: the first holds the
    data ``x`` with ``(y_a, h_a) ~ p(y, h|x)``; every further state draws
    ``x_b ~ p(x|y_a, h_a)`` then ``(y_b, h_b) ~ p(y, h|x_b)``.
    """
    visible = iv if visible is None else visible
    xs = np.asarray(x, dtype=float)
    y, h, _ = sample_y_h_given_x(xs, m, iv, rng, grid)
    states = [(xs, y, h)]
    for _ in range(steps):
        xs = sample_x_given_yh(y, h, m, visible, rng)
        y, h, _ = sample_y_h_given_x(xs, m, iv, rng, grid)
        states.append((xs, y, h))
    return states


# -- gradient of -log p(y|x) -------------------------------------------------

def _free_expectations(a, m, iv, method):
    """E[sigma_j(y)], E[sigma_j(y) y_k], E[y_k] under p(y|x); (B, s), (B, s, q), (B, q)."""
    if isinstance(iv, BinaryUnits):
        logw, Y = _binary_log_weights(a, m)
        p = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        sig = sigmoid(a[:, None, :] + (Y @ m.V.T)[None])
        e_sig = np.einsum("bk,bkj->bj", p, sig)
        e_sig_y = np.einsum("bk,bkj,kq->bjq", p, sig, Y)
        return e_sig, e_sig_y, p @ Y
    if _resolve(method, m) == "powerset":
        logw, gamma, S = _subset_terms(a, m, iv)
        p = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))
        mu = dist.mean(gamma, iv)
        e_sig = p @ S
        e_sig_y = (p * mu) @ S
        return e_sig, e_sig_y[..., None], (p @ mu)[:, None]

    v, _ = _slopes(m)
    s = m.n_hidden

    def extra(y, a_):
        sig = sigmoid(a_[:, None, :] + y[None, :, None] * v)
        sig = np.moveaxis(sig, -1, 0)
        yy = np.broadcast_to(y, (a_.shape[0], y.size))
        return np.concatenate([np.ones((1,) + yy.shape), yy[None], sig, sig * yy])

    _, integral = _quadrature(a, m, iv, extra)
    z = integral[0]
    e_y = integral[1] / z
    e_sig = (integral[2:2 + s] / z).T
    e_sig_y = (integral[2 + s:] / z).T
    return e_sig, e_sig_y[..., None], e_y[:, None]


def clamped_statistics(x, y, m, iv):
    """Data-phase statistics ``h(x, y)`` probabilities with the outputs as (B, q)."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    Y = y.reshape(X.shape[0], -1) if isinstance(iv, BinaryUnits) else y.reshape(-1, 1)
    probs = sigmoid(hidden_preactivation(X, m) + Y @ m.V.T)
    return X, Y, probs


def energy_gradient(x, y, h):
    """Mean over the batch of ``dE/dparam`` at (x, y, h)."""
    B = x.shape[0]
    return {
        "W": -(h.T @ x) / B,
        "b": -x.mean(axis=0),
        "c": -h.mean(axis=0),
        "V": -(h.T @ y) / B,
        "d": -y.mean(axis=0),
    }


def cond_loglik_grad(x, y, m: ConditionalRbm, iv, method: str = "auto") -> dict:
    """Exact gradient of the mean ``-log p(y|x)`` over the batch.

    Clamped expectation over ``h | x, y`` minus the expectation over
    ``(y, h) | x``; the ``b`` terms cancel identically.
    """
    X, Y, probs = clamped_statistics(x, y, m, iv)
    B = X.shape[0]
    e_sig, e_sig_y, e_y = _free_expectations(hidden_preactivation(X, m), m, iv, method)
    clamped = energy_gradient(X, Y, probs)
    free = {
        "W": -(e_sig.T @ X) / B,
        "b": -X.mean(axis=0),
        "c": -e_sig.mean(axis=0),
        "V": -e_sig_y.mean(axis=0),
        "d": -e_y.mean(axis=0),
    }
    return {k: clamped[k] - free[k] for k in clamped}
