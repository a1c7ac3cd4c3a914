from dataclasses import replace

import numpy as np
import pytest

from condrbm import inference as inf
from condrbm import rbm_core as rc
from condrbm import training as tr
from condrbm.data import read_table
from condrbm.distributions import BINARY, UNIT
from condrbm.rbm_core import ConditionalRbm, GenerativeRbm
from condrbm.training import StackSpec, TrainingConfig

import oracles

PATTERNS = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
# The odd-parity set above has flat marginals and no pairwise correlation, so
# a small random init sits on a saddle of the likelihood. Learning checks use
# a set with structure a 3x3 model can pick up.
LEARNABLE = np.array([[1, 1, 0], [1, 1, 1], [1, 0, 0], [0, 1, 0]], dtype=float)


def cosine(g1, g2):
    a = np.concatenate([np.ravel(g1[k]) for k in sorted(g1)])
    b = np.concatenate([np.ravel(g2[k]) for k in sorted(g1)])
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def linear_system(seed, n=200):
    """``y = 0.5 x + noise`` on [0, 1], with a couple of redundant input copies."""
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    y = np.clip(0.5 * x + 0.25 + rng.normal(0, 0.05, n), 0, 1)
    X = np.column_stack([x, x, 1 - x])
    return X, y


# -- configuration ------------------------------------------------------------

@pytest.mark.parametrize("kw", [{"eta1": 0.0}, {"gibbs_steps": 0}, {"batch_size": 0},
                                {"regime": "other"}, {"gradient_mode": "pcd"},
                                {"pretrain_fraction": 1.5}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainingConfig(**kw)


def test_stack_spec():
    assert StackSpec.uniform(3, 30).layer_sizes == (30, 30, 30)
    with pytest.raises(ValueError):
        StackSpec(())
    with pytest.raises(ValueError):
        StackSpec((4, 0))


# -- generative regime --------------------------------------------------------

def test_gradient_shapes():
    rng = rc.make_rng(0)
    m = GenerativeRbm.random(4, 3, rng, 1.0)
    g = tr.cd_gradient_generative(m, PATTERNS[:, [0, 1, 2, 0]], 1, rng)
    assert {k: v.shape for k, v in g.items()} == {k: v.shape for k, v in m.params().items()}
    cm = ConditionalRbm.from_base(m, 1, rng)
    g = tr.joint_cd_gradient(cm, np.random.default_rng(0).random((3, 4)), [0.1, 0.5, 0.9], 1, rng,
                             UNIT)
    assert {k: v.shape for k, v in g.items()} == {k: v.shape for k, v in cm.params().items()}


def test_empty_batch_rejected():
    m = GenerativeRbm.zeros(3, 2)
    with pytest.raises(ValueError):
        tr.cd_gradient_generative(m, np.zeros((0, 3)), 1, rc.make_rng(0))


def test_saturated_chain_gives_zero_gradient():
    # visibles and hidden units are pinned; the chain returns to the data every time
    m = GenerativeRbm(np.zeros((2, 2)), [60.0, -60.0], [60.0, -60.0])
    g = tr.cd_gradient_generative(m, [[1.0, 0.0]], 3, rc.make_rng(1))
    for v in g.values():
        np.testing.assert_allclose(v, 0.0, atol=1e-20)


def test_exact_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    base = GenerativeRbm(rng.normal(size=(3, 3)), rng.normal(size=3), rng.normal(size=3))
    g = tr.exact_gradient_generative(base, PATTERNS)

    def nll(p):
        return -rc.exact_log_likelihood(PATTERNS, GenerativeRbm(**p))

    fd = oracles.central_difference(nll, {k: np.array(v) for k, v in base.params().items()})
    for k in fd:
        np.testing.assert_allclose(g[k], fd[k], atol=1e-6)


def test_cd_average_approaches_exact():
    """Many-step CD averaged over chains tracks the exact gradient."""
    rng = np.random.default_rng(3)
    m = GenerativeRbm(rng.normal(0, 0.5, (3, 3)), rng.normal(0, 0.5, 3), rng.normal(0, 0.5, 3))
    batch = np.tile(PATTERNS, (2500, 1))
    cd = tr.cd_gradient_generative(m, batch, 25, rc.make_rng(4))
    exact = tr.exact_gradient_generative(m, batch)
    assert cosine(cd, exact) > 0.99
    for k in cd:
        np.testing.assert_allclose(cd[k], exact[k], atol=0.03)


def test_single_pattern_epoch_increases_likelihood():
    m = GenerativeRbm.random(3, 3, rc.make_rng(5), 0.01)
    pattern = np.tile([[1.0, 0.0, 1.0]], (50, 1))
    before = rc.exact_log_likelihood(pattern[:1], m)
    m2, _ = tr.pretrain_generative(m, pattern, TrainingConfig(pretrain_epochs=1, seed=5))
    assert rc.exact_log_likelihood(pattern[:1], m2) > before


def test_zero_epochs_unchanged():
    m = GenerativeRbm.random(3, 3, rc.make_rng(6), 0.5)
    m2, trace = tr.pretrain_generative(m, PATTERNS, TrainingConfig(pretrain_epochs=0))
    assert m2 is m and len(trace) == 1


def test_pretraining_deterministic():
    cfg = TrainingConfig(pretrain_epochs=5, seed=11)
    m = GenerativeRbm.random(3, 3, rc.make_rng(7), 0.1)
    a, ta = tr.pretrain_generative(m, PATTERNS, cfg)
    b, tb = tr.pretrain_generative(m, PATTERNS, cfg)
    for k in a.params():
        np.testing.assert_array_equal(a.params()[k], b.params()[k])
    assert ta == tb


@pytest.mark.parametrize("mode", ["cd", "exact"])
def test_four_pattern_learning(mode):
    wins = 0
    for seed in range(5):
        rng = rc.make_rng(seed)
        m = tr.init_generative(LEARNABLE, 3, rng)
        cfg = TrainingConfig(pretrain_epochs=200, seed=seed, gradient_mode=mode)
        m2, _ = tr.pretrain_generative(m, LEARNABLE, cfg, rng=rng)
        wins += rc.exact_log_likelihood(LEARNABLE, m2) > rc.exact_log_likelihood(LEARNABLE, m)
    assert wins >= 4


def test_continuous_pretraining_runs_in_support():
    x = np.random.default_rng(8).random((40, 4))
    rng = rc.make_rng(8)
    m = tr.init_generative(x, 5, rng, UNIT, 1.0)
    m2, trace = tr.pretrain_generative(m, x, TrainingConfig(pretrain_epochs=5), UNIT, rng=rng)
    assert len(trace) == 6 and np.all(np.isfinite(trace))
    with pytest.raises(ValueError):
        tr.pretrain_generative(m, x + 2.0, TrainingConfig(pretrain_epochs=1), UNIT)


def test_divergence_is_reported():
    m = GenerativeRbm.zeros(3, 2)
    grad = {"W": np.full((2, 3), np.inf), "b": np.zeros(3), "c": np.zeros(2)}
    with pytest.raises(FloatingPointError, match="diverged"):
        tr._step(m, grad, 0.1)


# -- cascade ------------------------------------------------------------------

def test_single_layer_cascade_equals_pretrain():
    cfg = TrainingConfig(pretrain_epochs=3, seed=4)
    [layer] = tr.cascade_pretrain(StackSpec((3,)), PATTERNS, cfg)
    rng = rc.make_rng(4)
    m = tr.init_generative(PATTERNS, 3, rng)
    m, _ = tr.pretrain_generative(m, PATTERNS, cfg, rng=rng)
    for k in m.params():
        np.testing.assert_array_equal(layer.params()[k], m.params()[k])


def test_cascade_feeds_hidden_probabilities(monkeypatch):
    seen = []
    real = tr.pretrain_generative

    def spy(m, data, cfg, visible=BINARY, epochs=None, rng=None):
        seen.append((np.array(data), visible))
        return real(m, data, cfg, visible, epochs, rng)

    monkeypatch.setattr(tr, "pretrain_generative", spy)
    x = np.random.default_rng(9).random((30, 4))
    layers = tr.cascade_pretrain(StackSpec((5, 3)), x, TrainingConfig(pretrain_epochs=2), UNIT)
    assert [l.n_hidden for l in layers] == [5, 3]
    np.testing.assert_array_equal(seen[1][0], rc.hidden_activation_probs(x, layers[0]))
    assert seen[0][1] == UNIT and seen[1][1] == UNIT
    np.testing.assert_array_equal(tr.forward_features(layers, x),
                                  rc.hidden_activation_probs(seen[1][0], layers[1]))


def test_binary_cascade_keeps_binary_domain():
    assert tr.next_domain(BINARY) == BINARY
    assert tr.next_domain(UNIT) == UNIT


def test_forward_width_mismatch():
    layers = [GenerativeRbm.zeros(4, 3), GenerativeRbm.zeros(2, 2)]
    with pytest.raises(ValueError):
        tr.forward_features(layers, np.zeros(4))


# -- joint regime -------------------------------------------------------------

def test_joint_zero_epochs_unchanged():
    X, y = linear_system(0, 20)
    m = ConditionalRbm.from_base(GenerativeRbm.random(3, 4, rc.make_rng(0), 0.5), 1, rc.make_rng(1))
    m2, trace = tr.train_joint(m, X, y, TrainingConfig(epochs=0), UNIT)
    assert m2 is m and len(trace) == 1


def test_joint_reconstruction_error_decreases():
    drops = []
    for seed in range(5):
        X, y = linear_system(seed)
        rng = rc.make_rng(seed)
        base = tr.init_generative(X, 8, rng, UNIT, 1.0)
        m = ConditionalRbm.from_base(base, 1, rng, 1.0)
        _, trace = tr.train_joint(m, X, y, TrainingConfig(epochs=10, eta2=0.05, seed=seed), UNIT,
                                  rng=rng)
        drops.append(trace[0] - trace[-1])
    assert np.mean(drops) > 0


def test_joint_exact_binary_likelihood_increases():
    rng = np.random.default_rng(10)
    X = rng.integers(0, 2, (12, 2)).astype(float)
    Y = np.column_stack([X[:, 0], 1 - X[:, 1]])
    for mode in ("cd", "exact"):
        r = rc.make_rng(3)
        m = ConditionalRbm.from_base(GenerativeRbm.random(2, 3, r, 0.01), 2, r)
        before = tr.exact_joint_log_likelihood(X, Y, m)
        m2, _ = tr.train_joint(m, X, Y, TrainingConfig(epochs=100, gradient_mode=mode, seed=3),
                               BINARY, visible=BINARY, rng=r)
        assert tr.exact_joint_log_likelihood(X, Y, m2) > before, mode


def test_joint_exact_needs_binary_data():
    X, y = linear_system(0, 10)
    m = ConditionalRbm.zeros(3, 2)
    with pytest.raises(ValueError):
        tr.train_joint(m, X, y, TrainingConfig(gradient_mode="exact"), UNIT)


def test_joint_rejects_unnormalized_data():
    X, y = linear_system(0, 10)
    with pytest.raises(ValueError):
        tr.train_joint(ConditionalRbm.zeros(3, 2), X * 5, y, TrainingConfig(), UNIT)


def test_joint_exact_gradient_finite_differences():
    rng = np.random.default_rng(11)
    m = ConditionalRbm(rng.normal(size=(3, 2)), rng.normal(size=2), rng.normal(size=3),
                       rng.normal(size=(3, 2)), rng.normal(size=2))
    X = rng.integers(0, 2, (5, 2)).astype(float)
    Y = rng.integers(0, 2, (5, 2)).astype(float)
    g = tr.exact_gradient_joint(m, X, Y)
    fd = oracles.central_difference(lambda p: -tr.exact_joint_log_likelihood(X, Y, ConditionalRbm(**p)),
                                    {k: np.array(v) for k, v in m.params().items()})
    for k in fd:
        np.testing.assert_allclose(g[k], fd[k], atol=1e-6)


def test_pretrain_fraction_phase():
    X, y = linear_system(1, 40)
    r = rc.make_rng(0)
    m = ConditionalRbm.from_base(GenerativeRbm.random(3, 4, r, 0.5), 1, r)
    cfg = TrainingConfig(epochs=1, pretrain_epochs=2, pretrain_fraction=0.25)
    _, trace = tr.train_joint(m, X, y, cfg, UNIT, rng=rc.make_rng(0))
    assert len(trace) == 2


# -- conditional regime -------------------------------------------------------

def test_conditional_zero_epochs_unchanged():
    X, y = linear_system(0, 20)
    m = ConditionalRbm.zeros(3, 4)
    m2, trace = tr.train_conditional(m, X, y, TrainingConfig(epochs=0), UNIT)
    assert m2 is m and trace == [pytest.approx(0.0, abs=1e-12)]


def test_conditional_cd_cancels_when_free_sample_matches():
    """Clamped minus free statistics vanish when the draw equals the data."""
    rng = np.random.default_rng(12)
    m = ConditionalRbm(rng.normal(size=(4, 3)), np.zeros(3), rng.normal(size=4),
                       rng.normal(size=4), [0.0])
    X, Y, probs = inf.clamped_statistics(rng.random((2, 3)), [0.3, 0.8], m, UNIT)
    g = inf.energy_gradient(X, Y, probs)
    diff = {k: g[k] - inf.energy_gradient(X, Y, probs)[k] for k in g}
    for v in diff.values():
        np.testing.assert_array_equal(v, 0.0)


@pytest.mark.parametrize("iv", [UNIT, BINARY], ids=["unit", "binary"])
def test_conditional_cd_agrees_with_exact(iv):
    rng = np.random.default_rng(13)
    s, q = 6, 3
    for trial in range(3):
        V = rng.normal(size=(s, q if iv is BINARY else 1))
        m = ConditionalRbm(rng.normal(size=(s, 4)), rng.normal(size=4), rng.normal(size=s),
                           V, rng.normal(size=V.shape[1]))
        x = rng.random((1, 4))
        y = rng.integers(0, 2, (1, q)).astype(float) if iv is BINARY else rng.random(1)
        exact = inf.cond_loglik_grad(x, y, m, iv)
        reps = 10_000
        X = np.repeat(x, reps, axis=0)
        Y = np.repeat(y, reps, axis=0)
        cd = tr.conditional_cd_gradient(m, X, Y, 1, rc.make_rng(trial), iv)
        assert cosine(cd, exact) > 0.5


def test_joint_cd_positive_cosine_with_exact():
    rng = np.random.default_rng(14)
    m = ConditionalRbm(rng.normal(0, 0.5, (4, 3)), rng.normal(0, 0.5, 3), rng.normal(0, 0.5, 4),
                       rng.normal(0, 0.5, (4, 3)), rng.normal(0, 0.5, 3))
    x = np.array([[1.0, 0.0, 1.0]])
    y = np.array([[0.0, 1.0, 1.0]])
    exact = tr.exact_gradient_joint(m, x, y)
    cd = tr.joint_cd_gradient(m, np.repeat(x, 10_000, 0), np.repeat(y, 10_000, 0), 1,
                              rc.make_rng(0), BINARY, BINARY)
    assert cosine(cd, exact) > 0.5


def test_conditional_exact_mode_matches_finite_differences():
    rng = np.random.default_rng(15)
    m = ConditionalRbm(rng.normal(size=(5, 3)), rng.normal(size=3), rng.normal(size=5),
                       rng.normal(size=5), rng.normal(size=1))
    X, y = rng.random((4, 3)), rng.random(4)
    g = inf.cond_loglik_grad(X, y, m, UNIT)
    fd = oracles.central_difference(lambda p: tr.mean_cond_nll(ConditionalRbm(**p), X, y, UNIT),
                                    {k: np.array(v) for k, v in m.params().items()})
    for k in fd:
        np.testing.assert_allclose(g[k], fd[k], rtol=1e-4, atol=1e-8)


def test_conditional_nll_trend_on_linear_system():
    """Epoch NLL is non-increasing over the first 10 epochs in most seeds."""
    good = 0
    for seed in range(5):
        X, y = linear_system(seed)
        g = np.random.default_rng(100 + seed)
        m = ConditionalRbm(g.normal(0, 3, (8, 3)), np.zeros(3), g.normal(0, 1, 8), np.zeros(8),
                           [0.0])
        cfg = TrainingConfig(epochs=10, seed=seed, batch_size=10, eta3=0.05)
        _, trace = tr.train_conditional(m, X, y, cfg, UNIT, rng=rc.make_rng(seed))
        good += bool(np.all(np.diff(trace) <= 1e-12))
    assert good >= 4


@pytest.mark.parametrize("mode", ["cd", "exact"])
def test_conditional_learning_binary(mode):
    rng = np.random.default_rng(16)
    X = rng.integers(0, 2, (16, 3)).astype(float)
    Y = X[:, :2] * (1 - X[:, 2:])
    wins = 0
    for seed in range(5):
        r = rc.make_rng(seed)
        m = ConditionalRbm.from_base(GenerativeRbm.random(3, 4, r), 2, r)
        m2, trace = tr.train_conditional(m, X, Y, TrainingConfig(epochs=100, seed=seed,
                                                                 gradient_mode=mode), BINARY, rng=r)
        wins += trace[-1] < trace[0]
    assert wins >= 4


def test_train_dispatch_generative_keeps_outputs():
    X, y = linear_system(2, 30)
    r = rc.make_rng(0)
    m = ConditionalRbm.from_base(GenerativeRbm.random(3, 4, r, 0.5), 1, r)
    m2, _ = tr.train(m, X, y, TrainingConfig(regime="generative", epochs=2), UNIT, rng=r)
    np.testing.assert_array_equal(m2.V, m.V)
    assert not np.array_equal(m2.W, m.W)


def test_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    tr.write_trace_csv(path, [(0, "conditional", 0.5), (1, "conditional", 0.25)])
    rows = read_table(path)
    assert rows == [{"epoch": 0.0, "regime": "conditional", "objective_value": 0.5},
                    {"epoch": 1.0, "regime": "conditional", "objective_value": 0.25}]


@pytest.mark.slow
def test_gas_furnace_conditional_likelihood_rises():
    """Mean log p(y|x) on the training regressors is higher after 10 epochs."""
    from condrbm import bench, data
    from condrbm.sysid import fit_identifier

    cfg = bench.gas_furnace_preset(regimes=("conditional",))
    train = data.gas_furnace().slice(0, cfg.n_train)
    ups = 0
    for seed in cfg.seeds:
        traces = {}
        fit_identifier(train, cfg.regressor, cfg.stack, replace(cfg.training, seed=seed),
                       cfg.domain, noise_std=cfg.noise_std, traces=traces)
        nll = traces["conditional"]
        ups += nll[-1] < nll[0]
    assert ups >= 3
