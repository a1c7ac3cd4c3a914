"""``condrbm`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import bench, data
from .codec import EncodingConfig
from .distributions import BINARY, HALFLINE, UNIT, symmetric
from .rbm_core import make_rng, model_from_dict, model_to_dict
from .sysid import (
    IdentificationModel,
    RegressorSpec,
    build_regressors,
    fit_identifier,
    predict_series,
    simulate_series,
)
from .training import StackSpec, TrainingConfig, cascade_pretrain

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, *, model_flags=True, train_flags=True, data_flag=True):
    if data_flag:
        p.add_argument("--data", help="input CSV with header k,u,y")
    if model_flags:
        p.add_argument("--mode", choices=["binary", "continuous"], default="continuous")
        p.add_argument("--bits", type=int, default=8, help="bits per value in binary mode")
        p.add_argument("--interval", choices=["halfline", "unit", "symmetric"], default="unit")
        p.add_argument("--delta", type=float, default=1.0, help="half-width for --interval symmetric")
        p.add_argument("--layers", type=int, default=3, help="feature RBMs below the output layer")
        p.add_argument("--hidden", type=int, default=30)
        p.add_argument("--ny", type=int, default=1)
        p.add_argument("--nu", type=int, default=5)
    if train_flags:
        p.add_argument("--epochs", type=int, default=10)
        p.add_argument("--pretrain-epochs", type=int, default=None)
        p.add_argument("--eta1", type=float, default=0.01)
        p.add_argument("--eta2", type=float, default=0.01)
        p.add_argument("--eta3", type=float, default=0.01)
        p.add_argument("--gibbs", type=int, default=1)
        p.add_argument("--batch", type=int, default=1)
        p.add_argument("--init-scale", type=float, default=0.01)
        p.add_argument("--regime", choices=["generative", "joint", "conditional"],
                       default="conditional")
        p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="condrbm", description="Conditional RBM system identification.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("pretrain", help="cascade pre-training of the feature RBMs")
    _common(s)
    s = sub.add_parser("train", help="fit a full identification model")
    _common(s)
    s.add_argument("--pretrained", help="stack file written by 'pretrain'")
    for name in ("predict", "simulate"):
        s = sub.add_parser(name, help=f"{name} with a trained model")
        s.add_argument("--model", required=True)
        _common(s, model_flags=False, train_flags=False)

    b = sub.add_parser("bench", help="benchmark presets")
    bsub = b.add_subparsers(dest="preset", required=True, parser_class=_Parser)
    for name in ("gas-furnace", "wh", "table5", "batch-sweep"):
        s = bsub.add_parser(name)
        s.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
        s.add_argument("--epochs", type=int, default=None)
        s.add_argument("--n-train", type=int, default=None)
        s.add_argument("--n-test", type=int, default=None)
        s.add_argument("--noise-std", type=float, default=None)
        s.add_argument("--layers", type=int, default=None)
        s.add_argument("--hidden", type=int, default=None)
        s.add_argument("--batch", type=int, default=None)
        s.add_argument("--regime", choices=["joint", "conditional"], action="append")
        _common(s, model_flags=False, train_flags=False)

    s = sub.add_parser("gen-wh", help="write a synthetic Wiener-Hammerstein series")
    s.add_argument("--n", type=int, default=7000)
    _common(s, model_flags=False, train_flags=False, data_flag=False)

    s = sub.add_parser("search", help="random search over layers and hidden width")
    s.add_argument("--budget", type=int, default=10)
    s.add_argument("--layers-range", type=int, nargs=2, default=(2, 10))
    s.add_argument("--hidden-range", type=int, nargs=2, default=(5, 40))
    s.add_argument("--n-train", type=int, default=200)
    _common(s)
    return p


# -- helpers -------------------------------------------------------------------

def _domain(a):
    if a.mode == "binary":
        return BINARY
    if a.interval == "symmetric":
        if a.delta <= 0:
            raise UsageError("--delta must be positive")
        return symmetric(a.delta)
    return {"unit": UNIT, "halfline": HALFLINE}[a.interval]


def _training(a) -> TrainingConfig:
    return TrainingConfig(eta1=a.eta1, eta2=a.eta2, eta3=a.eta3, gibbs_steps=a.gibbs,
                          epochs=a.epochs, pretrain_epochs=a.pretrain_epochs,
                          batch_size=a.batch, seed=a.seed, regime=a.regime,
                          init_scale=a.init_scale)


def _regressor(a) -> RegressorSpec:
    return RegressorSpec(a.ny, a.nu, "simulation" if a.ny == 0 else "prediction")


def _stack(a) -> StackSpec:
    return StackSpec((a.hidden,) * a.layers + (a.hidden,))


def _need(a, *names):
    for n in names:
        if getattr(a, n) in (None, ""):
            raise UsageError(f"--{n.replace('_', '-')} is required")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh)


def _write_series(path, k, u, y):
    with open(path, "w") as fh:
        fh.write("k,u,y\n")
        for row in zip(k, u, y):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- commands ------------------------------------------------------------------

def cmd_pretrain(a):
    _need(a, "data", "out")
    s = data.load_csv(a.data)
    spec, domain = _regressor(a), _domain(a)
    model = IdentificationModel((), None, domain, _encoding(s, a, domain), spec)
    X, _, _ = build_regressors(s, spec)
    Xn = model.normalize_regressors(X)
    rng = make_rng(a.seed)
    if a.noise_std > 0:
        Xn = data.add_noise(Xn, a.noise_std, rng)
    layers = cascade_pretrain(StackSpec((a.hidden,) * a.layers), model.visible_inputs(Xn),
                              _training(a), domain, rng=rng)
    _write_json(a.out, {"version": 1, "kind": "stack",
                        "layers": [model_to_dict(m) for m in layers]})
    print(f"wrote {len(layers)} layers to {a.out}")


def _encoding(s, a, domain):
    return EncodingConfig.fit(np.column_stack([s.u, s.y]), a.bits if domain is BINARY else None)


def _load_stack(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") != "stack":
        raise data.DataError(f"{path}: not a pretrained stack file")
    return [model_from_dict(m) for m in d["layers"]]


def cmd_train(a):
    _need(a, "data", "out")
    s = data.load_csv(a.data)
    domain = _domain(a)
    pretrained = _load_stack(a.pretrained) if a.pretrained else None
    traces = {}
    model = fit_identifier(s, _regressor(a), _stack(a), _training(a), domain,
                           a.bits if domain is BINARY else None, noise_std=a.noise_std,
                           traces=traces, pretrained=pretrained)
    model.save(a.out)
    trace = traces[a.regime]
    print(f"{a.regime} objective {trace[0]:.6g} -> {trace[-1]:.6g}; model written to {a.out}")


def _apply(a, fn):
    _need(a, "data")
    model = IdentificationModel.load(a.model)
    s = data.load_csv(a.data)
    yhat = fn(model, s)
    k = np.arange(model.regressor.max_lag, len(s))
    if a.out:
        _write_series(a.out, k, s.u[k], yhat)
    else:
        for kk, v in zip(k, yhat):
            print(f"{kk},{v!r}")


def cmd_predict(a):
    _apply(a, predict_series)


def cmd_simulate(a):
    _apply(a, lambda m, s: simulate_series(m, s.u))


def _preset_configs(a):
    seeds = tuple(range(a.seed, a.seed + a.seeds))
    if a.preset == "gas-furnace":
        cfgs = [bench.gas_furnace_preset(seeds=seeds)]
    elif a.preset == "wh":
        cfgs = [bench.wh_preset(seeds=seeds)]
    elif a.preset == "table5":
        cfgs = bench.table5_presets(seeds=seeds)
    else:
        cfgs = bench.batch_sweep_presets(seed=a.seed)
    out = []
    for c in cfgs:
        kw, tkw = {}, {}
        for name in ("n_train", "n_test", "noise_std", "layers", "hidden"):
            if getattr(a, name) is not None:
                kw[name] = getattr(a, name)
        if a.regime:
            kw["regimes"] = tuple(a.regime)
        if a.epochs is not None:
            tkw["epochs"] = a.epochs
        if a.batch is not None:
            tkw["batch_size"] = a.batch
        if a.data:
            kw["dataset"] = a.data
        out.append(replace(c, training=replace(c.training, **tkw), **kw))
    return out


def cmd_bench(a):
    report = bench.run_many(_preset_configs(a))
    if a.preset == "table5":
        report.notes.append(bench.table5_annotation(report))
    print(report.format())
    if a.out:
        paths = report.write(a.out)
        print("wrote " + ", ".join(str(p) for p in paths.values()))


def cmd_gen_wh(a):
    _need(a, "out")
    data.write_csv(a.out, data.generate_wiener_hammerstein(a.n, a.seed))
    print(f"wrote {a.n} samples to {a.out}")


def cmd_search(a):
    dataset = a.data or "gas-furnace"
    cfg = bench.ExperimentConfig(name="search", dataset=dataset, regressor=_regressor(a),
                                 domain=_domain(a), bits=a.bits if a.mode == "binary" else None,
                                 layers=a.layers, hidden=a.hidden, training=_training(a),
                                 n_train=a.n_train, n_test=0, noise_std=a.noise_std,
                                 seeds=(a.seed,), regimes=(a.regime,))
    ranges = {"layers": tuple(a.layers_range), "hidden": tuple(a.hidden_range)}
    best, trace = bench.random_search(ranges, a.budget, bench.validation_objective(cfg),
                                      make_rng(a.seed))
    for conf, val in trace:
        print(f"layers={conf['layers']} hidden={conf['hidden']} validation_mse={val:.6g}")
    print(f"best: layers={best['layers']} hidden={best['hidden']}")
    if a.out:
        data.write_table(a.out, [{**c, "validation_mse": v} for c, v in trace],
                         ["layers", "hidden", "validation_mse"])


COMMANDS = {"pretrain": cmd_pretrain, "train": cmd_train, "predict": cmd_predict,
            "simulate": cmd_simulate, "bench": cmd_bench, "gen-wh": cmd_gen_wh,
            "search": cmd_search}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"condrbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data.DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"condrbm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"condrbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"condrbm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
