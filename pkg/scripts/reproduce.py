#!/usr/bin/env python3
"""Run the benchmark presets and write their reports under ``results/``.

    python3 scripts/reproduce.py gas-furnace wh table5 batch-sweep

Each preset gets a directory with runs.csv, summary.csv, predictions.csv and
traces.csv. Expect a few minutes per preset on one core; table5 is the
longest (eight configurations).
"""
import argparse
import logging
from pathlib import Path

from condrbm import bench

PRESETS = {
    "gas-furnace": lambda: [bench.gas_furnace_preset()],
    "wh": lambda: [bench.wh_preset()],
    "wh-deep": lambda: [bench.wh_preset(layers=5, name="wiener-hammerstein-5x50")],
    "table5": bench.table5_presets,
    "batch-sweep": bench.batch_sweep_presets,
}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("presets", nargs="+", choices=sorted(PRESETS))
    p.add_argument("--out", default="results")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in a.presets:
        report = bench.run_many(PRESETS[name]())
        if name == "table5":
            report.notes.append(bench.table5_annotation(report))
        report.write(Path(a.out) / name)
        print(report.format())


if __name__ == "__main__":
    main()
