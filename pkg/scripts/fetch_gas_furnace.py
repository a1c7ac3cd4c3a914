#!/usr/bin/env python3
"""Download the Box-Jenkins gas furnace series and store it as ``k,u,y``.

The source is any CSV/whitespace table whose last two numeric columns are the
gas feed rate and the outlet CO2 concentration (296 rows). Point the package
at the result with ``CONDRBM_GAS_FURNACE=data/gas_furnace.csv`` or ``--data``.

``--fallback`` skips the download and regenerates the 32-sample synthetic
series used by the tests.
"""
import argparse
import io
import re
import sys
import urllib.request
from pathlib import Path

import numpy as np

from condrbm import data
from condrbm.sysid import IoSeries

ROOT = Path(__file__).resolve().parents[1]


def parse_table(text: str) -> IoSeries:
    rows = []
    for line in io.StringIO(text):
        nums = re.findall(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?", line)
        if len(nums) >= 2 and not re.search(r"[A-Za-df-z]", line):
            rows.append([float(v) for v in nums[-2:]])
    arr = np.array(rows)
    if arr.ndim != 2 or len(arr) < 100:
        raise data.DataError(f"found {len(arr)} numeric rows, expected the 296-sample series")
    return IoSeries(arr[:, 0], arr[:, 1], data.GAS_FURNACE_PERIOD)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--url", help="location of the raw table")
    p.add_argument("--file", help="local copy of the raw table instead of a download")
    p.add_argument("--out", default=str(ROOT / "data" / "gas_furnace.csv"))
    p.add_argument("--fallback", action="store_true")
    a = p.parse_args(argv)

    if a.fallback:
        out = ROOT / "data" / "gas_furnace_fallback.csv"
        data.write_csv(out, data.gas_furnace_surrogate(32, seed=1))
        print(f"wrote 32-sample synthetic series to {out}")
        return 0
    if a.file:
        text = Path(a.file).read_text()
    elif a.url:
        try:
            with urllib.request.urlopen(a.url, timeout=30) as resp:
                text = resp.read().decode("utf-8", "replace")
        except OSError as exc:
            print(f"download failed: {exc}", file=sys.stderr)
            return 2
    else:
        p.error("give --url or --file (or --fallback)")
    s = parse_table(text)
    data.write_csv(a.out, s)
    print(f"wrote {len(s)} samples to {a.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
