#!/usr/bin/env python3
"""Detection-threshold calibration: verify zero false positives.

Runs the zero-bit detector over 10^5 random strings with fresh keys and
records the outcome in src/markbench/data/detection_fp.json.  The committed
record documents that the theta calibration was accepted; the soundness
tests re-verify a slice of it on every run.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from markbench import tokens, zerobit  # noqa: E402


def main() -> int:
    trials = 100_000
    lam = 16
    rng = np.random.default_rng(0xD7EC7)
    policy = zerobit.calibrated_policy(lam, 512)
    hits = 0
    t0 = time.time()
    for i in range(trials):
        n = int(rng.integers(64, 513))
        t = tokens.TokenSeq(bytes(rng.integers(0, 2, size=n, dtype=np.uint8)), True)
        key = zerobit.keygen0(lam, rng)
        if zerobit.detect0(key, t, policy):
            hits += 1
        if (i + 1) % 10_000 == 0:
            print(f"{i + 1}/{trials} fp={hits} ({time.time() - t0:.0f}s)", flush=True)
    record = {
        "trials": trials,
        "lam": lam,
        "string_lengths": [64, 512],
        "false_positives": hits,
        "seed": 0xD7EC7,
    }
    out = Path(__file__).resolve().parents[1] / "src" / "markbench" / "data"
    out.mkdir(exist_ok=True)
    (out / "detection_fp.json").write_text(json.dumps(record, indent=2, sort_keys=True))
    print(json.dumps(record))
    return 0 if hits == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
