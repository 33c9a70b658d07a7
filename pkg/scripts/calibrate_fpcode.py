#!/usr/bin/env python3
"""Fingerprinting-code threshold calibration.

For each working parameter point, tunes the accusation threshold Z so the
innocent-accusation rate over 10^4 null trials is zero (max null score
times a 1.10 margin), and records it in src/markbench/data/fp_z.json.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from markbench import fpcode  # noqa: E402

POINTS = [
    # (lam, n, c, delta, A, score_mode)
    (2, 16, 2, 0.2, 10.0, "symmetric"),   # collusion tracing acceptance point
    (4, 20, 2, 0.2, 100.0, "symmetric"),  # code-level robust game
    (4, 20, 3, 0.2, 100.0, "symmetric"),
    (4, 16, 2, 0.2, 1.0, "symmetric"),    # preserved-detection experiment scale
]


def main() -> int:
    out = Path(__file__).resolve().parents[1] / "src" / "markbench" / "data"
    out.mkdir(exist_ok=True)
    path = out / "fp_z.json"
    table = json.loads(path.read_text()) if path.exists() else {}
    for lam, n, c, delta, A, mode in POINTS:
        key = f"lam={lam},n={n},c={c},delta={delta},A={A},mode={mode}"
        t0 = time.time()
        cal = fpcode.calibrate_z(lam, n, c, delta, A, 10_000, np.random.default_rng(20240711), mode)
        table[key] = {"Z": cal["Z"], "max_null": cal["max_null"], "trials": cal["trials"]}
        print(f"{key}: Z={cal['Z']:.2f} ({time.time() - t0:.0f}s)", flush=True)
    path.write_text(json.dumps(table, indent=2, sort_keys=True))
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
