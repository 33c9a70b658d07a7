"""Key, model and report serialization.

Key files are JSON and carry the block policy they were generated with, so
generation and detection always share one block geometry.  Codebooks are
stored as a separate packed-bit binary (row-major) with a JSON header line,
referenced from the multi-user key file.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fpcode import Codebook, TracingKey
from .lbit import LBitKey
from .multiuser import MultiUserKey
from .tokens import TokenSeq, UsageError, model_from_config, model_to_config
from .zerobit import BlockPolicy, ZeroBitKey


def policy_to_json(policy: BlockPolicy) -> dict:
    return {
        "lambda": policy.lam,
        "entropy_threshold": policy.entropy_threshold,
        "seed_entropy_bits": policy.seed_entropy_bits,
        "seed_len_quantum": policy.seed_len_quantum,
        "seed_len_cap": policy.seed_len_cap,
    }


def policy_from_json(d: dict) -> BlockPolicy:
    return BlockPolicy(
        lam=int(d["lambda"]),
        entropy_threshold=float(d["entropy_threshold"]),
        seed_entropy_bits=float(d["seed_entropy_bits"]),
        seed_len_quantum=int(d["seed_len_quantum"]),
        seed_len_cap=int(d["seed_len_cap"]),
    )


def _zero_to_json(key: ZeroBitKey) -> dict:
    return {"lambda": key.lam, "prf_key_hex": key.prf_key.hex()}


def _zero_from_json(d: dict) -> ZeroBitKey:
    return ZeroBitKey(bytes.fromhex(d["prf_key_hex"]), int(d["lambda"]))


def _lbit_to_json(key: LBitKey) -> dict:
    return {
        "lambda": key.lam,
        "L": key.L,
        "keys": [[k0.prf_key.hex(), k1.prf_key.hex()] for k0, k1 in key.keys],
    }


def _lbit_from_json(d: dict) -> LBitKey:
    lam = int(d["lambda"])
    keys = tuple(
        (ZeroBitKey(bytes.fromhex(h0), lam), ZeroBitKey(bytes.fromhex(h1), lam))
        for h0, h1 in d["keys"]
    )
    return LBitKey(keys, int(d["L"]), lam)


def save_codebook(codebook: Codebook, path: str | Path, params: dict | None = None) -> None:
    header = json.dumps({"n": codebook.n, "L": codebook.L, "params": params or {}}, sort_keys=True)
    packed = np.packbits(codebook.X, axis=1)
    with open(path, "wb") as f:
        f.write(header.encode() + b"\n")
        f.write(packed.tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        n, L = int(header["n"]), int(header["L"])
        row_bytes = (L + 7) // 8
        raw = np.frombuffer(f.read(), dtype=np.uint8).reshape(n, row_bytes)
    X = np.unpackbits(raw, axis=1)[:, :L]
    return Codebook(X.astype(np.uint8), n, L)


def save_key(key, path: str | Path, policy: BlockPolicy | None = None) -> None:
    """Write a key file; multi-user keys also write <path>.codebook.bin."""
    path = Path(path)
    if isinstance(key, ZeroBitKey):
        doc = {"level": "zero", **_zero_to_json(key)}
    elif isinstance(key, LBitKey):
        doc = {"level": "lbit", **_lbit_to_json(key)}
    elif isinstance(key, MultiUserKey):
        cb_path = path.with_suffix(path.suffix + ".codebook.bin")
        save_codebook(key.codebook, cb_path, params=key.tk.params)
        doc = {
            "level": "multi",
            "lambda": key.sk.lam,
            "n": key.n,
            "tk": {
                "p": [round(float(x), 12) for x in key.tk.p],
                "Z": key.tk.Z,
                "params": key.tk.params,
            },
            "sk": _lbit_to_json(key.sk),
            "codebook_file": cb_path.name,
        }
    else:
        raise UsageError(f"cannot serialize {type(key).__name__}")
    if policy is not None:
        doc["policy"] = policy_to_json(policy)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_key(path: str | Path):
    """Returns (level, key, policy-or-None)."""
    path = Path(path)
    doc = json.loads(path.read_text())
    level = doc.get("level")
    policy = policy_from_json(doc["policy"]) if "policy" in doc else None
    if level == "zero":
        return level, _zero_from_json(doc), policy
    if level == "lbit":
        return level, _lbit_from_json(doc), policy
    if level == "multi":
        codebook = load_codebook(path.parent / doc["codebook_file"])
        tk = TracingKey(np.array(doc["tk"]["p"], dtype=float), float(doc["tk"]["Z"]), doc["tk"]["params"])
        sk = _lbit_from_json(doc["sk"])
        return level, MultiUserKey(codebook, tk, sk), policy
    raise UsageError(f"unknown key level {level!r} in {path}")


def read_text_file(path: str | Path) -> TokenSeq:
    return TokenSeq.from_text(Path(path).read_text())


def write_text_file(t: TokenSeq, path: str | Path) -> None:
    Path(path).write_text(t.to_text() + "\n")


def load_model_file(path: str | Path):
    return model_from_config(json.loads(Path(path).read_text()))


def save_model_file(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_config(model), indent=2, sort_keys=True))


def canonical_json(doc: dict) -> str:
    """Stable rendering used for reports (byte-identical under a fixed seed)."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
