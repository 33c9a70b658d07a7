"""Binary token sequences and prefix-specifiable toy language models.

A generation is a string over {0, 1} with an explicit termination flag; the
terminator is a flag rather than an in-band token, so substring scans never
cross it.  Models are pure functions of (prompt, prefix), which makes
prefix-specification a structural property rather than an assumption.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_LEN_DEFAULT = 4096


class UsageError(ValueError):
    """Caller violated a documented precondition."""


@dataclass(frozen=True)
class TokenSeq:
    """A finite binary token string plus a termination flag."""

    bits: bytes = b""
    terminated: bool = False

    @staticmethod
    def from_bits(bits, terminated: bool = False) -> "TokenSeq":
        return TokenSeq(bytes(int(b) & 1 for b in bits), terminated)

    @staticmethod
    def from_text(text: str) -> "TokenSeq":
        """Parse the ASCII line format: '0'/'1' characters, optional trailing '$'."""
        text = text.strip()
        terminated = text.endswith("$")
        if terminated:
            text = text[:-1]
        if any(c not in "01" for c in text):
            raise UsageError(f"token text must be over '0'/'1' (+ optional '$'), got {text[:32]!r}")
        return TokenSeq(bytes(ord(c) - ord("0") for c in text), terminated)

    def to_text(self) -> str:
        return "".join("01"[b] for b in self.bits) + ("$" if self.terminated else "")

    def to_array(self) -> np.ndarray:
        return np.frombuffer(self.bits, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, idx) -> "TokenSeq":
        if isinstance(idx, slice):
            stop = idx.indices(len(self.bits))[1]
            return TokenSeq(self.bits[idx], self.terminated and stop >= len(self.bits))
        raise TypeError("TokenSeq supports slicing only")

    def concat(self, other: "TokenSeq") -> "TokenSeq":
        if self.terminated:
            raise UsageError("cannot extend a terminated sequence")
        return TokenSeq(self.bits + other.bits, other.terminated)


EMPTY = TokenSeq()


@dataclass(frozen=True)
class Prompt:
    """A query string; same carrier as generations, never terminated."""

    bits: bytes = b""

    @staticmethod
    def from_text(text: str) -> "Prompt":
        return Prompt(TokenSeq.from_text(text).bits)

    def to_text(self) -> str:
        return "".join("01"[b] for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class ToyModel:
    """Prefix-specifiable binary model with a tunable entropy profile.

    profile(context_bits) -> probability of emitting 1, where context_bits is
    the concatenation prompt||prefix.  stop_prob applies per token before the
    bit draw.  The model is a pure function of its inputs.
    """

    profile: Callable[[bytes], float]
    stop_prob: float = 0.0
    max_len: int = MAX_LEN_DEFAULT
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.stop_prob < 1.0):
            raise UsageError("stop_prob must lie in [0, 1)")


def uniform_model(stop_prob: float = 0.0, max_len: int = MAX_LEN_DEFAULT) -> ToyModel:
    return ToyModel(lambda _ctx: 0.5, stop_prob, max_len, "uniform", {})


def constant_model(p: float, stop_prob: float = 0.0, max_len: int = MAX_LEN_DEFAULT) -> ToyModel:
    if not (0.0 <= p <= 1.0):
        raise UsageError("p must lie in [0, 1]")
    return ToyModel(lambda _ctx: p, stop_prob, max_len, "constant", {"p": p})


def hash_model(
    seed: int,
    lo: float = 0.2,
    hi: float = 0.8,
    window: int = 8,
    stop_prob: float = 0.0,
    max_len: int = MAX_LEN_DEFAULT,
) -> ToyModel:
    """Context-dependent probabilities derived from a seeded hash of the last
    `window` tokens; deterministic across runs for a fixed seed."""

    span = hi - lo
    seed_bytes = int(seed).to_bytes(8, "little", signed=False)

    def profile(ctx: bytes) -> float:
        tail = ctx[-window:] if window else b""
        h = hashlib.blake2b(tail, digest_size=8, key=seed_bytes).digest()
        frac = int.from_bytes(h, "little") / 2**64
        return lo + span * frac

    return ToyModel(profile, stop_prob, max_len, "hash", {"seed": seed, "lo": lo, "hi": hi, "window": window})


def piecewise_model(
    segment_len: int,
    p_high: float = 0.5,
    p_low: float = 0.98,
    stop_prob: float = 0.0,
    max_len: int = MAX_LEN_DEFAULT,
) -> ToyModel:
    """Alternating high/low entropy segments, switching on absolute position.

    Deliberately creates block boundaries: entropy accumulates quickly inside
    high segments and stalls inside low ones.
    """

    def profile(ctx: bytes) -> float:
        seg = (len(ctx) // segment_len) % 2
        return p_high if seg == 0 else p_low

    return ToyModel(
        profile, stop_prob, max_len, "piecewise",
        {"segment_len": segment_len, "p_high": p_high, "p_low": p_low},
    )


def model_from_config(cfg: dict) -> ToyModel:
    """Build a model from the JSON config format {profile, p, seed, stop_prob, max_len}."""
    kind = cfg.get("profile", "uniform")
    stop_prob = float(cfg.get("stop_prob", 0.0))
    max_len = int(cfg.get("max_len", MAX_LEN_DEFAULT))
    if kind == "uniform":
        return uniform_model(stop_prob, max_len)
    if kind == "constant":
        return constant_model(float(cfg["p"]), stop_prob, max_len)
    if kind == "hash":
        return hash_model(
            int(cfg.get("seed", 0)),
            float(cfg.get("lo", 0.2)),
            float(cfg.get("hi", 0.8)),
            int(cfg.get("window", 8)),
            stop_prob,
            max_len,
        )
    if kind == "piecewise":
        return piecewise_model(
            int(cfg.get("segment_len", 32)),
            float(cfg.get("p_high", 0.5)),
            float(cfg.get("p_low", 0.98)),
            stop_prob,
            max_len,
        )
    raise UsageError(f"unknown model profile {kind!r}")


def model_to_config(model: ToyModel) -> dict:
    cfg = {"profile": model.name, "stop_prob": model.stop_prob, "max_len": model.max_len}
    cfg.update(model.params)
    return cfg


def next_dist(model: ToyModel, q: Prompt, prefix: TokenSeq) -> tuple[float, float]:
    """(probability of 1, termination probability) for the next position."""
    if prefix.terminated:
        raise UsageError("prefix is terminated; no next token exists")
    p1 = float(model.profile(q.bits + prefix.bits))
    if not (0.0 <= p1 <= 1.0):
        raise ValueError("entropy profile returned a probability outside [0, 1]")
    return p1, model.stop_prob


def sample(model: ToyModel, q: Prompt, rng: np.random.Generator, max_len: int | None = None) -> TokenSeq:
    """Draw a generation token-by-token; stops on the termination event or max_len."""
    cap = model.max_len if max_len is None else max_len
    out = bytearray()
    ctx = bytearray(q.bits)
    for _ in range(cap):
        p1 = model.profile(bytes(ctx))
        u = rng.random()
        if u < model.stop_prob:
            break
        if u < model.stop_prob + (1.0 - model.stop_prob) * p1:
            bit = 1
        else:
            bit = 0
        out.append(bit)
        ctx.append(bit)
    return TokenSeq(bytes(out), True)


def prefix_specify(q: Prompt, t: TokenSeq) -> Prompt:
    """The re-prompt Q||T; sampling from it continues the original generation."""
    if t.terminated:
        raise UsageError("cannot prefix-specify with a terminated sequence")
    return Prompt(q.bits + t.bits)


def step_surprisal_bits(p1: float, p_stop: float, bit: int) -> float:
    """-log2 Pr[this token appears here], including the continue factor."""
    p = (1.0 - p_stop) * (p1 if bit else 1.0 - p1)
    if p <= 0.0:
        return math.inf
    return -math.log2(p)


def empirical_entropy(model: ToyModel, q: Prompt, tau: TokenSeq) -> float:
    """-log2 Pr[the model's first |tau| tokens equal tau], in bits.

    Returns math.inf when tau contains a zero-probability token.
    """
    total = 0.0
    ctx = bytearray(q.bits)
    for bit in tau.bits:
        p1 = model.profile(bytes(ctx))
        total += step_surprisal_bits(p1, model.stop_prob, bit)
        if total == math.inf:
            return math.inf
        ctx.append(bit)
    return total
