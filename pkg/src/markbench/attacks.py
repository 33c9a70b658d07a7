"""Adversary library: edit channels, collusion strategies, adaptive scripts.

Everything here is deterministic under an explicit generator, so every
security-game experiment replays exactly from its seed.  Channels report the
edit statistics they achieved; collusion outputs are feasible by
construction (bit strategies only ever copy colluder symbols, block splices
only move whole blocks).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tokens import Prompt, TokenSeq, ToyModel, UsageError
from .zerobit import BlockPolicy, Transcript, blocks_parse


@dataclass(frozen=True)
class Channel:
    """An edit channel over token sequences.

    kinds: substitute(rate), delete(rate), crop(keep_lo, keep_hi fractions),
    shuffle_blocks (needs model/policy context), interleave(source model).
    """

    kind: str
    rate: float = 0.0
    keep_lo: float = 0.0
    keep_hi: float = 1.0
    filler_len: int = 64

    def __post_init__(self):
        if self.kind not in ("substitute", "delete", "crop", "shuffle_blocks", "interleave"):
            raise UsageError(f"unknown channel kind {self.kind!r}")
        if self.kind in ("substitute", "delete") and not (0.0 <= self.rate < 1.0):
            raise UsageError("edit rate must lie in [0, 1)")
        if not (0.0 <= self.keep_lo <= self.keep_hi <= 1.0):
            raise UsageError("crop range must satisfy 0 <= lo <= hi <= 1")


def apply_channel(
    ch: Channel,
    t: TokenSeq,
    rng: np.random.Generator,
    model: ToyModel | None = None,
    policy: BlockPolicy | None = None,
    q: Prompt | None = None,
    stats: dict | None = None,
) -> TokenSeq:
    """Apply the channel; shuffle/interleave need the block-parsing context."""
    bits = t.to_array()
    out: np.ndarray
    if ch.kind == "substitute":
        flips = rng.random(len(bits)) < ch.rate
        out = bits ^ flips.astype(np.uint8)
        if stats is not None:
            stats["hamming_fraction"] = float(flips.mean()) if len(bits) else 0.0
    elif ch.kind == "delete":
        keep = rng.random(len(bits)) >= ch.rate
        out = bits[keep]
        if stats is not None:
            stats["deleted_fraction"] = 1.0 - (float(keep.mean()) if len(bits) else 1.0)
    elif ch.kind == "crop":
        lo = int(ch.keep_lo * len(bits))
        hi = int(ch.keep_hi * len(bits))
        out = bits[lo:hi]
        if stats is not None:
            stats["kept_tokens"] = int(hi - lo)
    elif ch.kind in ("shuffle_blocks", "interleave"):
        if model is None or policy is None or q is None:
            raise UsageError(f"{ch.kind} needs model, policy and prompt context")
        blocks, rem = blocks_parse(model, policy, q, t)
        order = rng.permutation(len(blocks)) if ch.kind == "shuffle_blocks" else np.arange(len(blocks))
        pieces = []
        for j in order:
            if ch.kind == "interleave":
                pieces.append(rng.integers(0, 2, size=ch.filler_len, dtype=np.uint8))
            pieces.append(blocks[j].to_array())
        if ch.kind == "shuffle_blocks" and len(rem):
            pieces.append(rem.to_array())
        out = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.uint8)
        if stats is not None:
            stats["blocks_kept"] = len(blocks)
    else:  # pragma: no cover
        raise UsageError(ch.kind)
    return TokenSeq(bytes(bytearray(out.astype(np.uint8))), t.terminated)


@dataclass(frozen=True)
class CollusionStrategy:
    """kinds: block_splice (text level), bit_majority, bit_minority,
    uniform_pick, coin_interleave (codeword level); erasure_budget is the
    delta fraction erased after combining."""

    kind: str
    erasure_budget: float = 0.0

    def __post_init__(self):
        kinds = ("block_splice", "bit_majority", "bit_minority", "uniform_pick", "coin_interleave")
        if self.kind not in kinds:
            raise UsageError(f"unknown collusion strategy {self.kind!r}")
        if not (0.0 <= self.erasure_budget < 1.0):
            raise UsageError("erasure budget must lie in [0, 1)")


def collude_bits(strategy: CollusionStrategy, rows, rng: np.random.Generator) -> np.ndarray:
    """Combine colluders' codewords coordinate-wise; returns int8 with -1 erased.

    Every output coordinate copies some colluder's value, so the word is
    feasible before erasure by construction.
    """
    R = np.asarray(rows, dtype=np.int8)
    if R.ndim != 2 or R.shape[0] < 1:
        raise UsageError("need a 2-D array of colluder codewords")
    c, L = R.shape
    ones = R.sum(axis=0)
    if strategy.kind == "bit_majority":
        y = np.where(2 * ones > c, 1, np.where(2 * ones < c, 0, -9)).astype(np.int8)
        ties = y == -9
        y[ties] = rng.integers(0, 2, size=int(ties.sum()))
    elif strategy.kind == "bit_minority":
        y = np.where(2 * ones > c, 0, np.where(2 * ones < c, 1, -9)).astype(np.int8)
        ties = y == -9
        y[ties] = rng.integers(0, 2, size=int(ties.sum()))
        # minority still picks a colluder value; unanimous columns are forced
        forced = (ones == 0) | (ones == c)
        y[forced] = R[0, forced]
    elif strategy.kind == "uniform_pick":
        pick = rng.integers(0, c, size=L)
        y = R[pick, np.arange(L)]
    elif strategy.kind == "coin_interleave":
        # alternate colluders, starting from a random one
        start = int(rng.integers(0, c))
        pick = (start + np.arange(L)) % c
        y = R[pick, np.arange(L)]
    else:
        raise UsageError(f"{strategy.kind} is not a codeword-level strategy")
    y = y.astype(np.int8)
    k = int(strategy.erasure_budget * L)
    if k:
        idx = rng.choice(L, size=k, replace=False)
        y[idx] = -1
    return y


def collude_blocks(
    strategy: CollusionStrategy,
    transcripts: list[Transcript],
    rng: np.random.Generator,
    model: ToyModel,
    policy: BlockPolicy,
    keep_blocks: int | None = None,
    filler_len: int = 48,
    filler_every: int = 8,
) -> TokenSeq:
    """Splice whole blocks from the colluders' generations into one text.

    The adversary is given the true block parse (a conservatively strong
    adversary).  Blocks are drawn round-robin across colluders, shuffled,
    and separated by unmarked random filler; an erasure budget drops a
    fraction of blocks outright.
    """
    if strategy.kind != "block_splice":
        raise UsageError("collude_blocks requires the block_splice strategy")
    pools = []
    for tr in transcripts:
        pool = []
        for q, t in tr.entries:
            pool.extend(blocks_parse(model, policy, q, t)[0])
        pools.append(pool)
    if not any(pools):
        return TokenSeq(b"", True)
    take: list[TokenSeq] = []
    idx = [0] * len(pools)
    total = sum(len(p) for p in pools)
    budget = total if keep_blocks is None else min(keep_blocks, total)
    ci = 0
    while len(take) < budget:
        if idx[ci] < len(pools[ci]):
            take.append(pools[ci][idx[ci]])
            idx[ci] += 1
        ci = (ci + 1) % len(pools)
    drop = int(strategy.erasure_budget * len(take))
    if drop:
        kept_idx = rng.choice(len(take), size=len(take) - drop, replace=False)
        take = [take[i] for i in sorted(kept_idx)]
    order = rng.permutation(len(take))
    pieces = []
    for jj, j in enumerate(order):
        if filler_len and jj % filler_every == 0:
            pieces.append(rng.integers(0, 2, size=filler_len, dtype=np.uint8))
        pieces.append(take[j].to_array())
    out = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.uint8)
    return TokenSeq(bytes(bytearray(out)), True)


@dataclass
class AdaptiveScript:
    """A scripted interactive adversary.

    steps: list of (prompt_builder(history) -> Prompt, channel or None);
    each step queries the oracle, optionally post-edits the response, and
    appends (prompt, response) to the history.  final(history, rng) builds
    the candidate text (defaults to the last edited response).
    """

    steps: list
    final: Callable | None = None


def run_adaptive(
    script: AdaptiveScript,
    oracle: Callable[[Prompt, np.random.Generator], TokenSeq],
    rng: np.random.Generator,
    model: ToyModel | None = None,
    policy: BlockPolicy | None = None,
) -> tuple[Transcript, TokenSeq]:
    """Drive the feedback loop; returns the full transcript and the final text."""
    transcript = Transcript()
    history: list[tuple[Prompt, TokenSeq, TokenSeq]] = []  # (Q, T, edited)
    for prompt_builder, channel in script.steps:
        q = prompt_builder(history)
        t = oracle(q, rng)
        transcript.append(q, t)
        edited = t
        if channel is not None:
            edited = apply_channel(channel, t, rng, model, policy, q)
        history.append((q, t, edited))
    if script.final is not None:
        t_hat = script.final(history, rng)
    else:
        t_hat = history[-1][2] if history else TokenSeq(b"", True)
    return transcript, t_hat


@dataclass
class WrapperScheme:
    """The pathological non-adaptive-only construction.

    Answers a prompt with marked text when the prompt itself is unmarked,
    and with unmarked model output when the prompt is detected as marked.
    Passes single-query robustness games but fails the two-query adaptive
    game where its own output is fed back as the next prompt.
    """

    inner: object  # ZeroBitScheme

    def wat(self, q: Prompt, rng: np.random.Generator, max_len: int | None = None) -> TokenSeq:
        from .tokens import sample

        if self.inner.detect(TokenSeq(q.bits, False)):
            return sample(self.inner.model, q, rng, max_len)
        return self.inner.wat(q, rng, max_len)

    def detect(self, t: TokenSeq) -> bool:
        return self.inner.detect(t)


def wrapper_scheme(inner) -> WrapperScheme:
    return WrapperScheme(inner)
