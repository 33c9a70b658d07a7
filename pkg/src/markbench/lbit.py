"""Message-embedding watermarks from 2L zero-bit keys.

Key generation draws two independent zero-bit keys per message index.  The
encoder loops: pick a uniform index i, run the zero-bit generator for key
(i, m[i]) on the prefix-specified prompt, keep only the first complete block
of the continuation, and append it.  When a continuation produces no
complete block the loop exits and the final continuation is appended whole.
An explicit block budget caps the loop, since toy models with stop_prob=0
never terminate on their own.

Extraction runs the zero-bit detector under all 2L keys and maps each
(z0, z1) pair to a symbol:

    (False, False) -> erased      (True, False) -> 0
    (True,  True ) -> 0           (False, True) -> 1

The both-fired row maps to 0 by construction; extract_star is the variant
that reports it as '*' instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokens import Prompt, TokenSeq, ToyModel, UsageError, prefix_specify
from .zerobit import (
    DEFAULT_DETECT,
    BlockPolicy,
    DetectParams,
    ZeroBitKey,
    blocks_parse,
    detect_many,
    keygen0,
    wat0,
)

ERASED = "-"
BOTH = "*"


@dataclass(frozen=True)
class LBitKey:
    """2L zero-bit keys indexed by (message position, bit value)."""

    keys: tuple  # tuple of (ZeroBitKey, ZeroBitKey) pairs, length L
    L: int
    lam: int

    def __post_init__(self):
        if self.L < 1 or len(self.keys) != self.L:
            raise UsageError("LBitKey needs exactly L key pairs")

    def key_for(self, i: int, b: int) -> ZeroBitKey:
        return self.keys[i][b]


@dataclass(frozen=True)
class PartialMessage:
    """Length-L string over {0, 1, erased, both}; rendered '0','1','-','*'."""

    symbols: str

    def __post_init__(self):
        if any(c not in "01-*" for c in self.symbols):
            raise UsageError("message symbols must be over 0/1/-/*")

    @property
    def L(self) -> int:
        return len(self.symbols)

    def erasures(self) -> int:
        return self.symbols.count(ERASED)

    def is_blank(self) -> bool:
        return set(self.symbols) <= {ERASED}

    def __str__(self) -> str:
        return self.symbols


def keygen_l(lam: int, L: int, rng: np.random.Generator) -> LBitKey:
    if L < 1:
        raise UsageError("L must be >= 1")
    keys = tuple((keygen0(lam, rng), keygen0(lam, rng)) for _ in range(L))
    return LBitKey(keys, L, lam)


def _check_message(m: str, L: int) -> str:
    if len(m) != L or any(c not in "01" for c in m):
        raise UsageError(f"message must be a length-{L} bit string")
    return m


def encode(
    key: LBitKey,
    m: str,
    model: ToyModel,
    q: Prompt,
    rng: np.random.Generator,
    policy: BlockPolicy | None = None,
    block_budget: int = 64,
    per_call_max_len: int | None = None,
    stats: dict | None = None,
) -> TokenSeq:
    """Embed m by sampling one block per loop iteration under key (i, m[i])."""
    m = _check_message(m, key.L)
    if policy is None:
        policy = BlockPolicy.for_security(key.lam)
    if per_call_max_len is None:
        # enough room for one block plus bootstrap slack at ~1 bit/token
        per_call_max_len = 4 * int(policy.entropy_threshold) + 4 * policy.seed_len_cap + 64
    out = TokenSeq()
    blocks_emitted = 0
    iterations = 0
    indices: list[int] = []
    while blocks_emitted < block_budget:
        iterations += 1
        i = int(rng.integers(0, key.L))
        k = key.key_for(i, int(m[i]))
        prompt = prefix_specify(q, out)
        cont = wat0(k, model, prompt, rng, policy, max_len=per_call_max_len)
        blocks, _ = blocks_parse(model, policy, prompt, cont)
        if not blocks:
            out = out.concat(cont)
            break
        out = out.concat(blocks[0])
        indices.append(i)
        blocks_emitted += 1
    if stats is not None:
        stats["blocks"] = blocks_emitted
        stats["iterations"] = iterations
        stats["indices"] = indices
    if not out.terminated:
        out = TokenSeq(out.bits, True)
    return out


def _detect_all(
    key: LBitKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None,
    params: DetectParams,
) -> list[tuple[bool, bool]]:
    flat = [key.key_for(i, b) for i in range(key.L) for b in (0, 1)]
    z = detect_many(flat, t_hat, policy, params)
    return [(z[2 * i], z[2 * i + 1]) for i in range(key.L)]


def extract(
    key: LBitKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
) -> PartialMessage:
    """Run all 2L detectors; both-fired resolves to 0."""
    sym = []
    for z0, z1 in _detect_all(key, t_hat, policy, params):
        if not z0 and not z1:
            sym.append(ERASED)
        elif z0:
            sym.append("0")
        else:
            sym.append("1")
    return PartialMessage("".join(sym))


def extract_star(
    key: LBitKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
) -> PartialMessage:
    """Like extract, but a both-fired index reports '*'."""
    sym = []
    for z0, z1 in _detect_all(key, t_hat, policy, params):
        if not z0 and not z1:
            sym.append(ERASED)
        elif z0 and z1:
            sym.append(BOTH)
        elif z0:
            sym.append("0")
        else:
            sym.append("1")
    return PartialMessage("".join(sym))


def bit_rule(z0: bool, z1: bool, star: bool = False) -> str:
    """The (z0, z1) -> symbol table, exposed for conformance tests."""
    if not z0 and not z1:
        return ERASED
    if z0 and z1:
        return BOTH if star else "0"
    return "0" if z0 else "1"


def erasure_ball_contains(m: str, m_hat: PartialMessage | str, delta: float) -> bool:
    """True iff m_hat agrees with m outside at most floor(delta*L) erasures."""
    hat = m_hat.symbols if isinstance(m_hat, PartialMessage) else m_hat
    if len(hat) != len(m):
        raise UsageError("length mismatch")
    erasures = 0
    for a, b in zip(m, hat):
        if b == ERASED:
            erasures += 1
        elif b != a:
            return False
    return erasures <= int(delta * len(m))
