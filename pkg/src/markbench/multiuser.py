"""Multi-user watermarking: embed each user's fingerprint codeword.

Key generation pairs a fingerprinting code with an L-bit key of matching
length.  Marking for user u embeds the codeword X_u; detection asks whether
the extracted partial message has any non-erased symbol; tracing feeds the
partial message to the fingerprinting tracer.  Consistency (never tracing
what was not detected) holds by construction: an all-erased extraction
short-circuits to the empty accusation set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fpcode import Codebook, TracingKey, fp_gen, fp_trace
from .lbit import LBitKey, PartialMessage, encode, extract, keygen_l
from .tokens import Prompt, TokenSeq, ToyModel, UsageError
from .zerobit import DEFAULT_DETECT, BlockPolicy, DetectParams


@dataclass(frozen=True)
class MultiUserKey:
    codebook: Codebook
    tk: TracingKey
    sk: LBitKey

    def __post_init__(self):
        if self.sk.L != self.codebook.L:
            raise UsageError("L-bit key length must match the code length")

    @property
    def n(self) -> int:
        return self.codebook.n

    @property
    def L(self) -> int:
        return self.codebook.L


def mu_keygen(
    lam: int,
    n: int,
    c: int,
    delta: float,
    rng: np.random.Generator,
    A: float = 100.0,
    z: float | None = None,
    score_mode: str = "symmetric",
) -> MultiUserKey:
    codebook, tk = fp_gen(lam, n, c, delta, rng, A, z, score_mode)
    sk = keygen_l(lam, codebook.L, rng)
    return MultiUserKey(codebook, tk, sk)


def codeword_message(key: MultiUserKey, u: int) -> str:
    return "".join("01"[b] for b in key.codebook.row(u))


def mu_wat(
    key: MultiUserKey,
    u: int,
    q: Prompt,
    model: ToyModel,
    rng: np.random.Generator,
    policy: BlockPolicy | None = None,
    block_budget: int = 64,
    stats: dict | None = None,
) -> TokenSeq:
    """Generate text for user u: the L-bit encoder run on u's codeword."""
    return encode(
        key.sk, codeword_message(key, u), model, q, rng, policy, block_budget, stats=stats
    )


def mu_detect(
    key: MultiUserKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
) -> bool:
    m_hat = extract(key.sk, t_hat, policy, params)
    return not m_hat.is_blank()


def mu_trace(
    key: MultiUserKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
    suspects=None,
) -> set[int]:
    """Accused users for a candidate text; empty when nothing was detected.

    `suspects` restricts the accusation check to the given user ids.
    """
    m_hat = extract(key.sk, t_hat, policy, params)
    if m_hat.is_blank():
        return set()
    return fp_trace(m_hat.symbols, key.codebook, key.tk, suspects=suspects)


def trace_message(key: MultiUserKey, m_hat: PartialMessage, suspects=None) -> set[int]:
    """Trace an already-extracted partial message (empty when blank)."""
    if m_hat.is_blank():
        return set()
    return fp_trace(m_hat.symbols, key.codebook, key.tk, suspects=suspects)


class UserRegistry:
    """Maps external account strings to dense integer user ids."""

    def __init__(self, accounts: dict[str, int] | None = None):
        self.accounts = dict(accounts or {})

    def id_for(self, account: str, create: bool = False) -> int:
        if account not in self.accounts:
            if not create:
                raise UsageError(f"unknown account {account!r}")
            self.accounts[account] = len(self.accounts)
        return self.accounts[account]

    def account_for(self, uid: int) -> str | None:
        for a, i in self.accounts.items():
            if i == uid:
                return a
        return None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.accounts, indent=2, sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "UserRegistry":
        return UserRegistry(json.loads(Path(path).read_text()))
