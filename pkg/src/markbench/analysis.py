"""Balls-and-bins quantities behind the robustness guarantees.

k_star(L, delta, lambda) is the number of blocks that guarantees, up to
probability e^-lambda, that at most delta*L of the L message indices stay
uncovered when each block lands on a uniformly random index:

    k* = ceil( min( L*(ln L + lambda),  L*ln(1/(delta - sqrt((lambda+ln2)/(2L)))) ) )

The second branch only participates when its logarithm argument is positive,
i.e. delta > sqrt((lambda+ln2)/(2L)); otherwise k* is the first branch alone
(matching the case split in the tail analysis).  simulate_empty_bins checks
the guarantee by direct Monte Carlo.

s_bound supports the non-undetectable robustness condition: it returns an
empirical high-probability lower bound s on the total load of the
floor(delta*L) lightest bins after B throws, so an adversary that keeps at
least B - s blocks can erase at most floor(delta*L) indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tokens import TokenSeq, ToyModel, UsageError
from .zerobit import ApproxRelation, BlockPolicy, Transcript, blocks_parse, num_blocks


@dataclass(frozen=True)
class BinsResult:
    trials: int
    empties_exceeded: int

    @property
    def failure_rate(self) -> float:
        return self.empties_exceeded / self.trials


def k_star_detail(L: int, delta: float, lam: float) -> tuple[int, int]:
    """(k*, branch) where branch is 1 or 2 for the achieving minimum."""
    if L < 1 or lam < 1 or not (0.0 <= delta < 1.0):
        raise UsageError("need L >= 1, lambda >= 1, 0 <= delta < 1")
    b1 = L * (math.log(L) + lam)
    d = delta - math.sqrt((lam + math.log(2.0)) / (2.0 * L))
    if d > 0.0:
        b2 = L * math.log(1.0 / d)
        if b2 < b1:
            return math.ceil(b2), 2
    return math.ceil(b1), 1


def k_star(L: int, delta: float, lam: float) -> int:
    return k_star_detail(L, delta, lam)[0]


def simulate_empty_bins(
    k: int, L: int, delta: float, lam: float, trials: int, rng: np.random.Generator
) -> BinsResult:
    """Throw k balls into L bins per trial; count trials with > delta*L empty bins."""
    if trials < 1:
        raise UsageError("trials must be >= 1")
    exceeded = 0
    bound = delta * L
    if k == 0:
        return BinsResult(trials, trials if L > bound else 0)
    counts = np.zeros(L, dtype=np.int64)
    for _ in range(trials):
        counts[:] = 0
        hits = rng.integers(0, L, size=k)
        np.add.at(counts, hits, 1)
        if (counts == 0).sum() > bound:
            exceeded += 1
    return BinsResult(trials, exceeded)


def _light_bin_loads(B: int, L: int, m: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Total load of the m lightest bins per trial, after B throws into L bins."""
    out = np.empty(trials, dtype=np.int64)
    counts = np.zeros(L, dtype=np.int64)
    for t in range(trials):
        counts[:] = 0
        hits = rng.integers(0, L, size=B)
        np.add.at(counts, hits, 1)
        part = np.partition(counts, m - 1)[:m]
        out[t] = part.sum()
    return out


def s_bound(
    B: int, L: int, delta: float, lam: float, trials: int, rng: np.random.Generator
) -> int:
    """Largest s such that the floor(delta*L) lightest bins carry >= s balls in
    all but an e^-lambda empirical fraction of trials; capped below delta*B."""
    if B < 0:
        raise UsageError("B must be nonnegative")
    m = math.floor(delta * L)
    if m == 0 or B == 0:
        return 0
    loads = np.sort(_light_bin_loads(B, L, m, trials, rng))
    cut = math.floor(math.exp(-lam) * trials)
    s = int(loads[cut])
    cap = math.ceil(delta * B) - 1
    return max(0, min(s, cap))


def r_det(
    lam: int,
    L: int,
    delta: float,
    transcript: Transcript,
    t_hat: TokenSeq,
    rel: ApproxRelation,
    model: ToyModel,
    policy: BlockPolicy,
    trials: int = 2000,
    rng: np.random.Generator | None = None,
) -> bool:
    """Robustness condition for schemes without undetectability.

    Requires the transcript to contain B >= L*(ln L + lambda) blocks in
    total, and the candidate text to approximate all but s_bound of them.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    B = 0
    for q, t in transcript.entries:
        B += len(blocks_parse(model, policy, q, t)[0])
    if B < L * (math.log(L) + lam):
        return False
    total = 0
    for q, t in transcript.entries:
        total += num_blocks(t_hat, q, t, rel, model, policy)
    s = s_bound(B, L, delta, lam, trials, rng)
    return total >= B - s
