"""Zero-bit watermarking by block-structured derandomized sampling.

Generation emits self-contained blocks.  Each block opens with a short
bootstrap segment sampled with true randomness; the rest of the block is
sampled by inverse transform against pseudorandom values keyed on (secret
key, bootstrap bits, in-block counter).  A block ends once its cumulative
empirical entropy reaches the policy threshold, so any observer holding the
model can re-derive the block boundaries from the text alone.

Detection is key-only: every candidate seed window (the quantized bootstrap
lengths) is scored against the tokens that follow it.  A window scores
sum(ln 1/w_i) with w_i = u_i when the token is 1 and 1-u_i otherwise; for
text independent of the key each term is Exp(1), and the threshold

    theta(ell) = ell + 2*sqrt(lam' * ell) + 2*lam'

with lam' = (lambda + ln #candidates) * ln 2 keeps the false-positive rate
per call below 2^-lambda (verified empirically; see
scripts/calibrate_detection.py).  Scores are compared at a fixed grid of
window lengths.

The full scan is expensive, so the detector prunes with two conservative
gates on partial w-sums before exact scoring.  The gates only ever drop
candidates, so soundness is unaffected; their completeness cost is measured
in the test suite.  Pass deep=True to disable pruning and score every
candidate exactly.  `detect_many` scans one text under many keys at once,
sharing the candidate precomputation; extraction in the L-bit layer leans
on this heavily.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import prf
from .tokens import Prompt, TokenSeq, ToyModel, UsageError, step_surprisal_bits

LN2 = math.log(2.0)

_detect_calls = 0


def detect_call_count() -> int:
    return _detect_calls


def reset_detect_call_count() -> None:
    global _detect_calls
    _detect_calls = 0


@dataclass(frozen=True)
class ZeroBitKey:
    prf_key: bytes
    lam: int

    def __post_init__(self):
        if self.lam < 1:
            raise UsageError("lambda must be a positive integer")
        if len(self.prf_key) != key_size_bytes(self.lam):
            raise UsageError("prf_key has the wrong length for this lambda")


def key_size_bytes(lam: int) -> int:
    return max(16, 2 * math.ceil(lam / 8))


def keygen0(lam: int, rng: np.random.Generator) -> ZeroBitKey:
    """Fresh uniformly random key; reproducible under a fixed generator."""
    return ZeroBitKey(rng.bytes(key_size_bytes(lam)), lam)


def default_b_fn(lam: int):
    """Entropy a length-ell substring needs under the conservative
    substring-completeness analysis; generation uses the per-block threshold
    instead (the two are separate knobs on BlockPolicy)."""

    def b(ell: float) -> float:
        return (8.0 / LN2) * lam * math.sqrt(ell)

    return b


@dataclass(frozen=True)
class BlockPolicy:
    """Block parsing and seed geometry shared by generation and detection.

    entropy_threshold: bits of empirical entropy that complete a block.
    seed_entropy_bits: bootstrap segment target entropy.
    seed_len_quantum / seed_len_cap: bootstrap lengths are multiples of the
        quantum up to the cap, so the detector scans a small fixed set of
        seed widths.
    """

    lam: int
    entropy_threshold: float
    seed_entropy_bits: float
    seed_len_quantum: int
    seed_len_cap: int
    b_fn: object = None

    def __post_init__(self):
        if self.entropy_threshold <= 0:
            raise UsageError("entropy_threshold must be positive")
        if self.seed_len_quantum < 1 or self.seed_len_cap < self.seed_len_quantum:
            raise UsageError("invalid seed length bounds")
        if self.seed_len_cap > 128:
            raise UsageError("seed windows beyond 128 tokens are unsupported")
        if self.b_fn is None:
            object.__setattr__(self, "b_fn", default_b_fn(self.lam))

    @staticmethod
    def for_security(lam: int) -> "BlockPolicy":
        return BlockPolicy(
            lam=lam,
            entropy_threshold=float(lam),
            seed_entropy_bits=float(lam),
            seed_len_quantum=lam,
            seed_len_cap=4 * lam,
        )

    def seed_lengths(self) -> tuple[int, ...]:
        q, cap = self.seed_len_quantum, self.seed_len_cap
        return tuple(range(q, cap + 1, q))


def calibrated_policy(
    lam: int,
    text_len_hint: int,
    detect_prob: float = 0.9,
    bits_per_token: float = 1.0,
    grid: tuple[int, ...] | None = None,
) -> BlockPolicy:
    """Block policy whose blocks carry enough entropy to be detected.

    Scores are only compared against theta at the discrete grid of window
    lengths, so the block payload must fill a whole grid window.  This picks
    the smallest grid length g whose full-window signal clears theta(g) with
    a detect_prob z-margin, then sizes the block threshold so the payload
    slightly overfills g.  The seed segment is pinned to a single
    4*lambda-token width, which keeps the detection scan to one seed length.
    """
    if grid is None:
        grid = DetectParams().window_grid
    s = 4 * lam
    n_cand = max(text_len_hint, 64) * len(grid)
    lam_p = (lam + math.log(n_cand)) * LN2
    rate_nats = bits_per_token * LN2
    z = max(_norm_ppf(detect_prob), 0.0)
    g_star = grid[-1]
    for g in grid:
        signal = g * rate_nats
        need = 2.0 * math.sqrt(lam_p * g) + 2.0 * lam_p + z * math.sqrt(1.2 * g)
        if signal >= need:
            g_star = g
            break
    payload_tokens = math.ceil(1.06 * g_star)
    threshold = math.ceil((payload_tokens + s) * bits_per_token)
    return BlockPolicy(
        lam=lam,
        entropy_threshold=float(threshold),
        seed_entropy_bits=float(lam),
        seed_len_quantum=s,
        seed_len_cap=s,
    )


def _norm_ppf(p: float) -> float:
    from scipy.stats import norm

    return float(norm.ppf(p))


@dataclass(frozen=True)
class ApproxRelation:
    """String approximation: exact equality or equal-length normalized Hamming."""

    kind: str = "equality"
    delta_rel: float = 0.0

    def __post_init__(self):
        if self.kind not in ("equality", "hamming"):
            raise UsageError(f"unknown relation kind {self.kind!r}")
        if self.kind == "equality" and self.delta_rel != 0.0:
            raise UsageError("equality relation requires delta_rel == 0")
        if not (0.0 <= self.delta_rel < 1.0):
            raise UsageError("delta_rel must lie in [0, 1)")


EQUALITY = ApproxRelation()


@dataclass
class Transcript:
    """Ordered (prompt, generation) pairs from one experiment."""

    entries: list = field(default_factory=list)

    def append(self, q: Prompt, t: TokenSeq) -> None:
        self.entries.append((q, t))

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# Generation


def wat0(
    key: ZeroBitKey,
    model: ToyModel,
    q: Prompt,
    rng: np.random.Generator,
    policy: BlockPolicy | None = None,
    max_len: int | None = None,
    seed_log: list | None = None,
) -> TokenSeq:
    """Marked generation: block-by-block derandomized sampling.

    The bootstrap segment of each block is sampled with rng; once the
    bootstrap closes at a quantized length, subsequent tokens of the block
    are sampled by inverse transform against the keyed stream.  Blocks end
    exactly where blocks_parse would cut them.
    """
    if policy is None:
        policy = BlockPolicy.for_security(key.lam)
    cap = model.max_len if max_len is None else max_len
    ks = prf.subkeys(key.prf_key)
    seed_set = set(policy.seed_lengths())
    seed_cap = policy.seed_len_cap

    out = bytearray()
    ctx = bytearray(q.bits)
    unit_start = 0
    unit_entropy = 0.0
    base = None
    counter = 0

    while len(out) < cap:
        p1 = model.profile(bytes(ctx))
        p_stop = model.stop_prob
        if base is not None:
            counter += 1
            u = prf.u_scalar(base, counter)
        else:
            u = rng.random()
        if u < p_stop:
            break
        bit = 1 if u < p_stop + (1.0 - p_stop) * p1 else 0
        out.append(bit)
        ctx.append(bit)
        unit_entropy += step_surprisal_bits(p1, p_stop, bit)
        unit_len = len(out) - unit_start
        if unit_entropy >= policy.entropy_threshold:
            unit_start = len(out)
            unit_entropy = 0.0
            base = None
            counter = 0
        elif base is None and unit_len in seed_set:
            if unit_entropy >= policy.seed_entropy_bits or unit_len == seed_cap:
                seed_bits = bytes(out[unit_start:])
                lo, hi = prf.pack_bits(seed_bits)
                base = prf.key_base(ks, prf.seed_digest(lo, hi, unit_len))
                counter = 0
                if seed_log is not None:
                    seed_log.append(seed_bits)
    return TokenSeq(bytes(out), True)


# ---------------------------------------------------------------------------
# Block parsing (the unique greedy minimal-block decomposition)


def blocks_parse(
    model: ToyModel, policy: BlockPolicy, q: Prompt, t: TokenSeq
) -> tuple[list[TokenSeq], TokenSeq]:
    """Cut t into minimal blocks left to right; returns (blocks, remainder).

    A block is the shortest prefix of the remaining text whose empirical
    entropy w.r.t. the running context reaches the policy threshold; no
    prefix of the remainder is a block.
    """
    blocks: list[TokenSeq] = []
    ctx = bytearray(q.bits)
    start = 0
    acc = 0.0
    for i, bit in enumerate(t.bits):
        p1 = model.profile(bytes(ctx))
        acc += step_surprisal_bits(p1, model.stop_prob, bit)
        ctx.append(bit)
        if acc >= policy.entropy_threshold:
            blocks.append(TokenSeq(t.bits[start : i + 1]))
            start = i + 1
            acc = 0.0
    remainder = TokenSeq(t.bits[start:], t.terminated)
    return blocks, remainder


def _hamming_matches(hay: np.ndarray, needle: np.ndarray, delta_rel: float) -> bool:
    m = len(needle)
    if m == 0 or m > len(hay):
        return False
    windows = np.lib.stride_tricks.sliding_window_view(hay, m)
    mism = (windows != needle[None, :]).sum(axis=1)
    return bool((mism <= delta_rel * m).any())


def num_blocks(
    t_hat: TokenSeq,
    q: Prompt,
    t: TokenSeq,
    rel: ApproxRelation,
    model: ToyModel,
    policy: BlockPolicy,
) -> int:
    """How many distinct blocks of Blocks(t; q) are approximated in t_hat.

    Blocks are counted by position in the parse; approximating substrings of
    t_hat may overlap (the weaker literal reading of the definition).
    """
    blocks, _ = blocks_parse(model, policy, q, t)
    if not blocks:
        return 0
    count = 0
    if rel.kind == "equality":
        hay = t_hat.bits
        for b in blocks:
            if b.bits and hay.find(b.bits) >= 0:
                count += 1
    else:
        hay = t_hat.to_array()
        for b in blocks:
            if _hamming_matches(hay, b.to_array(), rel.delta_rel):
                count += 1
    return count


def r_k(
    lam: int,
    transcript: Transcript,
    t_hat: TokenSeq,
    k: int,
    rel: ApproxRelation,
    model: ToyModel,
    policy: BlockPolicy,
) -> bool:
    """The approximate-enough-blocks condition: k blocks across the transcript."""
    if k < 1:
        raise UsageError("k must be at least 1")
    total = 0
    for q, t in transcript.entries:
        total += num_blocks(t_hat, q, t, rel, model, policy)
        if total >= k:
            return True
    return total >= k


# ---------------------------------------------------------------------------
# Detection


@dataclass(frozen=True)
class DetectParams:
    """Scan geometry and pruning gates for detect0 / detect_many."""

    window_grid: tuple[int, ...] = (16, 32, 64, 128, 192, 256, 384, 512)
    stage1_len: int = 8
    stage1_sigmas: float = 1.5
    stage2_len: int = 64
    stage2_sigmas: float = 3.0
    row_budget: int = 1 << 22  # max stage-1 grid elements per batch


DEFAULT_DETECT = DetectParams()

_M53 = np.uint64((1 << 53) - 1)
_U53_FLOOR = 2.0**-60


def theta(ell: float, lam_p: float) -> float:
    return ell + 2.0 * math.sqrt(lam_p * ell) + 2.0 * lam_p


def lambda_prime(lam: int, n_candidates: int) -> float:
    return (lam + math.log(max(n_candidates, 1))) * LN2


@dataclass
class DetectReport:
    marked: bool
    best_score: float | None
    window: dict | None
    threshold: float | None

    def to_json(self) -> dict:
        return {
            "marked": self.marked,
            "best_score": self.best_score,
            "window": self.window,
            "threshold": self.threshold,
        }


@dataclass
class TextScan:
    """Key-independent precomputation shared by every key scanned on a text."""

    bits: np.ndarray
    grid: tuple[int, ...]
    n_candidates: int
    seed_sets: list  # (s, wstarts, digests, rooms)
    b2: np.ndarray  # (n_windows, stage1_len) uint64: 2*bit - 1 (wrapping)
    m1b: np.ndarray  # (n_windows, stage1_len) uint64: M53 * (1 - bit)
    params: DetectParams


def prepare_scan(
    t_hat: TokenSeq, policy: BlockPolicy, params: DetectParams = DEFAULT_DETECT
) -> TextScan:
    bits = t_hat.to_array()
    n = len(bits)
    gmin = params.window_grid[0]
    j1 = params.stage1_len
    seed_sets = []
    n_cand = 0
    for s in policy.seed_lengths():
        n_starts = n - s - gmin + 1
        if n_starts <= 0:
            continue
        lo, hi = prf.sliding_pack(bits, s)
        digests = prf.seed_digest_vec(lo[:n_starts], hi[:n_starts], s)
        starts = np.arange(n_starts, dtype=np.int64)
        wstarts = starts + s
        room = n - wstarts
        seed_sets.append((s, wstarts, digests, room))
        n_cand += n_starts * len(params.window_grid)
    if seed_sets and n >= j1:
        w = np.lib.stride_tricks.sliding_window_view(bits, j1).astype(np.uint64)
        b2 = w * np.uint64(2) - np.uint64(1)
        m1b = (np.uint64(1) - w) * _M53
    else:
        b2 = np.zeros((0, j1), dtype=np.uint64)
        m1b = np.zeros((0, j1), dtype=np.uint64)
    return TextScan(bits, params.window_grid, n_cand, seed_sets, b2, m1b, params)


def _stage_gate(j: int, sigmas: float) -> np.uint64:
    val = j * 2.0**52 - sigmas * math.sqrt(j / 12.0) * 2.0**53
    return np.uint64(max(int(val), 0))


def _gather_windows(bits: np.ndarray, wstart: np.ndarray, width: int) -> np.ndarray:
    idx = wstart[:, None] + np.arange(width, dtype=np.int64)[None, :]
    np.clip(idx, 0, len(bits) - 1, out=idx)
    return bits[idx]


def _pair_bases(ka_vec, kb_vec, key_idx, digests) -> np.ndarray:
    """Keyed bases for explicit (key, seed) pairs."""
    z = digests ^ ka_vec[key_idx]
    tmp = np.empty_like(z)
    prf.fin_inplace(z, tmp)
    z += kb_vec[key_idx]
    return z


def _pair_wsum(bases, wbits, j: int) -> np.ndarray:
    """Integer w-sums over the first j window tokens, one row per pair."""
    t53 = prf.u64_grid(bases, prf.counter_terms(j)) >> np.uint64(11)
    w = np.where(wbits[:, :j] != 0, t53, _M53 - t53)
    return w.sum(axis=1, dtype=np.uint64)


def _exact_eval(bases, wbits, rooms, grid, lam_p):
    """Exact log-score cumsums for explicit (key, seed) pair rows.

    Returns (fired_rows, per-row best margin, per-row best grid length).
    """
    wcap = wbits.shape[1]
    u = (prf.u64_grid(bases, prf.counter_terms(wcap)) >> np.uint64(11)) * prf.U53_SCALE
    w = np.where(wbits != 0, u, 1.0 - u)
    np.maximum(w, _U53_FLOOR, out=w)
    logs = -np.log(w)
    logs *= np.arange(wcap)[None, :] < rooms[:, None]
    cs = np.cumsum(logs, axis=1)
    n = len(bases)
    fired = np.zeros(n, dtype=bool)
    row_best = np.full(n, -math.inf)
    row_g = np.zeros(n, dtype=np.int64)
    for g in grid:
        if g > wcap:
            break
        margin = np.where(rooms >= g, cs[:, g - 1] - theta(g, lam_p), -math.inf)
        upd = margin > row_best
        row_best[upd] = margin[upd]
        row_g[upd] = g
        fired |= margin > 0
    return fired, row_best, row_g


class _Stage1Buffers:
    """Reusable scratch for the stage-1 grid; avoids per-chunk allocation."""

    def __init__(self, rows: int, j1: int):
        self.rows = rows
        self.z = np.empty(rows * j1, dtype=np.uint64)
        self.tmp = np.empty(rows * j1, dtype=np.uint64)
        self.base = np.empty(rows, dtype=np.uint64)
        self.tmpb = np.empty(rows, dtype=np.uint64)


_buffer_cache: dict = {}


def _get_buffers(rows: int, j1: int) -> _Stage1Buffers:
    # round rows up to a power of two and reuse across calls
    size = 1 << max(rows - 1, 1).bit_length()
    buf = _buffer_cache.get(j1)
    if buf is None or buf.rows < size:
        buf = _Stage1Buffers(size, j1)
        _buffer_cache[j1] = buf
    return buf


def detect_many(
    keys: list[ZeroBitKey],
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
    scan: TextScan | None = None,
    deep: bool = False,
    want_reports: bool = False,
):
    """Scan one text under many keys, sharing all key-independent work.

    Performs one logical zero-bit detection per key (the call counter
    advances by len(keys)).  Returns a list of booleans, or DetectReports
    when want_reports is set.
    """
    global _detect_calls
    _detect_calls += len(keys)
    if not keys:
        return []
    lam = keys[0].lam
    if any(k.lam != lam for k in keys):
        raise UsageError("detect_many requires keys sharing one lambda")
    if policy is None:
        policy = BlockPolicy.for_security(lam)
    if scan is None:
        scan = prepare_scan(t_hat, policy, params)
    nk = len(keys)
    marked = np.zeros(nk, dtype=bool)
    reports = [DetectReport(False, None, None, None) for _ in range(nk)] if want_reports else None
    if scan.n_candidates == 0:
        return reports if want_reports else [False] * nk

    ks_list = [prf.subkeys(k.prf_key) for k in keys]
    ka_vec = np.array([ks[0] for ks in ks_list], dtype=np.uint64)
    kb_vec = np.array([ks[1] for ks in ks_list], dtype=np.uint64)
    lam_p = lambda_prime(lam, scan.n_candidates)
    j1, j2 = params.stage1_len, params.stage2_len
    gate1 = _stage_gate(j1, params.stage1_sigmas)
    gate2 = _stage_gate(j2, params.stage2_sigmas)
    grid = scan.grid
    bits = scan.bits
    ct1 = prf.counter_terms(j1)
    rows_max = max(params.row_budget, nk * j1 * 256)
    chunk_cap = max(256, rows_max // (nk * j1))
    if not deep:
        need = nk * min(chunk_cap, max(len(ws) for _, ws, _, _ in scan.seed_sets))
        buf = _get_buffers(need, j1)
    best = [(-math.inf, None, None, None)] * nk  # margin, g, wstart, seed_len

    for s, wstarts, digests, rooms in scan.seed_sets:
        n_seeds = len(wstarts)
        chunk = chunk_cap
        for c0 in range(0, n_seeds, chunk):
            active = np.arange(nk) if want_reports else np.flatnonzero(~marked)
            if len(active) == 0:
                break
            sl = slice(c0, min(c0 + chunk, n_seeds))
            dig_c = digests[sl]
            ws_c = wstarts[sl]
            rm_c = rooms[sl]
            C = len(dig_c)
            if deep:
                key_idx = np.repeat(active, C)
                seed_rows = np.tile(np.arange(C), len(active))
            else:
                K = len(active)
                rows = K * C
                base = buf.base[:rows].reshape(K, C)
                np.bitwise_xor(dig_c[None, :], ka_vec[active][:, None], out=base)
                prf.fin_inplace(base, buf.tmpb[:rows].reshape(K, C))
                base += kb_vec[active][:, None]
                zf = buf.z[: rows * j1].reshape(rows, j1)
                np.add(base.reshape(rows, 1), ct1[None, :], out=zf)
                prf.fin_inplace(zf, buf.tmp[: rows * j1].reshape(rows, j1))
                np.right_shift(zf, np.uint64(11), out=zf)
                zb = zf.reshape(K, C, j1)
                np.multiply(zb, scan.b2[ws_c][None, :, :], out=zb)
                np.add(zb, scan.m1b[ws_c][None, :, :], out=zb)
                sums = zb.sum(axis=2)
                keep_k, keep_c = np.nonzero(sums <= gate1)
                if len(keep_k) == 0:
                    continue
                key_idx = active[keep_k]
                seed_rows = keep_c
            bases = _pair_bases(ka_vec, kb_vec, key_idx, dig_c[seed_rows])
            ws_p = ws_c[seed_rows]
            rm_p = rm_c[seed_rows]
            if not deep:
                keep2 = np.ones(len(key_idx), dtype=bool)
                rows2 = np.flatnonzero(rm_p >= j2)
                if len(rows2):
                    wb2 = _gather_windows(bits, ws_p[rows2], j2)
                    s2 = _pair_wsum(bases[rows2], wb2, j2)
                    keep2[rows2] = s2 <= gate2
                sel = np.flatnonzero(keep2)
            else:
                sel = np.arange(len(key_idx))
            # exact scoring in bounded sub-batches
            for e0 in range(0, len(sel), 4096):
                es = sel[e0 : e0 + 4096]
                if len(es) == 0:
                    continue
                rm_e = rm_p[es]
                wcap = int(min(grid[-1], rm_e.max()))
                wb = _gather_windows(bits, ws_p[es], wcap)
                fired, row_best, row_g = _exact_eval(bases[es], wb, rm_e, grid, lam_p)
                if fired.any():
                    marked[key_idx[es[fired]]] = True
                if want_reports:
                    for r in np.flatnonzero(row_g > 0):
                        ki = int(key_idx[es[r]])
                        if row_best[r] > best[ki][0]:
                            best[ki] = (
                                float(row_best[r]),
                                int(row_g[r]),
                                int(ws_p[es[r]]),
                                s,
                            )
    if want_reports:
        for ki in range(nk):
            margin, g, wstart, s = best[ki]
            if g is not None:
                reports[ki] = DetectReport(
                    bool(marked[ki]),
                    round(margin + theta(g, lam_p), 6),
                    {"start": wstart, "length": g, "seed_len": s},
                    round(theta(g, lam_p), 6),
                )
            else:
                reports[ki] = DetectReport(bool(marked[ki]), None, None, None)
        return reports
    return [bool(m) for m in marked]


def detect0(
    key: ZeroBitKey,
    t_hat: TokenSeq,
    policy: BlockPolicy | None = None,
    params: DetectParams = DEFAULT_DETECT,
    scan: TextScan | None = None,
    deep: bool = False,
    detail: bool = False,
):
    """True iff some candidate (seed window, following window) scores past theta.

    Deterministic in (key, t_hat, policy, params).  `scan` lets callers reuse
    the key-independent precomputation across calls on the same text.
    """
    out = detect_many([key], t_hat, policy, params, scan, deep, want_reports=detail)
    return out[0]


@dataclass
class ZeroBitScheme:
    """A key bound to its model and policy; convenience handle for the harness."""

    key: ZeroBitKey
    model: ToyModel
    policy: BlockPolicy
    params: DetectParams = DEFAULT_DETECT

    def wat(self, q: Prompt, rng: np.random.Generator, max_len: int | None = None) -> TokenSeq:
        return wat0(self.key, self.model, q, rng, self.policy, max_len)

    def detect(self, t: TokenSeq) -> bool:
        return detect0(self.key, t, self.policy, self.params)
