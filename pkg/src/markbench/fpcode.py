"""Erasure-tolerant fingerprinting codes with Tardos-style tracing.

Code generation draws per-column biases p_i from the cutoff arcsine density
on (t, 1-t) with t = 1/(300c) and assigns user u the codeword X[u] with
X[u,i] ~ Bernoulli(p_i).  The code length is

    L = ceil(A * c^2 * ln(n+1) * lambda / (1 - delta))

with the scale factor A a test-mode knob (A=100 is the reference scale);
the erasure surcharge 1/(1-delta) accounts for a delta fraction of symbols
being erased adversarially.

Tracing scores every user against the pirate word and accuses those above
Z * (1 - observed erasure fraction).  Two scoring rules are available:

    asymmetric: only y_i = 1 columns score (g1 on a match, g0 otherwise);
    symmetric:  y_i = 0 columns score with the mirrored values as well.

Both use g1(p) = sqrt((1-p)/p) and g0(p) = -sqrt(p/(1-p)); erased columns
contribute nothing.  The symmetric rule doubles the colluder-to-noise
separation at a given length, which is what makes desk-scale code lengths
traceable; it is the default.  The threshold Z should come from an explicit
null-model calibration (`calibrate_z`) so that innocent users are never
accused at the working parameters; `default_z` is the formula fallback
20 * c * ln(n+1) * lambda used at the reference scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tokens import UsageError

T_CUTOFF_FACTOR = 300


@dataclass(frozen=True)
class Codebook:
    X: np.ndarray  # n x L uint8
    n: int
    L: int

    def __post_init__(self):
        if self.X.shape != (self.n, self.L):
            raise UsageError("codebook dimensions inconsistent")

    def row(self, u: int) -> np.ndarray:
        if not (0 <= u < self.n):
            raise UsageError(f"user id {u} out of range [0, {self.n})")
        return self.X[u]


@dataclass(frozen=True)
class TracingKey:
    p: np.ndarray  # per-column biases, length L
    Z: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.Z <= 0:
            raise UsageError("accusation threshold must be positive")


def fp_length(n: int, c: int, lam: float, delta: float, A: float = 100.0) -> int:
    """Code length: Tardos-style c^2 ln(n) lambda with a 1/(1-delta) erasure
    surcharge; A scales the whole expression (test modes use A in {1,10,100})."""
    if n < c or c < 1 or not (0.0 <= delta < 1.0) or lam < 1:
        raise UsageError("need n >= c >= 1, lambda >= 1, 0 <= delta < 1")
    return math.ceil(A * c * c * math.log(n + 1) * lam / (1.0 - delta))


def default_z(n: int, c: int, lam: float) -> float:
    return 20.0 * c * math.log(n + 1) * lam


def fp_gen(
    lam: int,
    n: int,
    c: int,
    delta: float,
    rng: np.random.Generator,
    A: float = 100.0,
    z: float | None = None,
    score_mode: str = "symmetric",
) -> tuple[Codebook, TracingKey]:
    """Sample the codebook and tracing key.

    Column biases use the cutoff arcsine law: p = sin^2(r) with r uniform on
    [t', pi/2 - t'] and sin^2(t') = t = 1/(300c).
    """
    L = fp_length(n, c, lam, delta, A)
    t = 1.0 / (T_CUTOFF_FACTOR * c)
    t_prime = math.asin(math.sqrt(t))
    r = rng.uniform(t_prime, math.pi / 2 - t_prime, size=L)
    p = np.sin(r) ** 2
    X = (rng.random((n, L)) < p[None, :]).astype(np.uint8)
    Z = default_z(n, c, lam) if z is None else float(z)
    tk = TracingKey(
        p,
        Z,
        {
            "lam": lam,
            "n": n,
            "c": c,
            "delta": delta,
            "A": A,
            "t": t,
            "score_mode": score_mode,
        },
    )
    return Codebook(X, n, L), tk


def pirate_to_array(y) -> np.ndarray:
    """Accepts a string over {0,1,-} or an int8 array with -1 for erasures."""
    if isinstance(y, str):
        lookup = {"0": 0, "1": 1, "-": -1}
        try:
            return np.array([lookup[ch] for ch in y], dtype=np.int8)
        except KeyError as e:
            raise UsageError(f"pirate word has invalid symbol {e.args[0]!r}") from None
    return np.asarray(y, dtype=np.int8)


_trace_score_evals = 0


def trace_score_evals() -> int:
    return _trace_score_evals


def reset_trace_score_evals() -> None:
    global _trace_score_evals
    _trace_score_evals = 0


def user_scores(y, codebook: Codebook, tk: TracingKey, suspects=None) -> np.ndarray:
    """Per-user accusation scores; erased columns contribute zero."""
    global _trace_score_evals
    ya = pirate_to_array(y)
    if len(ya) != codebook.L:
        raise UsageError("pirate word length does not match the code")
    p = tk.p
    g1 = np.sqrt((1.0 - p) / p)
    g0 = -np.sqrt(p / (1.0 - p))
    rows = codebook.X if suspects is None else codebook.X[list(suspects)]
    m1 = ya == 1
    xs = rows[:, m1].astype(np.float64)
    scores = xs @ g1[m1] + (1.0 - xs) @ g0[m1]
    if tk.params.get("score_mode", "symmetric") == "symmetric":
        m0 = ya == 0
        xs0 = rows[:, m0].astype(np.float64)
        scores += (1.0 - xs0) @ (-g0[m0]) + xs0 @ (-g1[m0])
    _trace_score_evals += rows.shape[0] * codebook.L
    return scores


def fp_trace(y, codebook: Codebook, tk: TracingKey, suspects=None) -> set[int]:
    """Users whose score exceeds Z * (1 - observed erasure fraction)."""
    ya = pirate_to_array(y)
    delta_eff = float((ya < 0).mean()) if len(ya) else 0.0
    scores = user_scores(ya, codebook, tk, suspects)
    thresh = tk.Z * (1.0 - delta_eff)
    ids = range(codebook.n) if suspects is None else list(suspects)
    return {u for u, sc in zip(ids, scores) if sc > thresh}


def calibrate_z(
    lam: int,
    n: int,
    c: int,
    delta: float,
    A: float,
    trials: int,
    rng: np.random.Generator,
    score_mode: str = "symmetric",
    margin: float = 1.10,
) -> dict:
    """Empirical null calibration of the accusation threshold.

    Each trial draws a fresh code, forms a pirate word by majority vote of c
    designated colluders plus delta erasures, and records the maximum score
    among the remaining innocent users, rescaled by 1/(1 - delta_eff).  The
    returned Z is margin times the observed maximum, so re-running the null
    experiment accuses no innocents.
    """
    worst = 0.0
    for _ in range(trials):
        cb, tk = fp_gen(lam, n, c, delta, rng, A, z=1.0, score_mode=score_mode)
        y = majority_word(cb.X[:c], rng)
        y = erase_random(y, delta, rng)
        delta_eff = float((y < 0).mean())
        scores = user_scores(y, cb, tk, suspects=range(c, n))
        if len(scores):
            worst = max(worst, float(scores.max()) / max(1.0 - delta_eff, 1e-9))
    return {
        "Z": worst * margin,
        "max_null": worst,
        "trials": trials,
        "params": {"lam": lam, "n": n, "c": c, "delta": delta, "A": A, "score_mode": score_mode},
    }


def majority_word(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Column-wise majority of the colluders' rows, ties broken at random."""
    ones = rows.sum(axis=0)
    cnt = rows.shape[0]
    y = np.where(2 * ones > cnt, 1, 0).astype(np.int8)
    ties = 2 * ones == cnt
    y[ties] = rng.integers(0, 2, size=int(ties.sum()))
    return y


def erase_random(y: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Erase exactly floor(delta * L) positions, chosen uniformly."""
    y = y.copy()
    k = int(delta * len(y))
    if k:
        idx = rng.choice(len(y), size=k, replace=False)
        y[idx] = -1
    return y


def feasible(y, rows) -> bool:
    """Every position of y matches at least one of the given codewords."""
    ya = pirate_to_array(y)
    R = np.asarray(rows, dtype=np.int8)
    if R.ndim == 1:
        R = R[None, :]
    if R.shape[1] != len(ya):
        raise UsageError("length mismatch")
    return bool((R == ya[None, :]).any(axis=0).all())


def feasible_delta(y, rows, delta: float) -> bool:
    """y lies in the delta-erasure ball of the feasible set: at most
    floor(delta*L) erasures and coordinate-wise agreement elsewhere."""
    ya = pirate_to_array(y)
    R = np.asarray(rows, dtype=np.int8)
    if R.ndim == 1:
        R = R[None, :]
    if R.shape[1] != len(ya):
        raise UsageError("length mismatch")
    erased = ya < 0
    if erased.sum() > math.floor(delta * len(ya)):
        return False
    keep = ~erased
    return bool((R[:, keep] == ya[None, keep]).any(axis=0).all())
