import math

import numpy as np
import pytest

from markbench import tokens
from markbench.tokens import Prompt, TokenSeq, UsageError


def test_tokenseq_text_round_trip():
    t = TokenSeq.from_text("0110$")
    assert t.bits == bytes([0, 1, 1, 0])
    assert t.terminated
    assert t.to_text() == "0110$"
    assert TokenSeq.from_text("01").terminated is False


def test_tokenseq_rejects_garbage():
    with pytest.raises(UsageError):
        TokenSeq.from_text("01x0")


def test_concat_identity_and_associativity():
    a = TokenSeq.from_bits([0, 1])
    b = TokenSeq.from_bits([1])
    c = TokenSeq.from_bits([0, 0, 1])
    assert tokens.EMPTY.concat(a).bits == a.bits
    assert a.concat(tokens.EMPTY).bits == a.bits
    assert a.concat(b).concat(c).bits == a.concat(b.concat(c)).bits


def test_concat_refuses_terminated_left():
    done = TokenSeq.from_bits([1], terminated=True)
    with pytest.raises(UsageError):
        done.concat(TokenSeq.from_bits([0]))


def test_next_dist_uniform_and_deterministic():
    q = Prompt()
    m = tokens.uniform_model(stop_prob=0.125)
    assert tokens.next_dist(m, q, tokens.EMPTY) == (0.5, 0.125)
    m1 = tokens.constant_model(1.0)
    assert tokens.next_dist(m1, q, tokens.EMPTY) == (1.0, 0.0)


def test_next_dist_rejects_terminated_prefix():
    m = tokens.uniform_model()
    with pytest.raises(UsageError):
        tokens.next_dist(m, Prompt(), TokenSeq.from_bits([1], terminated=True))


def test_hash_profile_reproducible():
    m1 = tokens.hash_model(seed=7)
    m2 = tokens.hash_model(seed=7)
    q = Prompt.from_text("0101")
    pre_a = TokenSeq.from_bits([1, 0, 0])
    pre_b = TokenSeq.from_bits([0, 0, 1])
    pa1, _ = tokens.next_dist(m1, q, pre_a)
    pa2, _ = tokens.next_dist(m2, q, pre_a)
    pb1, _ = tokens.next_dist(m1, q, pre_b)
    assert pa1 == pa2
    assert pa1 != pb1


def test_sample_stop_and_cap():
    q = Prompt()
    rng = np.random.default_rng(0)
    hard_stop = tokens.ToyModel(lambda _: 0.5, stop_prob=0.999999999, max_len=100)
    t = tokens.sample(hard_stop, q, rng)
    assert len(t) == 0 and t.terminated
    capped = tokens.uniform_model(stop_prob=0.0, max_len=16)
    t = tokens.sample(capped, q, rng)
    assert len(t) == 16 and t.terminated


def test_sample_frequency_matches_next_dist():
    # empirical 1-frequency within the 3-sigma binomial band over 10^4 draws
    q = Prompt()
    m = tokens.constant_model(0.3)
    rng = np.random.default_rng(1)
    n = 10_000
    ones = sum(tokens.sample(m, q, rng, max_len=1).bits[0] for _ in range(n))
    sigma = math.sqrt(n * 0.3 * 0.7)
    assert abs(ones - n * 0.3) <= 3 * sigma


def test_prefix_specify_identities():
    q = Prompt.from_text("0101")
    t = TokenSeq.from_bits([1, 1, 0])
    assert tokens.prefix_specify(q, tokens.EMPTY).bits == q.bits
    assert tokens.prefix_specify(Prompt(), t).bits == t.bits
    a, b = TokenSeq.from_bits([1]), TokenSeq.from_bits([0, 1])
    chained = tokens.prefix_specify(tokens.prefix_specify(q, a), b)
    joined = tokens.prefix_specify(q, a.concat(b))
    assert chained.bits == joined.bits
    with pytest.raises(UsageError):
        tokens.prefix_specify(q, TokenSeq.from_bits([1], terminated=True))


def test_prefix_specified_next_token_distribution_exact():
    # the model reads only prompt||prefix, so the two calls must agree exactly
    m = tokens.hash_model(seed=3)
    q = Prompt.from_text("100")
    t = TokenSeq.from_bits([0, 1, 1, 0])
    direct = tokens.next_dist(m, q, t)
    re_prompted = tokens.next_dist(m, tokens.prefix_specify(q, t), tokens.EMPTY)
    assert direct == re_prompted


def test_empirical_entropy_uniform_eight_bits():
    m = tokens.uniform_model()
    t = TokenSeq.from_bits([0, 1, 1, 0, 1, 0, 0, 1])
    assert tokens.empirical_entropy(m, Prompt(), t) == pytest.approx(8.0)


def test_empirical_entropy_deterministic_zero():
    m = tokens.constant_model(1.0)
    t = TokenSeq.from_bits([1, 1, 1, 1])
    assert tokens.empirical_entropy(m, Prompt(), t) == 0.0


def test_empirical_entropy_biased_pair():
    # -log2(0.75^2) = 0.83007...
    m = tokens.constant_model(0.75)
    t = TokenSeq.from_bits([1, 1])
    expected = -math.log2(0.75**2)
    assert tokens.empirical_entropy(m, Prompt(), t) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.830, abs=5e-4)


def test_empirical_entropy_impossible_token_infinite():
    m = tokens.constant_model(1.0)
    t = TokenSeq.from_bits([0])
    assert tokens.empirical_entropy(m, Prompt(), t) == math.inf


def test_empirical_entropy_additive_over_concat():
    m = tokens.hash_model(seed=11)
    q = Prompt.from_text("01")
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = TokenSeq(bytes(rng.integers(0, 2, size=6, dtype=np.uint8)))
        b = TokenSeq(bytes(rng.integers(0, 2, size=5, dtype=np.uint8)))
        whole = tokens.empirical_entropy(m, q, a.concat(b))
        parts = tokens.empirical_entropy(m, q, a) + tokens.empirical_entropy(
            m, tokens.prefix_specify(q, a), b
        )
        assert whole == pytest.approx(parts, abs=1e-9)


def test_empirical_entropy_matches_bruteforce_product():
    # oracle: multiply the per-token probabilities directly
    m = tokens.hash_model(seed=5)
    q = Prompt.from_text("11")
    t = TokenSeq.from_bits([1, 0, 1, 1, 0])
    prob = 1.0
    ctx = bytearray(q.bits)
    for bit in t.bits:
        p1 = m.profile(bytes(ctx))
        prob *= p1 if bit else 1.0 - p1
        ctx.append(bit)
    assert tokens.empirical_entropy(m, q, t) == pytest.approx(-math.log2(prob), abs=1e-9)


def test_model_config_round_trip():
    for cfg in (
        {"profile": "uniform", "stop_prob": 0.01, "max_len": 64},
        {"profile": "constant", "p": 0.7},
        {"profile": "hash", "seed": 9, "lo": 0.3, "hi": 0.9, "window": 4},
        {"profile": "piecewise", "segment_len": 8, "p_high": 0.5, "p_low": 0.95},
    ):
        m = tokens.model_from_config(cfg)
        again = tokens.model_from_config(tokens.model_to_config(m))
        ctx = b"\x01\x00\x01"
        assert m.profile(ctx) == again.profile(ctx)
        assert m.stop_prob == again.stop_prob
