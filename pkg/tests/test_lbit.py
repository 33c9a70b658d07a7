import numpy as np
import pytest

from markbench import analysis, lbit, tokens, zerobit
from markbench.tokens import Prompt, TokenSeq, UsageError


def test_keygen_l_shapes():
    rng = np.random.default_rng(0)
    k1 = lbit.keygen_l(8, 1, rng)
    assert len(k1.keys) == 1
    k8 = lbit.keygen_l(16, 8, rng)
    flat = [k.prf_key for pair in k8.keys for k in pair]
    assert len(flat) == 16 and len(set(flat)) == 16
    again = lbit.keygen_l(16, 8, np.random.default_rng(5))
    twice = lbit.keygen_l(16, 8, np.random.default_rng(5))
    assert again == twice
    with pytest.raises(UsageError):
        lbit.keygen_l(8, 0, rng)


def test_bit_rule_table():
    # the (z0, z1) -> symbol pseudocode table, all four rows
    assert lbit.bit_rule(False, False) == "-"
    assert lbit.bit_rule(True, False) == "0"
    assert lbit.bit_rule(True, True) == "0"
    assert lbit.bit_rule(False, True) == "1"
    assert lbit.bit_rule(True, True, star=True) == "*"
    assert lbit.bit_rule(False, True, star=True) == "1"


def test_erasure_ball_examples():
    assert lbit.erasure_ball_contains("101", "101", 0.0)
    assert not lbit.erasure_ball_contains("101", "1-1", 0.0)
    assert lbit.erasure_ball_contains("101", "1-1", 1 / 3)
    assert not lbit.erasure_ball_contains("101", "100", 1 / 3)
    assert not lbit.erasure_ball_contains("101", "--1", 1 / 3)
    with pytest.raises(UsageError):
        lbit.erasure_ball_contains("101", "10", 0.5)


def test_partial_message_rendering():
    m = lbit.PartialMessage("10-*")
    assert str(m) == "10-*"
    assert m.erasures() == 1
    assert not m.is_blank()
    assert lbit.PartialMessage("---").is_blank()
    with pytest.raises(UsageError):
        lbit.PartialMessage("10x")


def test_encode_zero_entropy_model_exits_first_iteration():
    model = tokens.constant_model(1.0, max_len=48)
    rng = np.random.default_rng(1)
    key = lbit.keygen_l(8, 4, rng)
    pol = zerobit.BlockPolicy.for_security(8)
    stats = {}
    out = lbit.encode(key, "1010", model, Prompt(), rng, pol, block_budget=10,
                      per_call_max_len=48, stats=stats)
    assert stats["blocks"] == 0 and stats["iterations"] == 1
    assert out.bits == b"\x01" * 48  # the unmarked generation, appended whole


def test_encode_block_budget_and_structure():
    model = tokens.uniform_model()
    rng = np.random.default_rng(2)
    pol = zerobit.calibrated_policy(8, 4000)
    key = lbit.keygen_l(8, 4, rng)
    stats = {}
    out = lbit.encode(key, "0110", model, Prompt(), rng, pol, block_budget=6, stats=stats)
    assert stats["blocks"] == 6
    blocks, rem = zerobit.blocks_parse(model, pol, Prompt(), out)
    assert len(blocks) == 6 and len(rem) == 0


def test_extract_unmarked_all_erased():
    rng = np.random.default_rng(3)
    pol = zerobit.calibrated_policy(16, 1500)
    key = lbit.keygen_l(16, 8, rng)
    t_hat = TokenSeq(bytes(rng.integers(0, 2, size=1500, dtype=np.uint8)), True)
    assert lbit.extract(key, t_hat, pol).is_blank()
    assert lbit.extract_star(key, t_hat, pol).is_blank()


def test_encode_extract_round_trip_small():
    model = tokens.uniform_model()
    pol = zerobit.calibrated_policy(8, 6000)
    rng = np.random.default_rng(4)
    key = lbit.keygen_l(8, 4, rng)
    m = "1001"
    # enough blocks that every index is hit w.h.p. (k*(4, 0) at lam=2 ~ 14)
    out = lbit.encode(key, m, model, Prompt(), rng, pol, block_budget=16)
    got = lbit.extract(key, out, pol)
    assert str(got) == m


def test_extract_star_agrees_without_conflicts():
    model = tokens.uniform_model()
    pol = zerobit.calibrated_policy(8, 6000)
    rng = np.random.default_rng(5)
    key = lbit.keygen_l(8, 4, rng)
    out = lbit.encode(key, "0101", model, Prompt(), rng, pol, block_budget=16)
    assert str(lbit.extract_star(key, out, pol)) == str(lbit.extract(key, out, pol))


def test_extract_star_reports_conflicts():
    # splice texts carrying both bit values at every index: the star variant
    # must flag the both-detected indices it sees
    model = tokens.uniform_model()
    pol = zerobit.calibrated_policy(8, 9000)
    rng = np.random.default_rng(6)
    key = lbit.keygen_l(8, 2, rng)
    a = lbit.encode(key, "00", model, Prompt(), rng, pol, block_budget=8)
    b = lbit.encode(key, "11", model, Prompt(), rng, pol, block_budget=8)
    spliced = TokenSeq(a.bits + b.bits, True)
    plain = lbit.extract(key, spliced, pol)
    star = lbit.extract_star(key, spliced, pol)
    assert "*" in str(star)
    # plain maps every conflicted index to 0 (the z0-priority rule)
    for p_sym, s_sym in zip(str(plain), str(star)):
        if s_sym == "*":
            assert p_sym == "0"
        else:
            assert p_sym == s_sym


def test_extract_issues_exactly_2l_detections():
    zerobit.reset_detect_call_count()
    rng = np.random.default_rng(7)
    pol = zerobit.calibrated_policy(8, 500)
    key = lbit.keygen_l(8, 5, rng)
    t_hat = TokenSeq(bytes(rng.integers(0, 2, size=400, dtype=np.uint8)), True)
    lbit.extract(key, t_hat, pol)
    assert zerobit.detect_call_count() == 2 * 5


def test_lossy_descendants_under_two_messages():
    # with queries restricted to {m1, m2}, every non-erased extracted symbol
    # agrees with one of the queried messages at that index
    model = tokens.uniform_model()
    pol = zerobit.calibrated_policy(8, 9000)
    rng = np.random.default_rng(8)
    L = 6
    key = lbit.keygen_l(8, L, rng)
    m1, m2 = "010011", "110001"
    t1 = lbit.encode(key, m1, model, Prompt(), rng, pol, block_budget=10)
    t2 = lbit.encode(key, m2, model, Prompt(), rng, pol, block_budget=10)
    # adversary splices halves of both generations
    b1, _ = zerobit.blocks_parse(model, pol, Prompt(), t1)
    b2, _ = zerobit.blocks_parse(model, pol, Prompt(), t2)
    pieces = b1[:5] + b2[:5]
    t_hat = TokenSeq(b"".join(b.bits for b in pieces), True)
    got = str(lbit.extract(key, t_hat, pol))
    for i, sym in enumerate(got):
        if sym != "-":
            assert sym in (m1[i], m2[i])


def test_encode_output_distribution_matches_model():
    # bigram chi-square of encode output vs unmarked sampling (fresh keys);
    # the acceptance suite runs the full-scale zero-bit protocol
    from scipy.stats import chi2_contingency

    model = tokens.hash_model(seed=21, lo=0.25, hi=0.75)
    pol = zerobit.calibrated_policy(8, 1200)
    rng = np.random.default_rng(10)
    marked = np.zeros(4, dtype=np.int64)
    unmarked = np.zeros(4, dtype=np.int64)

    def bigrams(t, acc):
        a = t.to_array()
        m = len(a) - (len(a) % 2)
        acc += np.bincount(2 * a[0:m:2] + a[1:m:2], minlength=4)

    for _ in range(250):
        key = lbit.keygen_l(8, 4, rng)
        msg = "".join("01"[b] for b in rng.integers(0, 2, size=4))
        bigrams(lbit.encode(key, msg, model, Prompt(), rng, pol, block_budget=2), marked)
        bigrams(tokens.sample(model, Prompt(), rng, max_len=700), unmarked)
    _, p, _, _ = chi2_contingency(np.stack([marked, unmarked]))
    assert p > 1e-3


def test_theorem1_style_round_trip_at_kstar():
    # one full-size trial of the acceptance-criterion-3 configuration
    model = tokens.uniform_model()
    lam, L, delta = 8, 8, 0.25
    kstar = analysis.k_star(L, delta, lam)
    pol = zerobit.calibrated_policy(lam, kstar * 340, detect_prob=0.9)
    rng = np.random.default_rng(9)
    key = lbit.keygen_l(lam, L, rng)
    m = "10110010"
    out = lbit.encode(key, m, model, Prompt(), rng, pol, block_budget=kstar)
    got = lbit.extract(key, out, pol)
    assert lbit.erasure_ball_contains(m, got, delta)
