import itertools
import math

import numpy as np
import pytest
from mpmath import atanh as mp_atanh
from mpmath import mp, mpf
from mpmath import tanh as mp_tanh
from scipy.special import logsumexp

from conftest import channel_llr
from neuralbp import kernels
from neuralbp.codes import encode, hamming74, single_parity_check, uncoded
from neuralbp.decoder import (
    ATANH_CLIP,
    L_MAX,
    check_node_offset_min_sum,
    cn_update_ms,
    cn_update_nspa,
    cn_update_oms,
    cn_update_spa,
    decode,
    decode_instrumented,
    hard_decision,
    marginalize,
    replay_soft,
    syndrome_check,
    vn_update,
)
from neuralbp.params import ConfigError, DecoderParams, tie_offsets

mp.dps = 40


def brute_force_posterior(code, llr):
    """Bitwise posterior LLRs by enumerating every codeword."""
    msgs = np.array(list(itertools.product([0, 1], repeat=code.k)))
    words = encode(code, msgs).astype(float)
    # log P(c | y) up to a constant: sum_v (1 - 2 c_v) l_v / 2
    logp = 0.5 * llr @ (1 - 2 * words).T  # (B, 2^k)
    out = np.empty_like(llr)
    for v in range(code.n):
        zero, one = words[:, v] == 0, words[:, v] == 1
        out[:, v] = logsumexp(logp[:, zero], axis=1) - logsumexp(logp[:, one], axis=1)
    return out


class TestNodeRules:
    def test_vn_update(self):
        assert vn_update(1.0, [0.5, -0.25]) == 1.25
        assert vn_update(-2.0, []) == -2.0

    def test_marginalize(self):
        assert marginalize(1.0, [2.0, -0.5]) == 2.5
        assert marginalize(0.7, []) == 0.7

    def test_spa_zero_annihilates(self):
        assert cn_update_spa([3.0, 0.0, -1.0]) == 0.0

    def test_spa_reference_value(self):
        exact = float(2 * mp_atanh(mp_tanh(mpf(1)) ** 2))
        assert cn_update_spa([2.0, 2.0]) == pytest.approx(exact, abs=1e-14)
        assert exact == pytest.approx(1.325003, abs=5e-7)

    def test_spa_sign(self):
        assert cn_update_spa([3.0, -5.0, 2.0]) < 0
        assert cn_update_spa([-3.0, -5.0, 2.0]) > 0

    def test_spa_saturation(self):
        out = cn_update_spa([1e6, 1e6])
        assert math.isfinite(out)
        assert out == pytest.approx(2 * math.atanh(ATANH_CLIP))

    def test_min_sum(self):
        assert cn_update_ms([3.0, -5.0, 2.0]) == -2.0
        assert cn_update_ms([1.0]) == 1.0
        assert cn_update_ms([4.0, 0.0, -1.0]) == 0.0

    def test_offset_min_sum(self):
        assert cn_update_oms([3.0, -5.0, 2.0], 0.5) == -1.5
        assert cn_update_oms([3.0, -5.0, 2.0], 3.0) == 0.0
        assert cn_update_oms([3.0, -5.0, 2.0], -1.0) == -3.0
        assert cn_update_oms([2.0, 9.0], 7.0) == 0.0

    def test_oms_zero_offset_is_min_sum(self, rng):
        for _ in range(1000):
            ins = list(rng.normal(0, 3, size=rng.integers(1, 8)))
            assert cn_update_oms(ins, 0.0) == cn_update_ms(ins)

    def test_two_min_matches_per_edge_rule(self, rng):
        for _ in range(300):
            d = int(rng.integers(2, 9))
            ins = list(rng.normal(0, 2, size=d))
            betas = list(rng.normal(0, 1, size=d))
            outs, _, _ = check_node_offset_min_sum(ins, betas)
            for i in range(d):
                assert outs[i] == cn_update_oms(ins[:i] + ins[i + 1 :], betas[i])

    def test_two_min_tie_break(self):
        outs, args, act = check_node_offset_min_sum([2.0, -2.0, 5.0], [0.0, 0.0, 3.0])
        assert args == [1, 0, 0]
        assert outs == [-2.0, 2.0, 0.0]
        assert act == [True, True, False]

    def test_nspa_rule(self):
        assert cn_update_nspa([0.3, 0.0]) == 0.0
        assert cn_update_nspa([1.0, 1.0]) == pytest.approx(2 * math.atanh(ATANH_CLIP))
        assert cn_update_nspa([math.tanh(1.0)] * 2) == pytest.approx(cn_update_spa([2.0, 2.0]), abs=1e-15)


class TestTreeExactness:
    def test_spc43_matches_map(self, spc4, backend, rng):
        llr, _ = channel_llr(spc4, 1.0, 10_000, rng)
        out, _ = decode(spc4, DecoderParams.spa(1), llr, backend=backend)
        err = np.abs(out.s - brute_force_posterior(spc4, llr)).max()
        assert err < 1e-9

    def test_spc_longer_unrolling_is_stationary(self, rng):
        code = single_parity_check(5)
        llr, _ = channel_llr(code, 2.0, 200, rng)
        a, _ = decode(code, DecoderParams.spa(1), llr)
        b, _ = decode(code, DecoderParams.spa(5), llr)
        np.testing.assert_allclose(a.s, b.s, atol=1e-12)


class TestReductions:
    def test_noms_zero_is_min_sum(self, bch63_36, backend, rng):
        llr, _ = channel_llr(bch63_36, 4.0, 1000, rng)
        ms, _ = decode(bch63_36, DecoderParams.min_sum(5), llr, backend=backend)
        noms = DecoderParams.noms(bch63_36, 5, offsets=0.0)
        out, _ = decode(bch63_36, noms, llr, backend=backend)
        assert np.array_equal(ms.s, out.s)

    def test_noms_global_is_oms(self, bch63_36, backend, rng):
        llr, _ = channel_llr(bch63_36, 4.0, 1000, rng)
        tied = tie_offsets(DecoderParams.noms(bch63_36, 5, rng=rng), bch63_36, "global")
        beta = float(tied.values[0])
        oms, _ = decode(bch63_36, DecoderParams.oms(bch63_36, 5, beta), llr, backend=backend)
        out, _ = decode(bch63_36, tied, llr, backend=backend)
        assert np.array_equal(oms.s, out.s)

    def test_nspa_unit_weights_is_spa(self, bch63_36, backend, rng):
        llr, _ = channel_llr(bch63_36, 4.0, 1000, rng)
        spa, _ = decode(bch63_36, DecoderParams.spa(5), llr, backend=backend)
        nspa, _ = decode(bch63_36, DecoderParams.nspa(bch63_36, 5), llr, backend=backend)
        assert np.abs(spa.s - nspa.s).max() < 1e-6


class TestDecode:
    @pytest.mark.parametrize("variant", ["spa", "ms", "oms", "noms", "nspa"])
    def test_noiseless(self, bch63_36, variant, backend, rng):
        params = {
            "spa": DecoderParams.spa(5),
            "ms": DecoderParams.min_sum(5),
            "oms": DecoderParams.oms(bch63_36, 5, 0.5),
            "noms": DecoderParams.noms(bch63_36, 5, rng=rng),
            "nspa": DecoderParams.nspa(bch63_36, 5),
        }[variant]
        out, _ = decode(bch63_36, params, np.full(63, L_MAX), backend=backend)
        assert not out.hard.any()

    def test_backends_agree(self, bch63_36, rng):
        if len(kernels.BACKENDS) < 2:
            pytest.skip("single backend")
        llr, _ = channel_llr(bch63_36, 3.0, 200, rng)
        noms = DecoderParams.noms(bch63_36, 5, rng=rng)
        a, _ = decode(bch63_36, noms, llr, backend="numba")
        b, _ = decode(bch63_36, noms, llr, backend="numpy")
        assert np.array_equal(a.s, b.s)
        a, _ = decode(bch63_36, DecoderParams.spa(5), llr, backend="numba")
        b, _ = decode(bch63_36, DecoderParams.spa(5), llr, backend="numpy")
        np.testing.assert_allclose(a.s, b.s, atol=1e-3, rtol=1e-6)

    def test_single_frame_matches_batch(self, hamming, rng):
        llr, _ = channel_llr(hamming, 2.0, 5, rng)
        batch, _ = decode(hamming, DecoderParams.spa(3), llr)
        for i in range(5):
            one, _ = decode(hamming, DecoderParams.spa(3), llr[i])
            assert np.array_equal(one.s, batch.s[i])

    def test_tape_replay(self, bch63_36, backend, rng):
        llr, _ = channel_llr(bch63_36, 3.0, 20, rng)
        for params in (DecoderParams.noms(bch63_36, 5, rng=rng), DecoderParams.nspa(bch63_36, 5)):
            out, tape = decode(bch63_36, params, llr, record_tape=True, backend=backend)
            assert tape.v2c.shape == (20, 5, bch63_36.edge_count)
            replay = replay_soft(bch63_36, params, tape)
            np.testing.assert_allclose(replay, tape.soft, rtol=1e-12, atol=1e-12)
            assert np.array_equal(tape.soft[:, -1], out.s)
            # first-iteration variable messages are the channel values
            assert np.array_equal(tape.v2c[:, 0], llr[:, bch63_36.graph.edge_v])

    def test_early_stop(self, bch63_36, rng):
        llr, _ = channel_llr(bch63_36, 8.0, 100, rng)
        full, _ = decode(bch63_36, DecoderParams.spa(5), llr)
        early, _ = decode(bch63_36, DecoderParams.spa(5), llr, early_stop=True)
        assert early.iterations.min() >= 1 and early.iterations.max() <= 5
        assert (early.iterations < 5).any()
        assert np.array_equal(early.hard, full.hard) or (early.hard != full.hard).sum() < 5

    def test_float32(self, bch63_36, rng):
        llr, _ = channel_llr(bch63_36, 4.0, 50, rng)
        a, _ = decode(bch63_36, DecoderParams.spa(5), llr)
        b, _ = decode(bch63_36, DecoderParams.spa(5), llr.astype(np.float32))
        assert b.s.dtype == np.float32
        assert (a.hard != b.hard).mean() < 1e-2

    def test_length_mismatch(self, hamming):
        with pytest.raises(ConfigError):
            decode(hamming, DecoderParams.spa(1), np.zeros(6))

    def test_params_for_other_code(self, hamming, bch63_36):
        with pytest.raises(ConfigError):
            decode(hamming, DecoderParams.oms(bch63_36, 5, 0.5), np.zeros(7))

    def test_uncoded_passthrough(self, rng):
        code = uncoded(10)
        llr = rng.normal(size=(4, 10))
        out, _ = decode(code, DecoderParams.spa(5), llr)
        assert np.array_equal(out.s, llr)

    def test_hard_decision_convention(self):
        assert hard_decision([3.0, -0.1, 0.0]).tolist() == [0, 1, 0]


class TestSyndrome:
    def test_codewords(self, hamming, rng):
        words = encode(hamming, rng.integers(0, 2, size=(50, 4)))
        assert syndrome_check(hamming, words).all()
        assert syndrome_check(hamming, np.zeros(7, dtype=np.uint8))

    def test_single_flip_detected(self, hamming, rng):
        words = encode(hamming, rng.integers(0, 2, size=(7, 4)))
        words[np.arange(7), np.arange(7)] ^= 1
        assert not syndrome_check(hamming, words).any()


class TestInstrumented:
    def test_zero_multiplications(self, bch63_36, rng):
        params = DecoderParams.noms(bch63_36, 5, rng=rng)
        llr, _ = channel_llr(bch63_36, 4.0, 3, rng)
        for frame in llr:
            soft, ops = decode_instrumented(bch63_36, params, frame)
            assert ops["mul"] == 0 and ops["div"] == 0
            assert ops["cmp"] > 0 and ops["sub"] > 0
            ref, _ = decode(bch63_36, params, frame)
            assert np.array_equal(soft, ref.s)

    def test_rejects_spa(self, hamming):
        with pytest.raises(ConfigError):
            decode_instrumented(hamming, DecoderParams.spa(1), np.zeros(7))


def test_all_zeros_vs_random_codewords_symmetry(hamming, rng):
    """Sign-flipping the channel values of a codeword flips the decoder output."""
    llr, _ = channel_llr(hamming, 2.0, 100, rng)
    words = encode(hamming, rng.integers(0, 2, size=(100, 4)))
    flip = 1 - 2 * words.astype(float)
    for params in (DecoderParams.spa(5), DecoderParams.oms(hamming, 5, 0.3)):
        a, _ = decode(hamming, params, llr)
        b, _ = decode(hamming, params, llr * flip)
        np.testing.assert_allclose(b.s, a.s * flip, atol=1e-12)
