import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuralbp import gf2
from neuralbp.codes import (
    AlistError,
    CodeError,
    LinearCode,
    bch,
    code_from_spec,
    construct_bch,
    derive_generator,
    encode,
    format_alist,
    load_alist,
    single_parity_check,
    uncoded,
    write_alist,
)

HAMMING_ALIST = """7 3
3 4
1 1 2 1 2 2 3
4 4 4
1 0 0
2 0 0
1 2 0
3 0 0
1 3 0
2 3 0
1 2 3
1 3 5 7
2 3 6 7
4 5 6 7
"""


# -- independent GF(2^m) helpers for the BCH oracle ---------------------------------

PRIM = {6: 0b1000011, 7: 0b10001001}


def gf_mul(a, b, m):
    out = 0
    for _ in range(m):
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= PRIM[m]
    return out


def gf_pow(a, e, m):
    r = 1
    for _ in range(e):
        r = gf_mul(r, a, m)
    return r


def poly_eval(coeffs, x, m):
    acc = 0
    for c in reversed(coeffs):
        acc = gf_mul(acc, x, m) ^ c
    return acc


def coset_union_size(n, t):
    seen = set()
    for s in range(1, 2 * t, 2):
        x = s
        while x not in seen:
            seen.add(x)
            x = 2 * x % n
    return len(seen)


class TestAlist:
    def test_hamming_alist(self):
        code = load_alist(io.BytesIO(HAMMING_ALIST.encode()))
        assert (code.n, code.k, code.edge_count) == (7, 4, 12)
        # every column pattern is distinct and non-zero
        cols = {tuple(col) for col in code.h.T}
        assert len(cols) == 7 and (0, 0, 0) not in cols

    def test_single_row(self):
        code = load_alist(b"3 1\n1 3\n1 1 1\n3\n1\n1\n1\n1 2 3\n")
        assert (code.n, code.k, code.edge_count) == (3, 2, 3)
        assert code.graph.cn_degrees.tolist() == [3]

    def test_row_view_contradicts_column_view(self):
        bad = HAMMING_ALIST.replace("1 3 5 7", "1 3 5 6")
        with pytest.raises(AlistError) as err:
            load_alist(io.StringIO(bad))
        assert "line" in str(err.value)

    def test_index_out_of_range(self):
        bad = HAMMING_ALIST.replace("3 0 0\n1 3", "9 0 0\n1 3")
        with pytest.raises(AlistError, match="out of range"):
            load_alist(io.StringIO(bad))

    def test_malformed_header(self):
        with pytest.raises(AlistError, match="line 1"):
            load_alist(HAMMING_ALIST.replace("7 3\n", "seven three\n", 1).encode())

    def test_truncated(self):
        with pytest.raises(AlistError):
            load_alist(HAMMING_ALIST.rsplit("\n", 3)[0].encode())

    @pytest.mark.parametrize("nk", [(63, 36), (63, 45), (127, 106)])
    def test_bch_round_trip(self, nk, tmp_path):
        code = bch(*nk)
        path = tmp_path / "h.alist"
        write_alist(code, path)
        back = load_alist(path)
        assert np.array_equal(back.h, code.h)
        assert back.k == code.k


class TestGenerator:
    def test_spc(self):
        g = derive_generator(np.array([[1, 1, 1]]))
        assert g.shape == (2, 3)
        assert not gf2.matmul(g, np.array([[1, 1, 1]]).T).any()
        assert gf2.rank(g) == 2

    def test_hamming_all_codewords(self, hamming):
        msgs = np.array([[(i >> b) & 1 for b in range(4)] for i in range(16)])
        words = encode(hamming, msgs)
        assert not hamming.syndrome(words).any()
        assert len({tuple(w) for w in words}) == 16

    def test_duplicate_rows_warn(self):
        h = np.array([[1, 1, 0, 1], [0, 1, 1, 1], [1, 1, 0, 1]])
        with pytest.warns(UserWarning, match="rank 2"):
            code = LinearCode.from_parity_check(h)
        assert code.k == 2
        assert code.m == 3  # redundant check kept for decoding

    def test_invalid_matrix(self):
        with pytest.raises(CodeError):
            LinearCode.from_parity_check([[1, 0, 0], [0, 1, 1]])  # row of weight 1
        with pytest.raises(CodeError):
            LinearCode.from_parity_check([[1, 1, 0]])  # empty column


class TestEncode:
    def test_zero_message(self, bch63_36):
        assert not encode(bch63_36, np.zeros(36, dtype=np.uint8)).any()

    def test_spc_parity_completion(self):
        code = single_parity_check(3)
        word = encode(code, [1, 0])
        assert word.sum() % 2 == 0
        assert word[code.info_positions].tolist() == [1, 0]

    def test_length_mismatch(self, hamming):
        with pytest.raises(ValueError):
            encode(hamming, [1, 0, 1])

    @pytest.mark.parametrize("name", ["bch:63:36", "bch:63:45", "bch:127:106", "bch:63:36:cyclic", "spc:5", "hamming74"])
    def test_random_messages_have_zero_syndrome(self, name, rng):
        code = code_from_spec(name)
        words = encode(code, rng.integers(0, 2, size=(1000, code.k)))
        assert not code.syndrome(words).any()


class TestBCH:
    @pytest.mark.parametrize("m,t,k", [(6, 3, 45), (6, 5, 36), (7, 3, 106)])
    def test_dimensions_against_coset_oracle(self, m, t, k):
        n = 2**m - 1
        assert n - coset_union_size(n, t) == k
        code = construct_bch(m, t)
        assert (code.n, code.k) == (n, k)

    @pytest.mark.parametrize("m,t", [(6, 3), (6, 5), (7, 3)])
    def test_generator_roots(self, m, t):
        code = construct_bch(m, t)
        g = int(code.metadata["generator_poly"], 16)
        coeffs = [(g >> i) & 1 for i in range(g.bit_length())]
        alpha = 2
        for i in range(1, 2 * t + 1):
            assert poly_eval(coeffs, gf_pow(alpha, i, m), m) == 0, i

    @pytest.mark.parametrize("form", ["systematic", "cyclic"])
    def test_cyclic_shifts_stay_codewords(self, form, rng):
        code = bch(63, 45, form)
        words = encode(code, rng.integers(0, 2, size=(200, code.k)))
        for s in (1, 7, 30):
            assert not code.syndrome(np.roll(words, s, axis=1)).any()

    def test_forms_describe_same_code(self):
        a, b = bch(63, 36, "systematic"), bch(63, 36, "cyclic")
        assert not gf2.matmul(a.g, b.h.T).any()
        assert gf2.rank(b.h) == 27

    def test_minimum_distance_small_code(self):
        # BCH(15,7), t=2: designed distance 5, exhaustive over 127 non-zero words
        code = construct_bch(4, 2)
        msgs = np.array([[(i >> b) & 1 for b in range(7)] for i in range(1, 128)])
        assert encode(code, msgs).sum(axis=1).min() == 5

    def test_k_nonpositive(self):
        with pytest.raises(CodeError):
            construct_bch(3, 4)

    def test_unknown_k(self):
        with pytest.raises(CodeError):
            bch(63, 40)


class TestTannerGraph:
    @pytest.mark.parametrize("name", ["bch:63:36", "bch:127:106", "hamming74"])
    def test_edge_indexing_bijection(self, name):
        code = code_from_spec(name)
        g = code.graph
        E = g.edge_count
        assert g.cn_degrees.sum() == g.vn_degrees.sum() == E == code.h.sum()
        assert sorted(sum(g.vn_adjacency, [])) == list(range(E))
        assert sorted(sum(g.cn_adjacency, [])) == list(range(E))
        assert all(code.h[g.edge_c[e], g.edge_v[e]] for e in range(E))
        order = list(zip(g.edge_c.tolist(), g.edge_v.tolist()))
        assert order == sorted(order)

    def test_pairs_exclude_self(self, bch63_36):
        g = bch63_36.graph
        assert (g.pair_target != g.pair_source).all()
        assert (g.edge_v[g.pair_target] == g.edge_v[g.pair_source]).all()
        assert g.pair_count == int((g.vn_degrees * (g.vn_degrees - 1)).sum())

    def test_uncoded_has_no_edges(self):
        code = uncoded(8)
        assert code.edge_count == 0 and code.k == 8 and code.rate == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_random_matrix_generator_property(n, m, seed):
    r = np.random.default_rng(seed)
    h = r.integers(0, 2, size=(m, n)).astype(np.uint8)
    h[:, 0] = 1
    h[0, :2] = 1
    h = h[h.sum(axis=1) >= 2]
    if (h.sum(axis=0) == 0).any() or gf2.rank(h) == n:
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = LinearCode.from_parity_check(h)
        back = load_alist(format_alist(h).encode())
    assert code.k == n - gf2.rank(h)
    assert not gf2.matmul(code.g, h.T).any()
    assert gf2.rank(code.g) == code.k
    assert np.array_equal(back.h, h)
    msg = r.integers(0, 2, size=code.k)
    assert encode(code, msg)[code.info_positions].tolist() == msg.tolist()
