"""Numba kernels for unrolled flooding BP, forward and reverse mode.

Every kernel loops over frames and keeps per-frame scratch local, so calls
are independent and release the GIL. Summation orders match the numpy
backend: variable-node sums accumulate from zero over the pair list of the
target edge, marginals accumulate over a variable's edges in check order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, nogil=True)
def _vn_update(llr, c2v_prev, edge_v, pair_ptr, pair_source, out):
    for e in range(edge_v.shape[0]):
        acc = 0.0
        for p in range(pair_ptr[e], pair_ptr[e + 1]):
            acc += c2v_prev[pair_source[p]]
        out[e] = llr[edge_v[e]] + acc


@njit(cache=True, nogil=True)
def _marginalize(llr, c2v, vn_ptr, vn_edges, out):
    for v in range(llr.shape[0]):
        acc = 0.0
        for i in range(vn_ptr[v], vn_ptr[v + 1]):
            acc += c2v[vn_edges[i]]
        out[v] = llr[v] + acc


@njit(cache=True, nogil=True)
def _syndrome_ok(soft, edge_v, cn_ptr):
    for c in range(cn_ptr.shape[0] - 1):
        par = False
        for e in range(cn_ptr[c], cn_ptr[c + 1]):
            if soft[edge_v[e]] < 0:
                par = not par
        if par:
            return False
    return True


@njit(cache=True, nogil=True)
def _cn_minsum(v2c, beta, use_offset, cn_ptr, out, argmin, active):
    """Excluded-minimum check rule with optional per-edge offset.

    No multiplications: the sign product is a parity of negative inputs and
    is applied by negation. Ties in magnitude go to the lowest edge index.
    """
    for c in range(cn_ptr.shape[0] - 1):
        lo, hi = cn_ptr[c], cn_ptr[c + 1]
        min1 = np.inf
        min2 = np.inf
        idx1 = -1
        idx2 = -1
        parity = False
        for e in range(lo, hi):
            x = v2c[e]
            a = -x if x < 0 else x
            if x < 0:
                parity = not parity
            if a < min1:
                min2 = min1
                idx2 = idx1
                min1 = a
                idx1 = e
            elif a < min2:
                min2 = a
                idx2 = e
        for e in range(lo, hi):
            if e == idx1:
                mag = min2
                argmin[e] = idx2
            else:
                mag = min1
                argmin[e] = idx1
            if use_offset:
                mag = mag - beta[e]
                if mag > 0:
                    active[e] = True
                else:
                    active[e] = False
                    mag = 0.0
            else:
                active[e] = mag > 0
            neg = parity != (v2c[e] < 0)
            out[e] = -mag if neg else mag


@njit(cache=True, nogil=True)
def minsum_forward(
    llr, offsets, use_offset, n_iter, edge_v, cn_ptr, vn_ptr, vn_edges, pair_ptr, pair_source,
    early_stop, record, v2c_tape, c2v_tape, argmin_tape, active_tape, soft_tape,
):
    B, n = llr.shape
    E = edge_v.shape[0]
    soft = np.empty_like(llr)
    iters = np.zeros(B, dtype=np.int64)
    c2v = np.zeros(E, dtype=llr.dtype)
    v2c = np.empty(E, dtype=llr.dtype)
    argmin = np.empty(E, dtype=np.int64)
    active = np.empty(E, dtype=np.bool_)
    for b in range(B):
        c2v[:] = 0.0
        l = llr[b]
        s = soft[b]
        for t in range(n_iter):
            _vn_update(l, c2v, edge_v, pair_ptr, pair_source, v2c)
            _cn_minsum(v2c, offsets[t], use_offset, cn_ptr, c2v, argmin, active)
            iters[b] = t + 1
            if record:
                v2c_tape[b, t] = v2c
                c2v_tape[b, t] = c2v
                argmin_tape[b, t] = argmin
                active_tape[b, t] = active
                _marginalize(l, c2v, vn_ptr, vn_edges, soft_tape[b, t])
            if early_stop and t + 1 < n_iter:
                _marginalize(l, c2v, vn_ptr, vn_edges, s)
                if _syndrome_ok(s, edge_v, cn_ptr):
                    break
        _marginalize(l, c2v, vn_ptr, vn_edges, s)
    return soft, iters


@njit(cache=True, nogil=True)
def _cn_tanh(u, cn_ptr, pclip, pre, out, prod):
    """Tanh-rule check update on already tanh'd inputs; ``prod`` gets the
    unclipped excluded products."""
    for c in range(cn_ptr.shape[0] - 1):
        lo, hi = cn_ptr[c], cn_ptr[c + 1]
        acc = 1.0
        for e in range(lo, hi):
            pre[e] = acc
            acc = acc * u[e]
        acc = 1.0
        for e in range(hi - 1, lo - 1, -1):
            p = pre[e] * acc
            acc = acc * u[e]
            prod[e] = p
            if p > pclip:
                p = pclip
            elif p < -pclip:
                p = -pclip
            out[e] = 2.0 * np.arctanh(p)


@njit(cache=True, nogil=True)
def spa_forward(
    llr, weighted, w_in, w_edge, w_out, w_eout, n_iter, lmax, pclip,
    edge_v, cn_ptr, vn_ptr, vn_edges, pair_ptr, pair_source,
    early_stop, record, v2c_tape, c2v_tape, soft_tape,
):
    """Sum-product decoding; with ``weighted`` the multiplicative neural
    variant, where message weights scale the variable-node sums and the
    final marginalization."""
    B, n = llr.shape
    E = edge_v.shape[0]
    soft = np.empty_like(llr)
    iters = np.zeros(B, dtype=np.int64)
    c2v = np.zeros(E, dtype=llr.dtype)
    x = np.empty(E, dtype=llr.dtype)
    u = np.empty(E, dtype=llr.dtype)
    pre = np.empty(E, dtype=llr.dtype)
    prod = np.empty(E, dtype=llr.dtype)
    for b in range(B):
        c2v[:] = 0.0
        l = llr[b]
        s = soft[b]
        for t in range(n_iter):
            if weighted:
                for e in range(E):
                    acc = 0.0
                    for p in range(pair_ptr[e], pair_ptr[e + 1]):
                        acc += w_edge[t, p] * c2v[pair_source[p]]
                    x[e] = w_in[t, edge_v[e]] * l[edge_v[e]] + acc
            else:
                _vn_update(l, c2v, edge_v, pair_ptr, pair_source, x)
            for e in range(E):
                xc = x[e]
                if xc > lmax:
                    xc = lmax
                elif xc < -lmax:
                    xc = -lmax
                u[e] = np.tanh(0.5 * xc)
            _cn_tanh(u, cn_ptr, pclip, pre, c2v, prod)
            iters[b] = t + 1
            done = False
            if record or (early_stop and t + 1 < n_iter):
                if weighted:
                    _weighted_marginal(l, c2v, w_out, w_eout, vn_ptr, vn_edges, s)
                else:
                    _marginalize(l, c2v, vn_ptr, vn_edges, s)
                if record:
                    v2c_tape[b, t] = x
                    c2v_tape[b, t] = c2v
                    soft_tape[b, t] = s
                if early_stop and t + 1 < n_iter and _syndrome_ok(s, edge_v, cn_ptr):
                    done = True
            if done:
                break
        if weighted:
            _weighted_marginal(l, c2v, w_out, w_eout, vn_ptr, vn_edges, s)
        else:
            _marginalize(l, c2v, vn_ptr, vn_edges, s)
    return soft, iters


@njit(cache=True, nogil=True)
def _weighted_marginal(llr, c2v, w_out, w_eout, vn_ptr, vn_edges, out):
    for v in range(llr.shape[0]):
        acc = 0.0
        for i in range(vn_ptr[v], vn_ptr[v + 1]):
            e = vn_edges[i]
            acc += w_eout[e] * c2v[e]
        out[v] = w_out[v] * llr[v] + acc


@njit(cache=True, nogil=True)
def minsum_backward(g_soft, n_iter, edge_v, cn_ptr, pair_ptr, pair_source, v2c_tape, c2v_tape, argmin_tape, active_tape):
    """Reverse pass through the offset min-sum decoder.

    ``g_soft`` is the loss gradient w.r.t. every iteration's soft output,
    shape (B, T, n). Returns the offset gradient (T, E) summed over frames in
    frame order, plus the per-frame channel-LLR gradient. Only active ReLU
    branches pass gradient; sign factors are constants.
    """
    B = g_soft.shape[0]
    n = g_soft.shape[2]
    E = edge_v.shape[0]
    d_off = np.zeros((n_iter, E), dtype=g_soft.dtype)
    d_llr = np.zeros((B, n), dtype=g_soft.dtype)
    g_c2v = np.empty(E, dtype=g_soft.dtype)
    g_v2c = np.empty(E, dtype=g_soft.dtype)
    for b in range(B):
        g_c2v[:] = 0.0
        for t in range(n_iter - 1, -1, -1):
            for v in range(n):
                d_llr[b, v] += g_soft[b, t, v]
            for e in range(E):
                g_c2v[e] += g_soft[b, t, edge_v[e]]
            g_v2c[:] = 0.0
            for e in range(E):
                if active_tape[b, t, e]:
                    g = g_c2v[e]
                    if c2v_tape[b, t, e] < 0:
                        g = -g
                    d_off[t, e] -= g
                    a = argmin_tape[b, t, e]
                    if v2c_tape[b, t, a] < 0:
                        g_v2c[a] -= g
                    else:
                        g_v2c[a] += g
            for e in range(E):
                d_llr[b, edge_v[e]] += g_v2c[e]
            # the pair relation is symmetric, so sources of e are its targets
            for e in range(E):
                acc = 0.0
                for p in range(pair_ptr[e], pair_ptr[e + 1]):
                    acc += g_v2c[pair_source[p]]
                g_c2v[e] = acc
    return d_off, d_llr


@njit(cache=True, nogil=True)
def spa_backward(
    g_soft, llr, w_in, w_edge, w_out, w_eout, n_iter, lmax, pclip,
    edge_v, cn_ptr, pair_ptr, pair_source, v2c_tape, c2v_tape,
):
    """Reverse pass through the weighted sum-product decoder.

    ``g_soft`` has shape (B, T, n) as in ``minsum_backward``. Clamped
    regions (|x| >= lmax before tanh, |p| > pclip before atanh) contribute
    zero gradient. Returns weight gradients summed over frames.
    """
    B = g_soft.shape[0]
    n = g_soft.shape[2]
    E = edge_v.shape[0]
    P = pair_source.shape[0]
    d_in = np.zeros((n_iter, n), dtype=g_soft.dtype)
    d_edge = np.zeros((n_iter, P), dtype=g_soft.dtype)
    d_out = np.zeros(n, dtype=g_soft.dtype)
    d_eout = np.zeros(E, dtype=g_soft.dtype)
    g_c2v = np.empty(E, dtype=g_soft.dtype)
    g_p = np.empty(E, dtype=g_soft.dtype)
    g_x = np.empty(E, dtype=g_soft.dtype)
    u = np.empty(E, dtype=g_soft.dtype)
    pre = np.empty(E, dtype=g_soft.dtype)
    for b in range(B):
        l = llr[b]
        g_c2v[:] = 0.0
        for t in range(n_iter - 1, -1, -1):
            for v in range(n):
                d_out[v] += g_soft[b, t, v] * l[v]
            for e in range(E):
                gs = g_soft[b, t, edge_v[e]]
                d_eout[e] += gs * c2v_tape[b, t, e]
                g_c2v[e] += gs * w_eout[e]
            for e in range(E):
                xc = v2c_tape[b, t, e]
                if xc > lmax:
                    xc = lmax
                elif xc < -lmax:
                    xc = -lmax
                u[e] = np.tanh(0.5 * xc)
            for c in range(cn_ptr.shape[0] - 1):
                lo, hi = cn_ptr[c], cn_ptr[c + 1]
                acc = 1.0
                for e in range(lo, hi):
                    pre[e] = acc
                    acc = acc * u[e]
                acc = 1.0
                for e in range(hi - 1, lo - 1, -1):
                    p = pre[e] * acc
                    acc = acc * u[e]
                    if p > pclip or p < -pclip:
                        g_p[e] = 0.0
                    else:
                        g_p[e] = g_c2v[e] * 2.0 / (1.0 - p * p)
                # g_u[j] = sum_{e != j} g_p[e] * prod_{i not in {e, j}} u[i]
                for j in range(lo, hi):
                    tot = 0.0
                    acc = 1.0
                    for e in range(lo, hi):
                        if e != j:
                            pre[e] = acc
                            acc = acc * u[e]
                    acc = 1.0
                    for e in range(hi - 1, lo - 1, -1):
                        if e != j:
                            tot += g_p[e] * pre[e] * acc
                            acc = acc * u[e]
                    x = v2c_tape[b, t, j]
                    if x < lmax and x > -lmax:
                        g_x[j] = tot * 0.5 * (1.0 - u[j] * u[j])
                    else:
                        g_x[j] = 0.0
            for e in range(E):
                v = edge_v[e]
                d_in[t, v] += g_x[e] * l[v]
            if t > 0:
                for e in range(E):
                    g_c2v[e] = 0.0
                for e in range(E):
                    gx = g_x[e]
                    for p in range(pair_ptr[e], pair_ptr[e + 1]):
                        src = pair_source[p]
                        d_edge[t, p] += gx * c2v_tape[b, t - 1, src]
                        g_c2v[src] += gx * w_edge[t, p]
    return d_in, d_edge, d_out, d_eout
