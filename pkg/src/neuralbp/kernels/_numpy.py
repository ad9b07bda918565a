"""Pure-numpy fallback with the same signatures as the numba kernels.

Vectorized across frames. Check nodes are processed on a (B, m, max d_c)
padded view; variable-node sums go through ``np.bincount`` over the pair
list, which accumulates in the same order as the numba loops.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _segment_sum(values, index, size):
    """Row-wise ``out[b, index[j]] += values[b, j]`` accumulated in j order."""
    B = values.shape[0]
    flat = (index[None, :] + size * np.arange(B)[:, None]).ravel()
    out = np.bincount(flat, weights=values.ravel(), minlength=B * size)
    return out.reshape(B, size)


def _padding(cn_ptr):
    deg = np.diff(cn_ptr)
    m = len(deg)
    width = max(int(deg.max()) if m else 1, 1)
    pos = np.arange(width)
    mask = pos[None, :] < deg[:, None]
    pad = np.where(mask, cn_ptr[:-1, None] + pos[None, :], 0)
    return pad, mask


def _vn_update(llr, c2v_prev, edge_v, pair_ptr, pair_source):
    target = np.repeat(np.arange(len(edge_v)), np.diff(pair_ptr))
    acc = _segment_sum(c2v_prev[:, pair_source], target, len(edge_v))
    return llr[:, edge_v] + acc


def _marginalize(llr, c2v, edge_v):
    return llr + _segment_sum(c2v, edge_v, llr.shape[1])


def _syndrome_ok(soft, edge_v, cn_ptr):
    neg = (soft[:, edge_v] < 0).astype(np.int64)
    m = len(cn_ptr) - 1
    if m == 0:
        return np.ones(soft.shape[0], dtype=bool)
    counts = np.add.reduceat(neg, cn_ptr[:-1], axis=1) if neg.shape[1] else np.zeros((soft.shape[0], m), np.int64)
    return ~(counts % 2).astype(bool).any(axis=1)


def _cn_minsum(v2c, beta, use_offset, cn_ptr):
    pad, mask = _padding(cn_ptr)
    B = v2c.shape[0]
    X = v2c[:, pad]
    A = np.where(mask, np.abs(X), np.inf)
    neg = (X < 0) & mask
    parity = (neg.sum(axis=2) % 2).astype(bool)
    i1 = A.argmin(axis=2)
    min1 = np.take_along_axis(A, i1[..., None], axis=2)
    np.put_along_axis(A, i1[..., None], np.inf, axis=2)
    i2 = A.argmin(axis=2)
    min2 = np.take_along_axis(A, i2[..., None], axis=2)
    is1 = np.arange(pad.shape[1])[None, None, :] == i1[..., None]
    mag = np.where(is1, min2, min1)
    rows = np.arange(pad.shape[0])[None, :]
    arg = np.where(is1, pad[rows, i2][..., None], pad[rows, i1][..., None])
    if use_offset:
        mag = mag - beta[pad][None]
        active = mag > 0
        mag = np.where(active, mag, 0.0)
    else:
        active = mag > 0
    out = np.where(parity[..., None] != neg, -mag, mag)
    sel = (slice(None), mask)
    return out[sel].reshape(B, -1), arg[sel].reshape(B, -1), active[sel].reshape(B, -1)


def minsum_forward(
    llr, offsets, use_offset, n_iter, edge_v, cn_ptr, vn_ptr, vn_edges, pair_ptr, pair_source,
    early_stop, record, v2c_tape, c2v_tape, argmin_tape, active_tape, soft_tape,
):
    B, n = llr.shape
    E = len(edge_v)
    c2v = np.zeros((B, E), dtype=llr.dtype)
    soft = np.empty_like(llr)
    iters = np.zeros(B, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    for t in range(n_iter):
        v2c = _vn_update(llr, c2v, edge_v, pair_ptr, pair_source).astype(llr.dtype, copy=False)
        if E:
            new, arg, active = _cn_minsum(v2c, offsets[t], use_offset, cn_ptr)
        else:
            new = c2v
            arg = np.zeros((B, 0), np.int64)
            active = np.zeros((B, 0), bool)
        c2v = np.where(done[:, None], c2v, new).astype(llr.dtype, copy=False)
        iters[~done] = t + 1
        if record:
            v2c_tape[:, t] = v2c
            c2v_tape[:, t] = c2v
            argmin_tape[:, t] = arg
            active_tape[:, t] = active
            soft_tape[:, t] = _marginalize(llr, c2v, edge_v)
        if early_stop and t + 1 < n_iter:
            s = _marginalize(llr, c2v, edge_v)
            done |= _syndrome_ok(s, edge_v, cn_ptr)
            if done.all():
                break
    soft[:] = _marginalize(llr, c2v, edge_v)
    return soft, iters


def _exclusive_products(U):
    """Product over the last axis excluding each position, left-to-right
    prefix times right-to-left suffix."""
    ones = np.ones(U.shape[:-1] + (1,), dtype=U.dtype)
    pre = np.concatenate([ones, np.cumprod(U, axis=-1)[..., :-1]], axis=-1)
    suf = np.cumprod(U[..., ::-1], axis=-1)[..., ::-1]
    suf = np.concatenate([suf[..., 1:], ones], axis=-1)
    return pre * suf


def _tanh_inputs(x, lmax):
    return np.tanh(0.5 * np.clip(x, -lmax, lmax))


def _cn_tanh(u, cn_ptr, pclip):
    pad, mask = _padding(cn_ptr)
    U = np.where(mask, u[:, pad], 1.0)
    P = _exclusive_products(U)[:, mask]
    return 2.0 * np.arctanh(np.clip(P, -pclip, pclip)), P


def _weighted_marginal(llr, c2v, w_out, w_eout, edge_v):
    return w_out[None, :] * llr + _segment_sum(w_eout[None, :] * c2v, edge_v, llr.shape[1])


def spa_forward(
    llr, weighted, w_in, w_edge, w_out, w_eout, n_iter, lmax, pclip,
    edge_v, cn_ptr, vn_ptr, vn_edges, pair_ptr, pair_source,
    early_stop, record, v2c_tape, c2v_tape, soft_tape,
):
    B, n = llr.shape
    E = len(edge_v)
    c2v = np.zeros((B, E), dtype=llr.dtype)
    iters = np.zeros(B, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    target = np.repeat(np.arange(E), np.diff(pair_ptr))

    def marginal(c):
        if weighted:
            return _weighted_marginal(llr, c, w_out, w_eout, edge_v)
        return _marginalize(llr, c, edge_v)

    for t in range(n_iter):
        if weighted:
            acc = _segment_sum(w_edge[t][None, :] * c2v[:, pair_source], target, E)
            x = w_in[t][edge_v][None, :] * llr[:, edge_v] + acc
        else:
            x = _vn_update(llr, c2v, edge_v, pair_ptr, pair_source)
        x = x.astype(llr.dtype, copy=False)
        if E:
            new, _ = _cn_tanh(_tanh_inputs(x, lmax), cn_ptr, pclip)
        else:
            new = c2v
        c2v = np.where(done[:, None], c2v, new).astype(llr.dtype, copy=False)
        iters[~done] = t + 1
        if record:
            v2c_tape[:, t] = x
            c2v_tape[:, t] = c2v
            soft_tape[:, t] = marginal(c2v)
        if early_stop and t + 1 < n_iter:
            done |= _syndrome_ok(marginal(c2v), edge_v, cn_ptr)
            if done.all():
                break
    return marginal(c2v).astype(llr.dtype, copy=False), iters


def minsum_backward(g_soft, n_iter, edge_v, cn_ptr, pair_ptr, pair_source, v2c_tape, c2v_tape, argmin_tape, active_tape):
    B, _, n = g_soft.shape
    E = len(edge_v)
    target = np.repeat(np.arange(E), np.diff(pair_ptr))
    d_off = np.zeros((n_iter, E), dtype=g_soft.dtype)
    d_llr = g_soft.sum(axis=1)
    g_c2v = np.zeros((B, E), dtype=g_soft.dtype)
    for t in range(n_iter - 1, -1, -1):
        g_c2v = g_c2v + g_soft[:, t][:, edge_v]
        g = np.where(c2v_tape[:, t] < 0, -g_c2v, g_c2v)
        g = np.where(active_tape[:, t], g, 0.0)
        d_off[t] = -g.sum(axis=0)
        arg = argmin_tape[:, t]
        sgn_neg = np.take_along_axis(v2c_tape[:, t], arg, axis=1) < 0
        contrib = np.where(sgn_neg, -g, g)
        flat = (arg + E * np.arange(B)[:, None]).ravel()
        g_v2c = np.bincount(flat, weights=contrib.ravel(), minlength=B * E).reshape(B, E)
        d_llr += _segment_sum(g_v2c, edge_v, n)
        g_c2v = _segment_sum(g_v2c[:, pair_source], target, E)
    return d_off, d_llr


def spa_backward(
    g_soft, llr, w_in, w_edge, w_out, w_eout, n_iter, lmax, pclip,
    edge_v, cn_ptr, pair_ptr, pair_source, v2c_tape, c2v_tape,
):
    B, _, n = g_soft.shape
    E = len(edge_v)
    target = np.repeat(np.arange(E), np.diff(pair_ptr))
    pad, mask = _padding(cn_ptr)
    D = pad.shape[1]
    eye = np.eye(D, dtype=bool)
    d_in = np.zeros((n_iter, n), dtype=g_soft.dtype)
    d_edge = np.zeros((n_iter, len(pair_source)), dtype=g_soft.dtype)
    d_out = (g_soft * llr[:, None, :]).sum(axis=(0, 1))
    d_eout = np.zeros(E, dtype=g_soft.dtype)
    g_c2v = np.zeros((B, E), dtype=g_soft.dtype)
    for t in range(n_iter - 1, -1, -1):
        gs_e = g_soft[:, t][:, edge_v]
        d_eout += (gs_e * c2v_tape[:, t]).sum(axis=0)
        g_c2v = g_c2v + gs_e * w_eout[None, :]
        x = v2c_tape[:, t]
        u = _tanh_inputs(x, lmax)
        U = np.where(mask, u[:, pad], 1.0)  # (B, m, D)
        P = _exclusive_products(U)
        Gc = np.where(mask, g_c2v[:, pad], 0.0)
        Gp = np.where(np.abs(P) > pclip, 0.0, Gc * 2.0 / (1.0 - P * P))
        # Q[..., j, e] = prod over i not in {e, j}
        Uj = np.where(eye, 1.0, U[:, :, None, :])
        Q = _exclusive_products(Uj)
        g_u = np.where(eye, 0.0, Gp[:, :, None, :] * Q).sum(axis=-1)[:, mask]
        g_x = np.where(np.abs(x) < lmax, g_u * 0.5 * (1.0 - u * u), 0.0)
        d_in[t] = _segment_sum(g_x * llr[:, edge_v], edge_v, n).sum(axis=0)
        if t > 0:
            gt = g_x[:, target]
            d_edge[t] = (gt * c2v_tape[:, t - 1][:, pair_source]).sum(axis=0)
            g_c2v = _segment_sum(gt * w_edge[t][None, :], pair_source, E)
    return d_in, d_edge, d_out, d_eout
