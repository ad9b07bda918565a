"""Unrolled flooding belief-propagation decoding.

LLR convention: positive values favour bit 0 (BPSK symbol +1). The hard
decision is bit 1 where the soft output is negative.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codes import LinearCode
from .params import ConfigError, DecoderParams

L_MAX = 30.0
ATANH_CLIP = 1.0 - 1e-12
ATANH_CLIP_F32 = float(np.nextafter(np.float32(1.0), np.float32(0.0)))


@dataclass
class SoftOutput:
    s: np.ndarray
    hard: np.ndarray
    iterations: np.ndarray


@dataclass
class DecodeTape:
    """Forward state recorded for the reverse pass. Arrays are (B, T, ...)."""

    variant: str
    code_checksum: str
    llr: np.ndarray
    v2c: np.ndarray
    c2v: np.ndarray
    soft: np.ndarray
    argmin_edge: np.ndarray | None = None
    relu_active: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return self.v2c.shape[1]


def hard_decision(s) -> np.ndarray:
    return (np.asarray(s) < 0).astype(np.uint8)


def _graph_args(code: LinearCode):
    g = code.graph
    return g.edge_v, g.cn_ptr, g.vn_ptr, g.vn_edges, g.pair_ptr, g.pair_source


def decode(
    code: LinearCode,
    params: DecoderParams,
    llr,
    record_tape: bool = False,
    early_stop: bool = False,
    backend: str | None = None,
    dtype=None,
) -> tuple[SoftOutput, DecodeTape | None]:
    """Run ``params.iterations`` unrolled iterations on one frame (1-D) or a
    batch of frames (B, n).

    Early termination on a satisfied syndrome is only honoured when no tape
    is being recorded.
    """
    params.validate(code)
    llr = np.asarray(llr)
    single = llr.ndim == 1
    dtype = np.dtype(dtype) if dtype is not None else (llr.dtype if llr.dtype in (np.float32, np.float64) else np.float64)
    llr = np.ascontiguousarray(np.atleast_2d(llr), dtype=dtype)
    if llr.shape[1] != code.n:
        raise ConfigError(f"llr length {llr.shape[1]} != n = {code.n}")
    if record_tape and dtype != np.float64:
        raise ConfigError("tapes are recorded in float64 only")
    early_stop = bool(early_stop) and not record_tape
    k = kernels.get_backend(backend)
    B, n = llr.shape
    T, E = params.iterations, code.edge_count
    shape = (B, T, E) if record_tape else (0, 0, 0)
    v2c = np.zeros(shape, dtype)
    c2v = np.zeros(shape, dtype)
    soft_t = np.zeros((B, T, n) if record_tape else (0, 0, 0), dtype)
    argmin = active = None

    if params.variant in ("ms", "oms", "noms"):
        use_offset = params.variant != "ms"
        offsets = params.offsets if use_offset else np.zeros((T, E))
        offsets = np.ascontiguousarray(offsets, dtype=dtype)
        argmin = np.zeros(shape, np.int64)
        active = np.zeros(shape, np.bool_)
        soft, iters = k.minsum_forward(
            llr, offsets, use_offset, T, *_graph_args(code), early_stop, record_tape,
            v2c, c2v, argmin, active, soft_t,
        )
    else:
        weighted = params.variant == "nspa"
        if weighted:
            w = [np.ascontiguousarray(a, dtype=dtype) for a in params.weight_arrays().values()]
        else:
            w = [np.zeros((T, n), dtype), np.zeros((T, 0), dtype), np.zeros(n, dtype), np.zeros(E, dtype)]
        pclip = ATANH_CLIP if dtype == np.float64 else ATANH_CLIP_F32
        soft, iters = k.spa_forward(
            llr, weighted, *w, T, L_MAX, pclip, *_graph_args(code), early_stop, record_tape,
            v2c, c2v, soft_t,
        )

    tape = None
    if record_tape:
        tape = DecodeTape(params.variant, code.checksum, llr, v2c, c2v, soft_t, argmin, active)
    out = SoftOutput(soft, hard_decision(soft), iters)
    if single:
        out = SoftOutput(soft[0], out.hard[0], iters[0])
    return out, tape


def replay_soft(code: LinearCode, params: DecoderParams, tape: DecodeTape) -> np.ndarray:
    """Recompute per-iteration soft outputs (B, T, n) from the recorded
    check-to-variable messages."""
    from .kernels import _numpy as knp

    g = code.graph
    out = np.empty_like(tape.soft)
    for t in range(tape.iterations):
        if params.variant == "nspa":
            out[:, t] = knp._weighted_marginal(tape.llr, tape.c2v[:, t], params.w_out, params.w_eout, g.edge_v)
        else:
            out[:, t] = knp._marginalize(tape.llr, tape.c2v[:, t], g.edge_v)
    return out


def syndrome_check(code: LinearCode, hard) -> bool | np.ndarray:
    """True where H x^T = 0 over GF(2); vectorized over leading axes."""
    syn = code.syndrome(hard)
    return ~syn.any(axis=-1) if syn.ndim > 1 else not syn.any()


# --- scalar node rules -----------------------------------------------------------
#
# Plain-Python single-node versions of the message updates. They mirror the
# kernels and double as the reference for tests and operation counting.


def _is_neg(x) -> bool:
    return x < 0


def vn_update(llr, incoming):
    """Variable-to-check message: channel LLR plus the other check messages."""
    acc = 0.0
    for m in incoming:
        acc = acc + m
    return llr + acc


def marginalize(llr, incoming, w_out=1.0, w_edges=None):
    acc = 0.0
    if w_edges is None:
        for m in incoming:
            acc = acc + m
        return llr + acc if w_out == 1.0 else w_out * llr + acc
    for w, m in zip(w_edges, incoming):
        acc = acc + w * m
    return w_out * llr + acc


def cn_update_spa(incoming):
    prod = 1.0
    for m in incoming:
        prod *= math.tanh(0.5 * min(max(m, -L_MAX), L_MAX))
    return 2.0 * math.atanh(min(max(prod, -ATANH_CLIP), ATANH_CLIP))


def cn_update_nspa(incoming):
    """Check rule on inputs already mapped through tanh(x / 2)."""
    prod = 1.0
    for m in incoming:
        prod *= m
    return 2.0 * math.atanh(min(max(prod, -ATANH_CLIP), ATANH_CLIP))


def cn_update_ms(incoming):
    return cn_update_oms(incoming, None)


def cn_update_oms(incoming, beta):
    """Offset min-sum output for one edge. ``beta=None`` is plain min-sum."""
    mag = None
    neg = False
    for m in incoming:
        a = -m if _is_neg(m) else m
        if _is_neg(m):
            neg = not neg
        if mag is None or a < mag:
            mag = a
    if beta is not None:
        mag = mag - beta
        if not mag > 0:
            mag = _zero_like(mag)
    return -mag if neg else mag


cn_update_noms = cn_update_oms


def check_node_offset_min_sum(inputs, betas):
    """All outputs of one check node via the two-minimum method.

    Works on any number type supporting comparison, subtraction and
    negation. Returns (outputs, argmin_edges, relu_active) with edges indexed
    locally. Ties break toward the lowest local index; sign(0) = +1.
    """
    min1 = min2 = None
    i1 = i2 = -1
    parity = False
    for i, x in enumerate(inputs):
        neg = _is_neg(x)
        a = -x if neg else x
        if neg:
            parity = not parity
        if min1 is None or a < min1:
            min2, i2 = min1, i1
            min1, i1 = a, i
        elif min2 is None or a < min2:
            min2, i2 = a, i
    outs, args, act = [], [], []
    for i, x in enumerate(inputs):
        mag, arg = (min2, i2) if i == i1 else (min1, i1)
        if betas is not None:
            mag = mag - betas[i]
            on = mag > 0
            if not on:
                mag = _zero_like(mag)
        else:
            on = mag > 0
        outs.append(-mag if parity != _is_neg(x) else mag)
        args.append(arg)
        act.append(bool(on))
    return outs, args, act


def _zero_like(x):
    return x - x


class CountingFloat:
    """Float wrapper that tallies arithmetic into a shared Counter."""

    __slots__ = ("v", "counter")

    def __init__(self, v: float, counter: Counter):
        self.v = float(v)
        self.counter = counter

    def _wrap(self, v):
        return CountingFloat(v, self.counter)

    @staticmethod
    def _val(o):
        return o.v if isinstance(o, CountingFloat) else o

    def __add__(self, o):
        self.counter["add"] += 1
        return self._wrap(self.v + self._val(o))

    __radd__ = __add__

    def __sub__(self, o):
        self.counter["sub"] += 1
        return self._wrap(self.v - self._val(o))

    def __rsub__(self, o):
        self.counter["sub"] += 1
        return self._wrap(self._val(o) - self.v)

    def __mul__(self, o):
        self.counter["mul"] += 1
        return self._wrap(self.v * self._val(o))

    __rmul__ = __mul__

    def __truediv__(self, o):
        self.counter["div"] += 1
        return self._wrap(self.v / self._val(o))

    def __neg__(self):
        self.counter["neg"] += 1
        return self._wrap(-self.v)

    def __abs__(self):
        self.counter["abs"] += 1
        return self._wrap(abs(self.v))

    def _cmp(self, o, op):
        self.counter["cmp"] += 1
        return op(self.v, self._val(o))

    def __lt__(self, o):
        return self._cmp(o, float.__lt__)

    def __le__(self, o):
        return self._cmp(o, float.__le__)

    def __gt__(self, o):
        return self._cmp(o, float.__gt__)

    def __ge__(self, o):
        return self._cmp(o, float.__ge__)

    def __float__(self):
        return self.v


def decode_instrumented(code: LinearCode, params: DecoderParams, llr) -> tuple[np.ndarray, Counter]:
    """Scalar reference decode of one frame for the offset min-sum family,
    counting every arithmetic operation executed inside check-node updates.

    Returns the final soft output and the operation tally.
    """
    if params.variant not in ("ms", "oms", "noms"):
        raise ConfigError("instrumented decode covers the min-sum family only")
    params.validate(code)
    g = code.graph
    llr = np.asarray(llr, dtype=np.float64)
    offsets = params.offsets
    counter: Counter = Counter()
    E = g.edge_count
    c2v = [0.0] * E
    for t in range(params.iterations):
        v2c = [0.0] * E
        for e in range(E):
            srcs = g.pair_source[g.pair_ptr[e] : g.pair_ptr[e + 1]]
            v2c[e] = vn_update(float(llr[g.edge_v[e]]), [c2v[s] for s in srcs])
        for c in range(g.m):
            lo, hi = int(g.cn_ptr[c]), int(g.cn_ptr[c + 1])
            ins = [CountingFloat(v2c[e], counter) for e in range(lo, hi)]
            betas = None if offsets is None else [float(offsets[t, e]) for e in range(lo, hi)]
            outs, _, _ = check_node_offset_min_sum(ins, betas)
            for j, e in enumerate(range(lo, hi)):
                c2v[e] = float(outs[j])
    soft = np.empty(code.n)
    for v in range(code.n):
        edges = g.vn_edges[g.vn_ptr[v] : g.vn_ptr[v + 1]]
        soft[v] = marginalize(float(llr[v]), [c2v[e] for e in edges])
    return soft, counter
