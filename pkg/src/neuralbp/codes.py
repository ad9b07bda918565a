"""Binary linear codes, their Tanner graphs and alist I/O.

Edges of the Tanner graph are indexed in row-major order of the parity-check
matrix (check index ascending, then variable index ascending). Every
per-edge array in the package (messages, offsets, weights) uses this order.
"""

from __future__ import annotations

import hashlib
import io
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import gf2


class CodeError(ValueError):
    """Invalid code parameters or parity-check matrix."""


class AlistError(CodeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# Conventional primitive polynomials, bit i = coefficient of x^i.
PRIMITIVE_POLYS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,  # x^6 + x + 1
    7: 0b10001001,  # x^7 + x^3 + 1
    8: 0b100011101,  # x^8 + x^4 + x^3 + x^2 + 1
}


def check_parity_matrix(h) -> np.ndarray:
    """Validate and normalise a parity-check matrix to a C-contiguous uint8 array."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise CodeError(f"parity-check matrix must be 2-D, got shape {h.shape}")
    if not np.isin(h, (0, 1)).all():
        raise CodeError("parity-check matrix entries must be 0 or 1")
    h = np.ascontiguousarray(h, dtype=np.uint8)
    if h.shape[0] == 0:
        return h
    row_w = h.sum(axis=1)
    col_w = h.sum(axis=0)
    if (row_w < 2).any():
        raise CodeError(f"check rows {np.nonzero(row_w < 2)[0].tolist()} have fewer than 2 ones")
    if (col_w < 1).any():
        raise CodeError(f"variable columns {np.nonzero(col_w < 1)[0].tolist()} have no ones")
    return h


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Edge-indexed bipartite graph of a parity-check matrix.

    Attributes
    ----------
    edge_c, edge_v : int64 arrays of length E
        Check and variable endpoint of each edge, in canonical order.
    cn_ptr : int64 array of length m + 1
        Edges of check ``c`` are ``cn_ptr[c]:cn_ptr[c+1]`` (contiguous because
        of the canonical order).
    vn_ptr, vn_edges : int64 arrays
        Edges of variable ``v`` are ``vn_edges[vn_ptr[v]:vn_ptr[v+1]]``,
        ascending by check index.
    pair_target, pair_source : int64 arrays of length sum_v d_v (d_v - 1)
        All ordered pairs of distinct edges sharing a variable node, sorted by
        target edge and then by source edge position at that variable. The
        variable-node update for edge ``e`` sums the incoming check messages
        over the sources paired with target ``e``.
    """

    n: int
    m: int
    edge_c: np.ndarray
    edge_v: np.ndarray
    cn_ptr: np.ndarray
    vn_ptr: np.ndarray
    vn_edges: np.ndarray
    pair_target: np.ndarray
    pair_source: np.ndarray
    pair_ptr: np.ndarray

    @classmethod
    def from_matrix(cls, h: np.ndarray) -> "TannerGraph":
        m, n = h.shape
        edge_c, edge_v = np.nonzero(h)
        edge_c = edge_c.astype(np.int64)
        edge_v = edge_v.astype(np.int64)
        cn_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(edge_c, minlength=m), out=cn_ptr[1:])
        vn_edges = np.argsort(edge_v, kind="stable").astype(np.int64)
        vn_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(edge_v, minlength=n), out=vn_ptr[1:])

        targets, sources = [], []
        pair_ptr = np.zeros(len(edge_c) + 1, dtype=np.int64)
        counts = np.zeros(len(edge_c), dtype=np.int64)
        for e in range(len(edge_c)):
            v = edge_v[e]
            around = vn_edges[vn_ptr[v] : vn_ptr[v + 1]]
            others = around[around != e]
            targets.append(np.full(len(others), e, dtype=np.int64))
            sources.append(others)
            counts[e] = len(others)
        np.cumsum(counts, out=pair_ptr[1:])
        pair_target = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
        pair_source = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
        for a in (edge_c, edge_v, cn_ptr, vn_ptr, vn_edges, pair_target, pair_source, pair_ptr):
            a.setflags(write=False)
        return cls(n, m, edge_c, edge_v, cn_ptr, vn_ptr, vn_edges, pair_target, pair_source, pair_ptr)

    @property
    def edge_count(self) -> int:
        return len(self.edge_c)

    @property
    def cn_degrees(self) -> np.ndarray:
        return np.diff(self.cn_ptr)

    @property
    def vn_degrees(self) -> np.ndarray:
        return np.diff(self.vn_ptr)

    @property
    def pair_count(self) -> int:
        return len(self.pair_target)

    @cached_property
    def cn_adjacency(self) -> list[list[int]]:
        return [list(range(self.cn_ptr[c], self.cn_ptr[c + 1])) for c in range(self.m)]

    @cached_property
    def vn_adjacency(self) -> list[list[int]]:
        return [self.vn_edges[self.vn_ptr[v] : self.vn_ptr[v + 1]].tolist() for v in range(self.n)]

    @cached_property
    def cn_pad(self) -> np.ndarray:
        """Edge ids per check, shape (m, max d_c), padded with -1."""
        return _pad_rows(self.cn_ptr, np.arange(self.edge_count))

    @cached_property
    def vn_pad(self) -> np.ndarray:
        """Edge ids per variable, shape (n, max d_v), padded with -1."""
        return _pad_rows(self.vn_ptr, self.vn_edges)


def _pad_rows(ptr: np.ndarray, flat: np.ndarray) -> np.ndarray:
    deg = np.diff(ptr)
    width = int(deg.max()) if deg.size else 0
    out = np.full((len(deg), max(width, 1)), -1, dtype=np.int64)
    for i in range(len(deg)):
        out[i, : deg[i]] = flat[ptr[i] : ptr[i + 1]]
    return out


@dataclass(frozen=True, eq=False)
class LinearCode:
    """A binary linear code given by its parity-check and generator matrices."""

    h: np.ndarray
    g: np.ndarray
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        h = self.h
        if self.g.shape[1] != h.shape[1]:
            raise CodeError("generator and parity-check matrices disagree on n")
        if h.shape[0] and gf2.matmul(self.g, h.T).any():
            raise CodeError("G H^T != 0")
        h.setflags(write=False)
        self.g.setflags(write=False)

    @classmethod
    def from_parity_check(cls, h, name: str = "", metadata: dict | None = None) -> "LinearCode":
        h = check_parity_matrix(h)
        return cls(h, derive_generator(h), name, dict(metadata or {}))

    @property
    def n(self) -> int:
        return self.h.shape[1]

    @property
    def k(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def graph(self) -> TannerGraph:
        return TannerGraph.from_matrix(self.h)

    @property
    def edge_count(self) -> int:
        return int(self.h.sum())

    @cached_property
    def info_positions(self) -> np.ndarray:
        """Coordinates on which G is systematic (message bit i appears
        verbatim at ``info_positions[i]``)."""
        g = self.g
        pos = []
        for i in range(g.shape[0]):
            unit = np.flatnonzero((g[i] == 1) & (g.sum(axis=0) == 1))
            if unit.size == 0:
                raise CodeError("generator matrix is not in systematic form")
            pos.append(int(unit[0]))
        return np.asarray(pos, dtype=np.int64)

    @cached_property
    def checksum(self) -> str:
        """Short digest identifying H; stored in parameter files and manifests."""
        d = hashlib.sha256()
        d.update(np.asarray(self.h.shape, dtype=np.int64).tobytes())
        d.update(np.packbits(self.h, axis=None).tobytes())
        return d.hexdigest()[:16]

    def encode(self, message) -> np.ndarray:
        return encode(self, message)

    def syndrome(self, words) -> np.ndarray:
        return gf2.matmul(np.asarray(words), self.h.T)


def derive_generator(h) -> np.ndarray:
    """Generator matrix spanning the null space of ``h`` over GF(2).

    The basis is systematic on the non-pivot columns of the row-reduced H, so
    coordinates are never permuted: G and H index bits identically. A
    rank-deficient H gives k = n - rank(H) with a warning; its rows are kept
    since redundant checks are legitimate for BP decoding.
    """
    h = gf2.as_bits(h)
    r = gf2.rank(h)
    if r < h.shape[0]:
        warnings.warn(
            f"parity-check matrix has rank {r} < {h.shape[0]} rows; redundancy reduced to {r}",
            stacklevel=2,
        )
    g = gf2.nullspace(h)
    if g.shape[0] == 0:
        raise CodeError("code has dimension k = 0")
    return g


def encode(code: LinearCode, message) -> np.ndarray:
    """Encode one message (length k) or a batch (shape (B, k))."""
    msg = np.asarray(message)
    if msg.shape[-1] != code.k:
        raise ValueError(f"message length {msg.shape[-1]} != k = {code.k}")
    return gf2.matmul(msg, code.g)


# --- small codes -------------------------------------------------------------


def single_parity_check(n: int) -> LinearCode:
    return LinearCode.from_parity_check(np.ones((1, n), dtype=np.uint8), name=f"SPC({n},{n - 1})")


def hamming74() -> LinearCode:
    # columns are the binary expansions of 1..7
    h = np.array([[(j >> b) & 1 for j in range(1, 8)] for b in range(3)], dtype=np.uint8)
    return LinearCode.from_parity_check(h, name="Hamming(7,4)")


def uncoded(n: int) -> LinearCode:
    """Rate-1 identity code with no checks; decoding reduces to a channel hard decision."""
    h = np.zeros((0, n), dtype=np.uint8)
    return LinearCode(h, np.eye(n, dtype=np.uint8), name=f"uncoded({n})")


# --- alist ---------------------------------------------------------------------


def _numbers(line: str, lineno: int) -> list[int]:
    try:
        return [int(tok) for tok in line.split()]
    except ValueError:
        raise AlistError(f"non-integer token in {line.strip()!r}", lineno) from None


def parse_alist(text: str) -> np.ndarray:
    """Parse MacKay alist text into a dense parity-check matrix.

    Zero entries in the index lists are treated as padding.
    """
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if len(lines) < 4:
        raise AlistError("truncated header", lines[-1][0] if lines else 1)
    it = iter(lines)

    def take(count: int | None = None):
        try:
            lineno, ln = next(it)
        except StopIteration:
            raise AlistError("unexpected end of file", lines[-1][0]) from None
        nums = _numbers(ln, lineno)
        if count is not None and len(nums) < count:
            raise AlistError(f"expected {count} integers, found {len(nums)}", lineno)
        return lineno, nums

    lineno, hdr = take(2)
    n, m = hdr[:2]
    if n <= 0 or m < 0:
        raise AlistError(f"bad dimensions n={n}, m={m}", lineno)
    lineno, mx = take(2)
    max_col, max_row = mx[:2]
    lineno, col_deg = take(n)
    col_deg = col_deg[:n]
    lineno, row_deg = take(m) if m else (lineno, [])
    row_deg = row_deg[:m]
    if max(col_deg, default=0) > max_col or max(row_deg, default=0) > max_row:
        raise AlistError("degree exceeds declared maximum", lineno)

    h_cols = np.zeros((m, n), dtype=np.uint8)
    for v in range(n):
        lineno, idx = take()
        idx = [i for i in idx if i != 0]
        if len(idx) != col_deg[v]:
            raise AlistError(f"column {v + 1} lists {len(idx)} entries, degree says {col_deg[v]}", lineno)
        for i in idx:
            if not 1 <= i <= m:
                raise AlistError(f"row index {i} out of range 1..{m}", lineno)
            h_cols[i - 1, v] = 1
    h_rows = np.zeros((m, n), dtype=np.uint8)
    for c in range(m):
        lineno, idx = take()
        idx = [i for i in idx if i != 0]
        if len(idx) != row_deg[c]:
            raise AlistError(f"row {c + 1} lists {len(idx)} entries, degree says {row_deg[c]}", lineno)
        for j in idx:
            if not 1 <= j <= n:
                raise AlistError(f"column index {j} out of range 1..{n}", lineno)
            h_rows[c, j - 1] = 1
        if not np.array_equal(h_rows[c], h_cols[c]):
            raise AlistError(f"row {c + 1} disagrees with the column lists", lineno)
    return h_rows


def load_alist(source, name: str | None = None) -> LinearCode:
    """Load a code from an alist file path, text/binary stream, or bytes."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as f:
            raw = f.read()
        name = name or os.path.splitext(os.path.basename(os.fspath(source)))[0]
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
    text = raw.decode("ascii") if isinstance(raw, (bytes, bytearray)) else raw
    h = parse_alist(text)
    return LinearCode.from_parity_check(h, name=name or "alist")


def format_alist(h) -> str:
    h = gf2.as_bits(h)
    m, n = h.shape
    cols = [np.nonzero(h[:, v])[0] + 1 for v in range(n)]
    rows = [np.nonzero(h[c])[0] + 1 for c in range(m)]
    max_col = max((len(c) for c in cols), default=0)
    max_row = max((len(r) for r in rows), default=0)
    out = io.StringIO()
    out.write(f"{n} {m}\n{max_col} {max_row}\n")
    out.write(" ".join(str(len(c)) for c in cols) + "\n")
    out.write(" ".join(str(len(r)) for r in rows) + "\n")
    for lst, width in [(c, max_col) for c in cols] + [(r, max_row) for r in rows]:
        padded = list(lst) + [0] * (width - len(lst))
        out.write(" ".join(str(i) for i in padded) + "\n")
    return out.getvalue()


def write_alist(code_or_h, path) -> None:
    h = code_or_h.h if isinstance(code_or_h, LinearCode) else code_or_h
    with open(path, "w") as f:
        f.write(format_alist(h))


# --- BCH -----------------------------------------------------------------------


def _pmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def _pmod(a: int, mod: int) -> int:
    dm = mod.bit_length() - 1
    while a and a.bit_length() - 1 >= dm:
        a ^= mod << (a.bit_length() - 1 - dm)
    return a


def _pdiv(a: int, b: int) -> int:
    q = 0
    db = b.bit_length() - 1
    while a and a.bit_length() - 1 >= db:
        shift = a.bit_length() - 1 - db
        q |= 1 << shift
        a ^= b << shift
    if a:
        raise ArithmeticError("polynomial division has a remainder")
    return q


def _cyclotomic_coset(s: int, n: int) -> list[int]:
    coset, x = [], s % n
    while x not in coset:
        coset.append(x)
        x = (2 * x) % n
    return coset


def _minimal_poly(coset: list[int], exp: list[int], log: list[int], q: int) -> int:
    # product of (x + alpha^j), coefficients kept in GF(2^m) as ints
    poly = [1]
    for j in coset:
        root = exp[j]
        nxt = [0] * (len(poly) + 1)
        for i, c in enumerate(poly):
            nxt[i + 1] ^= c
            if c:
                nxt[i] ^= exp[(log[c] + log[root]) % (q - 1)]
        poly = nxt
    if any(c not in (0, 1) for c in poly):
        raise ArithmeticError("minimal polynomial not binary")
    return sum(c << i for i, c in enumerate(poly))


def bch_generator_poly(m: int, t: int) -> int:
    """Generator polynomial of the narrow-sense primitive BCH code (bit i = x^i)."""
    q = 1 << m
    n = q - 1
    prim = PRIMITIVE_POLYS[m]
    exp = [0] * (2 * q)
    log = [0] * q
    x = 1
    for i in range(n):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & q:
            x ^= prim
    for i in range(n, 2 * q):
        exp[i] = exp[i - n]
    g = 1
    seen: set[int] = set()
    for s in range(1, 2 * t, 2):
        if s % n in seen:
            continue
        coset = _cyclotomic_coset(s, n)
        seen.update(coset)
        g = _pmul(g, _minimal_poly(coset, exp, log, q))
    return g


def construct_bch(m: int, t: int, h_form: str = "systematic") -> LinearCode:
    """Narrow-sense primitive binary BCH code of length 2^m - 1 correcting ``t`` errors.

    Bit ``j`` of a codeword is the coefficient of x^j. Parity bits occupy
    positions ``0 .. n-k-1`` and message bits ``n-k .. n-1``, so the
    systematic code stays cyclic in natural order. ``h_form`` selects the
    systematic parity-check matrix ``[I | P^T]`` or the ``"cyclic"`` one
    built from shifts of the reciprocal check polynomial.
    """
    if not 2 <= m <= 8:
        raise CodeError(f"field degree m={m} outside 2..8")
    if t < 1:
        raise CodeError("designed t must be >= 1")
    n = (1 << m) - 1
    g = bch_generator_poly(m, t)
    r = g.bit_length() - 1
    k = n - r
    if k <= 0:
        raise CodeError(f"BCH(m={m}, t={t}) has k={k} <= 0")

    parity = np.zeros((k, r), dtype=np.uint8)
    for i in range(k):
        rem = _pmod(1 << (r + i), g)
        parity[i] = [(rem >> j) & 1 for j in range(r)]
    gen = np.concatenate([parity, np.eye(k, dtype=np.uint8)], axis=1)
    if h_form == "systematic":
        h = np.concatenate([np.eye(r, dtype=np.uint8), parity.T], axis=1)
    elif h_form == "cyclic":
        hpoly = _pdiv((1 << n) | 1, g)
        recip = int(format(hpoly, f"0{k + 1}b")[::-1], 2)
        h = np.zeros((r, n), dtype=np.uint8)
        for i in range(r):
            h[i] = [((recip << i) >> j) & 1 for j in range(n)]
    else:
        raise CodeError(f"unknown h_form {h_form!r}")
    meta = {
        "family": "bch",
        "m": m,
        "t": t,
        "primitive_poly": f"0x{PRIMITIVE_POLYS[m]:x}",
        "generator_poly": f"0x{g:x}",
        "h_form": h_form,
    }
    return LinearCode(check_parity_matrix(h), gen, name=f"BCH({n},{k})", metadata=meta)


def bch(n: int, k: int, h_form: str = "systematic") -> LinearCode:
    """Look up the BCH code of length ``n`` and dimension ``k`` by scanning t."""
    m = n.bit_length()
    if n != (1 << m) - 1 or not 2 <= m <= 8:
        raise CodeError(f"n={n} is not 2^m - 1 with 2 <= m <= 8")
    for t in range(1, n // 2 + 1):
        deg = bch_generator_poly(m, t).bit_length() - 1
        if n - deg == k:
            return construct_bch(m, t, h_form)
        if n - deg < k:
            break
    raise CodeError(f"no narrow-sense BCH code with n={n}, k={k}")


def code_from_spec(spec: str) -> LinearCode:
    """Resolve a CLI code string: an alist path, ``bch:N:K[:form]``, ``spc:N``,
    ``hamming74`` or ``uncoded:N``."""
    if os.path.exists(spec):
        return load_alist(spec)
    parts = spec.lower().split(":")
    try:
        if parts[0] == "bch" and len(parts) in (3, 4):
            return bch(int(parts[1]), int(parts[2]), *(parts[3:] or ["systematic"]))
        if parts[0] == "spc" and len(parts) == 2:
            return single_parity_check(int(parts[1]))
        if parts[0] == "hamming74":
            return hamming74()
        if parts[0] == "uncoded" and len(parts) == 2:
            return uncoded(int(parts[1]))
    except ValueError as exc:
        raise CodeError(f"bad code spec {spec!r}: {exc}") from None
    raise CodeError(f"unrecognised code spec {spec!r} (no such file either)")
