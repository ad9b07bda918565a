"""Decoder parameters, offset tying and the parameter file format.

File format (``.npz``, format version 1)
----------------------------------------
A numpy ``.npz`` archive with these members:

``format``          string ``"neuralbp-params"``
``version``         int, currently 1
``variant``         one of ``spa``, ``ms``, ``oms``, ``noms``, ``nspa``
``iterations``      T
``n``, ``edges``    code length and Tanner-graph edge count E
``code_checksum``   digest of H (see ``LinearCode.checksum``)
``scheme``          tying scheme name (offset variants)
``tying``           int64 (T, E) map from (iteration, edge) to slot
``values``          float64 slot values; offsets are ``values[tying]``
``w_in``            (T, n) channel weights (nspa)
``w_edge``          (T, P) message weights, P = sum_v d_v (d_v - 1), in the
                    pair order of ``TannerGraph.pair_target/pair_source``
``w_out``           (n,) output channel weights (nspa)
``w_eout``          (E,) output message weights (nspa)

Edges are in canonical order: row-major over H. Checkpoints add members
prefixed ``adam_`` and ``train_`` (see ``training.save_checkpoint``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .codes import LinearCode

FORMAT = "neuralbp-params"
FORMAT_VERSION = 1
VARIANTS = ("spa", "ms", "oms", "noms", "nspa")
SCHEMES = ("per-edge", "per-iteration", "per-check-node", "global")


class ConfigError(ValueError):
    """Parameters inconsistent with the variant or the code."""


def tying_map(code: LinearCode, iterations: int, scheme: str) -> np.ndarray:
    """(T, E) slot index for each offset under ``scheme``.

    ``per-check-node`` gives one slot per (iteration, check node).
    """
    E = code.edge_count
    t = np.arange(iterations)[:, None]
    e = np.arange(E)[None, :]
    if scheme == "per-edge":
        slots = t * E + e
    elif scheme == "per-iteration":
        slots = np.broadcast_to(t, (iterations, E))
    elif scheme == "per-check-node":
        slots = t * code.m + code.graph.edge_c[None, :]
    elif scheme == "global":
        slots = np.zeros((iterations, E))
    else:
        raise ConfigError(f"unknown tying scheme {scheme!r}; choose from {SCHEMES}")
    return np.ascontiguousarray(slots, dtype=np.int64)


@dataclass
class DecoderParams:
    variant: str
    iterations: int
    scheme: str = ""
    tying: np.ndarray | None = None
    values: np.ndarray | None = None
    w_in: np.ndarray | None = None
    w_edge: np.ndarray | None = None
    w_out: np.ndarray | None = None
    w_eout: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")

    # constructors --------------------------------------------------------

    @classmethod
    def spa(cls, iterations: int = 5) -> "DecoderParams":
        return cls("spa", iterations)

    @classmethod
    def min_sum(cls, iterations: int = 5) -> "DecoderParams":
        return cls("ms", iterations)

    @classmethod
    def oms(cls, code: LinearCode, iterations: int = 5, beta: float = 0.5) -> "DecoderParams":
        return cls("oms", iterations, "global", tying_map(code, iterations, "global"), np.array([float(beta)]))

    @classmethod
    def noms(cls, code: LinearCode, iterations: int = 5, offsets=None, scheme: str = "per-edge", rng=None) -> "DecoderParams":
        """Neural offset min-sum parameters.

        ``offsets`` may be a slot vector, a full (T, E) array (averaged into
        slots), or None for i.i.d. standard-normal slots drawn from ``rng``.
        """
        tying = tying_map(code, iterations, scheme)
        nslots = int(tying.max()) + 1 if tying.size else 0
        if offsets is None:
            rng = rng if rng is not None else np.random.default_rng()
            values = rng.standard_normal(nslots)
        else:
            offsets = np.asarray(offsets, dtype=np.float64)
            if offsets.shape == tying.shape:
                values = _merge(offsets, tying, nslots)
            elif offsets.ndim == 0:
                values = np.full(nslots, float(offsets))
            elif offsets.shape == (nslots,):
                values = offsets.copy()
            else:
                raise ConfigError(f"offsets shape {offsets.shape} matches neither {tying.shape} nor ({nslots},)")
        return cls("noms", iterations, scheme, tying, values)

    @classmethod
    def nspa(cls, code: LinearCode, iterations: int = 5) -> "DecoderParams":
        """Neural SPA weights, all initialized to 1 (plain SPA behaviour)."""
        g = code.graph
        return cls(
            "nspa", iterations,
            w_in=np.ones((iterations, code.n)),
            w_edge=np.ones((iterations, g.pair_count)),
            w_out=np.ones(code.n),
            w_eout=np.ones(g.edge_count),
        )

    # views ---------------------------------------------------------------

    @property
    def has_offsets(self) -> bool:
        return self.variant in ("oms", "noms")

    @property
    def offsets(self) -> np.ndarray | None:
        """Expanded (T, E) offsets."""
        if not self.has_offsets:
            return None
        return self.values[self.tying]

    @property
    def slot_count(self) -> int:
        return 0 if self.values is None else len(self.values)

    def weight_arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("w_in", "w_edge", "w_out", "w_eout")}

    def flat(self) -> np.ndarray:
        """All trainable values concatenated (slots, or nspa weights in
        ``w_in, w_edge, w_out, w_eout`` order)."""
        if self.has_offsets:
            return self.values.copy()
        if self.variant == "nspa":
            return np.concatenate([a.ravel() for a in self.weight_arrays().values()])
        return np.zeros(0)

    def with_flat(self, vec: np.ndarray) -> "DecoderParams":
        vec = np.asarray(vec, dtype=np.float64)
        if self.has_offsets:
            return replace(self, values=vec.copy())
        if self.variant == "nspa":
            out, i = {}, 0
            for k, a in self.weight_arrays().items():
                out[k] = vec[i : i + a.size].reshape(a.shape).copy()
                i += a.size
            return replace(self, **out)
        return self

    def validate(self, code: LinearCode) -> None:
        T, E, n = self.iterations, code.edge_count, code.n
        if self.has_offsets:
            if self.tying is None or self.values is None:
                raise ConfigError(f"{self.variant} needs offsets")
            if self.tying.shape != (T, E):
                raise ConfigError(f"tying map shape {self.tying.shape} != (T, E) = {(T, E)}")
            if self.tying.size and (self.tying.min() < 0 or self.tying.max() >= len(self.values)):
                raise ConfigError("tying map refers to missing slots")
            if not np.isfinite(self.values).all():
                raise ConfigError("offsets must be finite")
        elif self.variant == "nspa":
            want = {"w_in": (T, n), "w_edge": (T, code.graph.pair_count), "w_out": (n,), "w_eout": (E,)}
            for k, shape in want.items():
                a = getattr(self, k)
                if a is None or a.shape != shape:
                    raise ConfigError(f"nspa weight {k} has shape {None if a is None else a.shape}, need {shape}")
        else:
            for k in ("values", "w_in", "w_edge", "w_out", "w_eout"):
                if getattr(self, k) is not None:
                    raise ConfigError(f"variant {self.variant} takes no {k}")


def _merge(full: np.ndarray, tying: np.ndarray, nslots: int) -> np.ndarray:
    sums = np.bincount(tying.ravel(), weights=full.ravel(), minlength=nslots)
    counts = np.bincount(tying.ravel(), minlength=nslots)
    return sums / np.maximum(counts, 1)


def tie_offsets(params: DecoderParams, code: LinearCode, scheme: str) -> DecoderParams:
    """Re-tie an offset decoder; each new slot starts at the mean of the
    offsets it absorbs. Global tying of NOMS yields an OMS-equivalent decoder."""
    if not params.has_offsets:
        raise ConfigError(f"variant {params.variant} has no offsets to tie")
    tying = tying_map(code, params.iterations, scheme)
    nslots = int(tying.max()) + 1 if tying.size else 0
    values = _merge(params.offsets, tying, nslots)
    return replace(params, scheme=scheme, tying=tying, values=values)


def slot_gradient(params: DecoderParams, d_offsets: np.ndarray) -> np.ndarray:
    """Sum per-(iteration, edge) gradients into their tied slots."""
    return np.bincount(params.tying.ravel(), weights=d_offsets.ravel(), minlength=params.slot_count)


def count_parameters(code: LinearCode, variant: str, iterations: int, scheme: str = "per-edge") -> int:
    """Number of trainable values the decoder stores.

    Offset variants count tied slots (E T when untied). Neural SPA counts the
    implemented arrays: n T channel weights, T sum_v d_v (d_v - 1) message
    weights, n output channel weights and E output message weights.
    """
    T = iterations
    if variant == "noms":
        return int(tying_map(code, T, scheme).max()) + 1
    if variant == "oms":
        return 1
    if variant == "nspa":
        return code.n * T + T * code.graph.pair_count + code.n + code.edge_count
    if variant in ("spa", "ms"):
        return 0
    raise ConfigError(f"unknown variant {variant!r}")


def nspa_formula_count(code: LinearCode, iterations: int) -> int:
    """Closed-form count n T + E T (d_c - 1) + n + n E for check-regular codes,
    with the E (d_c - 1) term summed per edge when check degrees vary."""
    T, n, E = iterations, code.n, code.edge_count
    dc = code.graph.cn_degrees
    fan_in = int((dc * (dc - 1)).sum())  # sum over edges of (d_c - 1)
    return n * T + T * fan_in + n + n * E


# --- file I/O -------------------------------------------------------------------


def params_to_arrays(params: DecoderParams, code: LinearCode) -> dict[str, np.ndarray]:
    arrays = {
        "format": np.array(FORMAT),
        "version": np.array(FORMAT_VERSION),
        "variant": np.array(params.variant),
        "iterations": np.array(params.iterations),
        "n": np.array(code.n),
        "edges": np.array(code.edge_count),
        "code_checksum": np.array(code.checksum),
        "scheme": np.array(params.scheme),
        "meta": np.array(json.dumps(params.meta)),
    }
    for k in ("tying", "values", "w_in", "w_edge", "w_out", "w_eout"):
        a = getattr(params, k)
        if a is not None:
            arrays[k] = np.asarray(a)
    return arrays


def save_params(path, params: DecoderParams, code: LinearCode, **extra) -> None:
    arrays = params_to_arrays(params, code)
    arrays.update({k: np.asarray(v) for k, v in extra.items()})
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_params(path, code: LinearCode | None = None) -> tuple[DecoderParams, dict]:
    """Read a parameter or checkpoint file. Returns the params and any extra
    members (optimizer state, config) keyed by name."""
    with np.load(path, allow_pickle=False) as z:
        data = {k: z[k] for k in z.files}
    if str(data.get("format", "")) != FORMAT:
        raise ConfigError(f"{path}: not a {FORMAT} file")
    if int(data["version"]) > FORMAT_VERSION:
        raise ConfigError(f"{path}: format version {int(data['version'])} is newer than supported {FORMAT_VERSION}")
    if code is not None:
        if int(data["n"]) != code.n or int(data["edges"]) != code.edge_count:
            raise ConfigError(f"{path}: parameters are for n={int(data['n'])}, E={int(data['edges'])}; code has n={code.n}, E={code.edge_count}")
        if str(data["code_checksum"]) != code.checksum:
            raise ConfigError(f"{path}: parity-check matrix checksum mismatch")
    kw = {k: data.pop(k) for k in ("tying", "values", "w_in", "w_edge", "w_out", "w_eout") if k in data}
    params = DecoderParams(
        str(data.pop("variant")), int(data.pop("iterations")), str(data.pop("scheme")),
        meta=json.loads(str(data.pop("meta", "{}"))), **kw,
    )
    for k in ("format", "version", "n", "edges"):
        data.pop(k, None)
    return params, data
