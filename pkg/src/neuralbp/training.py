"""Offline training of offset and weight parameters.

Gradients come from a hand-written reverse pass over the recorded decode
tape. Training frames are noisy all-zeros codewords: offset min-sum and the
weighted sum-product decoder both satisfy the message-passing symmetry
conditions, so the error probability does not depend on the codeword.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from . import kernels
from .channel import ChannelConfig, all_zeros_frames
from .codes import LinearCode
from .decoder import ATANH_CLIP, L_MAX, DecodeTape, _graph_args, decode
from .params import ConfigError, DecoderParams, load_params, save_params, slot_gradient

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    minibatches: int = 20_000
    batch_size: int = 120
    snr_set_db: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    learning_rate: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 5
    scheme: str = "per-edge"
    init: str = "normal"  # "normal", or a float for a constant start
    seed: int = 0
    eval_every: int = 100
    heldout_per_snr: int = 250
    loss_mode: str = "all"  # "all" (sum over iterations) or "final"

    def __post_init__(self):
        self.snr_set_db = tuple(float(s) for s in self.snr_set_db)
        if not self.snr_set_db:
            raise ConfigError("snr_set_db is empty")
        if self.batch_size % len(self.snr_set_db):
            raise ConfigError(f"batch_size {self.batch_size} not divisible by {len(self.snr_set_db)} SNRs")
        if self.loss_mode not in ("final", "all"):
            raise ConfigError(f"loss_mode must be 'final' or 'all', got {self.loss_mode!r}")
        if self.minibatches < 0:
            raise ConfigError("minibatches must be >= 0")
        if self.init != "normal":
            try:
                float(self.init)
            except (TypeError, ValueError):
                raise ConfigError(f"init must be 'normal' or a number, got {self.init!r}") from None


@dataclass
class GradientBuffer:
    loss_value: float
    d_offsets: np.ndarray | None = None
    d_slots: np.ndarray | None = None
    d_weights: dict[str, np.ndarray] = field(default_factory=dict)

    def flat(self) -> np.ndarray:
        if self.d_slots is not None:
            return self.d_slots
        return np.concatenate([a.ravel() for a in self.d_weights.values()])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


# --- loss --------------------------------------------------------------------------


def loss_cross_entropy(s, x) -> np.ndarray:
    """Mean binary cross-entropy between soft outputs and transmitted bits.

    With positive LLRs favouring bit 0, P(bit = 1) = sigmoid(-s). Computed as
    softplus terms, so it never overflows. Returns one value per frame (a
    scalar for 1-D input).
    """
    s = np.asarray(s, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    per_bit = x * np.logaddexp(0.0, s) + (1.0 - x) * np.logaddexp(0.0, -s)
    return per_bit.mean(axis=-1)


def loss_gradient(s, x) -> np.ndarray:
    """d loss / d s for ``loss_cross_entropy`` (per frame)."""
    s = np.asarray(s, dtype=np.float64)
    return (np.asarray(x, dtype=np.float64) - expit(-s)) / s.shape[-1]


def _soft_gradients(tape: DecodeTape, x, loss_mode: str) -> tuple[float, np.ndarray]:
    B, T, n = tape.soft.shape
    x = np.broadcast_to(np.asarray(x, dtype=np.float64), (B, n))
    g = np.zeros((B, T, n))
    if loss_mode == "final":
        loss = loss_cross_entropy(tape.soft[:, -1], x)
        g[:, -1] = loss_gradient(tape.soft[:, -1], x)
    else:
        loss = sum(loss_cross_entropy(tape.soft[:, t], x) for t in range(T))
        for t in range(T):
            g[:, t] = loss_gradient(tape.soft[:, t], x)
    return float(np.mean(loss)), g / B


def _check_tape(code: LinearCode, params: DecoderParams, tape: DecodeTape, want: tuple[str, ...]):
    if params.variant not in want:
        raise ConfigError(f"variant {params.variant} not handled here (need one of {want})")
    if tape.variant != params.variant or tape.code_checksum != code.checksum:
        raise ConfigError("tape was recorded with a different variant or code")
    if tape.iterations != params.iterations or tape.v2c.shape[2] != code.edge_count:
        raise ConfigError("tape shape does not match parameters")


def backward(code: LinearCode, params: DecoderParams, tape: DecodeTape, x, loss_mode: str = "final", backend: str | None = None) -> GradientBuffer:
    """Exact reverse-mode gradient of the minibatch-mean loss w.r.t. offsets.

    Non-differentiable points use fixed subgradients: ReLU'(0) = 0, argmin
    ties resolved toward the lowest edge index, sign' = 0.
    """
    _check_tape(code, params, tape, ("oms", "noms"))
    loss, g_soft = _soft_gradients(tape, x, loss_mode)
    g = code.graph
    k = kernels.get_backend(backend)
    d_off, _ = k.minsum_backward(
        g_soft, params.iterations, g.edge_v, g.cn_ptr, g.pair_ptr, g.pair_source,
        tape.v2c, tape.c2v, tape.argmin_edge, tape.relu_active,
    )
    return GradientBuffer(loss, d_offsets=d_off, d_slots=slot_gradient(params, d_off))


def backward_nspa(code: LinearCode, params: DecoderParams, tape: DecodeTape, x, loss_mode: str = "final", backend: str | None = None) -> GradientBuffer:
    _check_tape(code, params, tape, ("nspa",))
    loss, g_soft = _soft_gradients(tape, x, loss_mode)
    g = code.graph
    k = kernels.get_backend(backend)
    d_in, d_edge, d_out, d_eout = k.spa_backward(
        g_soft, tape.llr, *params.weight_arrays().values(), params.iterations, L_MAX, ATANH_CLIP,
        g.edge_v, g.cn_ptr, g.pair_ptr, g.pair_source, tape.v2c, tape.c2v,
    )
    return GradientBuffer(loss, d_weights={"w_in": d_in, "w_edge": d_edge, "w_out": d_out, "w_eout": d_eout})


def gradient(code, params, llr, x=0, loss_mode="final", backend=None) -> GradientBuffer:
    """Decode with a tape, then run the matching reverse pass."""
    _, tape = decode(code, params, llr, record_tape=True, backend=backend)
    fn = backward_nspa if params.variant == "nspa" else backward
    return fn(code, params, tape, x, loss_mode, backend)


# --- data and optimizer ------------------------------------------------------------


def make_minibatch(cfg: TrainConfig, code: LinearCode, rng: np.random.Generator):
    """Stratified minibatch: ``batch_size / len(snr_set_db)`` noisy all-zeros
    frames at each training SNR. Returns (llr, truth, snr_db per frame)."""
    per = cfg.batch_size // len(cfg.snr_set_db)
    llr, snr = [], []
    for ebn0 in cfg.snr_set_db:
        fr = all_zeros_frames(ChannelConfig(ebn0, code.rate), code.n, per, rng)
        llr.append(fr.llr)
        snr.append(np.full(per, ebn0))
    return np.concatenate(llr), np.zeros((cfg.batch_size, code.n), dtype=np.uint8), np.concatenate(snr)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state`` and returns new values."""
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.step += 1
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    return params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


# --- training loop -------------------------------------------------------------------


@dataclass
class TrainResult:
    params: DecoderParams
    log: list[dict]
    heldout: list[tuple[int, float]]
    adam: AdamState


def initial_params(code: LinearCode, variant: str, cfg: TrainConfig, rng: np.random.Generator) -> DecoderParams:
    if variant == "noms":
        if cfg.init == "normal":
            return DecoderParams.noms(code, cfg.iterations, scheme=cfg.scheme, rng=rng)
        return DecoderParams.noms(code, cfg.iterations, offsets=float(cfg.init), scheme=cfg.scheme)
    if variant == "nspa":
        return DecoderParams.nspa(code, cfg.iterations)
    raise ConfigError(f"variant {variant!r} is not trainable (use noms or nspa)")


def heldout_set(cfg: TrainConfig, code: LinearCode) -> np.ndarray:
    """Fixed validation frames, independent of the training stream."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    return np.concatenate([
        all_zeros_frames(ChannelConfig(s, code.rate), code.n, cfg.heldout_per_snr, rng).llr for s in cfg.snr_set_db
    ])


def heldout_loss(code: LinearCode, params: DecoderParams, llr: np.ndarray, backend=None) -> float:
    out, _ = decode(code, params, llr, backend=backend)
    return float(np.mean(loss_cross_entropy(out.s, 0)))


def _streams(seed: int):
    root = np.random.SeedSequence(seed)
    init_ss, data_ss = root.spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(data_ss)


def train(
    code: LinearCode,
    variant: str,
    cfg: TrainConfig,
    params: DecoderParams | None = None,
    checkpoint_path=None,
    log_path=None,
    resume_from=None,
    backend: str | None = None,
    progress=None,
) -> TrainResult:
    """Minibatch Adam training of a NOMS or neural-SPA decoder.

    Every ``eval_every`` minibatches the held-out loss is recorded and, when
    ``checkpoint_path`` is set, a checkpoint with optimizer and RNG state is
    written so the run can be resumed exactly.
    """
    init_rng, data_rng = _streams(cfg.seed)
    start = 0
    if resume_from is not None:
        params, extra = load_params(resume_from, code)
        adam = AdamState(extra["adam_m"], extra["adam_v"], int(extra["adam_step"]))
        data_rng.bit_generator.state = json.loads(str(extra["train_rng_state"]))
        start = int(extra["train_minibatch"])
    else:
        if params is None:
            params = initial_params(code, variant, cfg, init_rng)
        adam = AdamState.zeros(params.flat().size)
    if params.variant != variant:
        raise ConfigError(f"params are {params.variant}, asked to train {variant}")
    params.validate(code)
    held = heldout_set(cfg, code)
    heldout = [(start, heldout_loss(code, params, held, backend))]
    rows: list[dict] = []
    t0 = time.perf_counter()
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "a" if resume_from is not None else "w", newline="")
        writer = csv.writer(log_file)
        if resume_from is None:
            writer.writerow(["minibatch", "mean_loss", "grad_norm", "wall_time"])

    def checkpoint(mb: int):
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, code, adam, data_rng, mb, cfg)

    try:
        for mb in range(start + 1, cfg.minibatches + 1):
            llr, truth, _ = make_minibatch(cfg, code, data_rng)
            grads = gradient(code, params, llr, truth, cfg.loss_mode, backend)
            if not np.isfinite(grads.loss_value) or not np.isfinite(grads.flat()).all():
                checkpoint(mb - 1)
                raise TrainingError(f"non-finite loss or gradient at minibatch {mb} (loss={grads.loss_value})")
            g = grads.flat()
            params = params.with_flat(adam_step(adam, params.flat(), g, cfg))
            row = {"minibatch": mb, "mean_loss": grads.loss_value, "grad_norm": float(np.linalg.norm(g)), "wall_time": time.perf_counter() - t0}
            rows.append(row)
            if log_file is not None:
                writer.writerow([row["minibatch"], repr(row["mean_loss"]), repr(row["grad_norm"]), f"{row['wall_time']:.3f}"])
            if cfg.eval_every and mb % cfg.eval_every == 0:
                heldout.append((mb, heldout_loss(code, params, held, backend)))
                checkpoint(mb)
                log.info("minibatch %d loss %.5f heldout %.5f", mb, row["mean_loss"], heldout[-1][1])
            if progress is not None:
                progress(row)
    finally:
        if log_file is not None:
            log_file.close()
    if not heldout or heldout[-1][0] != cfg.minibatches:
        heldout.append((cfg.minibatches, heldout_loss(code, params, held, backend)))
    checkpoint(max(cfg.minibatches, start))
    return TrainResult(params, rows, heldout, adam)


def save_checkpoint(path, params, code, adam: AdamState, rng: np.random.Generator, minibatch: int, cfg: TrainConfig) -> None:
    save_params(
        path, params, code,
        adam_m=adam.m, adam_v=adam.v, adam_step=np.array(adam.step),
        train_rng_state=np.array(json.dumps(rng.bit_generator.state)),
        train_minibatch=np.array(minibatch),
        train_config=np.array(json.dumps(asdict(cfg))),
    )
