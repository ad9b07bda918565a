"""BPSK over AWGN.

Bit 0 maps to +1 and bit 1 to -1; channel LLRs are ``2 y / sigma^2`` so a
positive LLR favours bit 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

RNG_NAME = "numpy.random.Generator(PCG64)"


def ebn0_to_sigma2(ebn0_db: float, rate: float) -> float:
    """Per-dimension noise variance for unit-energy BPSK at a given Eb/N0."""
    if not rate > 0 or rate > 1:
        raise ValueError(f"code rate must be in (0, 1], got {rate}")
    return 1.0 / (2.0 * rate * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class ChannelConfig:
    ebn0_db: float
    rate: float
    seed: int | None = None
    sigma2: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma2", ebn0_to_sigma2(self.ebn0_db, self.rate))

    @classmethod
    def from_sigma2(cls, sigma2: float, rate: float = 1.0, seed: int | None = None) -> "ChannelConfig":
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        ebn0_db = 10.0 * np.log10(1.0 / (2.0 * rate * sigma2))
        cfg = cls(float(ebn0_db), rate, seed)
        object.__setattr__(cfg, "sigma2", float(sigma2))
        return cfg


@dataclass
class ReceivedFrame:
    y: np.ndarray
    llr: np.ndarray
    truth_bits: np.ndarray


def modulate_bpsk(bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def llr_from_received(y, sigma2: float) -> np.ndarray:
    return 2.0 * np.asarray(y) / sigma2


def transmit(cfg: ChannelConfig, symbols, rng: np.random.Generator, truth_bits=None) -> ReceivedFrame:
    """Add white Gaussian noise of variance ``cfg.sigma2``; works on one
    frame or a batch."""
    x = np.asarray(symbols, dtype=np.float64)
    y = x + np.sqrt(cfg.sigma2) * rng.standard_normal(x.shape)
    if truth_bits is None:
        truth_bits = (x < 0).astype(np.uint8)
    return ReceivedFrame(y, llr_from_received(y, cfg.sigma2), np.asarray(truth_bits, dtype=np.uint8))


def all_zeros_frames(cfg: ChannelConfig, n: int, count: int, rng: np.random.Generator) -> ReceivedFrame:
    """Noisy all-(+1) transmissions, skipping the encoder."""
    return transmit(cfg, np.ones((count, n)), rng, np.zeros((count, n), dtype=np.uint8))


def dump_frames_csv(path, frame: ReceivedFrame) -> None:
    """Debug dump: one row per (frame, position) with received value and LLR."""
    y = np.atleast_2d(frame.y)
    llr = np.atleast_2d(frame.llr)
    bits = np.atleast_2d(frame.truth_bits)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "position", "bit", "y", "llr"])
        for b in range(y.shape[0]):
            for v in range(y.shape[1]):
                w.writerow([b, v, int(bits[b, v]), repr(float(y[b, v])), repr(float(llr[b, v]))])
