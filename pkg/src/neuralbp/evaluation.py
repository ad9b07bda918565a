"""Monte-Carlo BER/FER estimation, offset histograms and curve comparison."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig, modulate_bpsk, transmit
from .codes import LinearCode, encode
from .decoder import decode
from .params import ConfigError, DecoderParams

log = logging.getLogger(__name__)

BER_COLUMNS = ["label", "ebn0_db", "frames", "bit_errors", "frame_errors", "ber", "fer", "ci_lo", "ci_hi", "censored"]
Z95 = 1.959963984540054


@dataclass
class EvalConfig:
    snr_list_db: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0)
    min_frame_errors: int = 100
    min_frames: int = 100_000
    max_frames: int = 100_000_000
    seed: int = 0
    workers: int = 1
    chunk_frames: int = 2000
    all_zeros: bool = False
    early_stop: bool = False
    dtype: str = "float64"

    def __post_init__(self):
        self.snr_list_db = tuple(float(s) for s in self.snr_list_db)
        if self.max_frames < 1 or self.chunk_frames < 1 or self.workers < 1:
            raise ConfigError("max_frames, chunk_frames and workers must be positive")


@dataclass
class BerPoint:
    ebn0_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    n: int
    censored: bool = False
    label: str = ""

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.n) if self.frames else float("nan")

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float("nan")

    @property
    def ci95(self) -> tuple[float, float]:
        """Normal-approximation 95% interval on the bit-error proportion."""
        p, bits = self.ber, self.frames * self.n
        half = Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / bits) if bits else float("nan")
        return max(p - half, 0.0), min(p + half, 1.0)


@dataclass
class _Tally:
    frames: int = 0
    bit_errors: int = 0
    frame_errors: int = 0


def simulate_chunk(code: LinearCode, params: DecoderParams, cfg: EvalConfig, snr_index: int, chunk: int, frames: int, backend=None) -> _Tally:
    """Decode one chunk of frames drawn from the RNG stream keyed by
    (seed, snr index, chunk index)."""
    ebn0 = cfg.snr_list_db[snr_index]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(snr_index, chunk)))
    ch = ChannelConfig(ebn0, code.rate, cfg.seed)
    if cfg.all_zeros:
        truth = np.zeros((frames, code.n), dtype=np.uint8)
    else:
        truth = encode(code, rng.integers(0, 2, size=(frames, code.k), dtype=np.uint8))
    rx = transmit(ch, modulate_bpsk(truth), rng, truth)
    out, _ = decode(code, params, rx.llr, early_stop=cfg.early_stop, backend=backend, dtype=cfg.dtype)
    errs = (out.hard != truth).sum(axis=1)
    return _Tally(frames, int(errs.sum()), int((errs > 0).sum()))


def run_point(code, params, cfg: EvalConfig, snr_index: int, label: str = "", backend=None, pool=None) -> BerPoint:
    """Simulate one SNR until the stopping rule fires.

    Chunks are consumed in index order and the rule is checked after each
    one, so the result does not depend on the worker count.
    """
    tally = _Tally()
    chunk = 0
    censored = False

    def done():
        return tally.frames >= cfg.min_frames and tally.frame_errors >= cfg.min_frame_errors

    while not done():
        if tally.frames >= cfg.max_frames:
            censored = True
            break
        jobs, planned = [], tally.frames
        for _ in range(cfg.workers):
            size = min(cfg.chunk_frames, cfg.max_frames - planned)
            if size <= 0:
                break
            jobs.append((chunk, size))
            planned += size
            chunk += 1
        args = [(code, params, cfg, snr_index, c, s, backend) for c, s in jobs]
        results = pool.map(lambda a: simulate_chunk(*a), args) if pool is not None else map(lambda a: simulate_chunk(*a), args)
        for r in results:
            if done():
                break
            tally.frames += r.frames
            tally.bit_errors += r.bit_errors
            tally.frame_errors += r.frame_errors
    point = BerPoint(cfg.snr_list_db[snr_index], tally.frames, tally.bit_errors, tally.frame_errors, code.n, censored, label)
    if censored:
        log.warning("%s at %.2f dB censored at %d frames with %d frame errors", label, point.ebn0_db, point.frames, point.frame_errors)
    return point


def run_ber(code: LinearCode, params: DecoderParams, cfg: EvalConfig, label: str = "", backend=None, progress=None) -> list[BerPoint]:
    """BER/FER curve over ``cfg.snr_list_db``. Frames carry random encoded
    messages unless ``cfg.all_zeros``; errors are counted over all n bits."""
    params.validate(code)
    label = label or params.variant
    points = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for i in range(len(cfg.snr_list_db)):
            pt = run_point(code, params, cfg, i, label, backend, pool)
            points.append(pt)
            if progress is not None:
                progress(pt)
    finally:
        if pool is not None:
            pool.shutdown()
    return points


def write_ber_csv(path, points: list[BerPoint], manifest: str | None = None, append: bool = False) -> None:
    new = not (append and os.path.exists(path))
    with open(path, "a" if append else "w", newline="") as f:
        if manifest and new:
            f.write(f"# manifest: {manifest}\n")
        w = csv.writer(f)
        if new:
            w.writerow(BER_COLUMNS)
        for p in points:
            lo, hi = p.ci95
            w.writerow([p.label, p.ebn0_db, p.frames, p.bit_errors, p.frame_errors, repr(p.ber), repr(p.fer), repr(lo), repr(hi), int(p.censored)])


def read_ber_csv(path, n: int | None = None) -> dict[str, list[BerPoint]]:
    """Load a results CSV into curves keyed by label. The code length is
    recovered from ber = bit_errors / (frames n) unless given."""
    curves: dict[str, list[BerPoint]] = {}
    with open(path, newline="") as f:
        rows = csv.DictReader(line for line in f if not line.startswith("#"))
        for r in rows:
            frames, bits = int(r["frames"]), int(r["bit_errors"])
            nn = n
            if nn is None:
                ber = float(r["ber"])
                nn = round(bits / (ber * frames)) if ber > 0 else 1
            curves.setdefault(r["label"], []).append(
                BerPoint(float(r["ebn0_db"]), frames, bits, int(r["frame_errors"]), nn, bool(int(r["censored"])), r["label"])
            )
    return curves


# --- histograms ---------------------------------------------------------------------


@dataclass
class Histogram:
    iteration: int
    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def export_histograms(params: DecoderParams, bins: int = 20) -> list[Histogram]:
    """Per-iteration histograms of the offsets, each spanning that
    iteration's own min..max."""
    if not params.has_offsets:
        raise ConfigError("histograms need an offset decoder (oms/noms)")
    out = []
    for t, row in enumerate(params.offsets, start=1):
        counts, edges = np.histogram(row, bins=bins)
        out.append(Histogram(t, edges, counts))
    return out


def write_histograms(directory, hists: list[Histogram], stage: str | int = "final", manifest: str | None = None) -> list[str]:
    """Write ``iteration_<t>_<stage>.csv`` files with value,frequency rows."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for h in hists:
        path = os.path.join(directory, f"iteration_{h.iteration}_{stage}.csv")
        with open(path, "w", newline="") as f:
            if manifest:
                f.write(f"# manifest: {manifest}\n")
            w = csv.writer(f)
            w.writerow(["value", "frequency", "bin_lo", "bin_hi"])
            for c, n, lo, hi in zip(h.centers, h.counts, h.edges[:-1], h.edges[1:]):
                w.writerow([repr(float(c)), int(n), repr(float(lo)), repr(float(hi))])
        paths.append(path)
    return paths


# --- curve comparison ---------------------------------------------------------------


def snr_at_ber(points: list[BerPoint] | list[tuple[float, float]], target: float) -> float | None:
    """Eb/N0 where the curve first crosses ``target``, interpolating
    log10(BER) linearly between grid points. None when never crossed."""
    pts = sorted((p.ebn0_db, p.ber) if isinstance(p, BerPoint) else tuple(p) for p in points)
    lt = math.log10(target)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 <= 0 or b1 <= 0:
            continue
        l0, l1 = math.log10(b0), math.log10(b1)
        if l0 == lt:
            return s0
        if (l0 - lt) * (l1 - lt) <= 0 and l0 != l1:
            return s0 + (l0 - lt) / (l0 - l1) * (s1 - s0)
    if pts and pts[-1][1] == target:
        return pts[-1][0]
    return None


@dataclass
class GapReport:
    reference: str
    ratios: list[dict] = field(default_factory=list)
    gaps: list[dict] = field(default_factory=list)

    def text(self) -> str:
        lines = [f"reference: {self.reference}", "", f"{'label':<16}{'Eb/N0':>8}{'BER':>14}{'ratio':>10}"]
        for r in self.ratios:
            ratio = "n/a" if r["ratio"] is None else f"{r['ratio']:.3f}"
            lines.append(f"{r['label']:<16}{r['ebn0_db']:>8.2f}{r['ber']:>14.4e}{ratio:>10}")
        lines += ["", f"{'label':<16}{'target':>10}{'Eb/N0':>10}{'gap dB':>10}"]
        for g in self.gaps:
            snr = "n/a" if g["ebn0_db"] is None else f"{g['ebn0_db']:.3f}"
            gap = "undefined" if g["gap_db"] is None else f"{g['gap_db']:+.3f}"
            lines.append(f"{g['label']:<16}{g['target']:>10.1e}{snr:>10}{gap:>10}")
        return "\n".join(lines)

    def write_csv(self, path, manifest: str | None = None) -> None:
        with open(path, "w", newline="") as f:
            if manifest:
                f.write(f"# manifest: {manifest}\n")
            w = csv.writer(f)
            w.writerow(["kind", "label", "ebn0_db", "ber", "ratio", "target", "gap_db"])
            for r in self.ratios:
                w.writerow(["ratio", r["label"], r["ebn0_db"], r["ber"], "" if r["ratio"] is None else r["ratio"], "", ""])
            for g in self.gaps:
                w.writerow(["gap", g["label"], "" if g["ebn0_db"] is None else g["ebn0_db"], "", "", g["target"], "" if g["gap_db"] is None else g["gap_db"]])


def compare_curves(results: dict[str, list], targets=(1e-2, 1e-3, 1e-4), reference: str | None = None) -> GapReport:
    """BER ratios against a reference curve on the shared SNR grid and the dB
    gap at each BER target (positive: the curve needs less Eb/N0 than the
    reference)."""
    if len(results) < 2:
        raise ConfigError("need at least two curves")
    reference = reference or next(iter(results))
    norm = {k: sorted((p.ebn0_db, p.ber) if isinstance(p, BerPoint) else tuple(p) for p in v) for k, v in results.items()}
    ref = dict(norm[reference])
    grids = [set(s for s, _ in v) for v in norm.values()]
    common = sorted(set.intersection(*grids))
    if not common:
        raise ConfigError("curves share no SNR points")
    rep = GapReport(reference)
    for label, pts in norm.items():
        d = dict(pts)
        for s in common:
            rep.ratios.append({"label": label, "ebn0_db": s, "ber": d[s], "ratio": d[s] / ref[s] if ref[s] > 0 else None})
    for target in targets:
        s_ref = snr_at_ber(norm[reference], target)
        for label, pts in norm.items():
            s = snr_at_ber(pts, target)
            gap = None if s is None or s_ref is None else s_ref - s
            rep.gaps.append({"label": label, "target": target, "ebn0_db": s, "gap_db": gap})
    return rep
