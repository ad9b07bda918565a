"""Command-line entry point: ``neuralbp <subcommand> ...``.

Every command writes a JSON run manifest beside its outputs. Result files
carry a ``# manifest: <file>`` first line (CSV) or a ``manifest`` member
(checkpoints) pointing at it.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import platform
import sys
from dataclasses import asdict

import numpy as np

from . import __version__
from .channel import RNG_NAME, ChannelConfig, dump_frames_csv, modulate_bpsk, transmit
from .codes import AlistError, CodeError, code_from_spec, encode
from .evaluation import (
    EvalConfig,
    compare_curves,
    export_histograms,
    read_ber_csv,
    run_ber,
    write_ber_csv,
    write_histograms,
)
from .params import SCHEMES, ConfigError, DecoderParams, count_parameters, load_params
from .training import TrainConfig, TrainingError, train

log = logging.getLogger("neuralbp")


class UsageError(Exception):
    pass


# --- manifests ----------------------------------------------------------------------


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    def __init__(self, argv, command: str, config: dict, code=None, seed=None):
        self.data = {
            "argv": list(argv),
            "command": command,
            "config": config,
            "code": None if code is None else {"name": code.name, "n": code.n, "k": code.k, "edges": code.edge_count, "h_checksum": code.checksum},
            "seed": seed,
            "rng": RNG_NAME,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "started": _now(),
            "finished": None,
            "outputs": [],
        }

    def path_for(self, out: str) -> str:
        base = out.rstrip("/\\")
        return base + ".manifest.json"

    def write(self, out: str, outputs: list[str]) -> str:
        self.data["finished"] = _now()
        self.data["outputs"] = [os.path.basename(p) for p in outputs]
        path = self.path_for(out)
        with open(path, "w") as f:
            json.dump(self.data, f, indent=2, default=_jsonable)
            f.write("\n")
        return path


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.ndarray, tuple)):
        return list(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


# --- argument helpers ---------------------------------------------------------------


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1.0)
            a, b, step = parts
            if step <= 0 or b < a:
                raise ValueError
            count = int(round((b - a) / step)) + 1
            return tuple(round(a + i * step, 10) for i in range(count))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}; use a:b:step or a,b,c") from None


def _add_code_args(p):
    g = p.add_argument_group("code")
    g.add_argument("--code", help="alist path or bch:N:K[:cyclic], spc:N, hamming74, uncoded:N")
    g.add_argument("--bch", nargs=2, type=int, metavar=("N", "K"), help="shortcut for a BCH code")
    g.add_argument("--alist", help="parity-check matrix in alist format")
    g.add_argument("--h-form", choices=["systematic", "cyclic"], default="systematic", help="H layout for constructed BCH codes")


def _resolve_code(args, fallback: str | None = None):
    given = [x for x in (args.code, args.bch, args.alist) if x]
    if len(given) > 1:
        raise UsageError("give only one of --code, --bch, --alist")
    if args.bch:
        spec = f"bch:{args.bch[0]}:{args.bch[1]}:{args.h_form}"
    elif args.alist:
        spec = args.alist
    elif args.code:
        spec = args.code
        if spec.startswith("bch:") and spec.count(":") == 2:
            spec += f":{args.h_form}"
    elif fallback:
        spec = fallback
    else:
        raise UsageError("no code given (use --code, --bch or --alist)")
    if not spec.startswith(("bch:", "spc:", "uncoded:")) and spec != "hamming74" and not os.path.exists(spec):
        raise UsageError(f"code file not found: {spec}")
    return code_from_spec(spec), spec


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Load ``--config FILE`` values as defaults so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {known.config}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {known.config}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    dests = {a.dest for a in parser._actions}
    unknown = sorted(k for k in (key.replace("-", "_") for key in cfg) if k not in dests)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    conv = {}
    for k, v in cfg.items():
        k = k.replace("-", "_")
        if k in ("snr_set", "snr") and isinstance(v, str):
            v = parse_snr_range(v)
        conv[k] = v
    parser.set_defaults(**conv)


# --- subcommands --------------------------------------------------------------------


def cmd_code_info(args, argv) -> int:
    code, spec = _resolve_code(args)
    g = code.graph
    dv = np.bincount(g.vn_degrees)
    dc = np.bincount(g.cn_degrees)
    info = {
        "code": spec,
        "n": code.n,
        "k": code.k,
        "m": code.m,
        "rate": round(code.rate, 6),
        "E": code.edge_count,
        "vn_degrees": {int(d): int(c) for d, c in enumerate(dv) if c},
        "cn_degrees": {int(d): int(c) for d, c in enumerate(dc) if c},
        "noms_params_T5": count_parameters(code, "noms", 5),
        "nspa_params_T5": count_parameters(code, "nspa", 5),
        "h_checksum": code.checksum,
    }
    if args.kv:
        for k, v in info.items():
            if isinstance(v, dict):
                v = ",".join(f"{d}:{c}" for d, c in v.items())
            print(f"{k}={v}")
    else:
        width = max(map(len, info))
        for k, v in info.items():
            if isinstance(v, dict):
                v = "  ".join(f"d={d}: {c}" for d, c in v.items())
            print(f"{k:<{width}}  {v}")
    return 0


def cmd_train(args, argv) -> int:
    code, spec = _resolve_code(args)
    cfg = TrainConfig(
        minibatches=args.minibatches,
        batch_size=args.batch_size,
        snr_set_db=args.snr_set,
        learning_rate=args.lr,
        iterations=args.iterations,
        scheme=args.tying,
        init=args.init,
        seed=args.seed,
        eval_every=args.eval_every,
        loss_mode=args.loss_mode,
    )
    if args.variant == "nspa" and args.tying != "per-edge":
        raise UsageError("--tying applies to noms only")
    out = args.out
    _ensure_parent(out)
    manifest = RunManifest(argv, "train", {**asdict(cfg), "variant": args.variant, "code": spec}, code, cfg.seed)
    mpath = manifest.path_for(out)
    log_path = args.log or (os.path.splitext(out)[0] + ".log.csv")

    def progress(row):
        if args.verbose and row["minibatch"] % max(cfg.eval_every, 1) == 0:
            print(f"minibatch {row['minibatch']}  loss {row['mean_loss']:.5f}  |g| {row['grad_norm']:.4g}", file=sys.stderr)

    try:
        res = train(code, args.variant, cfg, checkpoint_path=out, log_path=log_path, resume_from=args.resume, progress=progress)
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        manifest.data["error"] = str(e)
        manifest.write(out, [out, log_path])
        return 3
    _annotate_npz(out, manifest=os.path.basename(mpath), code_spec=spec, heldout=np.array(res.heldout, dtype=float))
    manifest.data["heldout_loss"] = res.heldout
    manifest.write(out, [out, log_path])
    first, last = res.heldout[0][1], res.heldout[-1][1]
    print(f"trained {args.variant} on {code.name}: held-out loss {first:.5f} -> {last:.5f}; wrote {out}")
    return 0


def _annotate_npz(path, **extra):
    with np.load(path, allow_pickle=False) as z:
        data = {k: z[k] for k in z.files}
    data.update({k: np.asarray(v) for k, v in extra.items()})
    with open(path, "wb") as f:
        np.savez(f, **data)


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise UsageError(f"output directory does not exist: {parent}")


def _load_decoder(args, code):
    if args.params:
        if not os.path.exists(args.params):
            raise UsageError(f"parameter file not found: {args.params}")
        params, _ = load_params(args.params, code)
        return params, os.path.basename(args.params)
    T = args.iterations
    v = args.variant
    if v == "spa":
        return DecoderParams.spa(T), "spa"
    if v == "ms":
        return DecoderParams.min_sum(T), "ms"
    if v == "oms":
        return DecoderParams.oms(code, T, args.beta), f"oms(beta={args.beta:g})"
    if v == "nspa":
        return DecoderParams.nspa(code, T), "nspa(init)"
    raise UsageError(f"--variant {v} needs --params")


def _code_spec_from_params(path):
    if path and os.path.exists(path):
        with np.load(path, allow_pickle=False) as z:
            if "code_spec" in z.files:
                return str(z["code_spec"])
    return None


def cmd_evaluate(args, argv) -> int:
    code, spec = _resolve_code(args, fallback=_code_spec_from_params(args.params))
    params, default_label = _load_decoder(args, code)
    snrs = args.ebn0_list or args.snr
    cfg = EvalConfig(
        snr_list_db=snrs,
        min_frame_errors=args.min_frame_errors,
        min_frames=args.min_frames,
        max_frames=args.max_frames,
        seed=args.seed,
        workers=args.workers,
        chunk_frames=args.chunk_frames,
        all_zeros=args.all_zeros,
    )
    out = args.out
    _ensure_parent(out)
    label = args.label or default_label
    manifest = RunManifest(argv, "evaluate", {**asdict(cfg), "code": spec, "params": args.params, "variant": params.variant, "iterations": params.iterations, "label": label}, code, cfg.seed)
    mname = os.path.basename(manifest.path_for(out))

    def progress(p):
        flag = "  (censored)" if p.censored else ""
        print(f"{label}  {p.ebn0_db:5.2f} dB  frames {p.frames:>9d}  frame errors {p.frame_errors:>6d}  BER {p.ber:.4e}  FER {p.fer:.4e}{flag}")

    points = run_ber(code, params, cfg, label, progress=progress)
    write_ber_csv(out, points, manifest=mname)
    outputs = [out]
    if args.dump_frames:
        dump = _dump_frames(args.dump_frames, code, cfg)
        outputs.append(dump)
    manifest.write(out, outputs)
    return 0


def _dump_frames(path, code, cfg: EvalConfig, count: int = 10):
    """Write the first few received frames of the first SNR point for inspection."""
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(0, 0))
    rng = np.random.default_rng(ss)
    ch = ChannelConfig(cfg.snr_list_db[0], code.rate, cfg.seed)
    if cfg.all_zeros:
        bits = np.zeros((count, code.n), dtype=np.uint8)
    else:
        bits = encode(code, rng.integers(0, 2, size=(count, code.k), dtype=np.uint8))
    frames = transmit(ch, modulate_bpsk(bits), rng, truth_bits=bits)
    dump_frames_csv(path, frames)
    return path


def cmd_histogram(args, argv) -> int:
    if not os.path.exists(args.params):
        raise UsageError(f"parameter file not found: {args.params}")
    params, _ = load_params(args.params)
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(argv, "histogram", {"params": args.params, "bins": args.bins, "stage": args.stage}, None, None)
    mname = os.path.basename(manifest.path_for(os.path.join(args.out, "histograms")))
    paths = write_histograms(args.out, export_histograms(params, args.bins), args.stage, manifest=mname)
    manifest.write(os.path.join(args.out, "histograms"), paths)
    print(f"wrote {len(paths)} histogram files to {args.out}")
    return 0


def cmd_compare(args, argv) -> int:
    curves = {}
    for path in args.results:
        if not os.path.exists(path):
            raise UsageError(f"results file not found: {path}")
        for label, pts in read_ber_csv(path).items():
            key = label if label not in curves else f"{label}@{os.path.basename(path)}"
            curves[key] = pts
    if len(curves) < 2:
        raise UsageError("compare needs at least two curves")
    rep = compare_curves(curves, tuple(args.targets), args.reference)
    print(rep.text())
    if args.out:
        _ensure_parent(args.out)
        manifest = RunManifest(argv, "compare", {"results": args.results, "targets": args.targets, "reference": rep.reference})
        rep.write_csv(args.out, manifest=os.path.basename(manifest.path_for(args.out)))
        manifest.write(args.out, [args.out])
    return 0


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuralbp", description="Neural offset min-sum decoding: training and BER simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    ci = sub.add_parser("code-info", help="summarise a code and its Tanner graph")
    _add_code_args(ci)
    ci.add_argument("--kv", action="store_true", help="key=value output")
    ci.set_defaults(func=cmd_code_info)

    tr = sub.add_parser("train", help="train a NOMS or neural SPA decoder")
    _add_code_args(tr)
    tr.add_argument("--config", help="JSON file with option values; flags override it")
    tr.add_argument("--variant", choices=["noms", "nspa"], default="noms")
    tr.add_argument("--iterations", type=int, default=5)
    tr.add_argument("--minibatches", type=int, default=20_000)
    tr.add_argument("--batch-size", type=int, default=120)
    tr.add_argument("--lr", type=float, default=0.1)
    tr.add_argument("--tying", choices=SCHEMES, default="per-edge")
    tr.add_argument("--snr-set", type=parse_snr_range, default=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0))
    tr.add_argument("--loss-mode", choices=["all", "final"], default="all")
    tr.add_argument("--init", default="normal", help="'normal' or a constant offset")
    tr.add_argument("--eval-every", type=int, default=100)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--resume", help="continue from a checkpoint")
    tr.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    tr.add_argument("--out", required=True, help="checkpoint path (.npz)")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="Monte-Carlo BER/FER simulation")
    _add_code_args(ev)
    ev.add_argument("--config", help="JSON file with option values; flags override it")
    ev.add_argument("--params", help="trained parameter or checkpoint file")
    ev.add_argument("--variant", choices=["spa", "ms", "oms", "nspa"], default="spa", help="classical decoder when --params is absent")
    ev.add_argument("--beta", type=float, default=0.5, help="offset for --variant oms")
    ev.add_argument("--iterations", type=int, default=5)
    ev.add_argument("--snr", type=parse_snr_range, default=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0), help="a:b:step or list")
    ev.add_argument("--ebn0-list", type=parse_snr_range, help="alias of --snr")
    ev.add_argument("--min-frame-errors", type=int, default=100)
    ev.add_argument("--min-frames", type=int, default=100_000)
    ev.add_argument("--max-frames", type=int, default=100_000_000)
    ev.add_argument("--chunk-frames", type=int, default=2000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--all-zeros", action="store_true", help="transmit the all-zeros codeword")
    ev.add_argument("--label")
    ev.add_argument("--dump-frames", metavar="CSV", help="also write a few received frames")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    hi = sub.add_parser("histogram", help="per-iteration offset histograms")
    hi.add_argument("--params", required=True)
    hi.add_argument("--bins", type=int, default=20)
    hi.add_argument("--stage", default="final", help="tag in the file names, e.g. init or final")
    hi.add_argument("--out", required=True, help="output directory")
    hi.set_defaults(func=cmd_histogram)

    co = sub.add_parser("compare", help="BER ratios and dB gaps between result files")
    co.add_argument("results", nargs="+")
    co.add_argument("--reference", help="label of the reference curve (default: first)")
    co.add_argument("--targets", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    co.add_argument("--out", help="CSV report")
    co.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if argv and argv[0] in ("train", "evaluate"):
            sub = parser._subparsers._group_actions[0].choices[argv[0]]
            _apply_config_file(sub, argv[1:])
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        if args.verbose:
            logging.getLogger("neuralbp").setLevel(logging.INFO)
        return args.func(args, ["neuralbp", *argv])
    except (UsageError, ConfigError, CodeError, AlistError, argparse.ArgumentTypeError) as e:
        print(f"neuralbp: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
