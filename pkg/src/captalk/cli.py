"""Command-line interface.

Exit codes: 0 success, 2 usage errors, 3 IO/format problems, 4 model or
configuration incompatibilities. Every subcommand taking --seed is fully
reproducible: rerunning with identical arguments produces byte-identical
output files.
"""

import os

# Cap kernel threading before numpy loads; single-threaded BLAS keeps
# results bit-reproducible across runs (override via CAPTALK_THREADS).
_threads = os.environ.get("CAPTALK_THREADS", "1")
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

import argparse
import json
import sys

import numpy as np

from . import codec as codec_mod
from . import generator as gen_mod
from . import metrics as metrics_mod
from .conditioning import (
    AudioFeatureSequence,
    CaptionTimeline,
    encode_audio_builtin,
    load_external_embedding,
    load_timeline,
    read_wav,
)
from .errors import CapTalkError, ConfigError, FormatError
from .head_model import (
    MotionSequence,
    load_head_model,
    load_motion,
    make_toy_head_model,
    save_head_model,
    save_motion,
)
from .synthdata import load_manifest, synth_corpus, window_iterator


def _write_log_csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    manifest = synth_corpus(args.seed, args.clips, args.out,
                            duration_s=args.duration)
    path = os.path.join(args.out, "manifest.json")
    print(f"wrote {len(manifest['clips'])} clips; manifest at {path}")
    return 0


def cmd_train_codec(args) -> int:
    manifest = load_manifest(args.data)
    cfg = codec_mod.CodecConfig(
        n_expr=manifest["n_expr"], n_pose=manifest["n_pose"],
        window=args.window, scale_lengths=tuple(args.scales),
        code_dim=args.code_dim, dim=args.dim, layers=args.layers,
        heads=args.heads, w_full=args.w_full, w_lips=args.w_lips,
        beta_commit=args.beta_commit,
    )
    if args.head_model:
        head = load_head_model(args.head_model)
    else:
        head = make_toy_head_model(args.head_seed, n_vertices=args.head_vertices,
                                   n_expr=cfg.n_expr,
                                   n_pose_corr=cfg.n_pose - 3)
    model, log = codec_mod.train_codec(
        args.data, cfg, head, seed=args.seed, iters=args.iters, lr=args.lr,
        batch=args.batch, weight_decay=args.weight_decay,
    )
    codec_mod.save_codec_checkpoint(args.out, model, cfg, head, args.seed)
    _write_log_csv(args.out + ".log.csv", "iter,loss,l1,full_vertex,lip_vertex,vq", log)
    if args.head_out:
        save_head_model(args.head_out, head)
    final = log[-1][1] if log else float("nan")
    print(f"codec checkpoint at {args.out}.json / {args.out}.ctten; final loss {final!r}")
    return 0


def cmd_train_ar(args) -> int:
    codec_model, codec_cfg, head = codec_mod.load_codec_checkpoint(args.codec)
    scales = tuple(args.scales) if args.scales else tuple(codec_cfg.scale_lengths)
    code_dim = args.code_dim if args.code_dim else codec_cfg.code_dim
    gcfg = gen_mod.GeneratorConfig(
        scale_lengths=scales, code_dim=code_dim, dim=args.dim,
        layers=args.layers, heads=args.heads,
        context_tokens=args.context_tokens, flip_prob=args.flip_prob,
        cond_drop_prob=args.cond_drop_prob,
    )
    gen_mod.check_compatible(codec_cfg, gcfg)
    manifest = load_manifest(args.data)
    windows = list(window_iterator(manifest, args.data, gcfg.window, gcfg.window))
    dataset = gen_mod.build_ar_dataset(windows, codec_model, codec_cfg, gcfg)
    model, log = gen_mod.train_ar(
        dataset, gcfg, seed=args.seed, iters=args.iters, lr=args.lr,
        batch=args.batch, weight_decay=args.weight_decay,
    )
    gen_mod.save_ar_checkpoint(args.out, model, gcfg, args.seed)
    _write_log_csv(args.out + ".log.csv", "iter,loss,bit_accuracy", log)
    final = log[-1] if log else (0, float("nan"), float("nan"))
    print(
        f"generator checkpoint at {args.out}.json / {args.out}.ctten; "
        f"final loss {final[1]!r}, bit accuracy {final[2]!r}"
    )
    return 0


def _load_audio(path: str) -> AudioFeatureSequence:
    if path.endswith(".ctten"):
        loaded = load_external_embedding(path)
        if not isinstance(loaded, AudioFeatureSequence):
            raise FormatError(f"{path} does not declare kind=audio")
        return loaded
    return encode_audio_builtin(read_wav(path))


def cmd_generate(args, parser: argparse.ArgumentParser) -> int:
    inline = args.style is not None or args.emotion is not None
    if args.timeline and inline:
        parser.error("use either --style/--emotion or --timeline, not both")
    if not args.timeline and not (args.style is not None and args.emotion is not None):
        parser.error("captions required: --style and --emotion, or --timeline FILE")
    timeline = (load_timeline(args.timeline) if args.timeline
                else CaptionTimeline.constant(args.style, args.emotion))

    codec_model, codec_cfg, _head = codec_mod.load_codec_checkpoint(args.codec)
    gen_model, gcfg = gen_mod.load_ar_checkpoint(args.ar)
    gen_mod.check_compatible(codec_cfg, gcfg)
    audio = _load_audio(args.audio)

    result = gen_mod.generate(gen_model, gcfg, codec_model, codec_cfg, audio,
                              timeline, seed=args.seed,
                              temperature=args.temperature)
    save_motion(args.out, result.motion)
    print(f"{result.motion.n_frames} frames -> {args.out}")
    for start, style, emotion in result.window_captions:
        end = start + gcfg.window
        print(f"window frames [{start},{end}): style={style!r} emotion={emotion!r}")
    return 0


def cmd_roundtrip(args) -> int:
    codec_model, codec_cfg, head = codec_mod.load_codec_checkpoint(args.codec)
    motion = load_motion(args.infile)
    if motion.n_channels != codec_cfg.n_channels:
        raise ConfigError(
            f"motion channels {motion.n_channels} != codec {codec_cfg.n_channels}"
        )
    w = codec_cfg.window
    feats = motion.features()
    n = feats.shape[0]
    n_windows = -(-n // w)
    padded = np.concatenate(
        [feats, np.tile(feats[-1:], (n_windows * w - n, 1))], axis=0
    )
    from .head_model import decode_sequence
    from .metrics import mhd

    recon_parts = []
    rows = []
    for k in range(n_windows):
        chunk = MotionSequence.from_features(
            padded[k * w:(k + 1) * w], codec_cfg.n_expr,
            shape=motion.shape, fps=motion.fps,
        )
        code = codec_mod.encode_window_codes(codec_model, codec_cfg, chunk)
        rec = codec_mod.decode_codes(codec_model, codec_cfg, code)
        recon_parts.append(rec)
        rec_motion = MotionSequence.from_features(rec, codec_cfg.n_expr,
                                                  shape=motion.shape, fps=motion.fps)
        vt_gt = decode_sequence(head, chunk)
        vt_rec = decode_sequence(head, rec_motion)
        lips = head.lip_indices
        rows.append({
            "index": k,
            "start_frame": k * w,
            "l1": float(np.mean(np.abs(rec - padded[k * w:(k + 1) * w]))),
            "full_vertex": float(np.mean((vt_rec - vt_gt) ** 2)),
            "lip_vertex": float(np.mean((vt_rec[:, lips] - vt_gt[:, lips]) ** 2)),
        })
    recon = np.concatenate(recon_parts, axis=0)[:n]
    save_motion(args.out, MotionSequence.from_features(
        recon, codec_cfg.n_expr, shape=motion.shape, fps=motion.fps))
    report = {
        "windows": rows,
        "mean_l1": float(np.mean([r["l1"] for r in rows])),
        "mean_full_vertex": float(np.mean([r["full_vertex"] for r in rows])),
        "mean_lip_vertex": float(np.mean([r["lip_vertex"] for r in rows])),
        "frames": n,
    }
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"roundtrip mean L1 {report['mean_l1']!r} over {n_windows} windows")
    return 0


def cmd_evaluate(args) -> int:
    report = metrics_mod.evaluate(args.pred, args.gt, args.head_model,
                                  allow_frame_mismatch=args.truncate)
    metrics_mod.save_report(args.out, report)
    print(json.dumps(report.to_dict()))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _csv_ints(text: str):
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="captalk",
        description="Caption-controllable speech-to-head-motion pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic styled-talking corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clips", type=int, default=16, help="number of clips (default 16)")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (default 0)")
    p.add_argument("--duration", type=float, default=8.0,
                   help="seconds per clip (default 8.0)")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-codec", help="train the motion codec")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="checkpoint prefix")
    p.add_argument("--iters", type=int, default=3000, help="optimizer steps (default 3000)")
    p.add_argument("--lr", type=float, default=1e-4, help="peak learning rate (default 1e-4)")
    p.add_argument("--batch", type=int, default=1, help="windows per step (default 1)")
    p.add_argument("--weight-decay", type=float, default=1e-4, help="AdamW decay (default 1e-4)")
    p.add_argument("--seed", type=int, default=0, help="training seed (default 0)")
    p.add_argument("--window", type=int, default=100, help="window frames (default 100)")
    p.add_argument("--scales", type=_csv_ints, default=[1, 5, 25, 50, 100],
                   help="scale lengths CSV (default 1,5,25,50,100)")
    p.add_argument("--code-dim", type=int, default=32, help="code bits (default 32)")
    p.add_argument("--dim", type=int, default=64, help="model width (default 64)")
    p.add_argument("--layers", type=int, default=2, help="encoder/decoder layers (default 2)")
    p.add_argument("--heads", type=int, default=4, help="attention heads (default 4)")
    p.add_argument("--w-full", type=float, default=1.0, help="full vertex weight (default 1.0)")
    p.add_argument("--w-lips", type=float, default=2.0, help="lip vertex weight (default 2.0)")
    p.add_argument("--beta-commit", type=float, default=0.25,
                   help="commitment weight (default 0.25)")
    p.add_argument("--head-model", help="head model JSON (default: toy model)")
    p.add_argument("--head-seed", type=int, default=0, help="toy head seed (default 0)")
    p.add_argument("--head-vertices", type=int, default=50,
                   help="toy head vertex count (default 50)")
    p.add_argument("--head-out", help="also write the head model JSON here")
    p.set_defaults(func=cmd_train_codec)

    p = sub.add_parser("train-ar", help="train the caption-conditioned generator")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--codec", required=True, help="codec checkpoint prefix")
    p.add_argument("--out", required=True, help="checkpoint prefix")
    p.add_argument("--iters", type=int, default=3000, help="optimizer steps (default 3000)")
    p.add_argument("--lr", type=float, default=1e-4, help="peak learning rate (default 1e-4)")
    p.add_argument("--batch", type=int, default=1, help="windows per step (default 1)")
    p.add_argument("--weight-decay", type=float, default=1e-4, help="AdamW decay (default 1e-4)")
    p.add_argument("--seed", type=int, default=0, help="training seed (default 0)")
    p.add_argument("--flip-prob", type=float, default=0.1,
                   help="teacher-input bit flip probability (default 0.1)")
    p.add_argument("--cond-drop-prob", type=float, default=0.1,
                   help="condition dropout probability (default 0.1)")
    p.add_argument("--dim", type=int, default=64, help="model width (default 64)")
    p.add_argument("--layers", type=int, default=2, help="layers (default 2)")
    p.add_argument("--heads", type=int, default=4, help="attention heads (default 4)")
    p.add_argument("--context-tokens", type=int, default=25,
                   help="previous-window summary tokens (default 25)")
    p.add_argument("--scales", type=_csv_ints, default=None,
                   help="scale lengths CSV (default: from the codec)")
    p.add_argument("--code-dim", type=int, default=None,
                   help="code bits (default: from the codec)")
    p.set_defaults(func=cmd_train_ar)

    p = sub.add_parser("generate", help="generate motion from audio and captions")
    p.add_argument("--codec", required=True, help="codec checkpoint prefix")
    p.add_argument("--ar", required=True, help="generator checkpoint prefix")
    p.add_argument("--audio", required=True, help="WAV file or .ctten audio embedding")
    p.add_argument("--style", help="style caption text")
    p.add_argument("--emotion", help="emotion caption text")
    p.add_argument("--timeline", help="caption timeline JSON")
    p.add_argument("--out", required=True, help="output motion JSON")
    p.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    p.add_argument("--temperature", type=float, default=1.0,
                   help="sampling temperature; 0 thresholds (default 1.0)")
    p.set_defaults(func=None)  # wired in main: needs the parser for usage errors

    p = sub.add_parser("roundtrip", help="encode and decode a motion file")
    p.add_argument("--codec", required=True, help="codec checkpoint prefix")
    p.add_argument("--in", dest="infile", required=True, help="input motion JSON")
    p.add_argument("--out", required=True, help="reconstructed motion JSON")
    p.add_argument("--report", required=True, help="per-window error report JSON")
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("evaluate", help="compute metrics between two motion files")
    p.add_argument("--pred", required=True, help="predicted motion JSON")
    p.add_argument("--gt", required=True, help="ground-truth motion JSON")
    p.add_argument("--head-model", required=True, help="head model JSON")
    p.add_argument("--out", required=True, help="metric report JSON")
    p.add_argument("--truncate", action="store_true",
                   help="truncate to the shorter motion instead of failing")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args, parser)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (CapTalkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
