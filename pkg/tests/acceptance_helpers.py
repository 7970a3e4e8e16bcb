"""Shared pipeline driver for the acceptance suite.

Builds (and caches per session) the balanced corpus, the trained codec, and
the trained generator used by the training-dependent criteria, plus the
styled-generation measurements the controllability checks read.
"""

import os

import numpy as np

from captalk.codec import (
    CodecConfig,
    collect_windows,
    train_codec,
)
from captalk.conditioning import CaptionTimeline, encode_audio_builtin
from captalk.generator import (
    GeneratorConfig,
    build_ar_dataset,
    generate,
    train_ar,
)
from captalk.head_model import decode_sequence, make_toy_head_model
from captalk.metrics import lip_open_distances, rotation_std
from captalk.synthdata import (
    emotion_caption_text,
    style_caption_text,
    synth_clip,
    synth_corpus,
)

CORPUS_SEED = 2026
CORPUS_CLIPS = 32
CLIP_SECONDS = 8.0
CODEC_SEED = 11
CODEC_ITERS = 3000
CODEC_LR = 1.5e-3
CODEC_BATCH = 2
AR_SEED = 12
AR_ITERS = 5000
AR_LR = 1e-3
AR_BATCH = 2
EVAL_SEED_BASE = 77000  # held-out audio seeds, disjoint from the corpus
EVAL_CLIPS = 8


def toy_head():
    return make_toy_head_model(0, n_vertices=50, n_shape=5, n_expr=10, n_pose_corr=3)


def build_corpus(root: str):
    out = os.path.join(root, "corpus")
    manifest = synth_corpus(CORPUS_SEED, CORPUS_CLIPS, out, duration_s=CLIP_SECONDS)
    return out, manifest


def train_pipeline(corpus_dir: str, head, codec_iters=CODEC_ITERS, ar_iters=AR_ITERS):
    import time

    t0 = time.monotonic()
    cfg = CodecConfig()
    codec_model, codec_log = train_codec(
        corpus_dir, cfg, head, seed=CODEC_SEED, iters=codec_iters, lr=CODEC_LR,
        batch=CODEC_BATCH, weight_decay=1e-4,
    )
    codec_seconds = time.monotonic() - t0

    t0 = time.monotonic()
    gcfg = GeneratorConfig()
    _, windows = collect_windows(corpus_dir, cfg)
    dataset = build_ar_dataset(windows, codec_model, cfg, gcfg)
    gen_model, ar_log = train_ar(
        dataset, gcfg, seed=AR_SEED, iters=ar_iters, lr=AR_LR, batch=AR_BATCH,
        weight_decay=1e-4,
    )
    ar_seconds = time.monotonic() - t0
    timings = {"codec_seconds": codec_seconds, "ar_seconds": ar_seconds}
    return codec_model, cfg, codec_log, gen_model, gcfg, ar_log, dataset, timings


def held_out_audio(index: int):
    """Audio features for an unseen clip seed (style of the clip is irrelevant;
    the waveform does not encode style amplitudes)."""
    clip = synth_clip([EVAL_SEED_BASE, index], CLIP_SECONDS, "small", "still",
                      "neutral")
    return encode_audio_builtin(clip.waveform)


def styled_timeline(mouth: str, head_style: str, emotion: str = "neutral"):
    return CaptionTimeline.constant(
        style_caption_text(mouth, head_style), emotion_caption_text(emotion)
    )


def lip_open_std(motion, head) -> float:
    verts = decode_sequence(head, motion)
    return float(
        lip_open_distances(verts, head.upper_lip_vertex, head.lower_lip_vertex).std()
    )


def rotation_std_mean(motion) -> float:
    return float(rotation_std(motion).mean())


def controllability_measurements(gen_model, gcfg, codec_model, codec_cfg, head,
                                 n_clips=EVAL_CLIPS, temperature=1.0):
    """Generate with contrasting captions on identical audio and seeds.

    Returns per-clip dicts of lip-open std and rotation std per setting.
    """
    rows = []
    for i in range(n_clips):
        audio = held_out_audio(i)
        seed = 500 + i
        row = {}
        for label, (mouth, head_style) in {
            "large": ("large", "still"),
            "small": ("small", "still"),
            "lively": ("small", "lively"),
            "still": ("small", "still"),
        }.items():
            result = generate(
                gen_model, gcfg, codec_model, codec_cfg, audio,
                styled_timeline(mouth, head_style), seed=seed,
                temperature=temperature,
            )
            row[label] = {
                "lip_std": lip_open_std(result.motion, head),
                "rot_std": rotation_std_mean(result.motion),
            }
        rows.append(row)
    return rows


def timeline_window_stds(gen_model, gcfg, codec_model, codec_cfg, head,
                         n_seeds=8, temperature=1.0):
    """Large-then-small caption switch at the window boundary; returns
    (window-1 lip std, window-2 lip std) per seed."""
    w = gcfg.window
    timeline = CaptionTimeline([
        (0, style_caption_text("large", "still"), emotion_caption_text("neutral")),
        (w, style_caption_text("small", "still"), emotion_caption_text("neutral")),
    ])
    pairs = []
    for i in range(n_seeds):
        audio = held_out_audio(100 + i)
        result = generate(gen_model, gcfg, codec_model, codec_cfg, audio, timeline,
                          seed=900 + i, temperature=temperature)
        first = result.motion.window(0, w)
        second = result.motion.window(w, result.motion.n_frames - w)
        pairs.append((lip_open_std(first, head), lip_open_std(second, head)))
    return pairs
