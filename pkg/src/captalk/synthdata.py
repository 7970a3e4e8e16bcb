"""Deterministic synthetic "styled talking" clips.

Each clip pairs a harmonic-tone waveform (amplitude-modulated by a random
syllable envelope) with a motion track whose mouth-open coefficient follows
the same envelope scaled by the mouth style, whose global rotation is
smoothed noise scaled by the head style, and whose remaining expression
channels carry a fixed per-emotion offset. Captions are rendered from a
fixed template vocabulary, so caption -> style is bijective over the grid.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .conditioning import (
    AudioFeatureSequence,
    encode_audio_builtin,
    read_wav,
    write_wav,
)
from .errors import ConfigError, FormatError
from .head_model import MotionSequence, load_motion, save_motion

FPS = 25
SAMPLES_PER_FRAME = 640  # 16000 / 25

MOUTH_AMP = {"small": 0.5, "large": 1.5}
HEAD_AMP = {"still": 0.05, "lively": 0.3}
EMOTIONS = ("neutral", "happy", "sad", "angry")

# Offsets land on non-mouth expression channels (channel 0 is mouth-open).
_EMOTION_OFFSETS = {
    "neutral": {},
    "happy": {1: 0.35, 2: 0.15},
    "sad": {1: -0.3, 3: 0.2},
    "angry": {2: -0.25, 4: 0.3},
}

_MOUTH_PHRASE = {"small": "opens the mouth slightly", "large": "opens the mouth wide"}
_HEAD_PHRASE = {"still": "keeps the head still", "lively": "moves the head a lot"}


def style_caption_text(mouth: str, head: str) -> str:
    return f"the speaker {_MOUTH_PHRASE[mouth]} and {_HEAD_PHRASE[head]}"


def emotion_caption_text(emotion: str) -> str:
    return f"the voice sounds {emotion}"


def emotion_offset(emotion: str, n_expr: int) -> np.ndarray:
    if emotion not in _EMOTION_OFFSETS:
        raise ConfigError(f"unknown emotion {emotion!r}")
    if n_expr < 5:
        raise ConfigError("synthetic clips need at least 5 expression channels")
    vec = np.zeros(n_expr)
    for channel, value in _EMOTION_OFFSETS[emotion].items():
        vec[channel] = value
    return vec


@dataclass
class SynthClip:
    waveform: np.ndarray
    motion: MotionSequence
    style_caption: str
    emotion_caption: str
    style_params: dict


def _syllable_envelope(rng: np.random.Generator, n_frames: int) -> np.ndarray:
    """Bursts of raised-cosine syllables separated by exact-zero gaps."""
    env = np.zeros(n_frames)
    pos = 0
    while pos < n_frames:
        # a phrase of a few syllables, then a silent gap
        for _ in range(int(rng.integers(2, 6))):
            length = int(rng.integers(4, 10))
            amp = rng.uniform(0.5, 1.0)
            idx = np.arange(min(length, n_frames - pos))
            env[pos:pos + idx.size] = amp * np.sin(np.pi * (idx + 0.5) / length) ** 2
            pos += length
            if pos >= n_frames:
                break
        pos += int(rng.integers(3, 9))
    return env


def _smoothed_noise(rng: np.random.Generator, n_frames: int, dims: int = 3) -> np.ndarray:
    noise = rng.normal(size=(n_frames + 16, dims))
    kernel = np.hanning(9)
    kernel /= kernel.sum()
    smooth = np.stack(
        [np.convolve(noise[:, d], kernel, mode="same") for d in range(dims)], axis=1
    )
    return smooth[8:8 + n_frames]


def synth_clip(seed: int, duration_s: float, mouth: str = "small",
               head: str = "still", emotion: str = "neutral",
               n_expr: int = 10, n_pose: int = 6) -> SynthClip:
    """Deterministic clip; the RNG stream depends only on the seed, so the
    same seed with a different style scales (never reshapes) the motion."""
    if duration_s < 4.0:
        raise ConfigError(f"clip duration {duration_s} s < 4 s minimum")
    if mouth not in MOUTH_AMP or head not in HEAD_AMP:
        raise ConfigError(f"unknown style ({mouth!r}, {head!r})")
    rng = np.random.default_rng(seed)
    n_frames = int(duration_s * FPS)

    # Fixed draw order: envelope, head noise, voice parameters.
    envelope = _syllable_envelope(rng, n_frames)
    head_noise = _smoothed_noise(rng, n_frames)
    f0 = rng.uniform(100.0, 160.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    mouth_amp = MOUTH_AMP[mouth]
    head_amp = HEAD_AMP[head]
    offset = emotion_offset(emotion, n_expr)

    expr = np.tile(offset, (n_frames, 1))
    expr[:, 0] = mouth_amp * envelope
    pose = np.zeros((n_frames, n_pose))
    pose[:, :3] = head_amp * head_noise

    n_samples = n_frames * SAMPLES_PER_FRAME
    t = np.arange(n_samples) / (FPS * SAMPLES_PER_FRAME)
    env_audio = np.interp(
        np.arange(n_samples) / SAMPLES_PER_FRAME, np.arange(n_frames) + 0.5, envelope,
        left=0.0, right=0.0,
    )
    tone = (
        0.55 * np.sin(2 * np.pi * f0 * t + phase)
        + 0.3 * np.sin(4 * np.pi * f0 * t + 2 * phase)
        + 0.15 * np.sin(6 * np.pi * f0 * t)
    )
    waveform = 0.6 * env_audio * tone

    return SynthClip(
        waveform=waveform,
        motion=MotionSequence(expr=expr, pose=pose, shape=np.zeros(0), fps=float(FPS)),
        style_caption=style_caption_text(mouth, head),
        emotion_caption=emotion_caption_text(emotion),
        style_params={
            "mouth_amp": mouth_amp,
            "head_amp": head_amp,
            "emotion_offset": offset.tolist(),
            "mouth": mouth,
            "head": head,
            "emotion": emotion,
        },
    )


def style_grid():
    """Balanced (mouth, head, emotion) combinations, fixed order."""
    return [
        (mouth, head, emotion)
        for mouth in ("small", "large")
        for head in ("still", "lively")
        for emotion in EMOTIONS
    ]


def clip_seed(corpus_seed: int, index: int) -> list:
    return [corpus_seed, index]


def synth_corpus(seed: int, n_clips: int, out_dir: str,
                 duration_s: float = 8.0, n_expr: int = 10, n_pose: int = 6) -> dict:
    """Write WAV + motion + caption files plus a manifest with corpus stats."""
    if n_clips < 1:
        raise ConfigError("corpus needs at least one clip")
    os.makedirs(out_dir, exist_ok=True)
    grid = style_grid()
    clips = []
    all_features = []
    for i in range(n_clips):
        mouth, head, emotion = grid[i % len(grid)]
        clip = synth_clip(clip_seed(seed, i), duration_s, mouth, head, emotion,
                          n_expr=n_expr, n_pose=n_pose)
        stem = f"clip_{i:03d}"
        write_wav(os.path.join(out_dir, stem + ".wav"), clip.waveform)
        save_motion(os.path.join(out_dir, stem + ".motion.json"), clip.motion)
        with open(os.path.join(out_dir, stem + ".captions.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"style": clip.style_caption, "emotion": clip.emotion_caption}, fh)
            fh.write("\n")
        all_features.append(clip.motion.features())
        clips.append({
            "index": i,
            "wav": stem + ".wav",
            "motion": stem + ".motion.json",
            "captions": stem + ".captions.json",
            "style_caption": clip.style_caption,
            "emotion_caption": clip.emotion_caption,
            "style_params": clip.style_params,
            "frames": clip.motion.n_frames,
        })
    stacked = np.concatenate(all_features, axis=0)
    std_per_channel = stacked.std(axis=0)
    manifest = {
        "version": 1,
        "seed": seed,
        "fps": FPS,
        "duration_s": duration_s,
        "n_expr": n_expr,
        "n_pose": n_pose,
        "clips": clips,
        "motion_std_per_channel": std_per_channel.tolist(),
        "motion_std_mean": float(std_per_channel.mean()),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(data_dir: str) -> dict:
    path = os.path.join(data_dir, "manifest.json")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad manifest {path}: {exc}") from exc


@dataclass
class WindowSample:
    """One aligned training window plus its clip-level context."""

    motion: MotionSequence          # window frames
    audio: AudioFeatureSequence     # features inside the window span
    style_caption: str
    emotion_caption: str
    clip_index: int
    window_index: int               # position within the clip
    start_frame: int
    clip_audio: AudioFeatureSequence


def window_iterator(manifest: dict, data_dir: str, window: int, stride: int):
    """Yield aligned (motion, audio, captions) windows across the corpus."""
    if stride < 1:
        raise ConfigError("stride must be positive")
    for entry in manifest["clips"]:
        motion = load_motion(os.path.join(data_dir, entry["motion"]))
        if motion.n_frames < window:
            warnings.warn(
                f"clip {entry['index']} has {motion.n_frames} frames < window {window}; skipped"
            )
            continue
        waveform = read_wav(os.path.join(data_dir, entry["wav"]))
        clip_audio = encode_audio_builtin(waveform)
        w = 0
        for start in range(0, motion.n_frames - window + 1, stride):
            yield WindowSample(
                motion=motion.window(start, window),
                audio=clip_audio.slice_frames(start, start + window),
                style_caption=entry["style_caption"],
                emotion_caption=entry["emotion_caption"],
                clip_index=entry["index"],
                window_index=w,
                start_frame=start,
                clip_audio=clip_audio,
            )
            w += 1
