"""Audio and text conditioning features.

Built-in encoders are deterministic stand-ins for large pretrained models:
audio becomes log mel-filterbank energies at 50 features/s, captions become
per-token pseudo-random unit vectors seeded by a stable token hash.
Precomputed embeddings from real encoders can be loaded from ".ctten"
files with a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
import wave
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import FormatError, ShapeError
from .tensor_io import read_ctten

VIDEO_FPS = 25.0
AUDIO_SAMPLE_RATE = 16000
AUDIO_HOP = 320           # 50 features per second
AUDIO_WIN = 640
AUDIO_BANDS = 16
AUDIO_LOG_FLOOR = 1e-10
TEXT_DIM = 32
TEXT_SEED = 1234
NULL_TOKEN = "<null>"


# ---------------------------------------------------------------------------
# WAV I/O (PCM16 mono 16 kHz only)
# ---------------------------------------------------------------------------

def read_wav(path: str) -> np.ndarray:
    """Samples scaled to [-1, 1]. Anything but PCM16/mono/16kHz is rejected."""
    try:
        with wave.open(path, "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n = fh.getnframes()
            raw = fh.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"unreadable WAV file {path}: {exc}") from exc
    if channels != 1:
        raise FormatError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit PCM, got sample width {width}")
    if rate != AUDIO_SAMPLE_RATE:
        raise FormatError(f"{path}: expected {AUDIO_SAMPLE_RATE} Hz, got {rate}")
    if n == 0:
        raise FormatError(f"{path}: empty audio")
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path: str, samples: np.ndarray) -> None:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(AUDIO_SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# audio features
# ---------------------------------------------------------------------------

@dataclass
class AudioFeatureSequence:
    features: np.ndarray       # (T, D)
    rate: float                # features per second
    frame_times: np.ndarray    # (T,) in video-frame units

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.frame_times = np.asarray(self.frame_times, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ShapeError(f"audio features must be (T, D), got {self.features.shape}")
        if self.frame_times.shape != (self.features.shape[0],):
            raise ShapeError("frame_times length must match feature count")
        if np.any(np.diff(self.frame_times) <= 0):
            raise FormatError("audio frame_times must be strictly increasing")

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def video_frames(self) -> int:
        """Whole video frames covered by this feature sequence."""
        return int(self.count * VIDEO_FPS / self.rate)

    def slice_frames(self, start_frame: float, end_frame: float) -> "AudioFeatureSequence":
        keep = (self.frame_times >= start_frame) & (self.frame_times < end_frame)
        if not keep.any():
            raise ShapeError(f"no audio features in frames [{start_frame}, {end_frame})")
        return AudioFeatureSequence(
            self.features[keep].copy(), self.rate, self.frame_times[keep].copy()
        )


def feature_frame_times(count: int, rate: float, fps: float = VIDEO_FPS) -> np.ndarray:
    """Center-of-window timestamps: (j + 0.5) * fps / rate, in frame units."""
    return (np.arange(count) + 0.5) * (fps / rate)


@lru_cache(maxsize=8)
def _mel_filterbank(n_bands: int, win: int, sample_rate: int) -> np.ndarray:
    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def inv_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    n_bins = win // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / win
    edges = inv_mel(np.linspace(mel(0.0), mel(sample_rate / 2.0), n_bands + 2))
    bank = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, mid, hi = edges[b], edges[b + 1], edges[b + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        bank[b] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def encode_audio_builtin(waveform: np.ndarray,
                         sample_rate: int = AUDIO_SAMPLE_RATE,
                         n_bands: int = AUDIO_BANDS) -> AudioFeatureSequence:
    """Log mel-filterbank energies, hop 320, window 640 (zero-padded tail)."""
    if sample_rate != AUDIO_SAMPLE_RATE:
        raise FormatError(f"audio encoder requires {AUDIO_SAMPLE_RATE} Hz input")
    waveform = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if waveform.size == 0:
        raise FormatError("empty waveform")
    n_frames = max(1, -(-waveform.size // AUDIO_HOP))
    padded = np.zeros(n_frames * AUDIO_HOP + AUDIO_WIN)
    padded[:waveform.size] = waveform
    starts = np.arange(n_frames) * AUDIO_HOP
    frames = padded[starts[:, None] + np.arange(AUDIO_WIN)[None, :]]
    window = np.hanning(AUDIO_WIN)
    spectrum = np.fft.rfft(frames * window, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ _mel_filterbank(n_bands, AUDIO_WIN, sample_rate).T
    rate = sample_rate / AUDIO_HOP
    return AudioFeatureSequence(
        features=np.log(energies + AUDIO_LOG_FLOOR),
        rate=rate,
        frame_times=feature_frame_times(n_frames, rate),
    )


def silence_feature_row(n_bands: int = AUDIO_BANDS) -> np.ndarray:
    """The feature vector the builtin encoder assigns to digital silence."""
    return np.full(n_bands, np.log(AUDIO_LOG_FLOOR))


# ---------------------------------------------------------------------------
# text features
# ---------------------------------------------------------------------------

@dataclass
class CaptionEmbedding:
    tokens: np.ndarray         # (T, D)
    source_text: str
    kind: str                  # "style" | "emotion"

    def __post_init__(self):
        self.tokens = np.atleast_2d(np.asarray(self.tokens, dtype=np.float64))
        if self.tokens.shape[0] < 1:
            raise ShapeError("caption embedding needs at least one token")
        if self.kind not in ("style", "emotion"):
            raise FormatError(f"caption kind {self.kind!r} must be style or emotion")


def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=str(seed).encode("utf-8")
    ).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.normal(size=dim)
    return vec / np.linalg.norm(vec)


def encode_text_builtin(caption: str, kind: str, seed: int = TEXT_SEED,
                        dim: int = TEXT_DIM) -> CaptionEmbedding:
    """One pseudo-random unit vector per lowercase whitespace token."""
    tokens = caption.lower().split()
    if not tokens:
        tokens = [NULL_TOKEN]
    rows = np.stack([_token_vector(t, seed, dim) for t in tokens])
    return CaptionEmbedding(tokens=rows, source_text=caption, kind=kind)


def null_caption_embedding(kind: str, seed: int = TEXT_SEED,
                           dim: int = TEXT_DIM) -> CaptionEmbedding:
    return CaptionEmbedding(
        tokens=_token_vector(NULL_TOKEN, seed, dim)[None], source_text="", kind=kind
    )


# ---------------------------------------------------------------------------
# external embeddings
# ---------------------------------------------------------------------------

def load_external_embedding(path: str):
    """Read a .ctten plus its "<path>.json" sidecar declaring kind (and rate
    for audio). Returns AudioFeatureSequence or CaptionEmbedding."""
    sidecar = path + ".json"
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing sidecar {sidecar}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad sidecar JSON {sidecar}: {exc}") from exc
    arr = read_ctten(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: embeddings must be rank 2, got rank {arr.ndim}")
    kind = meta.get("kind")
    if kind == "audio":
        rate = meta.get("rate")
        if not isinstance(rate, (int, float)) or rate <= 0:
            raise FormatError(f"{sidecar}: audio sidecar needs a positive rate")
        return AudioFeatureSequence(
            features=arr,
            rate=float(rate),
            frame_times=feature_frame_times(arr.shape[0], float(rate)),
        )
    if kind in ("style", "emotion"):
        return CaptionEmbedding(tokens=arr, source_text=meta.get("text", ""), kind=kind)
    raise FormatError(f"{sidecar}: kind must be audio, style, or emotion")


# ---------------------------------------------------------------------------
# caption timelines
# ---------------------------------------------------------------------------

@dataclass
class CaptionTimeline:
    """Per-window caption schedule: (start_frame, style, emotion) entries."""

    entries: list = field(default_factory=list)

    def __post_init__(self):
        if not self.entries:
            raise FormatError("caption timeline needs at least one entry")
        starts = [int(e[0]) for e in self.entries]
        if starts[0] != 0:
            raise FormatError("caption timeline must start at frame 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise FormatError("caption timeline start frames must strictly increase")
        self.entries = [(int(s), str(st), str(em)) for s, st, em in self.entries]

    @staticmethod
    def constant(style: str, emotion: str) -> "CaptionTimeline":
        return CaptionTimeline([(0, style, emotion)])


def captions_for_window(timeline: CaptionTimeline, window_start_frame: int):
    """Entry with the largest start_frame <= window_start_frame."""
    starts = [e[0] for e in timeline.entries]
    idx = bisect_right(starts, window_start_frame) - 1
    _, style, emotion = timeline.entries[max(idx, 0)]
    return style, emotion


def timeline_from_json(data) -> CaptionTimeline:
    try:
        entries = [(e["start_frame"], e["style"], e["emotion"]) for e in data]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad caption timeline record: {exc}") from exc
    return CaptionTimeline(entries)


def load_timeline(path: str) -> CaptionTimeline:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad timeline JSON {path}: {exc}") from exc
    return timeline_from_json(data)


def save_timeline(path: str, timeline: CaptionTimeline) -> None:
    data = [
        {"start_frame": s, "style": st, "emotion": em}
        for s, st, em in timeline.entries
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
