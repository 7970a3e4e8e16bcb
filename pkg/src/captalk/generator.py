"""Windowed next-scale autoregressive generator over binary motion codes.

Each window is a token sequence [previous-window context, start token,
scale blocks coarse to fine]. Scale blocks attend to the prefix and to all
coarser blocks (block-causal). Audio conditioning uses rotary-rotated
cross-attention so logits depend on the time offset between a code token
and an audio feature; caption conditioning uses position-free keys.
Per-bit Bernoulli heads over the code dimension give the training loss and
the sampling distribution.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import MASK_NEG, Tensor
from .codec import MotionCodec, CodecConfig, decode_codes
from .conditioning import (
    AUDIO_LOG_FLOOR,
    VIDEO_FPS,
    AudioFeatureSequence,
    CaptionTimeline,
    captions_for_window,
    encode_text_builtin,
)
from .errors import ConfigError, ShapeError, StateError
from .head_model import MotionSequence
from .optim import AdamW
from .quantizer import MultiScaleCode
from .autodiff import resize_time_array
from .tensor_io import load_checkpoint, save_checkpoint

CHECKPOINT_KIND = "captalk-ar"


@dataclass
class GeneratorConfig:
    scale_lengths: tuple = (1, 5, 25, 50, 100)
    code_dim: int = 32
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_mult: int = 4
    context_tokens: int = 25
    flip_prob: float = 0.1
    cond_drop_prob: float = 0.1
    temperature: float = 1.0
    audio_dim: int = 16
    text_dim: int = 32
    text_seed: int = 1234
    audio_lookback_s: float = 0.5
    rope_base: float = 10000.0

    def __post_init__(self):
        self.scale_lengths = tuple(int(s) for s in self.scale_lengths)
        scales = self.scale_lengths
        if not scales or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ConfigError(f"scale lengths {scales} must be strictly increasing")
        if not (0.0 <= self.flip_prob < 1.0 and 0.0 <= self.cond_drop_prob < 1.0):
            raise ConfigError("flip/drop probabilities must lie in [0, 1)")
        if self.context_tokens < 1:
            raise ConfigError("context_tokens must be positive")

    @property
    def window(self) -> int:
        return self.scale_lengths[-1]

    @property
    def n_scales(self) -> int:
        return len(self.scale_lengths)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scale_lengths"] = list(self.scale_lengths)
        return d


# ---------------------------------------------------------------------------
# token layout and masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowTokenLayout:
    """Slot bookkeeping for one window's token sequence."""

    context_tokens: int
    scale_lengths: tuple

    @property
    def window(self) -> int:
        return self.scale_lengths[-1]

    @property
    def n_current(self) -> int:
        # start token plus all scale block slots
        return 1 + sum(self.scale_lengths)

    @property
    def total(self) -> int:
        return self.context_tokens + self.n_current

    @property
    def start_index(self) -> int:
        return self.context_tokens

    def block_bounds(self) -> list:
        """[(begin, end)] sequence indices of each scale block."""
        bounds = []
        pos = self.context_tokens + 1
        for length in self.scale_lengths:
            bounds.append((pos, pos + length))
            pos += length
        return bounds

    def times(self) -> np.ndarray:
        """Per-token time coordinate in frame units. Context tokens span the
        previous window (negative times), the start token sits at 0, block i
        token j sits at (j + 0.5) * W / L_i."""
        w = float(self.window)
        parts = [
            (np.arange(self.context_tokens) + 0.5) * (w / self.context_tokens) - w,
            np.zeros(1),
        ]
        for length in self.scale_lengths:
            parts.append((np.arange(length) + 0.5) * (w / length))
        return np.concatenate(parts)

    def scale_ids(self) -> np.ndarray:
        """0 for context and start slots, i for scale-i blocks (1-based)."""
        ids = [np.zeros(self.context_tokens + 1, dtype=np.intp)]
        for i, length in enumerate(self.scale_lengths):
            ids.append(np.full(length, i + 1, dtype=np.intp))
        return np.concatenate(ids)


@lru_cache(maxsize=16)
def _layout_cached(context_tokens: int, scale_lengths: tuple) -> WindowTokenLayout:
    return WindowTokenLayout(context_tokens, scale_lengths)


def layout_for(cfg: GeneratorConfig) -> WindowTokenLayout:
    return _layout_cached(cfg.context_tokens, cfg.scale_lengths)


def block_causal_mask(layout: WindowTokenLayout) -> np.ndarray:
    """Boolean (total, total) matrix; True means the row token may attend to
    the column token. Prefix (context + start) attends to itself; block i
    attends to the prefix and to blocks <= i, never to finer blocks."""
    n = layout.total
    allowed = np.zeros((n, n), dtype=bool)
    prefix = layout.context_tokens + 1
    allowed[:prefix, :prefix] = True
    for begin, end in layout.block_bounds():
        allowed[begin:end, :end] = True
    return allowed


@lru_cache(maxsize=16)
def _additive_mask_cached(context_tokens: int, scale_lengths: tuple) -> np.ndarray:
    allowed = block_causal_mask(_layout_cached(context_tokens, scale_lengths))
    return np.where(allowed, 0.0, MASK_NEG)


def additive_mask(cfg: GeneratorConfig) -> np.ndarray:
    return _additive_mask_cached(cfg.context_tokens, cfg.scale_lengths)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class _GenBlock(nn.Module):
    """Self-attention -> audio cross -> text cross -> feed-forward, pre-norm."""

    def __init__(self, rng, cfg: GeneratorConfig):
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.self_attn = nn.MultiHeadAttention(rng, cfg.dim, cfg.heads, rope_base=cfg.rope_base)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.audio_attn = nn.MultiHeadAttention(rng, cfg.dim, cfg.heads, rope_base=cfg.rope_base)
        self.ln3 = nn.LayerNorm(cfg.dim)
        self.text_attn = nn.MultiHeadAttention(rng, cfg.dim, cfg.heads, rope_base=cfg.rope_base)
        self.ln4 = nn.LayerNorm(cfg.dim)
        self.ff = nn.FeedForward(rng, cfg.dim, cfg.ff_mult)

    def __call__(self, x, times, mask, audio_kv, audio_times, text_kv):
        h = self.ln1(x)
        x = ad.add(x, self.self_attn(h, h, mask=mask, q_times=times, k_times=times))
        h = self.ln2(x)
        x = ad.add(x, self.audio_attn(h, audio_kv, q_times=times, k_times=audio_times))
        h = self.ln3(x)
        # Text keys carry no positions; queries keep their rotary rotation.
        x = ad.add(x, self.text_attn(h, text_kv, q_times=times, k_times=None))
        return ad.add(x, self.ff(self.ln4(x)))


class CaptionedMotionGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig, seed: int):
        rng = np.random.default_rng([seed, 2])
        d = cfg.dim
        self.start_embed = Tensor(rng.normal(0.0, 0.02, size=d))
        self.slot_embed = nn.Embedding(rng, cfg.n_scales + 1, d)
        self.code_proj = nn.Linear(rng, cfg.code_dim, d)
        self.ctx_proj = nn.Linear(rng, cfg.code_dim, d)
        self.null_ctx = Tensor(rng.normal(0.0, 0.02, size=d))
        self.audio_proj = nn.Linear(rng, cfg.audio_dim, d)
        self.text_proj = nn.Linear(rng, cfg.text_dim, d)
        self.kind_embed = nn.Embedding(rng, 2, d)  # 0 = style, 1 = emotion
        self.null_style = Tensor(rng.normal(0.0, 0.02, size=d))
        self.null_emotion = Tensor(rng.normal(0.0, 0.02, size=d))
        self.blocks = [_GenBlock(rng, cfg) for _ in range(cfg.layers)]
        self.out_norm = nn.LayerNorm(d)
        self.head = nn.Linear(rng, d, cfg.code_dim)


def upsum_codes(blocks: list, window: int) -> np.ndarray:
    """Sum of the given code blocks upsampled to the window length."""
    total = np.zeros((window, blocks[0].shape[1]))
    for b in blocks:
        total += resize_time_array(np.asarray(b, dtype=np.float64), window)
    return total


def embed_scale_inputs(model: CaptionedMotionGenerator, cfg: GeneratorConfig,
                       prev_blocks: list, scale_index: int) -> Tensor:
    """Input embeddings for scale block ``scale_index`` (1-based).

    Block 1 has no coarser code context, so its input is the start
    embedding. Later blocks embed the coarser codes' upsampled sum resized
    to their own length, plus a slot embedding.
    """
    length = cfg.scale_lengths[scale_index - 1]
    d = cfg.dim
    if scale_index == 1:
        row = ad.reshape(model.start_embed, (1, d))
        if length == 1:
            return row
        return ad.add(row, Tensor(np.zeros((length, d))))
    if len(prev_blocks) < scale_index - 1:
        raise StateError(
            f"scale {scale_index} needs {scale_index - 1} prior blocks, "
            f"got {len(prev_blocks)}"
        )
    summed = upsum_codes(prev_blocks[: scale_index - 1], cfg.window)
    resized = resize_time_array(summed, length)
    slot = ad.gather_rows(model.slot_embed.table,
                          np.full(length, scale_index, dtype=np.intp))
    return ad.add(model.code_proj(Tensor(resized)), slot)


def _context_rows(model, cfg: GeneratorConfig, prev_window_sum) -> Tensor:
    k, d = cfg.context_tokens, cfg.dim
    if prev_window_sum is None:
        base = ad.add(ad.reshape(model.null_ctx, (1, d)), Tensor(np.zeros((k, d))))
    else:
        summary = resize_time_array(np.asarray(prev_window_sum, dtype=np.float64), k)
        base = model.ctx_proj(Tensor(summary))
    slot = ad.gather_rows(model.slot_embed.table, np.zeros(k, dtype=np.intp))
    return ad.add(base, slot)


def _text_kv(model, cfg: GeneratorConfig, style_tokens, emotion_tokens) -> Tensor:
    d = cfg.dim
    parts = []
    if style_tokens is None:
        parts.append(ad.reshape(model.null_style, (1, d)))
    else:
        kind = ad.gather_rows(model.kind_embed.table, np.zeros(1, dtype=np.intp))
        parts.append(ad.add(model.text_proj(Tensor(style_tokens)), kind))
    if emotion_tokens is None:
        parts.append(ad.reshape(model.null_emotion, (1, d)))
    else:
        kind = ad.gather_rows(model.kind_embed.table, np.ones(1, dtype=np.intp))
        parts.append(ad.add(model.text_proj(Tensor(emotion_tokens)), kind))
    return ad.concat(parts, axis=0)


def forward_window(model: CaptionedMotionGenerator, cfg: GeneratorConfig,
                   code_blocks: list, prev_window_sum, audio_features: np.ndarray,
                   audio_times: np.ndarray, style_tokens, emotion_tokens,
                   upto_scale: int | None = None) -> list:
    """Run the stack over [context, start, blocks 1..upto_scale].

    ``code_blocks`` feeds the block input embeddings (teacher codes during
    training, sampled codes during generation); logits are returned per
    included scale, each (L_i, code_dim).
    """
    n_scales = cfg.n_scales if upto_scale is None else upto_scale
    if not (1 <= n_scales <= cfg.n_scales):
        raise ShapeError(f"upto_scale {n_scales} outside 1..{cfg.n_scales}")
    if audio_features.ndim != 2 or audio_features.shape[0] < 1:
        raise StateError("audio features for the window are empty")
    if audio_features.shape[1] != cfg.audio_dim:
        raise ConfigError(
            f"audio feature dim {audio_features.shape[1]} != config {cfg.audio_dim}"
        )

    layout = layout_for(cfg)
    rows = [_context_rows(model, cfg, prev_window_sum),
            ad.reshape(model.start_embed, (1, cfg.dim))]
    for i in range(1, n_scales + 1):
        rows.append(embed_scale_inputs(model, cfg, code_blocks, i))
    x = ad.concat(rows, axis=0)

    n_tokens = x.shape[0]
    times = layout.times()[:n_tokens]
    mask = additive_mask(cfg)[:n_tokens, :n_tokens]
    audio_kv = model.audio_proj(Tensor(audio_features))
    text_kv = _text_kv(model, cfg, style_tokens, emotion_tokens)

    for block in model.blocks:
        x = block(x, times, mask, audio_kv, audio_times, text_kv)
    logits = model.head(model.out_norm(x))

    out = []
    for (begin, end), _ in zip(layout.block_bounds(), range(n_scales)):
        out.append(ad.narrow(logits, 0, begin, end - begin))
    return out


# ---------------------------------------------------------------------------
# loss, perturbation, sampling
# ---------------------------------------------------------------------------

def _abs(x: Tensor) -> Tensor:
    return ad.add(ad.relu(x), ad.relu(ad.mul(x, ad.as_tensor(-1.0))))


def ar_loss(logits_blocks: list, target: MultiScaleCode) -> Tensor:
    """Mean binary cross-entropy over every token, bit, and scale."""
    if len(logits_blocks) != len(target.blocks):
        raise ShapeError(
            f"{len(logits_blocks)} logit blocks vs {len(target.blocks)} target blocks"
        )
    flat_logits = []
    flat_labels = []
    for logits, block in zip(logits_blocks, target.blocks):
        if logits.shape != block.shape:
            raise ShapeError(f"logits {logits.shape} vs target {block.shape}")
        flat_logits.append(ad.reshape(logits, (logits.size,)))
        flat_labels.append((block > 0).astype(np.float64).ravel())
    l = ad.concat(flat_logits, axis=0)
    y = Tensor(np.concatenate(flat_labels))
    # Stable BCE-with-logits: relu(l) - l*y + log(1 + exp(-|l|))
    softplus = ad.log(ad.add(ad.as_tensor(1.0), ad.exp(ad.mul(_abs(l), ad.as_tensor(-1.0)))))
    per_bit = ad.add(ad.sub(ad.relu(l), ad.mul(l, y)), softplus)
    return ad.mean(per_bit)


def bit_accuracy(logits_blocks: list, target: MultiScaleCode) -> float:
    correct = 0
    total = 0
    for logits, block in zip(logits_blocks, target.blocks):
        pred = logits.values >= 0.0
        truth = block > 0
        correct += int((pred == truth).sum())
        total += truth.size
    return correct / total


def flip_bits(block: np.ndarray, flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    if flip_prob <= 0.0:
        return block
    mask = rng.random(block.shape) < flip_prob
    return np.where(mask, -block, block)


def perturb_for_training(code: MultiScaleCode, prev_code: MultiScaleCode | None,
                         cfg: GeneratorConfig, rng: np.random.Generator):
    """Label perturbation and condition dropout for one training window.

    Returns (input blocks with bits flipped, previous-window code sum or
    None, drop_style, drop_emotion). Targets are never perturbed.
    """
    blocks = [flip_bits(b, cfg.flip_prob, rng) for b in code.blocks]
    drop_ctx, drop_style, drop_emotion = rng.random(3) < cfg.cond_drop_prob
    prev_sum = None
    if prev_code is not None and not drop_ctx:
        prev_blocks = [flip_bits(b, cfg.flip_prob, rng) for b in prev_code.blocks]
        prev_sum = upsum_codes(prev_blocks, cfg.window)
    return blocks, prev_sum, bool(drop_style), bool(drop_emotion)


def sample_code_block(logits: np.ndarray, temperature: float, dim: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Per-bit Bernoulli(sigmoid(logit / T)); T = 0 thresholds at zero."""
    if temperature <= 0.0:
        bits = logits >= 0.0
    else:
        with np.errstate(over="ignore"):
            p = 1.0 / (1.0 + np.exp(-logits / temperature))
        bits = rng.random(logits.shape) < p
    return np.where(bits, 1.0, -1.0) / np.sqrt(dim)


# ---------------------------------------------------------------------------
# audio slicing / padding per window
# ---------------------------------------------------------------------------

def window_audio(audio: AudioFeatureSequence, start_frame: float, window: int,
                 lookback_s: float, pad_to_frame: float | None = None):
    """Features with times in [start - lookback, start + window), shifted to
    window-local time. Missing trailing features (pad_to_frame beyond the
    sequence) are filled with the builtin encoder's silence value."""
    lookback = lookback_s * VIDEO_FPS
    lo, hi = start_frame - lookback, start_frame + window
    feats = audio.features
    times = audio.frame_times
    if pad_to_frame is not None and (times.size == 0 or times[-1] < pad_to_frame):
        step = VIDEO_FPS / audio.rate
        extra_times = []
        t = times[-1] + step
        while t < pad_to_frame:
            extra_times.append(t)
            t += step
        if extra_times:
            pad = np.full((len(extra_times), feats.shape[1]), np.log(AUDIO_LOG_FLOOR))
            feats = np.concatenate([feats, pad], axis=0)
            times = np.concatenate([times, np.asarray(extra_times)])
    keep = (times >= lo) & (times < hi)
    if not keep.any():
        raise StateError(f"no audio features cover frames [{lo}, {hi})")
    return feats[keep], times[keep] - start_frame


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

@dataclass
class GenerationResult:
    motion: MotionSequence
    window_captions: list        # (start_frame, style, emotion) per window
    codes: list                  # MultiScaleCode per window


def check_compatible(codec_cfg: CodecConfig, cfg: GeneratorConfig) -> None:
    if tuple(codec_cfg.scale_lengths) != tuple(cfg.scale_lengths):
        raise ConfigError(
            f"codec scales {codec_cfg.scale_lengths} != generator {cfg.scale_lengths}"
        )
    if codec_cfg.code_dim != cfg.code_dim:
        raise ConfigError(
            f"codec code_dim {codec_cfg.code_dim} != generator {cfg.code_dim}"
        )


def generate(model: CaptionedMotionGenerator, cfg: GeneratorConfig,
             codec_model: MotionCodec, codec_cfg: CodecConfig,
             audio: AudioFeatureSequence, timeline: CaptionTimeline,
             seed: int, temperature: float | None = None) -> GenerationResult:
    """Left-to-right windowed generation; deterministic given the seed.

    The trailing partial window is padded with silence audio and the decoded
    motion is truncated back to the audio's frame count.
    """
    check_compatible(codec_cfg, cfg)
    if audio.dim != cfg.audio_dim:
        raise ConfigError(f"audio dim {audio.dim} != generator config {cfg.audio_dim}")
    temperature = cfg.temperature if temperature is None else temperature
    w = cfg.window
    n_frames = audio.video_frames()
    if n_frames < 1:
        raise StateError("audio shorter than one video frame")
    n_windows = -(-n_frames // w)

    rng = np.random.default_rng([seed, 3])
    text_cache: dict = {}

    def text_tokens(caption: str) -> np.ndarray:
        if caption not in text_cache:
            text_cache[caption] = encode_text_builtin(
                caption, "style", cfg.text_seed, cfg.text_dim
            ).tokens
        return text_cache[caption]

    prev_sum = None
    feats_out = []
    window_captions = []
    codes_out = []
    for k in range(n_windows):
        start = k * w
        style, emotion = captions_for_window(timeline, start)
        a_feats, a_times = window_audio(
            audio, start, w, cfg.audio_lookback_s, pad_to_frame=n_windows * w
        )
        blocks: list = []
        for i in range(1, cfg.n_scales + 1):
            logits = forward_window(
                model, cfg, blocks, prev_sum, a_feats, a_times,
                text_tokens(style), text_tokens(emotion), upto_scale=i,
            )
            blocks.append(
                sample_code_block(logits[i - 1].values, temperature, cfg.code_dim, rng)
            )
        code = MultiScaleCode(blocks)
        codes_out.append(code)
        prev_sum = upsum_codes(blocks, w)
        feats_out.append(decode_codes(codec_model, codec_cfg, code))
        window_captions.append((start, style, emotion))

    features = np.concatenate(feats_out, axis=0)[:n_frames]
    motion = MotionSequence.from_features(features, codec_cfg.n_expr, fps=VIDEO_FPS)
    return GenerationResult(motion=motion, window_captions=window_captions,
                            codes=codes_out)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class ARSample:
    code: MultiScaleCode
    prev_code: MultiScaleCode | None
    audio_features: np.ndarray
    audio_times: np.ndarray
    style_tokens: np.ndarray
    emotion_tokens: np.ndarray


def build_ar_dataset(windows, codec_model: MotionCodec, codec_cfg: CodecConfig,
                     cfg: GeneratorConfig) -> list:
    """Freeze the codec, encode every window, and pair it with its in-clip
    predecessor, audio slice (with lookback), and caption token arrays."""
    from .codec import encode_window_codes

    text_cache: dict = {}

    def text_tokens(caption: str) -> np.ndarray:
        if caption not in text_cache:
            text_cache[caption] = encode_text_builtin(
                caption, "style", cfg.text_seed, cfg.text_dim
            ).tokens
        return text_cache[caption]

    coded: dict = {}
    samples = []
    for win in windows:
        code = encode_window_codes(codec_model, codec_cfg, win.motion)
        coded[(win.clip_index, win.window_index)] = code
        a_feats, a_times = window_audio(
            win.clip_audio, win.start_frame, cfg.window, cfg.audio_lookback_s,
            pad_to_frame=win.start_frame + cfg.window,
        )
        samples.append((win, code, a_feats, a_times))

    dataset = []
    for win, code, a_feats, a_times in samples:
        prev = coded.get((win.clip_index, win.window_index - 1))
        dataset.append(ARSample(
            code=code,
            prev_code=prev,
            audio_features=a_feats,
            audio_times=a_times,
            style_tokens=text_tokens(win.style_caption),
            emotion_tokens=text_tokens(win.emotion_caption),
        ))
    return dataset


def train_ar(dataset: list, cfg: GeneratorConfig, seed: int, iters: int,
             lr: float = 1e-4, weight_decay: float = 1e-4, grad_clip: float = 1.0,
             log_every: int = 50, batch: int = 1, schedule: str = "cosine",
             warmup: int = 100):
    """AdamW on the teacher-forced bit cross-entropy. Returns (model, log)."""
    from .codec import lr_at

    if not dataset:
        raise ConfigError("empty generator training dataset")
    model = CaptionedMotionGenerator(cfg, seed)
    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng([seed, 4])
    inv_batch = ad.as_tensor(1.0 / batch)

    log_rows = []
    for it in range(iters):
        opt.lr = lr_at(it, iters, lr, schedule, warmup)
        opt.zero_grad()
        logged = None
        for _ in range(batch):
            sample = dataset[int(rng.integers(len(dataset)))]
            blocks, prev_sum, drop_style, drop_emotion = perturb_for_training(
                sample.code, sample.prev_code, cfg, rng
            )
            logits = forward_window(
                model, cfg, blocks, prev_sum,
                sample.audio_features, sample.audio_times,
                None if drop_style else sample.style_tokens,
                None if drop_emotion else sample.emotion_tokens,
            )
            loss = ar_loss(logits, sample.code)
            ad.backward(ad.mul(loss, inv_batch))
            logged = (loss.item(), bit_accuracy(logits, sample.code))
        opt.clip_grad_norm(grad_clip)
        opt.step()
        if it % log_every == 0 or it == iters - 1:
            log_rows.append((it, logged[0], logged[1]))
    return model, log_rows


def teacher_forced_accuracy(model: CaptionedMotionGenerator, cfg: GeneratorConfig,
                            dataset: list) -> float:
    """Bit accuracy with clean (unperturbed) teacher inputs."""
    total = 0.0
    for sample in dataset:
        prev_sum = None
        if sample.prev_code is not None:
            prev_sum = upsum_codes(sample.prev_code.blocks, cfg.window)
        logits = forward_window(
            model, cfg, list(sample.code.blocks), prev_sum,
            sample.audio_features, sample.audio_times,
            sample.style_tokens, sample.emotion_tokens,
        )
        total += bit_accuracy(logits, sample.code)
    return total / len(dataset)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_ar_checkpoint(prefix: str, model: CaptionedMotionGenerator,
                       cfg: GeneratorConfig, seed: int) -> None:
    manifest = {"kind": CHECKPOINT_KIND, "config": cfg.to_dict(), "seed": seed}
    save_checkpoint(prefix, manifest, model.state_dict())


def load_ar_checkpoint(prefix: str):
    manifest, tensors = load_checkpoint(prefix)
    if manifest.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{prefix} is not a generator checkpoint")
    cfg = GeneratorConfig(**manifest["config"])
    model = CaptionedMotionGenerator(cfg, seed=int(manifest.get("seed", 0)))
    model.load_state_dict(tensors)
    return model, cfg
