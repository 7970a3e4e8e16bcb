"""Motion codec: transformer encoder -> multi-scale binary codes -> decoder.

Training minimizes an L1 motion term, weighted full-head and lip vertex
errors (through the differentiable head-model decode), and a commitment
term that keeps encoder outputs near their binary codes. All norms are
mean-reduced so loss weights are size-independent.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .head_model import (
    HeadModel,
    MotionSequence,
    decode_sequence,
    decode_sequence_diff,
    head_model_from_dict,
    head_model_to_dict,
)
from .optim import AdamW
from .quantizer import (
    MultiScaleCode,
    STQuantizeResult,
    dequantize_multiscale,
    quantize_multiscale,
    quantize_multiscale_st,
)
from .synthdata import load_manifest, window_iterator
from .tensor_io import load_checkpoint, save_checkpoint

CHECKPOINT_KIND = "captalk-codec"


@dataclass
class CodecConfig:
    n_expr: int = 10
    n_pose: int = 6
    window: int = 100
    scale_lengths: tuple = (1, 5, 25, 50, 100)
    code_dim: int = 32
    dim: int = 64
    layers: int = 2
    heads: int = 4
    ff_mult: int = 4
    w_full: float = 1.0
    w_lips: float = 2.0
    beta_commit: float = 0.25
    norm_eps: float = 1e-6

    def __post_init__(self):
        self.scale_lengths = tuple(int(s) for s in self.scale_lengths)
        scales = self.scale_lengths
        if not scales or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ConfigError(f"scale lengths {scales} must be strictly increasing")
        if scales[-1] != self.window:
            raise ConfigError(f"last scale {scales[-1]} != window {self.window}")
        if self.code_dim < 2:
            raise ConfigError(f"code_dim {self.code_dim} < 2")
        if min(self.w_full, self.w_lips, self.beta_commit) < 0:
            raise ConfigError("loss weights must be non-negative")

    @property
    def n_channels(self) -> int:
        return self.n_expr + self.n_pose

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scale_lengths"] = list(self.scale_lengths)
        return d


class _Block(nn.Module):
    """Pre-norm bidirectional self-attention + feed-forward."""

    def __init__(self, rng, cfg: CodecConfig):
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = nn.MultiHeadAttention(rng, cfg.dim, cfg.heads)
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.ff = nn.FeedForward(rng, cfg.dim, cfg.ff_mult)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = ad.add(x, self.attn(h, h))
        return ad.add(x, self.ff(self.ln2(x)))


class MotionCodec(nn.Module):
    def __init__(self, cfg: CodecConfig, seed: int):
        rng = np.random.default_rng([seed, 0])
        self.enc_in = nn.Linear(rng, cfg.n_channels, cfg.dim)
        self.enc_pos = Tensor(rng.normal(0.0, 0.02, size=(cfg.window, cfg.dim)))
        self.enc_blocks = [_Block(rng, cfg) for _ in range(cfg.layers)]
        self.enc_norm = nn.LayerNorm(cfg.dim)
        self.enc_out = nn.Linear(rng, cfg.dim, cfg.code_dim)
        self.dec_in = nn.Linear(rng, cfg.code_dim, cfg.dim)
        self.dec_pos = Tensor(rng.normal(0.0, 0.02, size=(cfg.window, cfg.dim)))
        self.dec_blocks = [_Block(rng, cfg) for _ in range(cfg.layers)]
        self.dec_norm = nn.LayerNorm(cfg.dim)
        self.dec_out = nn.Linear(rng, cfg.dim, cfg.n_channels)
        # Fixed per-channel affine (corpus statistics); numpy so it stays out
        # of the parameter list and is checkpointed via the manifest instead.
        self._norm_mu = np.zeros(cfg.n_channels)
        self._norm_sigma = np.ones(cfg.n_channels)

    def set_normalization(self, mu: np.ndarray, sigma: np.ndarray) -> None:
        self._norm_mu = np.asarray(mu, dtype=np.float64).reshape(-1).copy()
        self._norm_sigma = np.maximum(
            np.asarray(sigma, dtype=np.float64).reshape(-1), 1e-3
        )

    @property
    def normalization(self):
        return self._norm_mu.copy(), self._norm_sigma.copy()

    def encode(self, features: Tensor) -> Tensor:
        x = ad.div(ad.sub(features, Tensor(self._norm_mu)), Tensor(self._norm_sigma))
        x = ad.add(self.enc_in(x), self.enc_pos)
        for block in self.enc_blocks:
            x = block(x)
        return self.enc_out(self.enc_norm(x))

    def decode(self, code_sum: Tensor) -> Tensor:
        x = ad.add(self.dec_in(code_sum), self.dec_pos)
        for block in self.dec_blocks:
            x = block(x)
        y = self.dec_out(self.dec_norm(x))
        return ad.add(ad.mul(y, Tensor(self._norm_sigma)), Tensor(self._norm_mu))


def _abs(x: Tensor) -> Tensor:
    return ad.add(ad.relu(x), ad.relu(ad.mul(x, ad.as_tensor(-1.0))))


@dataclass
class CodecForwardResult:
    input: Tensor             # the (window, channels) encoder input
    recon: Tensor             # reconstructed motion features
    st: STQuantizeResult
    losses: dict              # l1 / full_vertex / lip_vertex / vq scalars


def motion_losses(recon: Tensor, target: Tensor, window_motion: MotionSequence,
                  head: HeadModel, cfg: CodecConfig,
                  gt_vertices: np.ndarray | None = None) -> dict:
    """L1 motion term plus weighted full-head and lip vertex errors.

    Every term is mean-reduced over all of its elements.
    """
    diff = ad.sub(recon, target)
    l1 = ad.mean(_abs(diff))
    if gt_vertices is None:
        gt_vertices = decode_sequence(head, window_motion)
    pred_vertices = decode_sequence_diff(head, recon, window_motion.shape)
    vdiff = ad.sub(pred_vertices, Tensor(gt_vertices))
    full = ad.mul(ad.as_tensor(cfg.w_full), ad.mean(ad.mul(vdiff, vdiff)))
    lips = np.asarray(head.lip_indices, dtype=np.intp)
    ldiff = ad.gather_rows(vdiff, lips, axis=1)
    lip = ad.mul(ad.as_tensor(cfg.w_lips), ad.mean(ad.mul(ldiff, ldiff)))
    return {"l1": l1, "full_vertex": full, "lip_vertex": lip}


def codec_forward(window_motion: MotionSequence, model: MotionCodec,
                  head: HeadModel, cfg: CodecConfig,
                  st_probe: list | None = None,
                  gt_vertices: np.ndarray | None = None) -> CodecForwardResult:
    """Encode/quantize/decode one window and compute all loss terms.

    The losses dict holds weighted scalar Tensors, so the training loss is
    their plain sum.
    """
    if window_motion.n_frames != cfg.window:
        raise ShapeError(
            f"window has {window_motion.n_frames} frames, config wants {cfg.window}"
        )
    feats = window_motion.features()
    if feats.shape[1] != cfg.n_channels:
        raise ShapeError(f"motion width {feats.shape[1]} != config {cfg.n_channels}")

    m = Tensor(feats)
    latent = model.encode(m)
    st = quantize_multiscale_st(latent, cfg.scale_lengths, cfg.norm_eps, probe=st_probe)
    recon = model.decode(st.code_sum)

    losses = motion_losses(recon, m, window_motion, head, cfg, gt_vertices)
    losses["vq"] = ad.mul(ad.as_tensor(cfg.beta_commit), st.commit_sq)
    return CodecForwardResult(input=m, recon=recon, st=st, losses=losses)


def total_loss(losses: dict) -> Tensor:
    out = None
    for term in losses.values():
        out = term if out is None else ad.add(out, term)
    return out


# ---------------------------------------------------------------------------
# frozen-codec helpers (no gradients kept)
# ---------------------------------------------------------------------------

def encode_window_codes(model: MotionCodec, cfg: CodecConfig,
                        window_motion: MotionSequence) -> MultiScaleCode:
    latent = model.encode(Tensor(window_motion.features()))
    return quantize_multiscale(latent.values, cfg.scale_lengths, cfg.norm_eps)


def decode_codes(model: MotionCodec, cfg: CodecConfig,
                 code: MultiScaleCode) -> np.ndarray:
    summed = dequantize_multiscale(code, cfg.window)
    return model.decode(Tensor(summed)).values


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def collect_windows(data_dir: str, cfg: CodecConfig, stride: int | None = None):
    manifest = load_manifest(data_dir)
    if manifest.get("n_expr") != cfg.n_expr or manifest.get("n_pose") != cfg.n_pose:
        raise ConfigError(
            f"corpus dims ({manifest.get('n_expr')}, {manifest.get('n_pose')}) "
            f"!= codec config ({cfg.n_expr}, {cfg.n_pose})"
        )
    windows = list(window_iterator(manifest, data_dir, cfg.window,
                                   stride or cfg.window))
    if not windows:
        raise ConfigError(f"no {cfg.window}-frame windows in {data_dir}")
    return manifest, windows


def lr_at(it: int, iters: int, peak_lr: float, schedule: str, warmup: int,
          final_frac: float = 0.1) -> float:
    """Linear warmup then cosine decay to final_frac * peak (or constant)."""
    if warmup and it < warmup:
        return peak_lr * (it + 1) / warmup
    if schedule == "constant":
        return peak_lr
    f = (it - warmup) / max(1, iters - warmup)
    return peak_lr * (final_frac + (1.0 - final_frac) * 0.5 * (1.0 + np.cos(np.pi * f)))


def train_codec(data_dir: str, cfg: CodecConfig, head: HeadModel, seed: int,
                iters: int, lr: float = 1e-4, weight_decay: float = 1e-4,
                grad_clip: float = 1.0, log_every: int = 50, batch: int = 1,
                schedule: str = "cosine", warmup: int = 100):
    """AdamW on the summed window losses. Each iteration is one optimizer
    step over ``batch`` sampled windows (gradient accumulation); the learning
    rate follows warmup + cosine decay by default. Returns (model, log_rows)."""
    _, windows = collect_windows(data_dir, cfg)
    model = MotionCodec(cfg, seed)

    feats = np.concatenate([w.motion.features() for w in windows], axis=0)
    model.set_normalization(feats.mean(axis=0), feats.std(axis=0))

    opt = AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    sample_rng = np.random.default_rng([seed, 1])
    cache = [(w.motion, decode_sequence(head, w.motion)) for w in windows]
    inv_batch = ad.as_tensor(1.0 / batch)

    log_rows = []
    for it in range(iters):
        opt.lr = lr_at(it, iters, lr, schedule, warmup)
        opt.zero_grad()
        logged = None
        for _ in range(batch):
            motion, gt_verts = cache[int(sample_rng.integers(len(cache)))]
            result = codec_forward(motion, model, head, cfg, gt_vertices=gt_verts)
            losses = result.losses
            loss = total_loss(losses)
            ad.backward(ad.mul(loss, inv_batch))
            logged = (loss, losses)
        opt.clip_grad_norm(grad_clip)
        opt.step()
        if it % log_every == 0 or it == iters - 1:
            loss, losses = logged
            log_rows.append((
                it, loss.item(), losses["l1"].item(), losses["full_vertex"].item(),
                losses["lip_vertex"].item(), losses["vq"].item(),
            ))
    return model, log_rows


def mean_window_l1(model: MotionCodec, cfg: CodecConfig, windows) -> float:
    """Round-trip per-frame L1 averaged over a window list."""
    totals = []
    for w in windows:
        motion = w.motion if hasattr(w, "motion") else w
        code = encode_window_codes(model, cfg, motion)
        recon = decode_codes(model, cfg, code)
        totals.append(float(np.mean(np.abs(recon - motion.features()))))
    return float(np.mean(totals))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_codec_checkpoint(prefix: str, model: MotionCodec, cfg: CodecConfig,
                          head: HeadModel, seed: int) -> None:
    mu, sigma = model.normalization
    manifest = {
        "kind": CHECKPOINT_KIND,
        "config": cfg.to_dict(),
        "head_model": head_model_to_dict(head),
        "normalization": {"mu": mu.tolist(), "sigma": sigma.tolist()},
        "seed": seed,
    }
    save_checkpoint(prefix, manifest, model.state_dict())


def load_codec_checkpoint(prefix: str):
    manifest, tensors = load_checkpoint(prefix)
    if manifest.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{prefix} is not a codec checkpoint")
    cfg = CodecConfig(**manifest["config"])
    head = head_model_from_dict(manifest["head_model"])
    model = MotionCodec(cfg, seed=int(manifest.get("seed", 0)))
    model.load_state_dict(tensors)
    norm = manifest.get("normalization")
    if norm:
        model.set_normalization(np.asarray(norm["mu"]), np.asarray(norm["sigma"]))
    return model, cfg, head
