"""Multi-scale binary spherical quantization of latent sequences.

A latent row is projected onto the unit sphere and snapped to the nearest
vertex of the scaled hypercube {+1/sqrt(D), -1/sqrt(D)}^D. Multi-scale
coding resizes the running residual to each scale length, quantizes it,
and subtracts the upsampled result before moving to the next scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import FormatError, ShapeError

CODE_MAGIC = b"CTC1"
DEFAULT_NORM_EPS = 1e-6


def bsq_quantize(z: np.ndarray, norm_eps: float = DEFAULT_NORM_EPS):
    """Quantize rows of z; returns (codes, unit_rows). sign(0) counts as +."""
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[-1]
    norms = np.sqrt((z * z).sum(axis=-1, keepdims=True))
    u = z / np.maximum(norms, norm_eps)
    q = np.where(u >= 0.0, 1.0, -1.0) / np.sqrt(d)
    return q, u


@dataclass
class MultiScaleCode:
    """Binary code blocks, one per scale, each (length_i, code_dim)."""

    blocks: list

    def __post_init__(self):
        self.blocks = [np.asarray(b, dtype=np.float64) for b in self.blocks]
        if not self.blocks:
            raise FormatError("empty code block list")
        d = self.blocks[0].shape[-1]
        magnitude = 1.0 / np.sqrt(d)
        for b in self.blocks:
            if b.ndim != 2 or b.shape[1] != d:
                raise FormatError(f"inconsistent code block shape {b.shape}")
            if not np.all(np.abs(b) == magnitude):
                raise FormatError("code entries must all be +-1/sqrt(code_dim)")

    @property
    def code_dim(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def scale_lengths(self) -> list:
        return [b.shape[0] for b in self.blocks]

    def signs(self) -> np.ndarray:
        """All code signs flattened row-major, scale by scale, as 0/1."""
        return np.concatenate([(b > 0).astype(np.uint8).ravel() for b in self.blocks])


def _check_scales(scale_lengths, window: int) -> list:
    scales = [int(s) for s in scale_lengths]
    if not scales or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ShapeError(f"scale lengths {scales} must be strictly increasing")
    if scales[-1] != window:
        raise ShapeError(f"last scale {scales[-1]} must equal window {window}")
    return scales


def quantize_multiscale(latent: np.ndarray, scale_lengths,
                        norm_eps: float = DEFAULT_NORM_EPS) -> MultiScaleCode:
    code, _ = quantize_multiscale_with_residual(latent, scale_lengths, norm_eps)
    return code


def quantize_multiscale_with_residual(latent: np.ndarray, scale_lengths,
                                      norm_eps: float = DEFAULT_NORM_EPS):
    """Residual coarse-to-fine quantization; also returns the final residual."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2:
        raise ShapeError(f"latent must be (window, code_dim), got {latent.shape}")
    window = latent.shape[0]
    scales = _check_scales(scale_lengths, window)
    residual = latent.copy()
    blocks = []
    for length in scales:
        q, _ = bsq_quantize(ad.resize_time_array(residual, length), norm_eps)
        blocks.append(q)
        residual -= ad.resize_time_array(q, window)
    return MultiScaleCode(blocks), residual


def dequantize_multiscale(code: MultiScaleCode, window: int) -> np.ndarray:
    """Sum of all blocks upsampled to the window length."""
    total = np.zeros((window, code.code_dim))
    for block in code.blocks:
        total += ad.resize_time_array(block, window)
    return total


# ---------------------------------------------------------------------------
# straight-through (training) path
# ---------------------------------------------------------------------------

@dataclass
class STQuantizeResult:
    code_sum: Tensor          # (window, code_dim), gradient flows to the latent
    commit_sq: Tensor         # scalar: mean squared distance of u to its code
    code: MultiScaleCode
    probe: list               # [(q_values, u_values)] for surrogate re-runs


def quantize_multiscale_st(latent: Tensor, scale_lengths,
                           norm_eps: float = DEFAULT_NORM_EPS,
                           probe: list | None = None) -> STQuantizeResult:
    """Quantize inside the autodiff graph.

    Forward emits binary codes; the backward pretends each code row equals
    its unit-sphere projection (straight-through). When ``probe`` carries a
    previous run's (q, u) pairs, codes are replaced by u + (q - u_captured)
    so finite differences of this surrogate match the straight-through
    gradient of the real forward.
    """
    if latent.ndim != 2:
        raise ShapeError(f"latent must be (window, code_dim), got {latent.shape}")
    window, dim = latent.shape
    scales = _check_scales(scale_lengths, window)
    if probe is not None and len(probe) != len(scales):
        raise ShapeError("probe record does not match scale count")

    eps_t = ad.as_tensor(norm_eps)
    residual = latent
    code_sum = None
    commit_terms = []
    blocks = []
    record = []
    for i, length in enumerate(scales):
        z = ad.linear_resize_time(residual, length)
        norm = ad.l2_norm(z)
        # max(norm, eps) via relu keeps the graph inside the core op set.
        clamped = ad.add(ad.relu(ad.sub(norm, eps_t)), eps_t)
        u = ad.div(z, clamped)
        if probe is None:
            q = np.where(u.values >= 0.0, 1.0, -1.0) / np.sqrt(dim)
            code_st = ad.pass_through(Tensor(q), u)
        else:
            q_cap, u_cap = probe[i]
            q = q_cap
            code_st = ad.add(u, Tensor(q_cap - u_cap))
        record.append((q.copy(), u.values.copy()))
        blocks.append(q)
        commit_terms.append(ad.reshape(ad.sub(u, Tensor(q)), (length * dim,)))
        up = ad.linear_resize_time(code_st, window)
        residual = ad.sub(residual, up)
        code_sum = up if code_sum is None else ad.add(code_sum, up)

    flat = ad.concat(commit_terms, axis=0)
    commit_sq = ad.mean(ad.mul(flat, flat))
    return STQuantizeResult(code_sum, commit_sq, MultiScaleCode(blocks), record)


# ---------------------------------------------------------------------------
# bit-packed serialization (.ctcode)
# ---------------------------------------------------------------------------

def pack_code(code: MultiScaleCode) -> bytes:
    head = [CODE_MAGIC]
    head.append(np.asarray([code.code_dim, len(code.blocks)], dtype="<u4").tobytes())
    head.append(np.asarray(code.scale_lengths, dtype="<u4").tobytes())
    head.append(np.packbits(code.signs()).tobytes())
    return b"".join(head)


def unpack_code(buf: bytes) -> MultiScaleCode:
    if buf[:4] != CODE_MAGIC:
        raise FormatError(f"bad code magic {buf[:4]!r}")
    if len(buf) < 12:
        raise FormatError("truncated code header")
    dim, n_scales = (int(x) for x in np.frombuffer(buf[4:12], dtype="<u4"))
    if dim < 2 or n_scales < 1 or n_scales > 64:
        raise FormatError(f"implausible code header dim={dim} scales={n_scales}")
    off = 12 + 4 * n_scales
    if len(buf) < off:
        raise FormatError("truncated scale table")
    lengths = [int(x) for x in np.frombuffer(buf[12:off], dtype="<u4")]
    total_bits = sum(lengths) * dim
    n_bytes = (total_bits + 7) // 8
    if len(buf) != off + n_bytes:
        raise FormatError(
            f"code payload is {len(buf) - off} bytes, expected {n_bytes}"
        )
    bits = np.unpackbits(np.frombuffer(buf[off:], dtype=np.uint8), count=total_bits)
    values = np.where(bits > 0, 1.0, -1.0) / np.sqrt(dim)
    blocks = []
    pos = 0
    for length in lengths:
        blocks.append(values[pos:pos + length * dim].reshape(length, dim))
        pos += length * dim
    return MultiScaleCode(blocks)


def write_code_file(path: str, code: MultiScaleCode) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_code(code))


def read_code_file(path: str) -> MultiScaleCode:
    with open(path, "rb") as fh:
        return unpack_code(fh.read())
