"""Evaluation metrics over vertex trajectories and pose tracks.

All standard deviations are population (divide by N), so single-frame
inputs are well defined. FDD is signed (prediction minus ground truth);
the other four metrics are non-negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .head_model import (
    GLOBAL_ROT_DIMS,
    HeadModel,
    MotionSequence,
    decode_sequence,
    load_head_model,
    load_motion,
)


@dataclass
class MetricReport:
    lve: float
    mhd: float
    fdd: float
    lodd: float
    hpdd: float
    frame_count: int
    vertex_count: int

    def to_dict(self) -> dict:
        return {
            "lve": self.lve,
            "mhd": self.mhd,
            "fdd": self.fdd,
            "lodd": self.lodd,
            "hpdd": self.hpdd,
            "frames": self.frame_count,
            "vertices": self.vertex_count,
        }


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"vertex arrays differ: {pred.shape} vs {gt.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ShapeError(f"expected (N, V, 3) vertex arrays, got {pred.shape}")


def lve(pred: np.ndarray, gt: np.ndarray, lips) -> float:
    """Mean over frames of the worst lip-vertex Euclidean error."""
    _check_pair(pred, gt)
    lips = np.asarray(lips, dtype=np.intp)
    dist = np.linalg.norm(pred[:, lips] - gt[:, lips], axis=-1)
    return float(dist.max(axis=1).mean())


def mhd(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance over all frames and vertices."""
    _check_pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def _dynamic_deviation(x: np.ndarray) -> np.ndarray:
    """Per-vertex RMS deviation from its temporal mean: (V,) from (N, V, 3)."""
    centered = x - x.mean(axis=0, keepdims=True)
    return np.sqrt((centered**2).sum(axis=-1).mean(axis=0))


def fdd(pred: np.ndarray, gt: np.ndarray, upper) -> float:
    """Signed mean over upper-face vertices of dyn(pred) - dyn(gt)."""
    _check_pair(pred, gt)
    upper = np.asarray(upper, dtype=np.intp)
    return float(
        (_dynamic_deviation(pred[:, upper]) - _dynamic_deviation(gt[:, upper])).mean()
    )


def lip_open_distances(vertices: np.ndarray, upper_lip: int, lower_lip: int) -> np.ndarray:
    return np.linalg.norm(vertices[:, upper_lip] - vertices[:, lower_lip], axis=-1)


def lodd_from_vertices(pred: np.ndarray, gt: np.ndarray, upper_lip: int,
                       lower_lip: int) -> float:
    _check_pair(pred, gt)
    d_pred = lip_open_distances(pred, upper_lip, lower_lip)
    d_gt = lip_open_distances(gt, upper_lip, lower_lip)
    return float(abs(d_pred.std() - d_gt.std()))


def lodd(pred_motion: MotionSequence, gt_motion: MotionSequence,
         head: HeadModel) -> float:
    """|popstd of lip-open distance (pred) - popstd (gt)|."""
    pred = decode_sequence(head, pred_motion)
    gt = decode_sequence(head, gt_motion)
    return lodd_from_vertices(pred, gt, head.upper_lip_vertex, head.lower_lip_vertex)


def rotation_std(motion: MotionSequence) -> np.ndarray:
    """Population std of each global-rotation axis-angle component."""
    return motion.pose[:, :GLOBAL_ROT_DIMS].std(axis=0)


def hpdd(pred_motion: MotionSequence, gt_motion: MotionSequence) -> float:
    """Mean over rotation components of |popstd(pred) - popstd(gt)|."""
    return float(np.abs(rotation_std(pred_motion) - rotation_std(gt_motion)).mean())


def compute_report(pred_motion: MotionSequence, gt_motion: MotionSequence,
                   head: HeadModel) -> MetricReport:
    if pred_motion.n_frames != gt_motion.n_frames:
        raise ShapeError(
            f"frame counts differ: {pred_motion.n_frames} vs {gt_motion.n_frames}"
        )
    pred_v = decode_sequence(head, pred_motion)
    gt_v = decode_sequence(head, gt_motion)
    return MetricReport(
        lve=lve(pred_v, gt_v, head.lip_indices),
        mhd=mhd(pred_v, gt_v),
        fdd=fdd(pred_v, gt_v, head.upper_face_indices),
        lodd=lodd_from_vertices(pred_v, gt_v, head.upper_lip_vertex,
                                head.lower_lip_vertex),
        hpdd=hpdd(pred_motion, gt_motion),
        frame_count=pred_motion.n_frames,
        vertex_count=head.n_vertices,
    )


def evaluate(pred_file: str, gt_file: str, head_model_file: str,
             allow_frame_mismatch: bool = False) -> MetricReport:
    """Decode both motion files through the head model and report metrics."""
    pred = load_motion(pred_file)
    gt = load_motion(gt_file)
    head = load_head_model(head_model_file)
    if pred.fps != gt.fps:
        raise FormatError(f"fps mismatch: {pred.fps} vs {gt.fps}")
    if pred.n_frames != gt.n_frames:
        if not allow_frame_mismatch:
            raise FormatError(
                f"frame count mismatch: {pred.n_frames} vs {gt.n_frames} "
                "(pass the truncate flag to compare the common prefix)"
            )
        n = min(pred.n_frames, gt.n_frames)
        pred = pred.window(0, n)
        gt = gt.window(0, n)
    return compute_report(pred, gt, head)


def save_report(path: str, report: MetricReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
