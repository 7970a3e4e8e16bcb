"""Linear blendshape head model with a rigid global rotation.

Vertices are reconstructed as template + shape/expression/pose-corrective
blendshape offsets, then rotated about a fixed center by the per-frame
global axis-angle. The pose track layout is [global axis-angle (3),
corrective coefficients (n_pose_corr)].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, FormatError, ShapeError

HEAD_MODEL_VERSION = 1
MOTION_VERSION = 1
DEFAULT_FPS = 25.0
GLOBAL_ROT_DIMS = 3


@dataclass
class HeadModel:
    template: np.ndarray              # (V, 3)
    shape_basis: np.ndarray           # (V, 3, n_shape)
    expr_basis: np.ndarray            # (V, 3, n_expr)
    pose_basis: np.ndarray            # (V, 3, n_pose_corr)
    lip_indices: np.ndarray
    upper_face_indices: np.ndarray
    upper_lip_vertex: int
    lower_lip_vertex: int
    rotation_center: np.ndarray       # (3,)

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=np.float64)
        self.shape_basis = np.asarray(self.shape_basis, dtype=np.float64)
        self.expr_basis = np.asarray(self.expr_basis, dtype=np.float64)
        self.pose_basis = np.asarray(self.pose_basis, dtype=np.float64)
        self.lip_indices = np.asarray(self.lip_indices, dtype=np.intp)
        self.upper_face_indices = np.asarray(self.upper_face_indices, dtype=np.intp)
        self.rotation_center = np.asarray(self.rotation_center, dtype=np.float64)
        v = self.n_vertices
        if self.template.shape != (v, 3):
            raise ConfigError(f"template shape {self.template.shape}")
        for name, basis in (("shape", self.shape_basis), ("expr", self.expr_basis),
                            ("pose", self.pose_basis)):
            if basis.ndim != 3 or basis.shape[:2] != (v, 3):
                raise ConfigError(f"{name} basis shape {basis.shape} vs V={v}")
            if not np.isfinite(basis).all():
                raise ConfigError(f"non-finite {name} basis")
        if not np.isfinite(self.template).all():
            raise ConfigError("non-finite template")
        if self.rotation_center.shape != (3,):
            raise ConfigError("rotation_center must be a 3-vector")
        for idx in (self.lip_indices, self.upper_face_indices):
            if idx.size and (idx.min() < 0 or idx.max() >= v):
                raise ConfigError("vertex index set out of range")
        if np.intersect1d(self.lip_indices, self.upper_face_indices).size:
            raise ConfigError("lip and upper-face index sets overlap")
        lips = set(int(i) for i in self.lip_indices)
        if self.upper_lip_vertex not in lips or self.lower_lip_vertex not in lips:
            raise ConfigError("upper/lower lip vertices must be lip indices")

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def n_expr(self) -> int:
        return self.expr_basis.shape[2]

    @property
    def n_pose_corr(self) -> int:
        return self.pose_basis.shape[2]

    @property
    def n_pose(self) -> int:
        return GLOBAL_ROT_DIMS + self.n_pose_corr


@dataclass
class MotionSequence:
    """Per-frame expression and pose tracks plus a constant shape vector."""

    expr: np.ndarray                  # (N, n_expr)
    pose: np.ndarray                  # (N, 3 + n_pose_corr)
    shape: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        self.expr = np.atleast_2d(np.asarray(self.expr, dtype=np.float64))
        self.pose = np.atleast_2d(np.asarray(self.pose, dtype=np.float64))
        self.shape = np.asarray(self.shape, dtype=np.float64).reshape(-1)
        if self.expr.shape[0] != self.pose.shape[0]:
            raise ShapeError(
                f"expr frames {self.expr.shape[0]} != pose frames {self.pose.shape[0]}"
            )
        if self.expr.shape[0] < 1:
            raise ShapeError("motion needs at least one frame")
        if self.pose.shape[1] < GLOBAL_ROT_DIMS:
            raise ShapeError("pose track narrower than the global rotation")
        if self.fps <= 0:
            raise ConfigError(f"fps {self.fps} must be positive")
        for name, arr in (("expr", self.expr), ("pose", self.pose), ("shape", self.shape)):
            if not np.isfinite(arr).all():
                raise ConfigError(f"non-finite {name} values")

    @property
    def n_frames(self) -> int:
        return self.expr.shape[0]

    @property
    def n_channels(self) -> int:
        return self.expr.shape[1] + self.pose.shape[1]

    def features(self) -> np.ndarray:
        """Per-frame motion vector: expression and pose concatenated."""
        return np.concatenate([self.expr, self.pose], axis=1)

    @staticmethod
    def from_features(features: np.ndarray, n_expr: int, shape=None,
                      fps: float = DEFAULT_FPS) -> "MotionSequence":
        features = np.asarray(features, dtype=np.float64)
        return MotionSequence(
            expr=features[:, :n_expr],
            pose=features[:, n_expr:],
            shape=np.zeros(0) if shape is None else shape,
            fps=fps,
        )

    def window(self, start: int, length: int) -> "MotionSequence":
        if start < 0 or start + length > self.n_frames:
            raise ShapeError(f"window [{start}, {start + length}) outside {self.n_frames} frames")
        return MotionSequence(
            expr=self.expr[start:start + length].copy(),
            pose=self.pose[start:start + length].copy(),
            shape=self.shape.copy(),
            fps=self.fps,
        )


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

def _blend(basis: np.ndarray, coeffs: np.ndarray, what: str) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if coeffs.size == 0:
        coeffs = np.zeros(basis.shape[2])
    if coeffs.shape[0] != basis.shape[2]:
        raise ShapeError(f"{what} coefficients {coeffs.shape[0]} vs basis {basis.shape[2]}")
    return basis @ coeffs


def rotate_axis_angle(points: np.ndarray, angles: np.ndarray,
                      center: np.ndarray) -> np.ndarray:
    """Numpy twin of autodiff.axis_angle_rotate (same coefficient math)."""
    p = np.asarray(points, dtype=np.float64) - center
    w = np.asarray(angles, dtype=np.float64)
    s = (w * w).sum(axis=-1)
    c, a, b, _, _ = ad._rot_coeffs(s)
    cross = np.cross(w[:, None, :], p)
    wdotp = (p * w[:, None, :]).sum(axis=-1)
    return (
        c[:, None, None] * p
        + a[:, None, None] * cross
        + b[:, None, None] * w[:, None, :] * wdotp[:, :, None]
        + center
    )


def _decode_frames(model: HeadModel, expr: np.ndarray, pose: np.ndarray,
                   shape: np.ndarray) -> np.ndarray:
    """Shared decode path: (N, K) tracks -> (N, V, 3). Single implementation
    so the per-frame and sequence entry points agree bitwise."""
    if expr.shape[1] != model.n_expr:
        raise ShapeError(f"expr width {expr.shape[1]} vs model {model.n_expr}")
    if pose.shape[1] != model.n_pose:
        raise ShapeError(f"pose width {pose.shape[1]} vs model {model.n_pose}")
    static = model.template + _blend(model.shape_basis, shape, "shape")
    n, v = expr.shape[0], model.n_vertices
    expr_flat = model.expr_basis.reshape(v * 3, model.n_expr)
    pose_flat = model.pose_basis.reshape(v * 3, model.n_pose_corr)
    flat = (
        static.reshape(1, v * 3)
        + expr @ expr_flat.T
        + pose[:, GLOBAL_ROT_DIMS:] @ pose_flat.T
    )
    return rotate_axis_angle(
        flat.reshape(n, v, 3), pose[:, :GLOBAL_ROT_DIMS], model.rotation_center
    )


def decode_vertices(model: HeadModel, shape_coeffs, pose_frame, expr_frame) -> np.ndarray:
    """Vertices for a single frame: blendshape offsets then global rotation."""
    expr = np.asarray(expr_frame, dtype=np.float64).reshape(1, -1)
    pose = np.asarray(pose_frame, dtype=np.float64).reshape(1, -1)
    shape = np.asarray(shape_coeffs, dtype=np.float64).reshape(-1)
    return _decode_frames(model, expr, pose, shape)[0]


def decode_sequence(model: HeadModel, motion: MotionSequence) -> np.ndarray:
    """Vertex trajectory (N, V, 3); vectorized over frames."""
    shape = motion.shape if motion.shape.size else np.zeros(model.n_shape)
    return _decode_frames(model, motion.expr, motion.pose, shape)


def decode_sequence_diff(model: HeadModel, motion_features: Tensor,
                         shape_coeffs=None) -> Tensor:
    """Differentiable decode of a (N, n_expr + n_pose) feature tensor."""
    n_expr, n_pose = model.n_expr, model.n_pose
    if motion_features.ndim != 2 or motion_features.shape[1] != n_expr + n_pose:
        raise ShapeError(
            f"motion features {motion_features.shape} vs expected (N, {n_expr + n_pose})"
        )
    n, v = motion_features.shape[0], model.n_vertices
    static = model.template + _blend(
        model.shape_basis,
        np.zeros(model.n_shape) if shape_coeffs is None else shape_coeffs,
        "shape",
    )

    expr = ad.narrow(motion_features, 1, 0, n_expr)
    rot = ad.narrow(motion_features, 1, n_expr, GLOBAL_ROT_DIMS)
    corr = ad.narrow(motion_features, 1, n_expr + GLOBAL_ROT_DIMS, model.n_pose_corr)

    expr_flat = Tensor(model.expr_basis.reshape(v * 3, n_expr).T)
    pose_flat = Tensor(model.pose_basis.reshape(v * 3, model.n_pose_corr).T)
    flat = ad.add(
        ad.add(ad.matmul(expr, expr_flat), ad.matmul(corr, pose_flat)),
        Tensor(static.reshape(1, v * 3)),
    )
    points = ad.reshape(flat, (n, v, 3))
    return ad.axis_angle_rotate(points, rot, model.rotation_center)


# ---------------------------------------------------------------------------
# toy model
# ---------------------------------------------------------------------------

def make_toy_head_model(seed: int, n_vertices: int = 50, n_shape: int = 5,
                        n_expr: int = 10, n_pose_corr: int = 3) -> HeadModel:
    """Deterministic pseudo-random head model with designated lip and
    upper-face regions.

    The first expression column opens the mouth: it displaces lips
    vertically (upper lips up, lower lips down), so lip-open distance grows
    monotonically with the first expression coefficient.
    """
    if n_vertices < 8:
        raise ConfigError(f"toy model needs at least 8 vertices, got {n_vertices}")
    rng = np.random.default_rng(seed)
    v = n_vertices
    region = math.ceil(v / 5)
    lip_indices = np.arange(region)
    upper_face_indices = np.arange(region, 2 * region)
    upper_lip, lower_lip = 0, 1

    template = rng.uniform(-1.0, 1.0, size=(v, 3))
    template[upper_lip] = (0.0, 0.12, 0.5)
    template[lower_lip] = (0.0, -0.12, 0.5)

    def unit_columns(k: int) -> np.ndarray:
        basis = rng.normal(size=(v, 3, k))
        norms = np.sqrt((basis * basis).sum(axis=(0, 1)))
        return basis / norms

    shape_basis = unit_columns(n_shape)
    pose_basis = unit_columns(n_pose_corr)

    expr_basis = rng.normal(size=(v, 3, n_expr)) * 0.05
    half = region // 2
    uppers = lip_indices[:half] if half else lip_indices[:1]
    lowers = lip_indices[half:]
    expr_basis[uppers, 1, 0] = 1.0
    expr_basis[lowers, 1, 0] = -1.0
    expr_basis[upper_lip, 1, 0] = 1.0
    expr_basis[lower_lip, 1, 0] = -1.0
    norms = np.sqrt((expr_basis * expr_basis).sum(axis=(0, 1)))
    expr_basis = expr_basis / norms

    return HeadModel(
        template=template,
        shape_basis=shape_basis,
        expr_basis=expr_basis,
        pose_basis=pose_basis,
        lip_indices=lip_indices,
        upper_face_indices=upper_face_indices,
        upper_lip_vertex=upper_lip,
        lower_lip_vertex=lower_lip,
        rotation_center=np.zeros(3),
    )


# ---------------------------------------------------------------------------
# JSON formats
# ---------------------------------------------------------------------------

def head_model_to_dict(model: HeadModel) -> dict:
    return {
        "version": HEAD_MODEL_VERSION,
        "V": model.n_vertices,
        "K_beta": model.n_shape,
        "K_psi": model.n_expr,
        "K_pc": model.n_pose_corr,
        "template": model.template.tolist(),
        "shape_basis": model.shape_basis.tolist(),
        "expr_basis": model.expr_basis.tolist(),
        "pose_basis": model.pose_basis.tolist(),
        "lip_indices": model.lip_indices.tolist(),
        "upper_face_indices": model.upper_face_indices.tolist(),
        "upper_lip_vertex": int(model.upper_lip_vertex),
        "lower_lip_vertex": int(model.lower_lip_vertex),
        "rotation_center": model.rotation_center.tolist(),
    }


def head_model_from_dict(data: dict) -> HeadModel:
    try:
        model = HeadModel(
            template=data["template"],
            shape_basis=data["shape_basis"],
            expr_basis=data["expr_basis"],
            pose_basis=data["pose_basis"],
            lip_indices=data["lip_indices"],
            upper_face_indices=data["upper_face_indices"],
            upper_lip_vertex=int(data["upper_lip_vertex"]),
            lower_lip_vertex=int(data["lower_lip_vertex"]),
            rotation_center=data["rotation_center"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad head model record: {exc}") from exc
    declared = (data.get("V"), data.get("K_beta"), data.get("K_psi"), data.get("K_pc"))
    actual = (model.n_vertices, model.n_shape, model.n_expr, model.n_pose_corr)
    if declared != actual:
        raise FormatError(f"head model header {declared} does not match arrays {actual}")
    return model


def save_head_model(path: str, model: HeadModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(head_model_to_dict(model), fh)
        fh.write("\n")


def load_head_model(path: str) -> HeadModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad head model JSON {path}: {exc}") from exc
    return head_model_from_dict(data)


def motion_to_dict(motion: MotionSequence) -> dict:
    return {
        "version": MOTION_VERSION,
        "fps": motion.fps,
        "K_psi": motion.expr.shape[1],
        "K_theta": motion.pose.shape[1],
        "beta": motion.shape.tolist(),
        "frames": [
            {"psi": motion.expr[i].tolist(), "theta": motion.pose[i].tolist()}
            for i in range(motion.n_frames)
        ],
    }


def motion_from_dict(data: dict) -> MotionSequence:
    try:
        frames = data["frames"]
        expr = np.asarray([f["psi"] for f in frames], dtype=np.float64)
        pose = np.asarray([f["theta"] for f in frames], dtype=np.float64)
        motion = MotionSequence(
            expr=expr, pose=pose,
            shape=np.asarray(data.get("beta", []), dtype=np.float64),
            fps=float(data["fps"]),
        )
    except (KeyError, TypeError, ValueError, ShapeError) as exc:
        raise FormatError(f"bad motion record: {exc}") from exc
    if motion.expr.shape[1] != int(data.get("K_psi", motion.expr.shape[1])):
        raise FormatError("motion K_psi header does not match frames")
    if motion.pose.shape[1] != int(data.get("K_theta", motion.pose.shape[1])):
        raise FormatError("motion K_theta header does not match frames")
    return motion


def save_motion(path: str, motion: MotionSequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(motion_to_dict(motion), fh)
        fh.write("\n")


def load_motion(path: str) -> MotionSequence:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad motion JSON {path}: {exc}") from exc
    return motion_from_dict(data)
