"""Skeletons, forward kinematics, linear blend skinning, shadow plane placement.

UV coordinates never change under deformation: skin_vertices returns the
mesh's own uv array untouched, which is what keeps the refined texture valid
for every pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_INFLUENCES = 4


@dataclass
class Bone:
    name: str
    parent: int | None  # index into the bone list, topologically before self
    bind_local: np.ndarray  # (4,4) rigid

    def __post_init__(self):
        self.bind_local = np.asarray(self.bind_local, dtype=np.float64).reshape(4, 4)


@dataclass
class Skeleton:
    bones: list[Bone]
    global_bind: np.ndarray = field(init=False)    # (B,4,4)
    inverse_bind: np.ndarray = field(init=False)   # (B,4,4)

    def __post_init__(self):
        roots = 0
        for i, b in enumerate(self.bones):
            if b.parent is None:
                roots += 1
            elif not 0 <= b.parent < i:
                raise ValueError(f"bone {i} parent {b.parent} is not topologically earlier")
        if roots != 1:
            raise ValueError(f"skeleton must have exactly one root, got {roots}")
        locals_ = np.stack([b.bind_local for b in self.bones])
        self.global_bind = forward_kinematics(self, locals_)
        self.inverse_bind = np.linalg.inv(self.global_bind)

    @property
    def num_bones(self):
        return len(self.bones)


@dataclass
class SkinWeights:
    """Per-vertex bone influences, at most 4, renormalized to sum to 1."""

    bone_indices: np.ndarray  # (V, 4) int, padded with 0
    weights: np.ndarray       # (V, 4) float, padded with 0

    def __post_init__(self):
        self.bone_indices = np.asarray(self.bone_indices, dtype=np.int64).reshape(-1, MAX_INFLUENCES)
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1, MAX_INFLUENCES)
        if self.weights.min() < 0:
            raise ValueError("skin weights must be non-negative")
        totals = self.weights.sum(axis=1)
        if np.any(totals <= 0):
            raise ValueError("every vertex needs positive total weight")
        self.weights = self.weights / totals[:, None]

    @classmethod
    def from_pairs(cls, pairs_per_vertex):
        """pairs_per_vertex: per vertex a list of (bone_index, weight)."""
        v = len(pairs_per_vertex)
        idx = np.zeros((v, MAX_INFLUENCES), dtype=np.int64)
        w = np.zeros((v, MAX_INFLUENCES), dtype=np.float64)
        for i, pairs in enumerate(pairs_per_vertex):
            if len(pairs) > MAX_INFLUENCES:
                pairs = sorted(pairs, key=lambda p: -p[1])[:MAX_INFLUENCES]
            for j, (b, wt) in enumerate(pairs):
                idx[i, j] = b
                w[i, j] = wt
        return cls(idx, w)


@dataclass
class PoseClip:
    """Animation clip: per-frame, per-bone local rigid transforms."""

    fps: float
    frames: np.ndarray  # (F, B, 4, 4)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[2:] != (4, 4):
            raise ValueError("frames must be (F, B, 4, 4)")
        r = self.frames[:, :, :3, :3]
        rrt = np.einsum("fbij,fbkj->fbik", r, r)
        if not np.allclose(rrt, np.eye(3), atol=1e-5):
            raise ValueError("pose rotation blocks must be orthonormal")

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class ShadowPlane:
    origin: np.ndarray      # (3,)
    normal: np.ndarray      # (3,) unit
    half_extent: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-6:
            raise ValueError("plane normal must be unit length")
        if self.half_extent <= 0:
            raise ValueError("half extent must be positive")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def forward_kinematics(skeleton, locals_):
    """Compose local transforms down the hierarchy: global[b] = global[parent] @ local[b]."""
    locals_ = np.asarray(locals_, dtype=np.float64)
    if locals_.shape[0] != len(skeleton.bones):
        raise ValueError(
            f"frame has {locals_.shape[0]} transforms for {len(skeleton.bones)} bones"
        )
    out = np.empty_like(locals_)
    for i, bone in enumerate(skeleton.bones):
        if bone.parent is None:
            out[i] = locals_[i]
        else:
            out[i] = out[bone.parent] @ locals_[i]
    return out


evaluate_pose = forward_kinematics


def skin_vertices(mesh, skeleton, skin, frame_locals):
    """Linear blend skinning for one pose.

    Returns (positions, normals, uvs, triangles). uvs is mesh.uvs itself
    (same storage), making pose-independence of the texture mapping checkable
    by identity. When the mesh indexes normals separately from positions the
    normals are recomputed from the deformed geometry and re-indexed by
    position (triangles adjusted accordingly).
    """
    if skin.bone_indices.shape[0] != mesh.positions.shape[0]:
        raise ValueError("skin weights do not cover every vertex")
    if skin.bone_indices.max() >= skeleton.num_bones:
        raise IndexError(f"bone index {skin.bone_indices.max()} out of range")
    globals_ = forward_kinematics(skeleton, frame_locals)
    skinning_mats = globals_ @ skeleton.inverse_bind  # (B,4,4)

    # blended per-vertex transform: sum_j w_j * M[bone_j]
    per_vertex = np.einsum(
        "vj,vjab->vab", skin.weights, skinning_mats[skin.bone_indices]
    )
    p = mesh.positions
    new_p = np.einsum("vab,vb->va", per_vertex[:, :3, :3], p) + per_vertex[:, :3, 3]

    if len(mesh.normals) == len(p):
        # rigid bones: rotation block only, then renormalize
        new_n = np.einsum("vab,vb->va", per_vertex[:, :3, :3], mesh.normals)
        lengths = np.linalg.norm(new_n, axis=1)
        lengths[lengths == 0] = 1.0
        new_n = new_n / lengths[:, None]
        triangles = mesh.triangles
    else:
        from .scene_model import compute_vertex_normals

        new_n = compute_vertex_normals(new_p, mesh.triangles[:, :, 0])
        triangles = mesh.triangles.copy()
        triangles[:, :, 1] = triangles[:, :, 0]
    return new_p, new_n, mesh.uvs, triangles


def auto_place_shadow_plane(positions, extent_scale=2.0, up=(0.0, 1.0, 0.0)):
    """Ground plane under the mesh: origin at (centroid.x, min_y, centroid.z)."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if positions.shape[0] == 0:
        raise ValueError("cannot place a shadow plane under an empty mesh")
    centroid = positions.mean(axis=0)
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    diagonal = float(np.linalg.norm(hi - lo))
    half_extent = extent_scale * diagonal if diagonal > 0 else extent_scale
    origin = np.array([centroid[0], lo[1], centroid[2]])
    return ShadowPlane(origin, np.asarray(up, dtype=np.float64), half_extent)


# ---------------------------------------------------------------------------
# Rig / clip file I/O (JSON)
# ---------------------------------------------------------------------------


def load_rig(path):
    """Rig file: {"bones": [{name, parent, bind_local: [16]}], "weights": [[[bone, w], ...], ...]}."""
    doc = json.loads(Path(path).read_text())
    bones = [
        Bone(
            name=b["name"],
            parent=b["parent"] if b["parent"] is not None and b["parent"] >= 0 else None,
            bind_local=np.array(b["bind_local"], dtype=np.float64).reshape(4, 4),
        )
        for b in doc["bones"]
    ]
    skeleton = Skeleton(bones)
    skin = SkinWeights.from_pairs(doc["weights"])
    return skeleton, skin


def save_rig(skeleton, skin, path):
    doc = {
        "bones": [
            {
                "name": b.name,
                "parent": -1 if b.parent is None else b.parent,
                "bind_local": [float(v) for v in b.bind_local.ravel()],
            }
            for b in skeleton.bones
        ],
        "weights": [
            [[int(bi), float(w)] for bi, w in zip(row_i, row_w) if w > 0]
            for row_i, row_w in zip(skin.bone_indices, skin.weights)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_pose_clip(path):
    """Clip file: {"fps": f, "frames": [[16 floats per bone, row-major], ...]}."""
    doc = json.loads(Path(path).read_text())
    frames = np.array(doc["frames"], dtype=np.float64)
    frames = frames.reshape(frames.shape[0], -1, 4, 4)
    return PoseClip(fps=float(doc["fps"]), frames=frames)


def save_pose_clip(clip, path):
    doc = {
        "fps": clip.fps,
        "frames": [
            [[float(v) for v in bone.ravel()] for bone in frame]
            for frame in clip.frames
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")
