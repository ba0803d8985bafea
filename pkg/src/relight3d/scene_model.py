"""Core scene types and their file I/O: meshes, textures, cameras, images, masks.

All color math is linear-light; gamma conversion happens only at the 8-bit
I/O boundary (2.2 decode on load, inverse on save). Float data on disk uses
the PFM format; geometry uses a text OBJ subset.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshParseError(ValueError):
    """Raised for malformed mesh files; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ImageFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with independent position / normal / uv indexing.

    triangles has shape (T, 3, 3): per corner a (position, normal, uv) index
    triple. Normals are unit length; uvs lie in [0, 1].
    """

    positions: np.ndarray  # (V, 3) float64
    normals: np.ndarray    # (N, 3) float64, unit
    uvs: np.ndarray        # (U, 2) float64 in [0,1]
    triangles: np.ndarray  # (T, 3, 3) int64

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3, 3)
        self.validate()

    def validate(self):
        if self.triangles.shape[0] == 0:
            raise MeshParseError("mesh has zero triangles")
        for k, count, what in (
            (0, len(self.positions), "position"),
            (1, len(self.normals), "normal"),
            (2, len(self.uvs), "uv"),
        ):
            idx = self.triangles[:, :, k]
            if idx.min() < 0 or idx.max() >= count:
                raise MeshParseError(
                    f"{what} index {idx.max()} out of range (have {count})"
                )
        lengths = np.linalg.norm(self.normals, axis=1)
        if not np.allclose(lengths, 1.0, atol=1e-4):
            raise MeshParseError("normals are not unit length")
        if self.uvs.size and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
            raise MeshParseError("uv coordinates outside [0,1] after wrap")

    @property
    def num_triangles(self):
        return self.triangles.shape[0]


@dataclass
class UVTexture:
    """Optimizable RGB texel grid, linear light, values >= 0."""

    texels: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        self.texels = np.asarray(self.texels, dtype=np.float64)
        if self.texels.ndim != 3 or self.texels.shape[2] != 3:
            raise ValueError("texture must be (H, W, 3)")
        if self.texels.shape[0] < 1 or self.texels.shape[1] < 1:
            raise ValueError("texture must be at least 1x1")
        if not np.all(np.isfinite(self.texels)) or self.texels.min() < 0:
            raise ValueError("texel values must be finite and >= 0")

    @property
    def width(self):
        return self.texels.shape[1]

    @property
    def height(self):
        return self.texels.shape[0]

    @classmethod
    def solid(cls, width, height, color=(0.5, 0.5, 0.5)):
        t = np.empty((height, width, 3), dtype=np.float64)
        t[:] = color
        return cls(t)


@dataclass
class Camera:
    """Pinhole camera: intrinsics in pixels plus a rigid world-to-camera transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray  # (4, 4)
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        r = self.world_to_camera[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise ValueError("rotation block is not orthonormal")

    def to_dict(self):
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "world_to_camera": [float(v) for v in self.world_to_camera.ravel()],
            "near": self.near, "far": self.far,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            world_to_camera=np.array(d["world_to_camera"], dtype=np.float64).reshape(4, 4),
            near=float(d["near"]), far=float(d["far"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ImageBuffer:
    """Row-major linear-light float image; 1 (alpha/depth), 3 (RGB) or 4 (RGBA) channels."""

    values: np.ndarray  # (H, W, C) float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 2:
            self.values = self.values[:, :, None]
        if self.values.shape[2] not in (1, 3, 4):
            raise ValueError("channel count must be 1, 3 or 4")

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[2]

    @property
    def alpha(self):
        if self.channels != 4:
            raise ValueError("image has no alpha channel")
        return self.values[:, :, 3]


@dataclass
class ObjectMask:
    """Boolean pixel mask; |M| = count of true bits."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2D")

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def count(self):
        return int(self.bits.sum())


# ---------------------------------------------------------------------------
# Mesh I/O (OBJ subset: v / vt / vn / f, 1-based, quads fan-triangulated)
# ---------------------------------------------------------------------------


def _wrap_uv(uv):
    """Wrap uv coordinates into [0,1]; values already inside are untouched.

    Wrapping u=1.0 to 0.0 would tear seams on meshes that legitimately use
    the closed interval, so only out-of-range values take the fractional part.
    """
    uv = np.asarray(uv, dtype=np.float64)
    out = uv.copy()
    outside = (uv < 0.0) | (uv > 1.0)
    out[outside] = uv[outside] - np.floor(uv[outside])
    return out


def _parse_face_corner(token, line_no):
    parts = token.split("/")
    try:
        v = int(parts[0])
        vt = int(parts[1]) if len(parts) > 1 and parts[1] else 0
        vn = int(parts[2]) if len(parts) > 2 and parts[2] else 0
    except ValueError:
        raise MeshParseError(f"bad face corner {token!r}", line_no)
    return v, vt, vn


def load_mesh(path):
    """Parse the supported OBJ subset into a TriangleMesh.

    Missing normals are computed as area-weighted vertex normals; missing UVs
    default to (0, 0). Quads are fan-triangulated.
    """
    positions, uvs, normals = [], [], []
    corners = []  # per triangle: 3 x (v, vt, vn) 1-based, 0 = absent
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            key = tokens[0]
            try:
                if key == "v":
                    positions.append([float(t) for t in tokens[1:4]])
                elif key == "vt":
                    uvs.append([float(t) for t in tokens[1:3]])
                elif key == "vn":
                    normals.append([float(t) for t in tokens[1:4]])
                elif key == "f":
                    cs = [_parse_face_corner(t, line_no) for t in tokens[1:]]
                    if len(cs) < 3:
                        raise MeshParseError("face with fewer than 3 corners", line_no)
                    for i in range(1, len(cs) - 1):
                        corners.append([cs[0], cs[i], cs[i + 1]])
                # other keys (o, g, s, mtllib, usemtl) are ignored
            except (ValueError, IndexError):
                raise MeshParseError(f"cannot parse {line!r}", line_no)
    if not corners:
        raise MeshParseError("mesh has zero triangles")

    positions = np.array(positions, dtype=np.float64).reshape(-1, 3)
    tri = np.array(corners, dtype=np.int64)  # (T, 3, 3), 1-based, 0 = absent

    def resolve(idx, count, what):
        # OBJ negative indices count from the end; 0 means absent here.
        out = np.where(idx < 0, idx + count, idx - 1)
        bad = (idx != 0) & ((out < 0) | (out >= count))
        if bad.any():
            raise MeshParseError(f"{what} index {idx[bad].ravel()[0]} out of range (have {count})")
        return out

    v_idx = resolve(tri[:, :, 0], len(positions), "vertex")
    if tri[:, :, 0].min() == 0:
        raise MeshParseError("face corner without a vertex index")

    if uvs:
        uv_arr = _wrap_uv(np.array(uvs, dtype=np.float64).reshape(-1, 2))
        vt_idx = resolve(tri[:, :, 1], len(uv_arr), "uv")
        if (tri[:, :, 1] == 0).any():
            # corners without vt fall back to a shared (0,0) coordinate
            uv_arr = np.vstack([uv_arr, [[0.0, 0.0]]])
            vt_idx = np.where(tri[:, :, 1] == 0, len(uv_arr) - 1, vt_idx)
    else:
        uv_arr = np.zeros((1, 2), dtype=np.float64)
        vt_idx = np.zeros_like(v_idx)

    if normals and (tri[:, :, 2] != 0).all():
        n_arr = np.array(normals, dtype=np.float64).reshape(-1, 3)
        lengths = np.linalg.norm(n_arr, axis=1)
        lengths[lengths == 0] = 1.0
        n_arr = n_arr / lengths[:, None]
        vn_idx = resolve(tri[:, :, 2], len(n_arr), "normal")
    else:
        n_arr = compute_vertex_normals(positions, v_idx)
        vn_idx = v_idx

    triangles = np.stack([v_idx, vn_idx, vt_idx], axis=2)
    return TriangleMesh(positions, n_arr, uv_arr, triangles)


def compute_vertex_normals(positions, v_idx):
    """Area-weighted vertex normals: sum of (unnormalized) face cross products."""
    p0 = positions[v_idx[:, 0]]
    p1 = positions[v_idx[:, 1]]
    p2 = positions[v_idx[:, 2]]
    face_n = np.cross(p1 - p0, p2 - p0)  # magnitude = 2 * area
    accum = np.zeros_like(positions)
    for c in range(3):
        np.add.at(accum, v_idx[:, c], face_n)
    lengths = np.linalg.norm(accum, axis=1)
    lengths[lengths == 0] = 1.0
    return accum / lengths[:, None]


def save_mesh(mesh, path):
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.17g} {t[1]:.17g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}")
    for tri in mesh.triangles:
        corner = " ".join(
            f"{c[0] + 1}/{c[2] + 1}/{c[1] + 1}" for c in tri
        )
        lines.append(f"f {corner}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Image I/O
# ---------------------------------------------------------------------------

GAMMA = 2.2


def srgb_decode(u8):
    """8-bit gamma-encoded -> linear light via the 2.2 power law."""
    return np.power(np.asarray(u8, dtype=np.float64) / 255.0, GAMMA)


def srgb_encode(linear):
    """Linear light -> 8-bit with rounding; clamps to [0,1] first."""
    x = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.round(255.0 * np.power(x, 1.0 / GAMMA)).astype(np.uint8)


def load_image(path):
    """Load an 8-bit raster (PNG etc.) or a PFM float map as an ImageBuffer."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return ImageBuffer(read_pfm(path))
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB", "RGBA"):
                im = im.convert("RGBA" if "A" in im.mode else "RGB")
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"unsupported image format: {path}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    linear = srgb_decode(arr).astype(np.float64)
    if linear.shape[2] == 4:
        # alpha stays linear in [0,1]; only color channels are gamma-encoded
        linear[:, :, 3] = arr[:, :, 3] / 255.0
    return ImageBuffer(linear)


def save_image(buffer, path):
    """Write PFM for .pfm paths, 8-bit gamma-encoded raster otherwise."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        write_pfm(path, buffer.values)
        return
    from PIL import Image

    vals = buffer.values
    u8 = srgb_encode(vals[:, :, :3] if vals.shape[2] >= 3 else vals[:, :, 0])
    if vals.shape[2] == 4:
        a = np.round(np.clip(vals[:, :, 3], 0, 1) * 255).astype(np.uint8)
        u8 = np.dstack([u8, a])
    elif vals.shape[2] == 1:
        u8 = u8.reshape(vals.shape[0], vals.shape[1])
    Image.fromarray(u8).save(path)


def read_pfm(path):
    """Read a PFM float map. Rows are stored bottom-to-top per the format."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        elif header == b"PF4":  # local extension for RGBA layers
            channels = 4
        else:
            raise ImageFormatError(f"not a PFM file: {path}")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        count = width * height * channels
        data = fh.read(count * 4)
        if len(data) != count * 4:
            raise ImageFormatError(f"truncated PFM file: {path}")
        dtype = "<f4" if scale < 0 else ">f4"
        arr = np.frombuffer(data, dtype=dtype).reshape(height, width, channels)
        return np.flipud(arr).astype(np.float64)


def write_pfm(path, values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, None]
    channels = values.shape[2]
    header = {1: b"Pf", 3: b"PF", 4: b"PF4"}.get(channels)
    if header is None:
        raise ImageFormatError(f"cannot write {channels}-channel PFM")
    h, w = values.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(values).astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


def mask_from_alpha(image, threshold=0.5):
    """Threshold an image's alpha channel into an ObjectMask (bit = alpha > t)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0,1]")
    return ObjectMask(image.alpha > threshold)


def load_mask(path, threshold=0.5):
    img = load_image(path)
    if img.channels == 4:
        return mask_from_alpha(img, threshold)
    # single/3 channel mask images: treat luminance as coverage
    return ObjectMask(img.values[:, :, 0] > threshold)


def save_mask(mask, path):
    from PIL import Image

    Image.fromarray((mask.bits * np.uint8(255))).save(path)
