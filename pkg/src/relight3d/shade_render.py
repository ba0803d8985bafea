"""Lambertian shading under an equirectangular environment plus the
transparent shadow-catcher plane.

Irradiance is estimated with cosine-weighted hemisphere sampling over a
fixed low-discrepancy base sequence, decorrelated per pixel by a hashed
Cranley-Patterson rotation, so renders are bit-identical for a fixed seed
and scale exactly linearly with the environment radiance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvh import BVH, triangle_soup
from .diff_raster import rasterize
from .scene_model import ImageBuffer

RAY_EPS = 1e-6


@dataclass
class RenderLayers:
    object_rgba: ImageBuffer   # premultiplied RGBA
    shadow_alpha: ImageBuffer  # scalar darkening factor in [0,1]
    depth: ImageBuffer


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _radical_inverse_base2(i):
    i = np.asarray(i, dtype=np.uint32)
    i = ((i << np.uint32(16)) | (i >> np.uint32(16))) & np.uint32(0xFFFFFFFF)
    i = ((i & np.uint32(0x55555555)) << np.uint32(1)) | ((i & np.uint32(0xAAAAAAAA)) >> np.uint32(1))
    i = ((i & np.uint32(0x33333333)) << np.uint32(2)) | ((i & np.uint32(0xCCCCCCCC)) >> np.uint32(2))
    i = ((i & np.uint32(0x0F0F0F0F)) << np.uint32(4)) | ((i & np.uint32(0xF0F0F0F0)) >> np.uint32(4))
    i = ((i & np.uint32(0x00FF00FF)) << np.uint32(8)) | ((i & np.uint32(0xFF00FF00)) >> np.uint32(8))
    return i.astype(np.float64) * 2.3283064365386963e-10  # / 2^32


def hammersley(n):
    """Fixed 2D base sequence shared by every pixel of a frame."""
    i = np.arange(n)
    return np.stack([(i + 0.5) / n, _radical_inverse_base2(i)], axis=1)


def _hash64(x):
    # splitmix64 finalizer
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return x ^ (x >> np.uint64(31))


def pixel_scramble(pixel_ids, seed):
    """Per-pixel 2D offsets for Cranley-Patterson rotation of the base sequence."""
    ids = np.asarray(pixel_ids, dtype=np.uint64)
    base = _hash64(ids * np.uint64(2) + np.uint64(seed) * np.uint64(0x9E3779B1))
    o1 = (base & np.uint64(0xFFFFFFFF)).astype(np.float64) / 2**32
    o2 = (base >> np.uint64(32)).astype(np.float64) / 2**32
    return np.stack([o1, o2], axis=-1)


def build_basis(normals):
    """Orthonormal tangent frames for an array of unit normals (Duff et al.)."""
    n = np.asarray(normals, dtype=np.float64)
    sign = np.where(n[:, 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    t = np.stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], axis=1)
    bt = np.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], axis=1)
    return t, bt


def cosine_directions(normals, u):
    """Map 2D samples u (N, S, 2) to cosine-weighted directions about normals (N, 3)."""
    phi = 2.0 * np.pi * u[..., 0]
    r = np.sqrt(u[..., 1])
    local = np.stack(
        [r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1.0 - u[..., 1]))],
        axis=-1,
    )
    t, b = build_basis(normals)
    return (
        local[..., 0:1] * t[:, None, :]
        + local[..., 1:2] * b[:, None, :]
        + local[..., 2:3] * normals[:, None, :]
    )


def env_lookup(env, dirs):
    """Nearest-texel equirectangular lookup; row 0 is straight up (+y)."""
    d = np.asarray(dirs, dtype=np.float64)
    h, w = env.height, env.width
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 0], -d[..., 2])
    row = np.clip((theta / np.pi * h).astype(np.int64), 0, h - 1)
    col = ((phi / (2.0 * np.pi) + 0.5) * w).astype(np.int64) % w
    return env.radiance[row, col]


def texel_directions_and_solid_angles(env):
    """Per-texel center direction and solid angle (quadrature over the map)."""
    h, w = env.height, env.width
    theta = (np.arange(h) + 0.5) / h * np.pi
    phi = ((np.arange(w) + 0.5) / w - 0.5) * 2.0 * np.pi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack(
        [np.sin(th) * np.sin(ph), np.cos(th), -np.sin(th) * np.cos(ph)], axis=-1
    )
    omega = (2.0 * np.pi / w) * (np.pi / h) * np.sin(th)
    return dirs, omega


def _sample_dirs(normals, samples, seed, pixel_ids):
    base = hammersley(samples)  # (S, 2)
    offsets = pixel_scramble(pixel_ids, seed)  # (N, 2)
    u = (base[None, :, :] + offsets[:, None, :]) % 1.0
    return cosine_directions(normals, u)


def irradiance_batch(env, normals, samples=256, seed=0, pixel_ids=None):
    """Cosine-weighted Monte Carlo irradiance for a batch of normals: pi * mean(L)."""
    normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    if pixel_ids is None:
        pixel_ids = np.arange(len(normals))
    dirs = _sample_dirs(normals, samples, seed, pixel_ids)
    radiance = env_lookup(env, dirs)  # (N, S, 3)
    return np.pi * radiance.mean(axis=1)


def irradiance(env, normal, samples=256, seed=0):
    """Irradiance at a single surface normal."""
    if samples < 1:
        raise ValueError("need at least one sample")
    return irradiance_batch(env, np.asarray(normal)[None, :], samples, seed)[0]


# ---------------------------------------------------------------------------
# Shading
# ---------------------------------------------------------------------------


def shade_object(positions, normals, uvs, triangles, camera, texture, env,
                 samples=256, seed=0):
    """Lambertian render: per covered pixel (albedo / pi) * irradiance.

    Returns (object_rgba premultiplied, depth buffer).
    """
    out = rasterize(positions, normals, uvs, triangles, camera, texture,
                    mode="shaded", env=env, samples=samples, seed=seed)
    h, w = out.coverage.shape
    rgba = np.zeros((h, w, 4), dtype=np.float64)
    rgba[:, :, :3] = out.color  # alpha 1 on coverage, so premultiplied = color
    rgba[:, :, 3] = out.coverage
    return ImageBuffer(rgba), ImageBuffer(out.depth[:, :, None])


def camera_rays(camera):
    """World-space origin + per-pixel unit directions through pixel centers."""
    c2w = np.linalg.inv(camera.world_to_camera)
    origin = c2w[:3, 3]
    xs = (np.arange(camera.width) + 0.5 - camera.cx) / camera.fx
    ys = (np.arange(camera.height) + 0.5 - camera.cy) / camera.fy
    gx, gy = np.meshgrid(xs, ys)
    d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
    d_world = d_cam @ c2w[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    return origin, d_world


def _plane_frame(plane):
    t, b = build_basis(plane.normal[None, :])
    return t[0], b[0]


def shadow_catcher(plane, positions, triangles, env, camera,
                   samples=64, seed=0, mesh_bvh=None):
    """Shadow alpha on the catcher plane: 1 - occluded/unoccluded irradiance.

    Pixels whose primary ray misses the plane, or hits the mesh first, get 0.
    """
    origin, dirs = camera_rays(camera)
    h, w = dirs.shape[:2]
    flat_dirs = dirs.reshape(-1, 3)
    n_rays = flat_dirs.shape[0]

    # ray-plane intersection restricted to the finite square extent
    denom = flat_dirs @ plane.normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = np.where(
            np.abs(denom) > 1e-12,
            ((plane.origin - origin) @ plane.normal) / denom,
            np.inf,
        )
    t_plane = np.where(t_plane > RAY_EPS, t_plane, np.inf)
    hit = np.isfinite(t_plane)
    pts = origin[None, :] + np.where(hit, t_plane, 0.0)[:, None] * flat_dirs
    tan, bit = _plane_frame(plane)
    local = pts - plane.origin
    on_plane = (
        hit
        & (np.abs(local @ tan) <= plane.half_extent)
        & (np.abs(local @ bit) <= plane.half_extent)
    )

    if mesh_bvh is None:
        mesh_bvh = BVH(triangle_soup(positions, triangles))
    t_mesh, _ = mesh_bvh.intersect_closest(origin[None, :].repeat(n_rays, axis=0), flat_dirs)
    plane_first = on_plane & (t_plane < t_mesh)

    alpha = np.zeros(n_rays, dtype=np.float64)
    idx = np.flatnonzero(plane_first)
    if len(idx):
        p = pts[idx] + RAY_EPS * plane.normal[None, :]
        normals = np.broadcast_to(plane.normal, (len(idx), 3))
        sample_d = _sample_dirs(normals, samples, seed, idx)  # (n, S, 3)
        radiance = env_lookup(env, sample_d)
        lum = radiance.sum(axis=-1)  # (n, S)

        flat_o = np.repeat(p, samples, axis=0)
        flat_d = sample_d.reshape(-1, 3)
        occluded = mesh_bvh.intersect_any(flat_o, flat_d).reshape(len(idx), samples)

        unocc = lum.sum(axis=1)
        occ = np.where(occluded, 0.0, lum).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(unocc > 0, occ / unocc, 1.0)
        alpha[idx] = np.clip(1.0 - ratio, 0.0, 1.0)

    return ImageBuffer(alpha.reshape(h, w, 1))


def render_layers(positions, normals, uvs, triangles, camera, texture, env,
                  plane=None, samples=256, shadow_samples=64, seed=0):
    """Full per-frame layer stack: shaded object, shadow alpha, depth."""
    rgba, depth = shade_object(positions, normals, uvs, triangles, camera,
                               texture, env, samples=samples, seed=seed)
    if plane is not None:
        shadow = shadow_catcher(plane, positions, triangles, env, camera,
                                samples=shadow_samples, seed=seed)
        # the object occludes the catcher wherever it covers the pixel
        shadow.values[rgba.values[:, :, 3] >= 1.0] = 0.0
    else:
        shadow = ImageBuffer(np.zeros((camera.height, camera.width, 1)))
    return RenderLayers(object_rgba=rgba, shadow_alpha=shadow, depth=depth)
