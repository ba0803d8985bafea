"""Software rasterizer with an exact bilinear-sampling adjoint onto UV texels.

Forward: pinhole projection, z-buffered perspective-correct interpolation,
hard coverage, top-left fill rule, no back-face culling. Backward: pixel
gradients scattered onto the 4 bilinear texture taps recorded per covered
pixel. Geometry and camera are constants; only texels carry gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene_model import ImageBuffer, UVTexture

BACKGROUND = -1


@dataclass
class RenderOutput:
    color: np.ndarray       # (H, W, 3)
    depth: np.ndarray       # (H, W), camera-space z, background = far
    coverage: np.ndarray    # (H, W) float in {0, 1}
    prim_id: np.ndarray     # (H, W) int, BACKGROUND where empty
    normals: np.ndarray     # (H, W, 3) interpolated unit normals (0 on background)
    uv: np.ndarray          # (H, W, 2) interpolated uv
    sample_idx: np.ndarray  # (H, W, 4) flat texel indices of the bilinear taps
    sample_w: np.ndarray    # (H, W, 4) bilinear weights, sum to 1 on coverage
    tex_shape: tuple        # (Ht, Wt) of the sampled texture


@dataclass
class TextureGradient:
    values: np.ndarray  # (Ht, Wt, 3)


def project_points(positions, camera):
    """World points -> (screen xy, camera-space z). Screen x right, y down."""
    hom = np.hstack([positions, np.ones((len(positions), 1))])
    cam = hom @ camera.world_to_camera.T
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = camera.fx * cam[:, 0] / z + camera.cx
        sy = camera.fy * cam[:, 1] / z + camera.cy
    return np.stack([sx, sy], axis=1), z


def bilinear_taps(uv, tex_h, tex_w):
    """Wrap-mode bilinear footprint: 4 flat texel indices + weights per sample.

    uv (0,0) maps to the bottom-left of the texel grid (texel row 0 is the
    top row of the stored image).
    """
    u = np.asarray(uv)[..., 0]
    v = np.asarray(uv)[..., 1]
    tx = u * tex_w - 0.5
    ty = (1.0 - v) * tex_h - 0.5
    x0 = np.floor(tx)
    y0 = np.floor(ty)
    fx = tx - x0
    fy = ty - y0
    x0 = x0.astype(np.int64) % tex_w
    y0 = y0.astype(np.int64) % tex_h
    x1 = (x0 + 1) % tex_w
    y1 = (y0 + 1) % tex_h
    idx = np.stack(
        [y0 * tex_w + x0, y0 * tex_w + x1, y1 * tex_w + x0, y1 * tex_w + x1],
        axis=-1,
    )
    w = np.stack(
        [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1
    )
    return idx, w


def sample_texture(texture, uv):
    """Bilinear wrap-mode sample; differentiable via bilinear_taps."""
    idx, w = bilinear_taps(uv, texture.height, texture.width)
    flat = texture.texels.reshape(-1, 3)
    return np.einsum("...k,...kc->...c", w, flat[idx])


def _edge(ax, ay, bx, by, px, py):
    return (px - ax) * (by - ay) - (py - ay) * (bx - ax)


def rasterize(positions, normals, uvs, triangles, camera, texture,
              mode="albedo", env=None, samples=256, seed=0):
    """Render the mesh from `camera`. Albedo mode samples the texture directly;
    shaded mode multiplies albedo/pi by the per-pixel irradiance under `env`.
    """
    if texture.texels.size == 0:
        raise ValueError("texture is empty")
    h, w = camera.height, camera.width
    screen, z = project_points(positions, camera)

    depth = np.full((h, w), camera.far, dtype=np.float64)
    prim_id = np.full((h, w), BACKGROUND, dtype=np.int64)
    uv_buf = np.zeros((h, w, 2), dtype=np.float64)
    n_buf = np.zeros((h, w, 3), dtype=np.float64)

    for t in range(triangles.shape[0]):
        vi = triangles[t, :, 0]
        ni = triangles[t, :, 1]
        ti = triangles[t, :, 2]
        zs = z[vi]
        if np.any(zs <= camera.near) or np.all(zs >= camera.far):
            continue  # no near-plane clipping: partially-behind triangles dropped
        pts = screen[vi]
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"non-finite projection for triangle {t}")

        # orient positively in screen space (y down) so edge tests are uniform
        order = [0, 1, 2]
        area = _edge(pts[0, 0], pts[0, 1], pts[1, 0], pts[1, 1], pts[2, 0], pts[2, 1])
        if area == 0.0:
            continue
        if area < 0.0:
            order = [0, 2, 1]
            area = -area
        p0, p1, p2 = pts[order]

        x_lo = max(int(np.floor(min(p0[0], p1[0], p2[0]) - 0.5)), 0)
        x_hi = min(int(np.ceil(max(p0[0], p1[0], p2[0]) - 0.5)), w - 1)
        y_lo = max(int(np.floor(min(p0[1], p1[1], p2[1]) - 0.5)), 0)
        y_hi = min(int(np.ceil(max(p0[1], p1[1], p2[1]) - 0.5)), h - 1)
        if x_hi < x_lo or y_hi < y_lo:
            continue

        xs = np.arange(x_lo, x_hi + 1) + 0.5
        ys = np.arange(y_lo, y_hi + 1) + 0.5
        px, py = np.meshgrid(xs, ys)

        w0 = _edge(p1[0], p1[1], p2[0], p2[1], px, py)
        w1 = _edge(p2[0], p2[1], p0[0], p0[1], px, py)
        w2 = _edge(p0[0], p0[1], p1[0], p1[1], px, py)

        def covers(wv, a, b):
            d = (b[0] - a[0], b[1] - a[1])
            top_left = d[1] < 0 or (d[1] == 0 and d[0] > 0)
            return (wv > 0) | ((wv == 0) & top_left)

        inside = covers(w0, p1, p2) & covers(w1, p2, p0) & covers(w2, p0, p1)
        if not inside.any():
            continue

        lam = np.stack([w0, w1, w2], axis=-1) / area
        zt = zs[order]
        inv_z = lam @ (1.0 / zt)
        pix_z = 1.0 / inv_z

        yy, xx = np.nonzero(inside)
        gy = yy + y_lo
        gx = xx + x_lo
        nearer = pix_z[yy, xx] < depth[gy, gx]
        if not nearer.any():
            continue
        gy, gx, yy, xx = gy[nearer], gx[nearer], yy[nearer], xx[nearer]

        lam_sel = lam[yy, xx]  # (n, 3) screen-space barycentric
        persp = lam_sel / zt[None, :]
        persp /= persp.sum(axis=1, keepdims=True)

        uv_tri = uvs[np.asarray(ti)[order]]
        n_tri = normals[np.asarray(ni)[order]]
        depth[gy, gx] = pix_z[yy, xx]
        prim_id[gy, gx] = t
        uv_buf[gy, gx] = persp @ uv_tri
        nv = persp @ n_tri
        lengths = np.linalg.norm(nv, axis=1)
        lengths[lengths == 0] = 1.0
        n_buf[gy, gx] = nv / lengths[:, None]

    covered = prim_id != BACKGROUND
    coverage = covered.astype(np.float64)
    sample_idx = np.zeros((h, w, 4), dtype=np.int64)
    sample_w = np.zeros((h, w, 4), dtype=np.float64)
    color = np.zeros((h, w, 3), dtype=np.float64)
    if covered.any():
        idx, tw = bilinear_taps(uv_buf[covered], texture.height, texture.width)
        sample_idx[covered] = idx
        sample_w[covered] = tw
        flat = texture.texels.reshape(-1, 3)
        albedo = np.einsum("nk,nkc->nc", tw, flat[idx])
        if mode == "albedo":
            color[covered] = albedo
        elif mode == "shaded":
            if env is None:
                raise ValueError("shaded mode requires an environment light")
            from .shade_render import irradiance_batch

            irr = irradiance_batch(env, n_buf[covered], samples=samples, seed=seed,
                                   pixel_ids=np.flatnonzero(covered.ravel()))
            color[covered] = albedo / np.pi * irr
        else:
            raise ValueError(f"unknown render mode {mode!r}")

    return RenderOutput(
        color=color, depth=depth, coverage=coverage, prim_id=prim_id,
        normals=n_buf, uv=uv_buf, sample_idx=sample_idx, sample_w=sample_w,
        tex_shape=(texture.height, texture.width),
    )


def rasterize_mesh(mesh, camera, texture, **kw):
    return rasterize(mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
                     camera, texture, **kw)


def render_depth(mesh, camera):
    """Camera-space z per covered pixel (far on background) plus the
    normalized 8-bit-ready variant (near -> 1, far -> 0) for the external
    view refiner."""
    dummy = UVTexture(np.ones((1, 1, 3)))
    out = rasterize(mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
                    camera, dummy)
    depth = ImageBuffer(out.depth[:, :, None])
    norm = (camera.far - out.depth) / (camera.far - camera.near)
    normalized = ImageBuffer(np.clip(norm, 0.0, 1.0)[:, :, None])
    return depth, normalized


def backward_texture(render, pixel_grad):
    """Adjoint of the bilinear texture sampling: scatter pixel gradients onto
    the recorded 4 taps. Accumulation order is numpy's fixed element order,
    so results are bit-stable."""
    grad_vals = pixel_grad.values if isinstance(pixel_grad, ImageBuffer) else np.asarray(pixel_grad)
    h, w = render.coverage.shape
    if grad_vals.shape[:2] != (h, w):
        raise ValueError("pixel gradient dimensions do not match the render")
    if render.sample_idx is None:
        raise ValueError("render carries no sample records")
    th, tw = render.tex_shape
    grad = np.zeros((th * tw, 3), dtype=np.float64)
    covered = render.coverage > 0
    if covered.any():
        idx = render.sample_idx[covered]          # (n, 4)
        wts = render.sample_w[covered]            # (n, 4)
        pg = grad_vals[covered][:, :3]            # (n, 3)
        contrib = wts[:, :, None] * pg[:, None, :]
        np.add.at(grad, idx.ravel(), contrib.reshape(-1, 3))
    return TextureGradient(grad.reshape(th, tw, 3))
