"""Texture refinement: adaptive-moment gradient descent on UV texels against
externally refined target views, with the view-set manifest that feeds the
external refiner.

Each iteration renders every view in albedo mode, evaluates the mean
squared pixel error against the refined targets (optionally masked to the
object), back-propagates through the rasterizer's bilinear taps, and steps
the texels, clamping them to stay non-negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diff_raster
from .scene_model import (
    Camera,
    ImageBuffer,
    ObjectMask,
    UVTexture,
    load_image,
    load_mask,
    save_image,
    save_mask,
    write_pfm,
)


class RefineError(RuntimeError):
    pass


@dataclass
class ViewSample:
    camera: Camera
    target: ImageBuffer
    coarse: ImageBuffer | None = None
    mask: ObjectMask | None = None
    depth_path: str | None = None

    def __post_init__(self):
        if (self.target.height, self.target.width) != (self.camera.height, self.camera.width):
            raise ValueError("target dimensions differ from camera image size")
        if self.mask is not None and (self.mask.height, self.mask.width) != (
            self.camera.height, self.camera.width
        ):
            raise ValueError("mask dimensions differ from camera image size")


@dataclass
class ViewSet:
    samples: list
    mesh: object
    initial_texture: UVTexture | None = None

    def __post_init__(self):
        if not self.samples:
            raise ValueError("view set needs at least one sample")


@dataclass
class RefineOptions:
    iterations: int = 400
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    masked: bool = True
    texture_size: int = 1024
    # Convergence floor: a loss at machine-zero scale means the targets are
    # already reproduced, and the scale-invariant moment update would otherwise
    # amplify quantization noise into visible texel drift.
    loss_tolerance: float = 1e-12

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        for b in (self.beta1, self.beta2):
            if not 0.0 < b < 1.0:
                raise ValueError("moment decay rates must lie in (0,1)")
        if self.loss_tolerance < 0:
            raise ValueError("loss tolerance must be non-negative")


def compute_view_loss(render, target, mask=None):
    """Mean squared pixel error over the domain plus its pixel gradient.

    L = sum_p ||render(p) - target(p)||^2 / N over masked pixels (or all);
    dL/d render(p) = 2 (render(p) - target(p)) / N inside, 0 outside.
    """
    r = render.values if isinstance(render, ImageBuffer) else np.asarray(render)
    t = target.values if isinstance(target, ImageBuffer) else np.asarray(target)
    r = r[:, :, :3]
    t = t[:, :, :3]
    if r.shape != t.shape:
        raise ValueError(f"render {r.shape} vs target {t.shape} dimension mismatch")
    diff = r - t
    if mask is not None:
        if mask.bits.shape != r.shape[:2]:
            raise ValueError("mask dimensions do not match images")
        n = mask.count
        if n == 0:
            raise ValueError("mask selects zero pixels")
        domain = mask.bits
    else:
        n = r.shape[0] * r.shape[1]
        domain = np.ones(r.shape[:2], dtype=bool)
    masked_diff = np.where(domain[:, :, None], diff, 0.0)
    loss = float((masked_diff ** 2).sum() / n)
    grad = 2.0 * masked_diff / n
    return loss, ImageBuffer(grad)


def refine_texture(viewset, texture, opts):
    """Run the optimization loop; returns (refined texture, loss history)."""
    mesh = viewset.mesh
    texels = texture.texels.copy()
    m = np.zeros_like(texels)
    v = np.zeros_like(texels)
    history = []

    for it in range(opts.iterations):
        total_loss = 0.0
        grad = np.zeros_like(texels)
        current = UVTexture(texels)
        for sample in viewset.samples:
            out = diff_raster.rasterize(
                mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
                sample.camera, current, mode="albedo",
            )
            mask = sample.mask if opts.masked else None
            loss, pixel_grad = compute_view_loss(
                ImageBuffer(out.color), sample.target, mask
            )
            total_loss += loss
            grad += diff_raster.backward_texture(out, pixel_grad).values
        if not np.isfinite(total_loss):
            raise RefineError(f"non-finite loss at iteration {it}")
        history.append(total_loss)
        if total_loss <= opts.loss_tolerance:
            break

        # adaptive moments step with bias correction, then clamp to >= 0
        m = opts.beta1 * m + (1 - opts.beta1) * grad
        v = opts.beta2 * v + (1 - opts.beta2) * grad * grad
        m_hat = m / (1 - opts.beta1 ** (it + 1))
        v_hat = v / (1 - opts.beta2 ** (it + 1))
        texels = texels - opts.learning_rate * m_hat / (np.sqrt(v_hat) + opts.epsilon)
        np.maximum(texels, 0.0, out=texels)

    return UVTexture(texels), history


def accumulated_sampling_weight(viewset, texture):
    """Total bilinear weight each texel receives across all views; texels with
    (near) zero weight are never constrained by the data."""
    mesh = viewset.mesh
    total = np.zeros((texture.height, texture.width, 3))
    ones = ImageBuffer(np.ones((1, 1, 3)))
    for sample in viewset.samples:
        out = diff_raster.rasterize(
            mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
            sample.camera, texture, mode="albedo",
        )
        g = ImageBuffer(np.ones((sample.camera.height, sample.camera.width, 3)))
        total += diff_raster.backward_texture(out, g).values
    return total[:, :, 0]


# ---------------------------------------------------------------------------
# The manifest: file contract with the external view refiner
# ---------------------------------------------------------------------------


def export_refiner_request(mesh, texture, cameras, out_dir):
    """Write per-camera coarse renders, depth maps, and camera files plus a
    manifest whose `target_image` fields are left empty for the external
    refiner to fill in."""
    if not cameras:
        raise ValueError("need at least one camera")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, camera in enumerate(cameras):
        cam_file = f"view_{i:03d}.camera.json"
        coarse_file = f"view_{i:03d}.coarse.pfm"
        depth_file = f"view_{i:03d}.depth.pfm"
        depth8_file = f"view_{i:03d}.depth.png"
        mask_file = f"view_{i:03d}.mask.png"

        camera.save(out_dir / cam_file)
        out = diff_raster.rasterize(
            mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
            camera, texture, mode="albedo",
        )
        write_pfm(out_dir / coarse_file, out.color)
        depth, depth8 = diff_raster.render_depth(mesh, camera)
        write_pfm(out_dir / depth_file, depth.values)
        save_image(ImageBuffer(np.repeat(depth8.values, 3, axis=2)), out_dir / depth8_file)
        save_mask(ObjectMask(out.coverage > 0), out_dir / mask_file)

        records.append({
            "camera_file": cam_file,
            "coarse_image": coarse_file,
            "depth_image": depth_file,
            "target_image": "",
            "mask_image": mask_file,
        })
    manifest_path = out_dir / "viewset.json"
    manifest_path.write_text(json.dumps({"records": records}, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_viewset(manifest_path, mesh, require_targets=True):
    """Load a manifest back into a ViewSet; paths are relative to the manifest."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    doc = json.loads(manifest_path.read_text())
    samples = []
    for rec in doc["records"]:
        if not rec.get("target_image"):
            if require_targets:
                raise RefineError(
                    f"manifest record {rec['camera_file']} has no target image"
                )
            continue
        camera = Camera.load(base / rec["camera_file"])
        target = load_image(base / rec["target_image"])
        coarse = load_image(base / rec["coarse_image"]) if rec.get("coarse_image") else None
        mask = load_mask(base / rec["mask_image"]) if rec.get("mask_image") else None
        samples.append(ViewSample(
            camera=camera, target=target, coarse=coarse, mask=mask,
            depth_path=rec.get("depth_image"),
        ))
    return ViewSet(samples=samples, mesh=mesh)
