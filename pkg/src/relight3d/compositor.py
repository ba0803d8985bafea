"""Composite rendered object + shadow layers over the background photograph,
for single stills and skinned animation sequences.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import shade_render, skinning
from .scene_model import ImageBuffer, save_image


def composite(background, layers):
    """out = object_rgb + (1 - object_alpha) * background * (1 - shadow_alpha).

    Shadow darkens the background multiplicatively wherever the object does
    not cover, preserving background texture detail in shadowed regions.
    """
    bg = background.values[:, :, :3]
    rgba = layers.object_rgba.values
    shadow = layers.shadow_alpha.values[:, :, 0]
    if bg.shape[:2] != rgba.shape[:2] or bg.shape[:2] != shadow.shape[:2]:
        raise ValueError("background and layer dimensions differ")
    alpha = rgba[:, :, 3:4]
    out = rgba[:, :, :3] + (1.0 - alpha) * bg * (1.0 - shadow[:, :, None])
    return ImageBuffer(out)


def render_sequence(mesh, skeleton, skin, clip, camera, texture, env,
                    background, out_dir, plane=None, auto_plane=True,
                    samples=256, shadow_samples=64, seed=0,
                    write_manifest=True):
    """Skin -> shade -> shadow -> composite each frame of the pose clip.

    Frames are pure functions of their inputs; output files are named with
    zero-padded frame indices. Returns the list of written frame paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for f in range(clip.num_frames):
            positions, normals, uvs, triangles = skinning.skin_vertices(
                mesh, skeleton, skin, clip.frames[f]
            )
            frame_plane = plane
            if frame_plane is None and auto_plane:
                frame_plane = skinning.auto_place_shadow_plane(positions)
            layers = shade_render.render_layers(
                positions, normals, uvs, triangles, camera, texture, env,
                plane=frame_plane, samples=samples,
                shadow_samples=shadow_samples, seed=seed,
            )
            frame = composite(background, layers)
            path = out_dir / f"frame_{f:04d}.png"
            save_image(frame, path)
            written.append(path)
    except Exception:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    if write_manifest:
        manifest = {
            "fps": clip.fps,
            "frames": [p.name for p in written],
        }
        (out_dir / "frames.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return written
