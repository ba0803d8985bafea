"""Synthetic scene builders used by the experiment scripts and the test
suite: parametric meshes, orbit cameras, and simple sun environments."""

from __future__ import annotations

import numpy as np

from .illumi_combiner import EnvironmentLight
from .scene_model import Camera, TriangleMesh


def make_quad(size=1.0, z=0.0):
    """Unit quad in the xy plane, facing -z, with full [0,1]^2 UVs."""
    s = size
    positions = np.array([[-s, -s, z], [s, -s, z], [s, s, z], [-s, s, z]], float)
    normals = np.array([[0.0, 0.0, -1.0]] * 4)
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    triangles = np.array([
        [[0, 0, 0], [1, 1, 1], [2, 2, 2]],
        [[0, 0, 0], [2, 2, 2], [3, 3, 3]],
    ])
    return TriangleMesh(positions, normals, uvs, triangles)


def make_cube(size=0.5, center=(0.0, 0.0, 0.0)):
    """Axis-aligned cube with per-vertex diagonal normals and shared UVs."""
    c = np.asarray(center, float)
    corners = np.array([
        [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
        [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
    ], float)
    positions = c + size * corners
    normals = corners / np.sqrt(3.0)
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    faces = [
        [0, 1, 2, 3], [5, 4, 7, 6], [4, 0, 3, 7],
        [1, 5, 6, 2], [4, 5, 1, 0], [3, 2, 6, 7],
    ]
    tris = []
    for f in faces:
        for a, b, cc in ((0, 1, 2), (0, 2, 3)):
            tri = [[f[a], f[a], a], [f[b], f[b], b], [f[cc], f[cc], cc]]
            tris.append(tri)
    return TriangleMesh(positions, normals, uvs, np.array(tris))


def make_sphere(radius=1.0, center=(0.0, 0.0, 0.0), rings=16, segments=32):
    """UV sphere; vertex normals point radially outward."""
    c = np.asarray(center, float)
    positions, normals, uvs = [], [], []
    for r in range(rings + 1):
        theta = np.pi * r / rings
        v = 1.0 - r / rings
        for s in range(segments + 1):
            phi = 2.0 * np.pi * s / segments
            n = np.array([
                np.sin(theta) * np.cos(phi),
                np.cos(theta),
                np.sin(theta) * np.sin(phi),
            ])
            positions.append(c + radius * n)
            normals.append(n)
            uvs.append([s / segments, v])
    tris = []
    stride = segments + 1
    for r in range(rings):
        for s in range(segments):
            a = r * stride + s
            b = a + stride
            for tri in ([a, b, a + 1], [a + 1, b, b + 1]):
                tris.append([[i, i, i] for i in tri])
    return TriangleMesh(np.array(positions), np.array(normals), np.array(uvs),
                        np.array(tris))


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)):
    """World-to-camera matrix with +z forward, y down in screen space."""
    eye = np.asarray(eye, float)
    f = np.asarray(target, float) - eye
    f = f / np.linalg.norm(f)
    r = np.cross(f, np.asarray(up, float))
    r = r / np.linalg.norm(r)
    u = np.cross(f, r)
    rot = np.stack([r, u, f])
    w2c = np.eye(4)
    w2c[:3, :3] = rot
    w2c[:3, 3] = -rot @ eye
    return w2c


def orbit_cameras(count, distance=2.5, resolution=64, focal=64.0,
                  axis_offset=0.4, target=(0.0, 0.0, 0.0), front=(0.0, 0.0, -1.0),
                  spread=1.2, near=0.1, far=10.0):
    """Cameras fanned around the `front` direction, all looking at `target`."""
    front = np.asarray(front, float)
    front = front / np.linalg.norm(front)
    side = np.cross((0.0, 1.0, 0.0), front)
    if np.linalg.norm(side) < 1e-6:
        side = np.array([1.0, 0.0, 0.0])
    side = side / np.linalg.norm(side)
    cams = []
    for k in range(count):
        ang = (k - (count - 1) / 2) / max(count, 1) * spread
        lift = axis_offset * np.cos(k)
        eye = np.asarray(target, float) + distance * (
            np.cos(ang) * front + np.sin(ang) * side
        ) + np.array([0.0, lift, 0.0])
        cams.append(Camera(
            fx=focal, fy=focal, cx=resolution / 2, cy=resolution / 2,
            width=resolution, height=resolution,
            world_to_camera=look_at(eye, target), near=near, far=far,
        ))
    return cams


def sun_environment(height=4, sun_row=0, sun_col=2, sun_radiance=10.0,
                    ambient=0.0):
    """Single bright texel over an optional uniform floor level."""
    rad = np.full((height, 2 * height, 3), float(ambient))
    rad[sun_row, sun_col] = sun_radiance
    return EnvironmentLight(rad)


def gradient_environment(height=8, seed=0):
    """Random smooth-ish colored environment for property tests."""
    rng = np.random.default_rng(seed)
    rad = rng.random((height, 2 * height, 3)) * 2.0
    return EnvironmentLight(rad)


def write_demo_scene(root, res=48):
    """Write a complete deterministic pipeline scene (mesh, texture,
    environment, cameras, rig, background, config) and return the config path.

    Used by the experiment scripts and as the fixture scene for the CLI and
    acceptance tests.
    """
    import json
    from pathlib import Path

    from . import skinning
    from .scene_model import ImageBuffer, save_image, save_mesh, write_pfm
    from .skinning import Bone, Skeleton, SkinWeights

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(42)

    mesh = make_cube(size=0.4, center=(0.0, 0.5, 0.0))
    save_mesh(mesh, root / "mesh.obj")

    write_pfm(root / "texture.pfm", rng.random((8, 8, 3)))

    env = sun_environment(height=8, sun_row=2, sun_col=4,
                          sun_radiance=20.0, ambient=0.05)
    env.save(root / "environment.pfm")

    bg = np.tile(np.linspace(0.2, 0.8, res)[None, :, None], (res, 1, 3))
    save_image(ImageBuffer(bg), root / "background.png")

    cam = Camera(fx=float(res), fy=float(res), cx=res / 2, cy=res / 2,
                 width=res, height=res,
                 world_to_camera=look_at((1.2, 1.6, -2.6), (0, 0.4, 0)),
                 near=0.1, far=50.0)
    cam.save(root / "camera.json")
    for i, c in enumerate(orbit_cameras(
            4, resolution=res, focal=float(res), target=(0, 0.5, 0),
            distance=2.6, axis_offset=0.3)):
        c.save(root / f"cam_{i}.json")

    obj_vals = np.zeros((res, res, 4))
    obj_vals[res // 6:5 * res // 6, res // 6:5 * res // 6, :3] = [0.6, 0.3, 0.2]
    obj_vals[res // 6:5 * res // 6, res // 6:5 * res // 6, 3] = 1.0
    save_image(ImageBuffer(obj_vals), root / "object.png")
    save_image(ImageBuffer(obj_vals), root / "mask.png")

    skel = Skeleton([Bone("root", None, np.eye(4))])
    n = len(mesh.positions)
    skin = SkinWeights(np.zeros((n, 4), dtype=int), np.tile([1.0, 0, 0, 0], (n, 1)))
    skinning.save_rig(skel, skin, root / "rig.json")
    clip = skinning.PoseClip(fps=8.0, frames=np.tile(np.eye(4), (2, 1, 1, 1)))
    skinning.save_pose_clip(clip, root / "clip.json")

    config = {
        "paths": {
            "mesh": "mesh.obj",
            "texture": "texture.pfm",
            "environment": "environment.pfm",
            "background": "background.png",
            "camera": "camera.json",
            "cameras": [f"cam_{i}.json" for i in range(4)],
            "object_image": "object.png",
            "mask": "mask.png",
            "rig": "rig.json",
            "pose_clip": "clip.json",
            "view_manifest": "views/viewset.json",
            "output_dir": "out",
        },
        "light": {"lambda1": 0.5, "lambda2": 0.5, "ambient": 0.5},
        "refine": {"iterations": 20, "learning_rate": 0.02, "texture_size": 8},
        "render": {"samples": 32, "shadow_samples": 16, "seed": 0},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    return config_path
