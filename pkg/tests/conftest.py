import numpy as np
import pytest

from relight3d import synthetic

# one verdict line per acceptance criterion, echoed after the run summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def quad():
    return synthetic.make_quad()


@pytest.fixture
def cube():
    return synthetic.make_cube()


@pytest.fixture
def front_camera():
    from relight3d.scene_model import Camera

    return Camera(
        fx=64.0, fy=64.0, cx=32.0, cy=32.0, width=64, height=64,
        world_to_camera=synthetic.look_at((0.0, 0.0, -2.5)), near=0.1, far=10.0,
    )


# ---------------------------------------------------------------------------
# Independent oracles (scalar reimplementations, kept free of package code
# paths they are meant to check)
# ---------------------------------------------------------------------------


def oracle_project(p, camera):
    hom = np.append(np.asarray(p, float), 1.0)
    cam = camera.world_to_camera @ hom
    z = cam[2]
    return np.array([camera.fx * cam[0] / z + camera.cx,
                     camera.fy * cam[1] / z + camera.cy]), z


def oracle_bilinear(texels, u, v):
    """Scalar wrap-mode bilinear sample; independent of the rasterizer path."""
    h, w = texels.shape[:2]
    tx = u * w - 0.5
    ty = (1.0 - v) * h - 0.5
    x0, y0 = int(np.floor(tx)), int(np.floor(ty))
    fx, fy = tx - x0, ty - y0
    out = np.zeros(3)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            out += wx * wy * texels[(y0 + dy) % h, (x0 + dx) % w]
    return out


def oracle_raster_pixel(mesh, camera, texels, px, py):
    """Closest-hit color for one pixel center via direct barycentric solves.

    Returns (color, depth, tri_index) or None if no triangle covers the pixel.
    Pixels exactly on triangle edges are not resolved (returns 'edge').
    """
    point = np.array([px + 0.5, py + 0.5])
    best = None
    for t in range(mesh.triangles.shape[0]):
        vi = mesh.triangles[t, :, 0]
        ti = mesh.triangles[t, :, 2]
        scr, zs = [], []
        for v in vi:
            s, z = oracle_project(mesh.positions[v], camera)
            scr.append(s)
            zs.append(z)
        if min(zs) <= camera.near:
            continue
        a, b, c = scr
        m = np.column_stack([b - a, c - a])
        det = np.linalg.det(m)
        if det == 0:
            continue
        lb, lc = np.linalg.solve(m, point - a)
        la = 1.0 - lb - lc
        lam = np.array([la, lb, lc])
        if np.any(np.isclose(lam, 0.0, atol=1e-12)):
            return "edge"
        if np.any(lam < 0):
            continue
        inv_z = lam @ (1.0 / np.array(zs))
        depth = 1.0 / inv_z
        if best is None or depth < best[1]:
            persp = lam / np.array(zs)
            persp = persp / persp.sum()
            uv = persp @ mesh.uvs[ti]
            best = (oracle_bilinear(texels, uv[0], uv[1]), depth, t)
    return best


def oracle_irradiance(env, normal, sub=8):
    """Refined quadrature of the hemispherical cosine-weighted integral over
    the (piecewise-constant) environment map."""
    h, w = env.height, env.width
    th = (np.arange(h * sub) + 0.5) / (h * sub) * np.pi
    ph = ((np.arange(w * sub) + 0.5) / (w * sub) - 0.5) * 2.0 * np.pi
    T, P = np.meshgrid(th, ph, indexing="ij")
    dirs = np.stack([np.sin(T) * np.sin(P), np.cos(T), -np.sin(T) * np.cos(P)], axis=-1)
    L = env.radiance[
        np.minimum((T / np.pi * h).astype(int), h - 1),
        (((P / (2 * np.pi)) + 0.5) * w).astype(int) % w,
    ]
    omega = (2 * np.pi / (w * sub)) * (np.pi / (h * sub)) * np.sin(T)
    cos = np.maximum(dirs @ np.asarray(normal, float), 0.0)
    return (L * (cos * omega)[:, :, None]).sum(axis=(0, 1))


def oracle_ray_triangle(origin, direction, tri):
    """Scalar Moller-Trumbore; returns t or None."""
    v0, v1, v2 = np.asarray(tri, float)
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(direction, e2)
    det = e1 @ p
    if abs(det) < 1e-12:
        return None
    inv = 1.0 / det
    s = np.asarray(origin, float) - v0
    u = (s @ p) * inv
    if u < 0 or u > 1:
        return None
    q = np.cross(s, e1)
    v = (direction @ q) * inv
    if v < 0 or u + v > 1:
        return None
    t = (e2 @ q) * inv
    return t if t > 1e-9 else None


def oracle_occluded(origin, direction, tris):
    return any(oracle_ray_triangle(origin, direction, tri) is not None for tri in tris)


# ---------------------------------------------------------------------------
# On-disk scene used by the CLI and acceptance tests
# ---------------------------------------------------------------------------


def build_cli_scene(root, res=48):
    """Write a complete deterministic pipeline scene and return its config path."""
    return synthetic.write_demo_scene(root, res=res)
