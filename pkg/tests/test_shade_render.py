import numpy as np
import pytest

from relight3d import shade_render as sr
from relight3d import synthetic
from relight3d.bvh import BVH, triangle_soup
from relight3d.illumi_combiner import EnvironmentLight, make_uniform_ambient
from relight3d.scene_model import Camera, UVTexture
from relight3d.skinning import ShadowPlane

from conftest import oracle_irradiance, oracle_occluded, oracle_ray_triangle


def oblique_camera(res=48, eye=(1.5, 2.5, -3.0), target=(0, 0, 0)):
    return Camera(
        fx=res, fy=res, cx=res / 2, cy=res / 2, width=res, height=res,
        world_to_camera=synthetic.look_at(eye, target), near=0.1, far=50.0,
    )


class TestIrradiance:
    def test_uniform_env_gives_pi_L0(self):
        env = make_uniform_ambient(1.7)
        out = sr.irradiance(env, np.array([0.0, 1.0, 0.0]), samples=256)
        assert np.allclose(out, np.pi * 1.7, rtol=0.02)

    def test_black_env_exact_zero(self):
        env = EnvironmentLight(np.zeros((4, 8, 3)))
        out = sr.irradiance(env, np.array([0.0, 1.0, 0.0]), samples=64)
        assert (out == 0).all()

    def test_single_texel_sun_vs_quadrature(self):
        env = synthetic.sun_environment(height=4, sun_row=0, sun_col=2, sun_radiance=10.0)
        n = np.array([0.0, 1.0, 0.0])
        mc = sr.irradiance(env, n, samples=1024)
        ref = oracle_irradiance(env, n)
        assert np.abs(mc - ref).max() / ref.max() < 0.05

    def test_tilted_normal_vs_quadrature(self):
        env = synthetic.gradient_environment(height=4, seed=2)
        n = np.array([0.4, 0.8, 0.2])
        n /= np.linalg.norm(n)
        mc = sr.irradiance(env, n, samples=2048)
        ref = oracle_irradiance(env, n)
        assert np.abs(mc - ref).max() / ref.max() < 0.05

    def test_deterministic_under_seed(self):
        env = synthetic.gradient_environment(height=4)
        n = np.array([0.0, 1.0, 0.0])
        a = sr.irradiance(env, n, samples=128, seed=3)
        b = sr.irradiance(env, n, samples=128, seed=3)
        assert np.array_equal(a, b)
        c = sr.irradiance(env, n, samples=128, seed=4)
        assert not np.array_equal(a, c)

    def test_scaling_exact(self):
        env = synthetic.gradient_environment(height=4)
        scaled = EnvironmentLight(env.radiance * 2.0)
        n = np.array([0.3, 0.9, 0.1])
        n /= np.linalg.norm(n)
        a = sr.irradiance(env, n, samples=64)
        b = sr.irradiance(scaled, n, samples=64)
        assert np.array_equal(b, 2.0 * a)


class TestShadeObject:
    def test_white_texture_uniform_env(self):
        mesh = synthetic.make_quad()
        cam = oblique_camera(res=32, eye=(0, 0, -2.5))
        tex = UVTexture(np.ones((4, 4, 3)))
        env = make_uniform_ambient(1.0)
        rgba, depth = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs,
                                      mesh.triangles, cam, tex, env, samples=256)
        lit = rgba.values[:, :, 3] > 0
        assert lit.any()
        assert np.allclose(rgba.values[:, :, :3][lit], 1.0, rtol=0.02)

    def test_black_env_black_object(self):
        mesh = synthetic.make_quad()
        cam = oblique_camera(res=32, eye=(0, 0, -2.5))
        env = EnvironmentLight(np.zeros((4, 8, 3)))
        rgba, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs,
                                  mesh.triangles, cam, UVTexture(np.ones((2, 2, 3))),
                                  env, samples=32)
        covered = rgba.values[:, :, 3] > 0
        assert covered.any()
        assert (rgba.values[:, :, :3][covered] == 0).all()

    def test_sphere_lambert_cosine_falloff(self):
        sphere = synthetic.make_sphere(rings=24, segments=48)
        cam = oblique_camera(res=24, eye=(0, 0, -4.0))
        env = synthetic.sun_environment(height=4, sun_row=0, sun_col=2, sun_radiance=20.0)
        tex = UVTexture(np.ones((2, 2, 3)))
        out_raster = sr.rasterize(sphere.positions, sphere.normals, sphere.uvs,
                                  sphere.triangles, cam, tex, mode="shaded",
                                  env=env, samples=4096, seed=0)
        covered = out_raster.coverage > 0
        normals = out_raster.normals[covered]
        colors = out_raster.color[covered][:, 0]
        ref = np.array([oracle_irradiance(env, n)[0] / np.pi for n in normals])
        sel = ref > 0.15 * ref.max()
        rel = np.abs(colors[sel] - ref[sel]) / ref[sel]
        assert np.median(rel) < 0.05
        # brightness tracks the cosine of the angle to the dominant direction
        order = np.argsort(ref[sel])
        assert np.corrcoef(colors[sel][order], ref[sel][order])[0, 1] > 0.999

    def test_energy_bound(self):
        mesh = synthetic.make_cube()
        cam = oblique_camera(res=32)
        env = synthetic.gradient_environment(height=4, seed=5)
        tex = UVTexture(np.random.default_rng(0).random((4, 4, 3)) * 2.0)
        rgba, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs,
                                  mesh.triangles, cam, tex, env, samples=64)
        bound = tex.texels.max() * env.radiance.max()  # albedo/pi * pi * Lmax
        assert rgba.values[:, :, :3].max() <= bound + 1e-9

    def test_env_scaling_equivariance(self):
        mesh = synthetic.make_cube()
        cam = oblique_camera(res=24)
        env = synthetic.gradient_environment(height=4, seed=6)
        scaled = EnvironmentLight(env.radiance * 2.0)
        tex = UVTexture(np.ones((2, 2, 3)) * 0.8)
        a, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs,
                               mesh.triangles, cam, tex, env, samples=32)
        b, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs,
                               mesh.triangles, cam, tex, scaled, samples=32)
        assert np.array_equal(b.values[:, :, :3], 2.0 * a.values[:, :, :3])


class TestBVH:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        tris = rng.normal(size=(40, 3, 3))
        bvh = BVH(tris)
        origins = rng.normal(size=(50, 3)) * 3.0
        dirs = rng.normal(size=(50, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t, tid = bvh.intersect_closest(origins, dirs)
        for i in range(50):
            best, best_id = np.inf, -1
            for k, tri in enumerate(tris):
                hit = oracle_ray_triangle(origins[i], dirs[i], tri)
                if hit is not None and hit < best:
                    best, best_id = hit, k
            if best_id == -1:
                assert tid[i] == -1
            else:
                assert tid[i] == best_id
                assert t[i] == pytest.approx(best, rel=1e-9)

    def test_any_hit_matches(self):
        rng = np.random.default_rng(1)
        tris = rng.normal(size=(25, 3, 3))
        bvh = BVH(tris)
        origins = rng.normal(size=(40, 3)) * 2.0
        dirs = rng.normal(size=(40, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        got = bvh.intersect_any(origins, dirs)
        want = np.array([oracle_occluded(o, d, tris) for o, d in zip(origins, dirs)])
        assert np.array_equal(got, want)

    def test_empty_mesh(self):
        bvh = BVH(np.empty((0, 3, 3)))
        t, tid = bvh.intersect_closest(np.zeros((3, 3)), np.tile([0, 0, 1.0], (3, 1)))
        assert (tid == -1).all()


class TestShadowCatcher:
    def catcher_scene(self):
        # occluder quad hovering over the ground plane, sun well off vertical
        quad = synthetic.make_quad(size=0.5)
        positions = quad.positions @ np.array([[1, 0, 0], [0, 0, 1.0], [0, -1, 0]])  # rotate into xz
        positions[:, 1] += 1.0
        plane = ShadowPlane(np.zeros(3), np.array([0.0, 1.0, 0.0]), 4.0)
        env = synthetic.sun_environment(height=8, sun_row=2, sun_col=4, sun_radiance=50.0,
                                        ambient=1e-3)
        cam = oblique_camera(res=48, eye=(0.5, 3.5, -4.0), target=(0, 0.3, 0))
        return positions, quad.triangles, plane, env, cam

    def test_no_occluder_zero(self):
        _, _, plane, env, cam = self.catcher_scene()
        alpha = sr.shadow_catcher(plane, np.empty((0, 3)), np.empty((0, 3, 3), dtype=int),
                                  env, cam, samples=32)
        assert (alpha.values == 0).all()

    def test_occluded_matches_ray_cast_oracle(self):
        positions, triangles, plane, env, cam = self.catcher_scene()
        alpha = sr.shadow_catcher(plane, positions, triangles, env, cam,
                                  samples=64, seed=0)
        tris = triangle_soup(positions, triangles)
        origin, dirs = sr.camera_rays(cam)
        dirs_flat = dirs.reshape(-1, 3)
        # oracle: per pixel, quadrature over env texels with brute-force
        # visibility; alpha = 1 - occluded/unoccluded irradiance
        tex_dirs, omega = sr.texel_directions_and_solid_angles(env)
        lum = env.radiance.sum(axis=2)
        significant = lum > 1e-6
        sig_dirs = tex_dirs[significant]
        sig_w = (lum * omega)[significant]
        errs = []
        n = plane.normal
        for i, d in enumerate(dirs_flat):
            denom = d @ n
            if abs(denom) < 1e-9:
                continue
            t = ((plane.origin - origin) @ n) / denom
            if t <= 0:
                continue
            p = origin + t * d
            if max(abs(p[0]), abs(p[2])) > plane.half_extent:
                continue
            cos = np.maximum(sig_dirs @ n, 0.0)
            w = sig_w * cos
            unocc = w.sum()
            if unocc == 0:
                continue
            occ = sum(
                wi for wi, sd in zip(w, sig_dirs)
                if wi > 0 and not oracle_occluded(p + 1e-6 * n, sd, tris)
            )
            ref = 1.0 - occ / unocc
            errs.append(abs(alpha.values.reshape(-1)[i] - ref))
        errs = np.array(errs)
        assert len(errs) > 200
        assert errs.mean() < 0.05

    def test_soft_shadow_monotone_falloff(self):
        # uniform env: ambient occlusion under the object decays with distance
        quad = synthetic.make_quad(size=0.5)
        positions = quad.positions @ np.array([[1, 0, 0], [0, 0, 1.0], [0, -1, 0]])
        positions[:, 1] += 0.4
        plane = ShadowPlane(np.zeros(3), np.array([0.0, 1.0, 0.0]), 5.0)
        env = make_uniform_ambient(1.0, height=4)
        cam = oblique_camera(res=48, eye=(0.0, 6.0, -0.5), target=(0, 0, 0))
        alpha = sr.shadow_catcher(plane, positions, quad.triangles, env, cam,
                                  samples=256, seed=0)
        a = alpha.values[:, :, 0]
        center = a[a > 0]
        assert center.max() < 1.0
        assert center.max() > 0.1
        # average over blocks of increasing distance from image center column
        mid_row = np.unravel_index(np.argmax(a), a.shape)[0]
        line = a[mid_row]
        peak = np.argmax(line)
        right = line[peak:peak + 16]
        smooth = np.convolve(right, np.ones(4) / 4, mode="valid")
        assert (np.diff(smooth) <= 1e-3).all()

    def test_scaling_leaves_alpha_unchanged(self):
        positions, triangles, plane, env, cam = self.catcher_scene()
        a = sr.shadow_catcher(plane, positions, triangles, env, cam, samples=32)
        scaled = EnvironmentLight(env.radiance * 2.0)
        b = sr.shadow_catcher(plane, positions, triangles, scaled, cam, samples=32)
        assert np.array_equal(a.values, b.values)

    def test_render_layers_object_occludes_plane(self):
        mesh = synthetic.make_cube(size=0.4, center=(0, 0.5, 0))
        cam = oblique_camera(res=32, eye=(1.5, 2.0, -2.5), target=(0, 0.3, 0))
        env = make_uniform_ambient(1.0, height=4)
        tex = UVTexture(np.ones((2, 2, 3)))
        plane = ShadowPlane(np.zeros(3), np.array([0.0, 1.0, 0.0]), 4.0)
        layers = sr.render_layers(mesh.positions, mesh.normals, mesh.uvs,
                                  mesh.triangles, cam, tex, env, plane=plane,
                                  samples=16, shadow_samples=16)
        covered = layers.object_rgba.values[:, :, 3] >= 1.0
        assert covered.any()
        assert (layers.shadow_alpha.values[:, :, 0][covered] == 0).all()
        assert layers.shadow_alpha.values.min() >= 0
        assert layers.shadow_alpha.values.max() <= 1


def test_repeat_render_bit_identical():
    mesh = synthetic.make_cube()
    cam = oblique_camera(res=24)
    env = synthetic.gradient_environment(height=4, seed=1)
    tex = UVTexture(np.ones((2, 2, 3)))
    a, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
                           cam, tex, env, samples=64, seed=7)
    b, _ = sr.shade_object(mesh.positions, mesh.normals, mesh.uvs, mesh.triangles,
                           cam, tex, env, samples=64, seed=7)
    assert np.array_equal(a.values, b.values)
