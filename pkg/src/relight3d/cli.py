"""Command-line pipeline: export-views, refine, relight, render, animate,
composite. One JSON config file drives every command; stage boundaries are
files so external tools (view refiner, rigging) plug in between commands.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import compositor, illumi_combiner, shade_render, skinning, texture_refiner
from .illumi_combiner import EnvironmentLight, LightCorrectionParams
from .scene_model import (
    Camera,
    ImageBuffer,
    MeshParseError,
    ImageFormatError,
    UVTexture,
    load_image,
    load_mask,
    load_mesh,
    read_pfm,
    write_pfm,
    save_image,
)
from .texture_refiner import RefineError, RefineOptions

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    paths: dict = field(default_factory=dict)
    light: LightCorrectionParams = field(default_factory=LightCorrectionParams)
    refine: RefineOptions = field(default_factory=RefineOptions)
    samples: int = 256
    shadow_samples: int = 64
    seed: int = 0
    shadow_plane: object = "auto"  # "auto", "none", or {origin, normal, half_extent}
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
        try:
            light = LightCorrectionParams(**doc.get("light", {}))
            refine = RefineOptions(**doc.get("refine", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))
        render = doc.get("render", {})
        return cls(
            paths=doc.get("paths", {}),
            light=light,
            refine=refine,
            samples=int(render.get("samples", 256)),
            shadow_samples=int(render.get("shadow_samples", 64)),
            seed=int(render.get("seed", 0)),
            shadow_plane=render.get("shadow_plane", "auto"),
            base_dir=path.parent,
        )

    def path(self, key, required=True, must_exist=True):
        value = self.paths.get(key)
        if not value:
            if required:
                raise ConfigError(f"config paths.{key} is missing")
            return None
        p = self.base_dir / value
        if must_exist and not p.exists():
            raise ConfigError(f"config paths.{key} does not exist: {p}")
        return p

    def path_list(self, key):
        values = self.paths.get(key)
        if not values:
            raise ConfigError(f"config paths.{key} is missing")
        out = []
        for v in values:
            p = self.base_dir / v
            if not p.exists():
                raise ConfigError(f"config paths.{key} entry does not exist: {p}")
            out.append(p)
        return out

    def out_dir(self, override=None):
        p = Path(override) if override else self.base_dir / self.paths.get("output_dir", "out")
        p.mkdir(parents=True, exist_ok=True)
        return p

    def resolve_plane(self, positions):
        if self.shadow_plane == "none":
            return None
        if self.shadow_plane == "auto" or self.shadow_plane is None:
            return skinning.auto_place_shadow_plane(positions)
        d = self.shadow_plane
        return skinning.ShadowPlane(
            np.array(d["origin"], dtype=float),
            np.array(d["normal"], dtype=float),
            float(d["half_extent"]),
        )


def load_texture_file(path):
    return UVTexture(np.maximum(read_pfm(path), 0.0))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_export_views(cfg, out_override=None):
    mesh = load_mesh(cfg.path("mesh"))
    texture = load_texture_file(cfg.path("texture"))
    cameras = [Camera.load(p) for p in cfg.path_list("cameras")]
    manifest = texture_refiner.export_refiner_request(
        mesh, texture, cameras, cfg.out_dir(out_override)
    )
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_refine(cfg, out_override=None):
    mesh = load_mesh(cfg.path("mesh"))
    texture = load_texture_file(cfg.path("texture"))
    viewset = texture_refiner.load_viewset(cfg.path("view_manifest"), mesh)
    refined, history = texture_refiner.refine_texture(viewset, texture, cfg.refine)
    out = cfg.out_dir(out_override)
    write_pfm(out / "texture_refined.pfm", refined.texels)
    with open(out / "loss.csv", "w") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(history):
            fh.write(f"{i},{loss:.12g}\n")
    print(f"final loss {history[-1]:.6g} after {len(history)} iterations")
    return EXIT_OK


def cmd_relight(cfg, out_override=None):
    env = EnvironmentLight.load(cfg.path("environment"))
    object_image = load_image(cfg.path("object_image"))
    mask = load_mask(cfg.path("mask"))
    c_a = illumi_combiner.mask_average_color(object_image, mask)
    corrected = illumi_combiner.recompose_corrected(env, c_a, cfg.light)
    report = illumi_combiner.correction_report(env, c_a, cfg.light)
    out = cfg.out_dir(out_override)
    corrected.save(out / "environment_corrected.pfm")
    (out / "relight_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _load_scene(cfg):
    mesh = load_mesh(cfg.path("mesh"))
    texture = load_texture_file(cfg.path("texture"))
    env = EnvironmentLight.load(cfg.path("environment"))
    background = load_image(cfg.path("background"))
    camera = Camera.load(cfg.path("camera"))
    return mesh, texture, env, background, camera


def cmd_render(cfg, out_override=None):
    mesh, texture, env, background, camera = _load_scene(cfg)
    rig = cfg.path("rig", required=False)
    if rig:
        skeleton, skin = skinning.load_rig(rig)
        bind = np.stack([b.bind_local for b in skeleton.bones])
        positions, normals, uvs, triangles = skinning.skin_vertices(mesh, skeleton, skin, bind)
    else:
        positions, normals, uvs, triangles = (
            mesh.positions, mesh.normals, mesh.uvs, mesh.triangles
        )
    plane = cfg.resolve_plane(positions)
    layers = shade_render.render_layers(
        positions, normals, uvs, triangles, camera, texture, env,
        plane=plane, samples=cfg.samples, shadow_samples=cfg.shadow_samples,
        seed=cfg.seed,
    )
    frame = compositor.composite(background, layers)
    out = cfg.out_dir(out_override)
    save_image(frame, out / "render.png")
    write_pfm(out / "render.pfm", frame.values)
    write_pfm(out / "object_rgba.pfm", layers.object_rgba.values)
    write_pfm(out / "shadow_alpha.pfm", layers.shadow_alpha.values)
    write_pfm(out / "depth.pfm", layers.depth.values)
    print(f"wrote {out / 'render.png'}")
    return EXIT_OK


def cmd_animate(cfg, out_override=None):
    mesh, texture, env, background, camera = _load_scene(cfg)
    skeleton, skin = skinning.load_rig(cfg.path("rig"))
    clip = skinning.load_pose_clip(cfg.path("pose_clip"))
    plane = None
    auto = True
    if cfg.shadow_plane == "none":
        auto = False
    elif cfg.shadow_plane != "auto" and cfg.shadow_plane is not None:
        plane = cfg.resolve_plane(mesh.positions)
    frames = compositor.render_sequence(
        mesh, skeleton, skin, clip, camera, texture, env, background,
        cfg.out_dir(out_override), plane=plane, auto_plane=auto,
        samples=cfg.samples, shadow_samples=cfg.shadow_samples, seed=cfg.seed,
    )
    print(f"wrote {len(frames)} frames")
    return EXIT_OK


def cmd_composite(cfg, out_override=None):
    background = load_image(cfg.path("background"))
    rgba = ImageBuffer(read_pfm(cfg.path("object_layer")))
    shadow = ImageBuffer(read_pfm(cfg.path("shadow_layer")))
    depth = ImageBuffer(np.zeros((background.height, background.width, 1)))
    layers = shade_render.RenderLayers(rgba, shadow, depth)
    frame = compositor.composite(background, layers)
    out = cfg.out_dir(out_override)
    save_image(frame, out / "composite.png")
    print(f"wrote {out / 'composite.png'}")
    return EXIT_OK


COMMANDS = {
    "export-views": cmd_export_views,
    "refine": cmd_refine,
    "relight": cmd_relight,
    "render": cmd_render,
    "animate": cmd_animate,
    "composite": cmd_composite,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="relight3d",
        description="Texture refinement, relighting and shadow compositing pipeline",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override render.seed")
    parser.add_argument("--out", default=None, help="override output directory")
    args = parser.parse_args(argv)

    try:
        cfg = PipelineConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshParseError, ImageFormatError, RefineError, FileNotFoundError,
            ValueError, KeyError, IndexError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
