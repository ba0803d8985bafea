"""Background-light correction: decompose an estimated equirectangular light
into intensity and chroma, pull its color toward the object's average color,
and blend its intensity with a uniform white ambient level.

Per-texel intensity is the max channel; chroma is the color direction with
max channel 1, so decompose/recompose is an exact round trip. The color and
intensity blends use coefficients lambda1 and lambda2 (defaults 0.5) and an
ambient level i_d.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .scene_model import read_pfm, write_pfm

DEFAULT_AMBIENT = 0.5  # white Lambertian facing up under pure ambient renders at 0.5 linear


@dataclass
class EnvironmentLight:
    """Equirectangular radiance map, W = 2H, linear floats >= 0.

    Row 0 looks straight up (+y); u wraps around the horizon.
    """

    radiance: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance, dtype=np.float64)
        if self.radiance.ndim != 3 or self.radiance.shape[2] != 3:
            raise ValueError("environment map must be (H, W, 3)")
        h, w = self.radiance.shape[:2]
        if w != 2 * h:
            raise ValueError(f"equirectangular map needs W = 2H, got {w}x{h}")
        if not np.all(np.isfinite(self.radiance)) or self.radiance.min() < 0:
            raise ValueError("radiance must be finite and >= 0")

    @property
    def width(self):
        return self.radiance.shape[1]

    @property
    def height(self):
        return self.radiance.shape[0]

    def save(self, path):
        write_pfm(path, self.radiance)

    @classmethod
    def load(cls, path):
        return cls(read_pfm(path))


@dataclass
class LightComponents:
    intensity: np.ndarray   # (H, W) scalar field, max channel per texel
    chroma: np.ndarray      # (H, W, 3), max channel 1 where intensity > 0
    color: np.ndarray       # global RGB, intensity-weighted mean chroma
    mean_intensity: float   # global scalar, mean of the intensity field


@dataclass
class LightCorrectionParams:
    lambda1: float = 0.5
    lambda2: float = 0.5
    ambient: float = DEFAULT_AMBIENT

    def __post_init__(self):
        if not 0.0 <= self.lambda1 <= 1.0:
            raise ValueError("lambda1 must lie in [0,1]")
        if not 0.0 <= self.lambda2 <= 1.0:
            raise ValueError("lambda2 must lie in [0,1]")
        if self.ambient <= 0:
            raise ValueError("ambient intensity must be positive")


def decompose_environment(env):
    """Split radiance into intensity (max channel) and bounded chroma."""
    rad = env.radiance
    intensity = rad.max(axis=2)
    chroma = np.ones_like(rad)
    lit = intensity > 0
    chroma[lit] = rad[lit] / intensity[lit][:, None]
    total = intensity.sum()
    if total == 0:
        warnings.warn("all-black environment: global color defaults to white")
        color = np.ones(3)
    else:
        color = (intensity[:, :, None] * chroma).sum(axis=(0, 1)) / total
    return LightComponents(
        intensity=intensity,
        chroma=chroma,
        color=color,
        mean_intensity=float(intensity.mean()),
    )


def recompose(components):
    return EnvironmentLight(components.intensity[:, :, None] * components.chroma)


def mask_average_color(object_image, mask):
    """Mean linear color over the masked pixels."""
    if (mask.height, mask.width) != (object_image.height, object_image.width):
        raise ValueError("mask and image dimensions differ")
    if mask.count == 0:
        raise ValueError("mask is empty: average color over |M| = 0 pixels is undefined")
    return object_image.values[mask.bits][:, :3].mean(axis=0)


def correct_color(c_e, c_a, lambda1):
    if not 0.0 <= lambda1 <= 1.0:
        raise ValueError("lambda1 must lie in [0,1]")
    return lambda1 * np.asarray(c_e, dtype=np.float64) + (1 - lambda1) * np.asarray(c_a, dtype=np.float64)


def enhance_intensity(i_e, i_d, lambda2):
    if not 0.0 <= lambda2 <= 1.0:
        raise ValueError("lambda2 must lie in [0,1]")
    if i_d <= 0:
        raise ValueError("ambient intensity must be positive")
    return lambda2 * i_e + (1 - lambda2) * i_d


def _normalize_color(c):
    c = np.asarray(c, dtype=np.float64)
    m = c.max()
    return c / m if m > 0 else np.ones(3)


def recompose_corrected(env, c_a, params):
    """Build the corrected light: per-texel chroma blended toward the object
    color, per-texel intensity blended with the ambient level.

    The intensity blend i' = l2 * i + (1 - l2) * i_d keeps the global mean at
    the blended global intensity, floors every texel at (1 - l2) * i_d, and
    preserves the argmax direction (monotone affine map).
    """
    comp = decompose_environment(env)
    c_a_dir = _normalize_color(c_a)
    chroma = params.lambda1 * comp.chroma + (1 - params.lambda1) * c_a_dir[None, None, :]
    # renormalize so the max channel is 1 again: the blend of two unit-max
    # chromas can dip below 1 when their peaks sit on different channels, and
    # the recomposed texel intensity must stay exactly the blended intensity
    chroma = chroma / chroma.max(axis=2, keepdims=True)
    intensity = params.lambda2 * comp.intensity + (1 - params.lambda2) * params.ambient
    return EnvironmentLight(intensity[:, :, None] * chroma)


def make_uniform_ambient(i_d, height=16):
    """Uniform white environment with radiance i_d in every direction."""
    if i_d <= 0:
        raise ValueError("ambient intensity must be positive")
    return EnvironmentLight(np.full((height, 2 * height, 3), float(i_d)))


def correction_report(env, c_a, params):
    """Scalars echoed by the relight command: c_a, c_e, i_e, c_ec, i_ec."""
    comp = decompose_environment(env)
    c_ec = correct_color(comp.color, c_a, params.lambda1)
    i_ec = enhance_intensity(comp.mean_intensity, params.ambient, params.lambda2)
    return {
        "c_a": [float(v) for v in np.asarray(c_a)],
        "c_e": [float(v) for v in comp.color],
        "i_e": comp.mean_intensity,
        "c_ec": [float(v) for v in c_ec],
        "i_ec": float(i_ec),
        "lambda1": params.lambda1,
        "lambda2": params.lambda2,
        "i_d": params.ambient,
    }
