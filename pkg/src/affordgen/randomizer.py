"""Seeded domain randomization along five axes.

Object poses are physically perturbed (rejection-resampled against the scene
validator); lighting, background texture, object material, and the optional
reconstructed-background asset are drawn and recorded as dataset metadata for
downstream renderers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, compose, quat_from_axis_angle
from .tasks import SceneConfig, validate_scene

AXIS_POSE = 0
AXIS_LIGHTING = 1
AXIS_BACKGROUND_TEXTURE = 2
AXIS_MATERIAL = 3
AXIS_BACKGROUND_ASSET = 4

MAX_REJECTIONS = 50

DEFAULT_TEXTURE_POOL = (
    "wood_oak",
    "wood_walnut",
    "marble_white",
    "concrete",
    "steel_brushed",
    "cloth_grey",
    "tile_checker",
    "paper_kraft",
)


class RandomizationFailure(RuntimeError):
    """Pose jitter could not find a collision-free draw within the budget."""


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"bad range [{self.lo}, {self.hi}]")

    def draw(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))


@dataclass(frozen=True)
class RandomizationSpec:
    translation_radius: float = 0.02
    yaw_range: float = 0.2617993877991494  # +/- 15 degrees
    light_count: tuple[int, int] = (1, 4)
    light_position: tuple[tuple[float, float], ...] = ((-1.0, 1.0), (-1.0, 1.0), (0.8, 2.2))
    light_intensity: Range = field(default_factory=lambda: Range(300.0, 1500.0))
    light_color_temp: Range = field(default_factory=lambda: Range(3000.0, 6500.0))
    texture_pool: tuple[str, ...] = DEFAULT_TEXTURE_POOL
    albedo_shift: Range = field(default_factory=lambda: Range(-0.15, 0.15))
    roughness_shift: Range = field(default_factory=lambda: Range(-0.2, 0.2))
    metallic_shift: Range = field(default_factory=lambda: Range(0.0, 0.3))
    background_asset: str | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.translation_radius < 0:
            raise ValueError("translation radius must be >= 0")
        if self.light_count[0] > self.light_count[1]:
            raise ValueError("bad light count range")


@dataclass(frozen=True)
class VisualMetadata:
    """Per-rollout record of the visual axes, serialized into the manifest."""

    lights: tuple[dict, ...]
    background_texture: str
    materials: dict[str, dict]
    background_asset: str | None

    def to_json(self) -> dict:
        return {
            "lights": [dict(l) for l in self.lights],
            "background_texture": self.background_texture,
            "materials": {k: dict(v) for k, v in sorted(self.materials.items())},
            "background_asset": self.background_asset,
        }


def _axis_rng(spec: RandomizationSpec, rollout_seed: int, axis: int) -> np.random.Generator:
    # counter-based substreams: each axis draws independently of the others
    return np.random.default_rng(
        np.random.Philox(key=np.uint64(spec.master_seed), counter=[0, 0, rollout_seed, axis])
    )


def randomize_scene(
    scene: SceneConfig,
    spec: RandomizationSpec,
    rollout_seed: int,
    library=None,
) -> tuple[SceneConfig, VisualMetadata]:
    """Jitter object poses within the spec and draw the visual metadata.

    Deterministic for fixed (spec, rollout_seed); pose draws are rejection
    resampled until the scene validator passes.
    """
    rng = _axis_rng(spec, rollout_seed, AXIS_POSE)
    result = scene
    for attempt in range(MAX_REJECTIONS + 1):
        objects = []
        for obj in scene.objects:
            # uniform in the disk: r = R * sqrt(u)
            r = spec.translation_radius * np.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2.0 * np.pi)
            yaw = rng.uniform(-spec.yaw_range, spec.yaw_range)
            delta = np.array([r * np.cos(phi), r * np.sin(phi), 0.0])
            pose = Pose(
                compose(Pose(quat_from_axis_angle((0, 0, 1), yaw)), Pose(obj.pose.rotation)).rotation,
                obj.pose.translation + delta,
            )
            objects.append(replace(obj, pose=pose))
        candidate = replace(scene, objects=tuple(objects))
        report = validate_scene(candidate, library)
        if report.ok:
            result = candidate
            break
        if attempt == MAX_REJECTIONS:
            raise RandomizationFailure(
                f"no valid pose draw within {MAX_REJECTIONS} attempts: {report.violations[0]}"
            )

    meta = _draw_visual_metadata(scene, spec, rollout_seed)
    return result, meta


def _draw_visual_metadata(scene: SceneConfig, spec: RandomizationSpec, rollout_seed: int) -> VisualMetadata:
    rng_light = _axis_rng(spec, rollout_seed, AXIS_LIGHTING)
    n_lights = int(rng_light.integers(spec.light_count[0], spec.light_count[1] + 1))
    lights = []
    for _ in range(n_lights):
        pos = [float(rng_light.uniform(lo, hi)) for lo, hi in spec.light_position]
        lights.append(
            {
                "position": [round(v, 6) for v in pos],
                "intensity": round(spec.light_intensity.draw(rng_light), 3),
                "color_temp": round(spec.light_color_temp.draw(rng_light), 2),
            }
        )
    rng_tex = _axis_rng(spec, rollout_seed, AXIS_BACKGROUND_TEXTURE)
    texture = spec.texture_pool[int(rng_tex.integers(0, len(spec.texture_pool)))]
    rng_mat = _axis_rng(spec, rollout_seed, AXIS_MATERIAL)
    materials = {}
    for obj in scene.objects:
        materials[obj.object_id] = {
            "albedo_shift": round(spec.albedo_shift.draw(rng_mat), 6),
            "roughness_shift": round(spec.roughness_shift.draw(rng_mat), 6),
            "metallic_shift": round(spec.metallic_shift.draw(rng_mat), 6),
        }
    return VisualMetadata(
        lights=tuple(lights),
        background_texture=texture,
        materials=materials,
        background_asset=spec.background_asset,
    )


def spec_to_json(spec: RandomizationSpec) -> dict:
    return {
        "translation_radius": spec.translation_radius,
        "yaw_range": spec.yaw_range,
        "light_count": list(spec.light_count),
        "light_position": [list(r) for r in spec.light_position],
        "light_intensity": [spec.light_intensity.lo, spec.light_intensity.hi],
        "light_color_temp": [spec.light_color_temp.lo, spec.light_color_temp.hi],
        "texture_pool": list(spec.texture_pool),
        "albedo_shift": [spec.albedo_shift.lo, spec.albedo_shift.hi],
        "roughness_shift": [spec.roughness_shift.lo, spec.roughness_shift.hi],
        "metallic_shift": [spec.metallic_shift.lo, spec.metallic_shift.hi],
        "background_asset": spec.background_asset,
        "master_seed": spec.master_seed,
    }


def spec_from_json(raw: dict) -> RandomizationSpec:
    return RandomizationSpec(
        translation_radius=float(raw["translation_radius"]),
        yaw_range=float(raw["yaw_range"]),
        light_count=(int(raw["light_count"][0]), int(raw["light_count"][1])),
        light_position=tuple((float(a), float(b)) for a, b in raw["light_position"]),
        light_intensity=Range(*raw["light_intensity"]),
        light_color_temp=Range(*raw["light_color_temp"]),
        texture_pool=tuple(raw["texture_pool"]),
        albedo_shift=Range(*raw["albedo_shift"]),
        roughness_shift=Range(*raw["roughness_shift"]),
        metallic_shift=Range(*raw["metallic_shift"]),
        background_asset=raw.get("background_asset"),
        master_seed=int(raw["master_seed"]),
    )
