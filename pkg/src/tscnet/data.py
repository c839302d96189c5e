"""Synthetic overhead-style dataset generation, file I/O and augmentation.

Generated scenes mimic the awkward cases this detector targets: several
small objects of irregular shape on a textured background, sometimes under
low illumination. Everything is driven by explicit generators, so a fixed
seed reproduces byte-identical files.

Files on disk: 24-bit RGB PNG images, 8-bit grayscale masks with 255 for
salient pixels (binarized at 128 on load). A manifest is a text file with
one "image_path<TAB>mask_path" line per sample, paths relative to the
manifest's directory.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError

MASK_THRESHOLD = 128

# Object geometry: every object has a base radius r (pixels); secondary
# extents are q*r with q in [ASPECT_MIN, 1]; blob radii vary in
# [BLOB_RADIUS_MIN, 1] * r. The tests derive area bounds from these.
ASPECT_MIN = 0.6
BLOB_RADIUS_MIN = 0.6
PLACEMENT_RETRIES = 40


@dataclass
class SynthConfig:
    size: int = 64
    count_range: tuple[int, int] = (3, 8)
    shape_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # ellipse, rectangle, blob
    size_range: tuple[float, float] = (0.04, 0.12)               # radius as a fraction of size
    texture_amplitude: float = 0.08
    illumination_range: tuple[float, float] = (0.45, 1.0)
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.count_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"count_range must satisfy 1 <= lo <= hi, got {self.count_range}")
        if self.size_range[0] <= 0 or self.size_range[1] < self.size_range[0]:
            raise ConfigError(f"bad size_range {self.size_range}")


@dataclass
class Sample:
    image: np.ndarray   # 3 x S x S float in [0,1]
    mask: np.ndarray    # S x S float in {0,1}
    sample_id: str = ""


@dataclass
class ObjectSpec:
    family: str
    cy: float
    cx: float
    radius: float
    aspect: float
    angle: float
    blob_radii: np.ndarray | None = None

    def analytic_area(self) -> float:
        if self.family == "ellipse":
            return float(np.pi * self.radius * (self.aspect * self.radius))
        if self.family == "rectangle":
            return float(4.0 * self.radius * (self.aspect * self.radius))
        # Star polygon area: 0.5 * integral of rho(phi)^2 over the circle.
        phis = np.linspace(0.0, 2.0 * np.pi, 2048, endpoint=False)
        rho = _blob_radius_at(self, phis)
        return float(0.5 * np.trapezoid(rho * rho, dx=2.0 * np.pi / phis.size))

    def perimeter_bound(self) -> float:
        return float(2.0 * np.pi * self.radius + 8.0)


def _blob_radius_at(spec: ObjectSpec, phi: np.ndarray) -> np.ndarray:
    """Periodic linear interpolation of the control radii."""
    k = spec.blob_radii.size
    knots = np.arange(k + 1) * (2.0 * np.pi / k)
    radii = np.concatenate([spec.blob_radii, spec.blob_radii[:1]])
    return np.interp(np.mod(phi - spec.angle, 2.0 * np.pi), knots, radii)


def rasterize_object(spec: ObjectSpec, size: int) -> np.ndarray:
    """Boolean S x S mask for one object."""
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - spec.cy
    dx = xx - spec.cx
    if spec.family == "ellipse":
        cos_a, sin_a = np.cos(spec.angle), np.sin(spec.angle)
        u = dx * cos_a + dy * sin_a
        v = -dx * sin_a + dy * cos_a
        return (u / spec.radius) ** 2 + (v / (spec.aspect * spec.radius)) ** 2 <= 1.0
    if spec.family == "rectangle":
        cos_a, sin_a = np.cos(spec.angle), np.sin(spec.angle)
        u = dx * cos_a + dy * sin_a
        v = -dx * sin_a + dy * cos_a
        return (np.abs(u) <= spec.radius) & (np.abs(v) <= spec.aspect * spec.radius)
    dist = np.hypot(dy, dx)
    phi = np.arctan2(dy, dx)
    return dist <= _blob_radius_at(spec, phi)


def _dilate3x3(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                out |= np.roll(np.roll(mask, dy, axis=0), dx, axis=1)
    return out


def _smooth_noise(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    """Low-resolution noise bilinearly blown up to a smooth field in [-1,1]."""
    coarse = rng.uniform(-1.0, 1.0, size=(cells, cells))
    img = Image.fromarray(((coarse + 1.0) * 127.5).astype(np.uint8))
    fine = np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float64)
    return fine / 127.5 - 1.0


def _sample_object(rng: np.random.Generator, cfg: SynthConfig) -> ObjectSpec:
    families = ("ellipse", "rectangle", "blob")
    weights = np.asarray(cfg.shape_weights, dtype=np.float64)
    family = rng.choice(families, p=weights / weights.sum())
    radius = rng.uniform(*cfg.size_range) * cfg.size
    margin = radius + 2.0
    cy = rng.uniform(margin, cfg.size - margin)
    cx = rng.uniform(margin, cfg.size - margin)
    spec = ObjectSpec(
        family=str(family),
        cy=cy, cx=cx,
        radius=radius,
        aspect=rng.uniform(ASPECT_MIN, 1.0),
        angle=rng.uniform(0.0, 2.0 * np.pi),
    )
    if spec.family == "blob":
        spec.blob_radii = radius * rng.uniform(BLOB_RADIUS_MIN, 1.0, size=8)
    return spec


def generate_image(cfg: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, list[ObjectSpec]]:
    """One scene: (image 3xSxS in [0,1], mask SxS in {0,1}, object specs).

    Objects never touch (placement is rejected if the candidate overlaps
    the 1-pixel dilation of the existing mask); an object that cannot be
    placed after bounded retries is skipped, never fails the image.
    """
    s = cfg.size
    image = np.empty((3, s, s), dtype=np.float64)
    base = rng.uniform(0.25, 0.55, size=3)
    for ch in range(3):
        image[ch] = base[ch] + cfg.texture_amplitude * _smooth_noise(rng, s, max(4, s // 8))

    mask = np.zeros((s, s), dtype=bool)
    placed: list[ObjectSpec] = []
    n_objects = int(rng.integers(cfg.count_range[0], cfg.count_range[1] + 1))
    for _ in range(n_objects):
        for _ in range(PLACEMENT_RETRIES):
            spec = _sample_object(rng, cfg)
            obj = rasterize_object(spec, s)
            if not obj.any():
                continue
            if np.logical_and(_dilate3x3(obj), mask).any():
                continue
            mask |= obj
            placed.append(spec)
            color = rng.uniform(0.6, 1.0, size=3)
            yy, xx = np.nonzero(obj)
            shade = 1.0 - 0.3 * np.hypot(yy - spec.cy, xx - spec.cx) / max(spec.radius, 1.0)
            for ch in range(3):
                image[ch, yy, xx] = color[ch] * shade
            break

    gain = rng.uniform(*cfg.illumination_range)
    image = image * gain + rng.normal(0.0, cfg.noise_std, size=image.shape)
    return np.clip(image, 0.0, 1.0), mask.astype(np.float64), placed


def generate_dataset(cfg: SynthConfig, n: int, out_dir: str) -> str:
    """Write n image/mask PNG pairs plus a manifest; returns the manifest path."""
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for index in range(n):
        rng = np.random.default_rng((cfg.seed, index))
        image, mask, _ = generate_image(cfg, rng)
        image_name = f"img_{index:04d}.png"
        mask_name = f"msk_{index:04d}.png"
        save_image(os.path.join(out_dir, image_name), image)
        save_mask(os.path.join(out_dir, mask_name), mask)
        lines.append(f"{image_name}\t{mask_name}")
    manifest_path = os.path.join(out_dir, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest_path


# -- file I/O -------------------------------------------------------------------

def quantize(values: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8, rounding half up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path: str, image: np.ndarray) -> None:
    chw = quantize(np.asarray(image))
    Image.fromarray(np.transpose(chw, (1, 2, 0)), mode="RGB").save(path)


def save_mask(path: str, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) >= 0.5).astype(np.uint8) * 255, mode="L").save(path)


def save_map(path: str, saliency: np.ndarray) -> None:
    """Write a [0,1] map as 8-bit grayscale."""
    Image.fromarray(quantize(np.asarray(saliency)), mode="L").save(path)


def load_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except FileNotFoundError:
        raise DataError(f"image file not found: {path}") from None
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    return np.transpose(rgb, (2, 0, 1)) / 255.0


def load_mask(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            gray = np.asarray(img.convert("L"))
    except FileNotFoundError:
        raise DataError(f"mask file not found: {path}") from None
    except OSError as e:
        raise DataError(f"cannot read mask {path}: {e}") from e
    return (gray >= MASK_THRESHOLD).astype(np.float64)


def load_sample(image_path: str, mask_path: str) -> Sample:
    image = load_image(image_path)
    mask = load_mask(mask_path)
    if image.shape[1:] != mask.shape:
        raise DataError(
            f"image/mask size mismatch: {image_path} is {image.shape[1:]}, "
            f"{mask_path} is {mask.shape}")
    return Sample(image=image, mask=mask, sample_id=os.path.splitext(os.path.basename(image_path))[0])


def read_manifest(path: str) -> list[tuple[str, str]]:
    """Returns absolute (image_path, mask_path) pairs."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = [line.rstrip("\n") for line in fh]
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    base = os.path.dirname(os.path.abspath(path))
    pairs = []
    for lineno, line in enumerate(raw_lines, 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'image<TAB>mask', got '{line}'")
        pairs.append((os.path.join(base, parts[0]), os.path.join(base, parts[1])))
    if not pairs:
        raise DataError(f"manifest {path} lists no samples")
    return pairs


# -- augmentation ----------------------------------------------------------------

def hflip(sample: Sample) -> Sample:
    return Sample(sample.image[:, :, ::-1].copy(), sample.mask[:, ::-1].copy(), sample.sample_id)


def vflip(sample: Sample) -> Sample:
    return Sample(sample.image[:, ::-1, :].copy(), sample.mask[::-1, :].copy(), sample.sample_id)


def rot90(sample: Sample, quarter_turns: int) -> Sample:
    k = quarter_turns % 4
    return Sample(np.rot90(sample.image, k, axes=(1, 2)).copy(),
                  np.rot90(sample.mask, k, axes=(0, 1)).copy(),
                  sample.sample_id)


AUGMENT_OPS = (
    lambda s: s,
    hflip,
    vflip,
    lambda s: rot90(s, 1),
    lambda s: rot90(s, 2),
    lambda s: rot90(s, 3),
)


def augment(sample: Sample, seed) -> Sample:
    """Seeded choice among identity, flips and lossless rotations.

    Image and mask always receive the same transform.
    """
    rng = np.random.default_rng(seed)
    op = AUGMENT_OPS[int(rng.integers(len(AUGMENT_OPS)))]
    return op(sample)
