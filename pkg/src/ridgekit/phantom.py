"""Synthetic fundus phantoms with exact ridge ground truth.

Renders an orange fundus field, a bright optic disc, dark branching vessels
on the vascularized side and a pale ridge arc separating it from the
avascular side, then applies the classic acquisition degradations (contrast
loss, uneven illumination, blur, noise).  The annotation always describes
the pre-degradation ridge stroke, so detector scores measured against it
reflect degradation + enhancement, never a moving target.

Geometry conventions: circle centers are fractions of (width, height);
radii are fractions of min(width, height); the ridge arc spans
``angle_span`` degrees centered on the direction from the arc center toward
the frame center.  All randomness flows through one seeded
:class:`~ridgekit.rng.Xoshiro256StarStar`, so outputs are bit-identical per
seed within this implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .annot_io import AnnotationRecord, mask_bbox
from .errors import InvalidInputError
from .raster import RasterImage
from .rng import Xoshiro256StarStar

# Base palette (kept away from 1.0 so ridge bumps never clip).
_FIELD_RGB = (0.60, 0.38, 0.14)
_DISC_RGB = (0.30, 0.32, 0.20)
_VESSEL_RGB = (0.34, 0.28, 0.20)

# Flat-top ridge stroke with a sub-pixel Gaussian shoulder: the stroke adds
# the full contrast everywhere inside the ground-truth mask and decays fast
# enough outside that a 5 px annulus reads the plain background.
_RIDGE_EDGE_SIGMA = 0.25

# Vessels stop this many pixels short of the ridge stroke so the ridge
# neighborhood stays vessel-free on both sides.
_VESSEL_RIDGE_GAP = 8.0


@dataclass(frozen=True)
class RidgeArcSpec:
    center: tuple[float, float] = (0.38, 0.50)
    radius: float = 0.34
    angle_span: float = 120.0
    width: float = 8.0
    contrast: float = 0.25

    def __post_init__(self):
        if not (0 < self.center[0] < 1 and 0 < self.center[1] < 1):
            raise InvalidInputError("ridge center fractions must lie in (0, 1)")
        if not 0 < self.radius < 1:
            raise InvalidInputError("ridge radius fraction must lie in (0, 1)")
        if not 0 < self.angle_span <= 360:
            raise InvalidInputError("angle_span must lie in (0, 360]")
        if self.width < 1:
            raise InvalidInputError("ridge width must be >= 1 px")
        if not 0 <= self.contrast <= 1:
            raise InvalidInputError("ridge contrast must lie in [0, 1]")


@dataclass(frozen=True)
class DegradeSpec:
    illum_gradient: float = 0.0
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    contrast_factor: float = 1.0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise InvalidInputError("blur_sigma and noise_sigma must be >= 0")
        if not 0 < self.contrast_factor <= 1:
            raise InvalidInputError("contrast_factor must lie in (0, 1]")


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    width: int = 512
    height: int = 416
    disc_center: tuple[float, float] = (0.38, 0.50)
    disc_radius: float = 0.085
    vessel_count: int = 7
    ridge_arc: RidgeArcSpec = RidgeArcSpec()
    degrade: DegradeSpec = DegradeSpec()

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise InvalidInputError("phantom frame must be at least 32x32")
        if not (0 < self.disc_center[0] < 1 and 0 < self.disc_center[1] < 1):
            raise InvalidInputError("disc center fractions must lie in (0, 1)")
        if not 0 < self.disc_radius < 1:
            raise InvalidInputError("disc radius fraction must lie in (0, 1)")
        if self.vessel_count < 0:
            raise InvalidInputError("vessel_count must be >= 0")

    @property
    def image_id(self) -> str:
        return f"phantom-{self.seed}"


@dataclass(frozen=True)
class PhantomResult:
    image: RasterImage
    clean_image: RasterImage
    annotation: AnnotationRecord
    vessel_mask: np.ndarray


def _smooth_disk(dist: np.ndarray, radius: float, softness: float = 1.5) -> np.ndarray:
    """1 inside the disk, 0 outside, smooth over ~softness pixels."""
    return np.clip((radius - dist) / softness + 0.5, 0.0, 1.0)


def _stamp_disk(mask: np.ndarray, x: float, y: float, radius: float) -> None:
    h, w = mask.shape
    r = int(math.ceil(radius))
    x0, x1 = max(0, int(x) - r), min(w, int(x) + r + 2)
    y0, y1 = max(0, int(y) - r), min(h, int(y) + r + 2)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    mask[y0:y1, x0:x1] |= (xs - x) ** 2 + (ys - y) ** 2 <= radius**2


def _grow_vessels(spec: PhantomSpec, rng: Xoshiro256StarStar) -> np.ndarray:
    """Recursive branching walks from the disc, confined to the vascular side."""
    h, w = spec.height, spec.width
    scale = min(w, h)
    disc_x, disc_y = spec.disc_center[0] * w, spec.disc_center[1] * h
    arc = spec.ridge_arc
    arc_x, arc_y = arc.center[0] * w, arc.center[1] * h
    limit = arc.radius * scale - arc.width / 2.0 - _VESSEL_RIDGE_GAP
    field_x, field_y, field_r = w / 2.0, h / 2.0, 0.48 * scale

    mask = np.zeros((h, w), dtype=bool)
    walkers = []
    for _ in range(spec.vessel_count):
        theta = rng.uniform_scalar(0.0, 2.0 * math.pi)
        start_r = spec.disc_radius * scale
        walkers.append(
            (
                disc_x + start_r * math.cos(theta),
                disc_y + start_r * math.sin(theta),
                theta,
                rng.uniform_scalar(0.35, 0.55) * limit,
                2.2,
                0,
            )
        )

    while walkers:
        x, y, heading, length, thickness, depth = walkers.pop()
        traveled = 0.0
        step = 2.0
        while traveled < length:
            if (x - arc_x) ** 2 + (y - arc_y) ** 2 >= limit**2:
                break
            if (x - field_x) ** 2 + (y - field_y) ** 2 >= (field_r - 4.0) ** 2:
                break
            _stamp_disk(mask, x, y, thickness)
            heading += rng.uniform_scalar(-0.25, 0.25)
            x += step * math.cos(heading)
            y += step * math.sin(heading)
            traveled += step
        if depth < 2:
            for sign in (-1.0, 1.0):
                walkers.append(
                    (
                        x,
                        y,
                        heading + sign * rng.uniform_scalar(0.30, 0.65),
                        length * rng.uniform_scalar(0.45, 0.70),
                        max(0.9, thickness * 0.68),
                        depth + 1,
                    )
                )
    return mask


def _render_clean(spec: PhantomSpec, rng: Xoshiro256StarStar) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (rgb, ridge_mask, vessel_mask) before degradation."""
    h, w = spec.height, spec.width
    scale = min(w, h)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    rgb = np.full((h, w, 3), 0.04)

    # Fundus field with a mild vignette.  The field-to-background transition
    # is deliberately wide: a sharp bright rim would reintroduce the camera
    # light-ring artifact, which these phantoms intentionally leave out.
    field_r = 0.48 * scale
    d_field = np.hypot(xs - w / 2.0, ys - h / 2.0)
    field = _smooth_disk(d_field, field_r, softness=0.045 * scale)
    vignette = 1.0 - 0.12 * np.clip(d_field / field_r, 0.0, 1.0) ** 2
    for k, base in enumerate(_FIELD_RGB):
        rgb[:, :, k] = rgb[:, :, k] * (1 - field) + base * vignette * field

    # Optic disc.
    disc_d = np.hypot(xs - spec.disc_center[0] * w, ys - spec.disc_center[1] * h)
    disc = _smooth_disk(disc_d, spec.disc_radius * scale, softness=2.5)
    for k, bump in enumerate(_DISC_RGB):
        rgb[:, :, k] += bump * disc * field

    # Vessels (vascularized side only).
    vessel_mask = _grow_vessels(spec, rng)
    vessel_profile = ndimage.gaussian_filter(vessel_mask.astype(np.float64), 0.7)
    vessel_profile = np.clip(vessel_profile, 0.0, 1.0)
    for k, drop in enumerate(_VESSEL_RGB):
        rgb[:, :, k] -= drop * vessel_profile * field

    # Ridge arc: flat-top stroke of the requested width and contrast.
    arc = spec.ridge_arc
    arc_x, arc_y = arc.center[0] * w, arc.center[1] * h
    arc_r = arc.radius * scale
    d_arc = np.hypot(xs - arc_x, ys - arc_y)
    ring_dist = np.abs(d_arc - arc_r)

    theta_mid = math.atan2(h / 2.0 - arc_y, w / 2.0 - arc_x)
    ang = np.arctan2(ys - arc_y, xs - arc_x)
    ang_off = np.abs((ang - theta_mid + math.pi) % (2.0 * math.pi) - math.pi)
    in_span = ang_off <= math.radians(arc.angle_span) / 2.0

    shoulder = np.maximum(0.0, ring_dist - arc.width / 2.0)
    bump = arc.contrast * np.exp(-(shoulder**2) / (2.0 * _RIDGE_EDGE_SIGMA**2)) * in_span
    rgb += bump[:, :, None]

    ridge_mask = (ring_dist <= arc.width / 2.0) & in_span

    return np.clip(rgb, 0.0, 1.0), ridge_mask, vessel_mask


def degrade(img: RasterImage, spec: DegradeSpec, rng: Xoshiro256StarStar | int | None = None) -> RasterImage:
    """Contrast loss about the mean, lateral illumination ramp, blur, noise.

    Each channel is scaled about its own mean by ``contrast_factor``; the
    illumination ramp spans ``illum_gradient`` intensity left to right.
    Noise requires a generator (or seed) so results stay reproducible.
    """
    data = np.array(img.data)
    if spec.contrast_factor != 1.0:
        means = data.mean(axis=(0, 1), keepdims=True)
        data = means + spec.contrast_factor * (data - means)
    if spec.illum_gradient != 0.0:
        ramp = spec.illum_gradient * (np.arange(img.width) / max(img.width - 1, 1) - 0.5)
        data = data + ramp[None, :, None]
    if spec.blur_sigma > 0:
        data = ndimage.gaussian_filter(data, sigma=(spec.blur_sigma, spec.blur_sigma, 0), mode="reflect")
    if spec.noise_sigma > 0:
        if rng is None:
            raise InvalidInputError("noise_sigma > 0 requires an rng or seed")
        if isinstance(rng, int):
            rng = Xoshiro256StarStar(rng)
        data = data + rng.normal(data.shape, sigma=spec.noise_sigma)
    return RasterImage.from_array(np.clip(data, 0.0, 1.0))


def generate_phantom_full(spec: PhantomSpec) -> PhantomResult:
    """Render a phantom plus its ground truth and internal masks."""
    rng = Xoshiro256StarStar(spec.seed)
    clean_rgb, ridge_mask, vessel_mask = _render_clean(spec, rng)
    clean = RasterImage.from_array(clean_rgb)
    degraded = degrade(clean, spec.degrade, rng)
    annotation = AnnotationRecord(
        image_id=spec.image_id, box=mask_bbox(ridge_mask), mask=ridge_mask
    )
    return PhantomResult(
        image=degraded, clean_image=clean, annotation=annotation, vessel_mask=vessel_mask
    )


def generate_phantom(spec: PhantomSpec) -> tuple[RasterImage, AnnotationRecord]:
    """Degraded phantom image plus its pre-degradation ridge annotation."""
    result = generate_phantom_full(spec)
    return result.image, result.annotation
