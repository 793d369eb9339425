"""Core image representation, YIQ color math, resizing and image file I/O.

All pixel math in the toolkit runs on normalized float64 intensities in
[0, 1]; 8-bit quantization happens only at the file boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError

# NTSC YIQ coefficients.  The inverse is computed once from the forward
# matrix so the round trip closes to float precision.
_RGB_TO_YIQ = np.array(
    [
        [0.299, 0.587, 0.114],
        [0.5959, -0.2746, -0.3213],
        [0.2115, -0.5227, 0.3112],
    ]
)
_YIQ_TO_RGB = np.linalg.inv(_RGB_TO_YIQ)

I_RANGE = 0.5959
Q_RANGE = 0.5229

_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class RasterImage:
    """Planar raster of normalized intensities, 1 (gray) or 3 (RGB) channels.

    ``data`` has shape (height, width, channels), C-contiguous, float64,
    every value in [0, 1].  Instances are immutable.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("image dimensions must be >= 1")
        if self.channels not in (1, 3):
            raise InvalidInputError("channels must be 1 or 3")
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.shape != (self.height, self.width, self.channels):
            raise InvalidInputError(
                f"data shape {arr.shape} != "
                f"({self.height}, {self.width}, {self.channels})"
            )
        if arr.size and (arr.min() < -_RANGE_TOL or arr.max() > 1 + _RANGE_TOL):
            raise InvalidInputError("intensities must lie in [0, 1]")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            arr = np.clip(arr, 0.0, 1.0)
        if arr.flags.writeable:
            arr = arr.copy() if arr is self.data else arr
            arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        """Build from an (H, W) or (H, W, C) float array in [0, 1]."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InvalidInputError("expected a 2-D or 3-D array")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    def plane(self, k: int = 0) -> np.ndarray:
        """Channel ``k`` as a read-only (H, W) view."""
        return self.data[:, :, k]


@dataclass(frozen=True)
class YiqImage:
    """YIQ decomposition: Y (lightness) in [0,1], I/Q chroma in NTSC bounds."""

    width: int
    height: int
    y_plane: np.ndarray
    i_plane: np.ndarray
    q_plane: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width)
        for name, plane, lo, hi in (
            ("y_plane", self.y_plane, 0.0, 1.0),
            ("i_plane", self.i_plane, -I_RANGE, I_RANGE),
            ("q_plane", self.q_plane, -Q_RANGE, Q_RANGE),
        ):
            arr = np.ascontiguousarray(plane, dtype=np.float64)
            if arr.shape != shape:
                raise InvalidInputError(f"{name} shape {arr.shape} != {shape}")
            if arr.size and (arr.min() < lo - _RANGE_TOL or arr.max() > hi + _RANGE_TOL):
                raise InvalidInputError(f"{name} values outside [{lo}, {hi}]")
            if arr.size and (arr.min() < lo or arr.max() > hi):
                arr = np.clip(arr, lo, hi)
            if arr.flags.writeable:
                arr = arr.copy() if arr is plane else arr
                arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def with_y(self, y: np.ndarray) -> "YiqImage":
        """Copy with a replacement Y plane; chroma planes are shared untouched."""
        return YiqImage(self.width, self.height, y, self.i_plane, self.q_plane)


def rgb_to_yiq(img: RasterImage) -> YiqImage:
    """Decompose an RGB image into NTSC YIQ planes."""
    if img.channels != 3:
        raise InvalidInputError("rgb_to_yiq requires a 3-channel image")
    yiq = img.data @ _RGB_TO_YIQ.T
    return YiqImage(
        width=img.width,
        height=img.height,
        y_plane=yiq[:, :, 0],
        i_plane=yiq[:, :, 1],
        q_plane=yiq[:, :, 2],
    )


def yiq_to_rgb(yiq: YiqImage) -> RasterImage:
    """Invert the YIQ decomposition, clamping each channel to [0, 1]."""
    stacked = np.stack([yiq.y_plane, yiq.i_plane, yiq.q_plane], axis=-1)
    rgb = np.clip(stacked @ _YIQ_TO_RGB.T, 0.0, 1.0)
    return RasterImage(width=yiq.width, height=yiq.height, channels=3, data=rgb)


def _resample_axis_coords(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bilinear source indices and weights for one axis (pixel-center aligned)."""
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    i0 = np.clip(np.floor(src).astype(int), 0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = np.clip(src - i0, 0.0, 1.0)
    return i0, i1, frac


def resize(img: RasterImage, target_w: int, target_h: int) -> RasterImage:
    """Bilinear resample to exactly (target_w, target_h)."""
    if target_w < 1 or target_h < 1:
        raise InvalidInputError("resize targets must be >= 1")
    if (target_w, target_h) == (img.width, img.height):
        return img
    x0, x1, fx = _resample_axis_coords(target_w, img.width)
    y0, y1, fy = _resample_axis_coords(target_h, img.height)
    d = img.data
    top = d[y0][:, x0] * (1 - fx)[None, :, None] + d[y0][:, x1] * fx[None, :, None]
    bot = d[y1][:, x0] * (1 - fx)[None, :, None] + d[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return RasterImage(width=target_w, height=target_h, channels=img.channels, data=out)


def resize_mask_nearest(mask: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Nearest-neighbor resample of a binary (H, W) mask."""
    if target_w < 1 or target_h < 1:
        raise InvalidInputError("resize targets must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    xs = np.clip(np.round((np.arange(target_w) + 0.5) * (w / target_w) - 0.5).astype(int), 0, w - 1)
    ys = np.clip(np.round((np.arange(target_h) + 0.5) * (h / target_h) - 0.5).astype(int), 0, h - 1)
    return mask[ys][:, xs]


def scale_annotation(ann, sx: float, sy: float):
    """Scale an annotation's box and mask by (sx, sy).

    The box scales linearly; the mask is resampled with nearest-neighbor so
    labels stay binary.  Import is deferred to avoid a cycle with annot_io.
    """
    from .annot_io import AnnotationRecord
    from .postprocess import Box

    if sx <= 0 or sy <= 0:
        raise InvalidInputError("scale factors must be positive")
    h, w = ann.mask.shape
    new_w = max(1, round(w * sx))
    new_h = max(1, round(h * sy))
    new_mask = resize_mask_nearest(ann.mask, new_w, new_h)
    box = Box(x=ann.box.x * sx, y=ann.box.y * sy, w=ann.box.w * sx, h=ann.box.h * sy)
    return AnnotationRecord(image_id=ann.image_id, box=box, mask=new_mask, label=ann.label)


# ---------------------------------------------------------------------------
# File I/O: PNG (8-bit gray/RGB) and binary PPM/PGM (maxval 255).

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _to_uint8(img: RasterImage) -> np.ndarray:
    return np.round(img.data * 255.0).astype(np.uint8)


def load_image(path) -> RasterImage:
    """Read a PNG or binary PPM/PGM file into a normalized raster."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw.startswith(_PNG_SIGNATURE):
        return _load_png(path, raw)
    if raw[:2] in (b"P5", b"P6"):
        return _load_pnm(path, raw)
    raise FormatError(f"{path}: not a PNG or binary PPM/PGM file")


def save_image(img: RasterImage, path) -> None:
    """Write an 8-bit PNG, PPM (3ch) or PGM (1ch) depending on extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    arr = _to_uint8(img)
    if suffix == ".png":
        _save_png(arr, path)
    elif suffix == ".ppm":
        if img.channels != 3:
            raise InvalidInputError("PPM requires a 3-channel image")
        _save_pnm(arr, path, b"P6")
    elif suffix == ".pgm":
        if img.channels != 1:
            raise InvalidInputError("PGM requires a single-channel image")
        _save_pnm(arr, path, b"P5")
    else:
        raise InvalidInputError(f"unsupported output format: {suffix!r}")


def _load_png(path: Path, raw: bytes) -> RasterImage:
    from PIL import Image, UnidentifiedImageError
    import io

    try:
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode not in ("L", "RGB"):
                if im.mode in ("I;16", "I", "F"):
                    raise FormatError(f"{path}: unsupported bit depth (mode {im.mode})")
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: malformed PNG ({exc})") from exc
    return RasterImage.from_array(arr.astype(np.float64) / 255.0)


def _save_png(arr: np.ndarray, path: Path) -> None:
    from PIL import Image

    mode = "L" if arr.shape[2] == 1 else "RGB"
    Image.fromarray(arr.squeeze(axis=2) if mode == "L" else arr, mode=mode).save(path, format="PNG")


def _load_pnm(path: Path, raw: bytes) -> RasterImage:
    # Header: magic, whitespace/comment-separated width, height, maxval,
    # then a single whitespace byte before the binary payload.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PNM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PNM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    channels = 3 if raw[:2] == b"P6" else 1
    expected = w * h * channels
    payload = raw[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: PNM payload truncated")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, channels)
    return RasterImage.from_array(arr.astype(np.float64) / 255.0)


def _save_pnm(arr: np.ndarray, path: Path, magic: bytes) -> None:
    h, w = arr.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + arr.tobytes())
