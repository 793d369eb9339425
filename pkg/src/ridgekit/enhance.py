"""Preprocessing pipeline for low-quality fundus images.

The chain runs on the YIQ lightness plane only: contrast-limited adaptive
histogram equalization, a brightness-preserving sigmoid stretch whose slope
parameter can be fitted by minimizing the absolute mean brightness error,
and a frequency-domain Wiener deblur.  Chroma planes pass through untouched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError
from .raster import RasterImage, rgb_to_yiq, yiq_to_rgb

DEFAULT_SIGMOID_C = 2.5
DEFAULT_SIGMOID_OFFSET = 0.05

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EnhanceConfig:
    """All preprocessing knobs; defaults follow common CLAHE/Wiener practice."""

    clahe_tiles: tuple[int, int] = (8, 8)
    clahe_clip: float = 2.0
    hist_bins: int = 256
    sigmoid_c: float = DEFAULT_SIGMOID_C
    sigmoid_offset: float = DEFAULT_SIGMOID_OFFSET
    fit_c: bool = False
    c_search_range: tuple[float, float] = (0.5, 10.0)
    psf_sigma: float = 1.0
    psf_size: int = 9
    wiener_nsr: float = 0.01

    def __post_init__(self):
        if self.clahe_tiles[0] < 1 or self.clahe_tiles[1] < 1:
            raise InvalidInputError("clahe_tiles must be >= (1, 1)")
        if self.clahe_clip <= 0:
            raise InvalidInputError("clahe_clip must be positive")
        if self.hist_bins < 2:
            raise InvalidInputError("hist_bins must be >= 2")
        if not 0.0 <= self.sigmoid_offset <= 1.0:
            raise InvalidInputError("sigmoid_offset must lie in [0, 1]")
        if self.c_search_range[0] >= self.c_search_range[1]:
            raise InvalidInputError("c_search_range must satisfy lo < hi")
        if self.psf_sigma <= 0:
            raise InvalidInputError("psf_sigma must be positive")
        if self.psf_size % 2 == 0:
            raise InvalidInputError("psf_size must be odd")
        if self.wiener_nsr < 0:
            raise InvalidInputError("wiener_nsr must be >= 0")

    # Flat key-value serialization; same keys double as CLI flags.
    _KEYS = (
        "clahe_tiles", "clahe_clip", "hist_bins", "sigmoid_c", "sigmoid_offset",
        "fit_c", "c_lo", "c_hi", "psf_sigma", "psf_size", "wiener_nsr",
    )

    def to_file(self, path) -> None:
        lines = [
            f"clahe_tiles = {self.clahe_tiles[0]}x{self.clahe_tiles[1]}",
            f"clahe_clip = {self.clahe_clip!r}",
            f"hist_bins = {self.hist_bins}",
            f"sigmoid_c = {self.sigmoid_c!r}",
            f"sigmoid_offset = {self.sigmoid_offset!r}",
            f"fit_c = {'true' if self.fit_c else 'false'}",
            f"c_lo = {self.c_search_range[0]!r}",
            f"c_hi = {self.c_search_range[1]!r}",
            f"psf_sigma = {self.psf_sigma!r}",
            f"psf_size = {self.psf_size}",
            f"wiener_nsr = {self.wiener_nsr!r}",
        ]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "EnhanceConfig":
        values: dict[str, str] = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InvalidInputError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (part.strip() for part in line.split("=", 1))
                if key not in cls._KEYS:
                    raise InvalidInputError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = value
        return cls._from_strings(values)

    @classmethod
    def _from_strings(cls, values: dict[str, str]) -> "EnhanceConfig":
        cfg = cls()
        kwargs = {}
        if "clahe_tiles" in values:
            rows, _, cols = values["clahe_tiles"].partition("x")
            kwargs["clahe_tiles"] = (int(rows), int(cols))
        for key, attr, conv in (
            ("clahe_clip", "clahe_clip", float),
            ("hist_bins", "hist_bins", int),
            ("sigmoid_c", "sigmoid_c", float),
            ("sigmoid_offset", "sigmoid_offset", float),
            ("psf_sigma", "psf_sigma", float),
            ("psf_size", "psf_size", int),
            ("wiener_nsr", "wiener_nsr", float),
        ):
            if key in values:
                kwargs[attr] = conv(values[key])
        if "fit_c" in values:
            kwargs["fit_c"] = values["fit_c"].lower() in ("1", "true", "yes", "on")
        lo = float(values["c_lo"]) if "c_lo" in values else cfg.c_search_range[0]
        hi = float(values["c_hi"]) if "c_hi" in values else cfg.c_search_range[1]
        kwargs["c_search_range"] = (lo, hi)
        return replace(cfg, **kwargs)


def _as_plane(plane) -> np.ndarray:
    if isinstance(plane, RasterImage):
        if plane.channels != 1:
            raise InvalidInputError("expected a single-channel image")
        return plane.plane(0)
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError("expected a 2-D plane")
    return arr


# ---------------------------------------------------------------------------
# CLAHE

def _clip_histogram(hist: np.ndarray, limit: float) -> np.ndarray:
    """Clip bins at ``limit`` and spread the excess uniformly (single pass).

    After redistribution a bin may exceed the limit by at most excess/bins;
    that residue is tolerated rather than re-clipped.
    """
    if not np.isfinite(limit):
        return hist.astype(np.float64)
    clipped = np.minimum(hist, limit).astype(np.float64)
    excess = float(hist.sum() - clipped.sum())
    return clipped + excess / hist.size


def _tile_edges(extent: int, tiles: int) -> np.ndarray:
    return np.round(np.linspace(0, extent, tiles + 1)).astype(int)


def clahe(plane, tiles: tuple[int, int] = (8, 8), clip: float = 2.0, bins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization on a [0,1] plane.

    Per-tile histograms are clipped at ``clip * tile_pixels / bins`` and the
    excess is redistributed uniformly; each tile's equalization map is its
    clipped-histogram CDF, and per-pixel output blends the four surrounding
    tile maps bilinearly across tile centers.  A tile grid larger than the
    image is reduced to fit.
    """
    arr = _as_plane(plane)
    h, w = arr.shape
    rows = max(1, min(int(tiles[0]), h))
    cols = max(1, min(int(tiles[1]), w))
    if bins < 2:
        raise InvalidInputError("bins must be >= 2")

    bin_idx = np.minimum((arr * bins).astype(int), bins - 1)
    row_edges = _tile_edges(h, rows)
    col_edges = _tile_edges(w, cols)

    # Tile CDFs as lookup tables: maps[r, c, b] in (0, 1].
    maps = np.empty((rows, cols, bins))
    for r in range(rows):
        for c in range(cols):
            tile = bin_idx[row_edges[r] : row_edges[r + 1], col_edges[c] : col_edges[c + 1]]
            hist = np.bincount(tile.ravel(), minlength=bins).astype(np.float64)
            limit = clip * tile.size / bins
            hist = _clip_histogram(hist, limit)
            cdf = np.cumsum(hist)
            maps[r, c] = cdf / cdf[-1]

    # Bilinear blend across tile centers; border pixels clamp to edge tiles.
    centers_y = (row_edges[:-1] + row_edges[1:]) / 2.0
    centers_x = (col_edges[:-1] + col_edges[1:]) / 2.0
    yc = np.arange(h) + 0.5
    xc = np.arange(w) + 0.5
    r0 = np.clip(np.searchsorted(centers_y, yc) - 1, 0, rows - 1)
    c0 = np.clip(np.searchsorted(centers_x, xc) - 1, 0, cols - 1)
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    span_y = np.where(r1 > r0, centers_y[r1] - centers_y[r0], 1.0)
    span_x = np.where(c1 > c0, centers_x[c1] - centers_x[c0], 1.0)
    wy = np.clip((yc - centers_y[r0]) / span_y, 0.0, 1.0)
    wx = np.clip((xc - centers_x[c0]) / span_x, 0.0, 1.0)

    r0g = r0[:, None]
    r1g = r1[:, None]
    c0g = c0[None, :]
    c1g = c1[None, :]
    wyg = wy[:, None]
    wxg = wx[None, :]
    out = (
        maps[r0g, c0g, bin_idx] * (1 - wyg) * (1 - wxg)
        + maps[r0g, c1g, bin_idx] * (1 - wyg) * wxg
        + maps[r1g, c0g, bin_idx] * wyg * (1 - wxg)
        + maps[r1g, c1g, bin_idx] * wyg * wxg
    )
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Sigmoid stretch + AMBE fitting

def _sigmoid(f, c: float, offset: float):
    return 1.0 / (1.0 + np.exp(c * (offset - f)))


def sigmoid_stretch(plane, c: float = DEFAULT_SIGMOID_C, offset: float = DEFAULT_SIGMOID_OFFSET) -> np.ndarray:
    """Sigmoid intensity remap normalized so the plane min maps to 0, max to 1.

    With psi(f) = 1 / (1 + exp(c * (offset - f))), the output is
    (psi(f) - psi(fmin)) / (psi(fmax) - psi(fmin)).  A (near-)constant plane
    is returned unchanged.
    """
    arr = _as_plane(plane)
    fmin = float(arr.min())
    fmax = float(arr.max())
    if fmax - fmin < 1e-9:
        return arr.copy()
    lo = _sigmoid(fmin, c, offset)
    hi = _sigmoid(fmax, c, offset)
    return (_sigmoid(arr, c, offset) - lo) / (hi - lo)


def ambe(original, transformed) -> float:
    """Absolute mean brightness error between two planes of equal shape."""
    a = _as_plane(original)
    b = _as_plane(transformed)
    if a.shape != b.shape:
        raise InvalidInputError(f"plane shapes differ: {a.shape} vs {b.shape}")
    return abs(float(a.mean()) - float(b.mean()))


def fit_sigmoid_c(
    plane,
    c_range: tuple[float, float],
    offset: float = DEFAULT_SIGMOID_OFFSET,
    default_c: float = DEFAULT_SIGMOID_C,
) -> float:
    """Slope that minimizes the mean-brightness shift of the sigmoid stretch.

    Scans a 64-point grid over ``c_range``, then refines the best bracket by
    golden-section search until the interval is below 1e-3.  Ties break
    toward smaller c.  A constant plane cannot be fitted: the configured
    default is returned with a warning.
    """
    lo, hi = float(c_range[0]), float(c_range[1])
    if lo >= hi:
        raise InvalidInputError("c_range must satisfy lo < hi")
    arr = _as_plane(plane)
    if float(arr.max()) - float(arr.min()) < 1e-9:
        warnings.warn("constant plane: sigmoid fit is undefined, using default c")
        return default_c

    mean_in = float(arr.mean())

    def objective(c: float) -> float:
        return abs(mean_in - float(sigmoid_stretch(arr, c, offset).mean()))

    grid = np.linspace(lo, hi, 64)
    values = [objective(c) for c in grid]
    best = int(np.argmin(values))  # argmin takes the first (smallest c) on ties

    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, len(grid) - 1)]
    best_c, best_val = float(grid[best]), values[best]

    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    while b - a > 1e-3:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = objective(x2)
    for c, v in ((x1, f1), (x2, f2), ((a + b) / 2, objective((a + b) / 2))):
        if v < best_val or (v == best_val and c < best_c):
            best_c, best_val = float(c), v
    return min(max(best_c, lo), hi)


# ---------------------------------------------------------------------------
# Wiener deconvolution

def gaussian_psf(sigma: float, size: int) -> np.ndarray:
    """Isotropic Gaussian kernel on an odd size x size grid, unit sum."""
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")
    if size < 1 or size % 2 == 0:
        raise InvalidInputError("size must be a positive odd integer")
    half = size // 2
    coords = np.arange(-half, half + 1)
    g = np.exp(-(coords[:, None] ** 2 + coords[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


def wiener_deconvolve(plane, psf: np.ndarray, nsr: float = 0.0) -> np.ndarray:
    """Frequency-domain Wiener filter: conj(H) / (|H|^2 + nsr) applied to F.

    The plane is padded symmetrically by the PSF radius before the FFT and
    cropped afterwards, so circular wrap never touches real pixels.  Output
    is clamped to [0, 1].
    """
    arr = _as_plane(plane)
    psf = np.asarray(psf, dtype=np.float64)
    if psf.ndim != 2 or psf.shape[0] != psf.shape[1] or psf.shape[0] % 2 == 0:
        raise InvalidInputError("psf must be a square odd-sized kernel")
    if nsr < 0:
        raise InvalidInputError("nsr must be >= 0")
    radius = psf.shape[0] // 2
    padded = np.pad(arr, radius, mode="symmetric") if radius else arr

    kernel = np.zeros_like(padded)
    kernel[: psf.shape[0], : psf.shape[1]] = psf
    kernel = np.roll(kernel, (-radius, -radius), axis=(0, 1))

    H = np.fft.fft2(kernel)
    F = np.fft.fft2(padded)
    denom = (H * np.conj(H)).real + nsr
    denom = np.where(denom == 0.0, np.finfo(np.float64).tiny, denom)
    out = np.fft.ifft2(np.conj(H) * F / denom).real
    if radius:
        out = out[radius:-radius, radius:-radius]
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Full pipeline

def enhance_pipeline(img: RasterImage, cfg: EnhanceConfig = EnhanceConfig()) -> RasterImage:
    """CLAHE, sigmoid stretch and Wiener deblur on Y; chroma untouched."""
    yiq = rgb_to_yiq(img)
    y = clahe(yiq.y_plane, cfg.clahe_tiles, cfg.clahe_clip, cfg.hist_bins)
    c = (
        fit_sigmoid_c(y, cfg.c_search_range, cfg.sigmoid_offset, cfg.sigmoid_c)
        if cfg.fit_c
        else cfg.sigmoid_c
    )
    y = sigmoid_stretch(y, c, cfg.sigmoid_offset)
    psf = gaussian_psf(cfg.psf_sigma, cfg.psf_size)
    y = wiener_deconvolve(y, psf, cfg.wiener_nsr)
    return yiq_to_rgb(yiq.with_y(y))
