"""Fundus image enhancement and ridge-detection evaluation toolkit."""

from .annot_io import (
    AnnotationRecord,
    DatasetManifest,
    ManifestEntry,
    PredictionRecord,
    load_manifest,
    load_predictions,
    mask_bbox,
    rle_decode,
    rle_encode,
    save_manifest,
    save_predictions,
)
from .detect import Detection, DetectorConfig, detect_ridges, hessian_ridge_response, multiscale_ridge_map, propose_regions
from .enhance import (
    EnhanceConfig,
    ambe,
    clahe,
    enhance_pipeline,
    fit_sigmoid_c,
    gaussian_psf,
    sigmoid_stretch,
    wiener_deconvolve,
)
from .errors import FormatError, InvalidInputError, RidgekitError
from .evaluate import (
    MatchReport,
    ObjectMetrics,
    PixelMetrics,
    aggregate_pixel_metrics,
    match_detections,
    object_metrics,
    pixel_metrics,
)
from .phantom import DegradeSpec, PhantomSpec, RidgeArcSpec, degrade, generate_phantom, generate_phantom_full
from .postprocess import Box, iou, nms
from .raster import RasterImage, YiqImage, load_image, resize, rgb_to_yiq, save_image, scale_annotation, yiq_to_rgb
from .rng import Xoshiro256StarStar

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "Box",
    "DatasetManifest",
    "DegradeSpec",
    "Detection",
    "DetectorConfig",
    "EnhanceConfig",
    "FormatError",
    "InvalidInputError",
    "ManifestEntry",
    "MatchReport",
    "ObjectMetrics",
    "PhantomSpec",
    "PixelMetrics",
    "PredictionRecord",
    "RasterImage",
    "RidgeArcSpec",
    "RidgekitError",
    "Xoshiro256StarStar",
    "YiqImage",
    "aggregate_pixel_metrics",
    "ambe",
    "clahe",
    "degrade",
    "detect_ridges",
    "enhance_pipeline",
    "fit_sigmoid_c",
    "gaussian_psf",
    "generate_phantom",
    "generate_phantom_full",
    "hessian_ridge_response",
    "iou",
    "load_image",
    "load_manifest",
    "load_predictions",
    "mask_bbox",
    "match_detections",
    "multiscale_ridge_map",
    "nms",
    "object_metrics",
    "pixel_metrics",
    "propose_regions",
    "resize",
    "rgb_to_yiq",
    "rle_decode",
    "rle_encode",
    "save_image",
    "save_manifest",
    "save_predictions",
    "scale_annotation",
    "sigmoid_stretch",
    "wiener_deconvolve",
    "yiq_to_rgb",
]
