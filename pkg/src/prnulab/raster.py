"""Image decoding, Exif extraction, and luminance conversion.

Everything downstream operates on a single float64 luminance plane in
[0, 255]; this module is the only place pixel data enters the pipeline.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ShapeError, SizeError, UnsupportedFormatError

MIN_DIMENSION = 64

# BT.601 luma weights
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

_SUPPORTED_FORMATS = {"JPEG", "PNG", "TIFF", "MPO"}

# Exif tag ids
_TAG_MAKE = 271
_TAG_MODEL = 272
_TAG_SOFTWARE = 305
_TAG_EXIF_IFD = 0x8769
_TAG_GPS_IFD = 0x8825
_TAG_FOCAL_LENGTH = 37386
_TAG_CUSTOM_RENDERED = 41985
_TAG_DIGITAL_ZOOM = 41988
_TAG_BODY_SERIAL = 42033

# CustomRendered enum as rendered by mainstream Exif tools; vendors use
# values past the standard 0/1.
CUSTOM_RENDERED_LABELS = {
    0: "Normal",
    1: "Custom",
    2: "HDR (no original saved)",
    3: "HDR (original saved)",
    4: "Original (for HDR)",
    6: "Panorama",
    7: "Portrait HDR",
    8: "Portrait",
}


@dataclass
class ImagePlane:
    """Single-channel raster; row-major float64 samples in [0, 255]."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.shape != (self.height, self.width):
            raise ShapeError(
                f"sample grid {self.samples.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if not np.isfinite(self.samples).all():
            raise ValueError("image plane contains non-finite samples")
        if self.width < MIN_DIMENSION or self.height < MIN_DIMENSION:
            raise SizeError(
                f"plane {self.width}x{self.height} below pipeline minimum "
                f"{MIN_DIMENSION}x{MIN_DIMENSION}"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImagePlane":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(width=arr.shape[1], height=arr.shape[0], samples=arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape


@dataclass
class ExifRecord:
    """The metadata subset the curation rules consume.

    Absent tags stay None; `pixel_dims` always holds the decoded raster
    size as a fallback.
    """

    make: Optional[str] = None
    model: Optional[str] = None
    software: Optional[str] = None
    focal_length: Optional[float] = None
    digital_zoom: Optional[float] = None
    pixel_dims: tuple[int, int] = (0, 0)
    custom_rendered: Optional[str] = None
    body_serial: Optional[str] = None
    gps: Optional[tuple[float, float]] = None

    def to_dict(self) -> dict:
        return {
            "make": self.make,
            "model": self.model,
            "software": self.software,
            "focal_length": self.focal_length,
            "digital_zoom": self.digital_zoom,
            "pixel_dims": list(self.pixel_dims),
            "custom_rendered": self.custom_rendered,
            "body_serial": self.body_serial,
            "gps": list(self.gps) if self.gps else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExifRecord":
        return cls(
            make=d.get("make"),
            model=d.get("model"),
            software=d.get("software"),
            focal_length=d.get("focal_length"),
            digital_zoom=d.get("digital_zoom"),
            pixel_dims=tuple(d.get("pixel_dims") or (0, 0)),
            custom_rendered=d.get("custom_rendered"),
            body_serial=d.get("body_serial"),
            gps=tuple(d["gps"]) if d.get("gps") else None,
        )


def round_focal(value: float) -> float:
    """Focal lengths are reduced to 2 decimals before any mode computation;
    vendor rational encodings otherwise make equal focals compare unequal."""
    return round(float(value), 2)


def _as_float(value) -> Optional[float]:
    try:
        if isinstance(value, Fraction):
            if value.denominator == 0:
                return None
            return float(value)
        f = float(value)
    except (TypeError, ValueError, ZeroDivisionError):
        return None
    if not np.isfinite(f):
        return None
    return f


def _as_text(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bytes):
        value = value.decode("utf-8", errors="replace")
    text = str(value).strip().strip("\x00").strip()
    return text or None


def _dms_to_degrees(dms, ref) -> Optional[float]:
    try:
        d, m, s = (float(v) for v in dms)
    except (TypeError, ValueError, ZeroDivisionError):
        return None
    deg = d + m / 60.0 + s / 3600.0
    ref = _as_text(ref) or ""
    if ref.upper() in ("S", "W"):
        deg = -deg
    return deg


def _extract_exif(img: Image.Image, pixel_dims: tuple[int, int]) -> ExifRecord:
    rec = ExifRecord(pixel_dims=pixel_dims)
    try:
        exif = img.getexif()
    except Exception:
        return rec
    if exif is None:
        return rec

    rec.make = _as_text(exif.get(_TAG_MAKE))
    rec.model = _as_text(exif.get(_TAG_MODEL))
    rec.software = _as_text(exif.get(_TAG_SOFTWARE))

    try:
        sub = dict(exif.get_ifd(_TAG_EXIF_IFD))
    except Exception:
        sub = {}
    # some writers park sub-IFD tags in IFD0; accept both
    merged = {**{k: exif.get(k) for k in (
        _TAG_FOCAL_LENGTH, _TAG_CUSTOM_RENDERED, _TAG_DIGITAL_ZOOM, _TAG_BODY_SERIAL
    ) if exif.get(k) is not None}, **sub}

    focal = _as_float(merged.get(_TAG_FOCAL_LENGTH))
    if focal is not None and focal > 0:
        rec.focal_length = round_focal(focal)

    zoom = _as_float(merged.get(_TAG_DIGITAL_ZOOM))
    # DigitalZoomRatio == 0 means "digital zoom not used"
    if zoom is not None and zoom > 0:
        rec.digital_zoom = zoom

    rendered = merged.get(_TAG_CUSTOM_RENDERED)
    if rendered is not None:
        if isinstance(rendered, (int, np.integer)):
            rec.custom_rendered = CUSTOM_RENDERED_LABELS.get(int(rendered), str(int(rendered)))
        else:
            rec.custom_rendered = _as_text(rendered)

    rec.body_serial = _as_text(merged.get(_TAG_BODY_SERIAL))

    try:
        gps = exif.get_ifd(_TAG_GPS_IFD)
    except Exception:
        gps = {}
    if gps:
        lat = _dms_to_degrees(gps.get(2), gps.get(1))
        lon = _dms_to_degrees(gps.get(4), gps.get(3))
        if lat is not None and lon is not None:
            rec.gps = (lat, lon)
    return rec


def to_luminance(r: ImagePlane, g: ImagePlane, b: ImagePlane) -> ImagePlane:
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B, clamped to [0, 255]."""
    if not (r.shape == g.shape == b.shape):
        raise ShapeError(
            f"channel dims differ: {r.shape}, {g.shape}, {b.shape}"
        )
    lum = _LUMA_R * r.samples + _LUMA_G * g.samples + _LUMA_B * b.samples
    np.clip(lum, 0.0, 255.0, out=lum)
    return ImagePlane.from_array(lum)


def _luminance_from_rgb_array(rgb: np.ndarray) -> np.ndarray:
    lum = (
        _LUMA_R * rgb[:, :, 0].astype(np.float64)
        + _LUMA_G * rgb[:, :, 1].astype(np.float64)
        + _LUMA_B * rgb[:, :, 2].astype(np.float64)
    )
    return np.clip(lum, 0.0, 255.0)


def decode_image(path: str | os.PathLike) -> tuple[ImagePlane, ExifRecord]:
    """Decode a JPEG/PNG/TIFF file into a luminance plane plus its Exif record."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DecodeError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img_format = img.format
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"not a recognized raster format: {path}") from exc
    except OSError as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc

    if img_format not in _SUPPORTED_FORMATS:
        raise UnsupportedFormatError(
            f"unsupported format {img_format!r} for {path} (JPEG/PNG/TIFF only)"
        )

    width, height = img.size
    if width < MIN_DIMENSION or height < MIN_DIMENSION:
        raise SizeError(
            f"{path}: {width}x{height} below pipeline minimum "
            f"{MIN_DIMENSION}x{MIN_DIMENSION}"
        )
    record = _extract_exif(img, pixel_dims=(width, height))

    mode = img.mode
    if mode == "L":
        plane = np.asarray(img, dtype=np.float64)
    elif mode in ("I", "I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64)
        peak = arr.max()
        scale = 257.0 if peak > 255 else 1.0  # 16-bit grayscale back to 0..255
        plane = np.clip(arr / scale, 0.0, 255.0)
    elif mode == "F":
        plane = np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)
    else:
        if mode != "RGB":
            img = img.convert("RGB")
        plane = _luminance_from_rgb_array(np.asarray(img))
    return ImagePlane.from_array(plane), record
