"""Normalized cross-correlation, PCE, and the rotation-searched match test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np
import scipy.fft

from .denoise import NoiseResidual
from .errors import DegenerateInputError, DegenerateSurfaceError
from .fingerprint import Fingerprint
from .raster import ImagePlane

ROTATIONS = (0, 90, 180, 270)

# Relative centered-norm floor below which an input counts as constant.
_DEGENERATE_NORM_FLOOR = 1e-12


@dataclass
class MatcherParams:
    """PCE evaluation knobs, recorded in every report.

    neighborhood_radius r defines the excluded peak neighborhood as the
    (2r+1)^2 square around the peak, wrapped modulo the surface dims.
    With signed_peak the peak is the maximum signed correlation instead
    of the maximum squared one.
    """

    neighborhood_radius: int = 5
    tau: float = 60.0
    signed_peak: bool = False

    def __post_init__(self):
        if self.neighborhood_radius < 0:
            raise ValueError("neighborhood_radius must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    def to_dict(self) -> dict:
        return {
            "neighborhood_radius": self.neighborhood_radius,
            "tau": self.tau,
            "signed_peak": self.signed_peak,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatcherParams":
        return cls(
            neighborhood_radius=int(d.get("neighborhood_radius", 5)),
            tau=float(d.get("tau", 60.0)),
            signed_peak=bool(d.get("signed_peak", False)),
        )


@dataclass
class CorrelationSurface:
    """Correlation value at every circular shift, plus the signed peak."""

    width: int
    height: int
    rho: np.ndarray
    peak_shift: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape


@dataclass
class PceReport:
    """Outcome of one fingerprint-vs-image comparison."""

    pce: float
    peak_shift: tuple[int, int]
    rotation: int
    scaled: bool
    scale_factor: Optional[tuple[float, float]]
    decision: bool
    tau: float

    CSV_COLUMNS = (
        "image_id", "fingerprint_id", "pce", "s1", "s2", "rotation",
        "scaled", "scale_x", "scale_y", "tau", "decision",
    )

    def to_dict(self) -> dict:
        return {
            "pce": self.pce,
            "peak_shift": list(self.peak_shift),
            "rotation": self.rotation,
            "scaled": self.scaled,
            "scale_factor": list(self.scale_factor) if self.scale_factor else None,
            "decision": self.decision,
            "tau": self.tau,
        }

    def to_csv_row(self, image_id: str, fingerprint_id: str) -> list[str]:
        scale_x, scale_y = self.scale_factor if self.scale_factor else ("", "")
        fmt = lambda v: format(v, ".17g") if isinstance(v, float) else str(v)
        return [
            image_id, fingerprint_id, fmt(self.pce),
            str(self.peak_shift[0]), str(self.peak_shift[1]), str(self.rotation),
            str(self.scaled).lower(), fmt(scale_x), fmt(scale_y),
            fmt(self.tau), str(self.decision).lower(),
        ]


def _pad_down_right(a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if a.shape == shape:
        return a
    return np.pad(a, ((0, shape[0] - a.shape[0]), (0, shape[1] - a.shape[1])))


def ncc_surface(x: np.ndarray, y: np.ndarray) -> CorrelationSurface:
    """Normalized cross-correlation over all circular shifts.

    rho(s1, s2) = sum (x - mean(x)) * (y shifted by (s1, s2)) divided by
    the product of centered norms, indices wrapped modulo the dims; a
    smaller operand is zero-padded down-right to the larger dims first.
    The peak is the maximum signed value, ties broken by smallest s1,
    then smallest s2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("correlation operands must be 2-D")
    shape = (max(x.shape[0], y.shape[0]), max(x.shape[1], y.shape[1]))
    x = _pad_down_right(x, shape)
    y = _pad_down_right(y, shape)

    xc = x - x.mean()
    yc = y - y.mean()
    nx = float(np.linalg.norm(xc))
    ny = float(np.linalg.norm(yc))
    size_scale = np.sqrt(x.size)
    for name, norm, arr in (("x", nx, x), ("y", ny, y)):
        floor = _DEGENERATE_NORM_FLOOR * size_scale * max(1.0, float(np.abs(arr).max()))
        if norm <= floor:
            raise DegenerateInputError(f"{name} is constant (zero centered norm)")

    spectrum = np.conj(scipy.fft.fft2(xc)) * scipy.fft.fft2(yc)
    rho = scipy.fft.ifft2(spectrum).real / (nx * ny)
    peak_flat = int(np.argmax(rho))
    peak = (peak_flat // shape[1], peak_flat % shape[1])
    return CorrelationSurface(width=shape[1], height=shape[0], rho=rho, peak_shift=peak)


def ncc_surface_direct(x: np.ndarray, y: np.ndarray) -> CorrelationSurface:
    """Direct double-loop evaluation of the same formula; the brute-force
    oracle the FFT path is validated against. O((mn)^2), test sizes only."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    shape = (max(x.shape[0], y.shape[0]), max(x.shape[1], y.shape[1]))
    x = _pad_down_right(x, shape)
    y = _pad_down_right(y, shape)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.linalg.norm(xc) * np.linalg.norm(yc)
    if denom == 0:
        raise DegenerateInputError("constant input")
    m, n = shape
    rho = np.zeros(shape)
    for s1 in range(m):
        for s2 in range(n):
            total = 0.0
            for i in range(m):
                for j in range(n):
                    total += xc[i, j] * yc[(i + s1) % m, (j + s2) % n]
            rho[s1, s2] = total / denom
    peak_flat = int(np.argmax(rho))
    peak = (peak_flat // n, peak_flat % n)
    return CorrelationSurface(width=n, height=m, rho=rho, peak_shift=peak)


def _neighborhood_mask(shape: tuple[int, int], peak: tuple[int, int], radius: int) -> np.ndarray:
    m, n = shape
    rows = np.unique(np.arange(peak[0] - radius, peak[0] + radius + 1) % m)
    cols = np.unique(np.arange(peak[1] - radius, peak[1] + radius + 1) % n)
    mask = np.zeros(shape, dtype=bool)
    mask[np.ix_(rows, cols)] = True
    return mask


def _select_peak(surface: CorrelationSurface, params: MatcherParams) -> tuple[int, int]:
    if params.signed_peak:
        return surface.peak_shift
    rho = surface.rho
    flat = int(np.argmax(rho * rho))
    return (flat // rho.shape[1], flat % rho.shape[1])


def pce_at(surface: CorrelationSurface, peak: tuple[int, int], params: MatcherParams) -> float:
    rho = surface.rho
    m, n = rho.shape
    mask = _neighborhood_mask((m, n), peak, params.neighborhood_radius)
    excluded = int(mask.sum())
    if excluded >= m * n:
        raise ValueError(
            f"peak neighborhood ({excluded} shifts) covers the whole "
            f"{m}x{n} surface"
        )
    off_energy = float((rho[~mask] ** 2).sum()) / (m * n - excluded)
    if off_energy == 0.0:
        raise DegenerateSurfaceError("all off-peak correlations are zero")
    return float(rho[peak]) ** 2 / off_energy


def pce(surface: CorrelationSurface, params: MatcherParams | None = None) -> float:
    """Peak-to-correlation-energy ratio.

    Squared peak over the mean squared correlation outside the wrapped
    (2r+1)^2 peak neighborhood. By default the peak maximizes the squared
    correlation; with signed_peak it is the surface's signed maximum.
    """
    params = params or MatcherParams()
    return pce_at(surface, _select_peak(surface, params), params)


def decide(pce_value: float, tau: float) -> bool:
    """Attribution decision: strictly greater than the threshold."""
    if pce_value < 0:
        raise ValueError("PCE is a ratio of squares and cannot be negative")
    return pce_value > tau


def _resize_bicubic(a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return cv2.resize(a, (shape[1], shape[0]), interpolation=cv2.INTER_CUBIC).astype(np.float64)


def match_image(
    fp: Fingerprint,
    img: ImagePlane,
    w: NoiseResidual,
    params: MatcherParams | None = None,
) -> PceReport:
    """Match one test image (with its residual) against a fingerprint.

    Correlates X = I * K against Y = W at every rigid rotation of the
    test pair; the reported rotation is the amount the submitted image
    appears rotated counter-clockwise relative to the fingerprint
    orientation. If a rotated pair's dims differ from the fingerprint's,
    the pair is resized (bicubic, per-axis factors recorded).
    """
    params = params or MatcherParams()
    if img.shape != w.shape:
        raise ValueError(f"residual {w.shape} was not extracted from image {img.shape}")
    best = None
    for rotation in ROTATIONS:
        k = rotation // 90
        cand_img = np.rot90(img.samples, -k) if k else img.samples
        cand_w = np.rot90(w.samples, -k) if k else w.samples
        scaled = False
        scale_factor = None
        if cand_img.shape != fp.shape:
            scale_factor = (
                fp.width / cand_img.shape[1],
                fp.height / cand_img.shape[0],
            )
            cand_img = _resize_bicubic(cand_img, fp.shape)
            cand_w = _resize_bicubic(cand_w, fp.shape)
            scaled = True
        surface = ncc_surface(cand_img * fp.k, cand_w)
        peak = _select_peak(surface, params)
        value = pce_at(surface, peak, params)
        if best is None or value > best[0]:
            best = (value, peak, rotation, scaled, scale_factor)
    value, peak, rotation, scaled, scale_factor = best
    return PceReport(
        pce=value,
        peak_shift=peak,
        rotation=rotation,
        scaled=scaled,
        scale_factor=scale_factor,
        decision=decide(value, params.tau),
        tau=params.tau,
    )
