"""Noise-residual extraction: W = image - wavelet-Wiener denoised image."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from . import wavelets
from .errors import DecompositionError, ShapeError
from .raster import ImagePlane


@dataclass
class DenoiserParams:
    """Filter configuration, recorded into fingerprint provenance.

    sigma0 is the assumed noise standard deviation on the 0-255 intensity
    scale; variance windows are the local-estimate neighborhood sizes the
    Wiener shrinkage minimizes over.
    """

    sigma0: float = 5.0
    levels: int = 4
    variance_windows: tuple[int, ...] = (3, 5, 7, 9)

    def __post_init__(self):
        self.variance_windows = tuple(int(w) for w in self.variance_windows)
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if not self.variance_windows:
            raise ValueError("at least one variance window required")
        for w in self.variance_windows:
            if w < 3 or w % 2 == 0:
                raise ValueError(f"variance window {w} must be odd and >= 3")

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0,
            "levels": self.levels,
            "variance_windows": list(self.variance_windows),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserParams":
        return cls(
            sigma0=float(d.get("sigma0", 5.0)),
            levels=int(d.get("levels", 4)),
            variance_windows=tuple(d.get("variance_windows", (3, 5, 7, 9))),
        )


@dataclass
class NoiseResidual:
    """Per-image sensor-noise estimate; same grid as the source plane."""

    width: int
    height: int
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.shape != (self.height, self.width):
            raise ShapeError(
                f"residual grid {self.samples.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if not np.isfinite(self.samples).all():
            raise ValueError("residual contains non-finite samples")
        mean = float(self.samples.mean())
        if abs(mean) > 0.5:
            raise ValueError(f"residual mean {mean:.4f} outside +/-0.5")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "NoiseResidual":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(width=arr.shape[1], height=arr.shape[0], samples=arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape


def wiener_subband(coeffs: np.ndarray, sigma0: float, windows=(3, 5, 7, 9)) -> np.ndarray:
    """Minimum-variance Wiener shrinkage of one detail subband.

    Each coefficient is scaled by s2 / (s2 + sigma0^2), where s2 is the
    smallest of the local signal-variance estimates
    max(0, local_mean(coeffs^2) - sigma0^2) over the configured windows.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    energy = coeffs * coeffs
    noise_var = float(sigma0) ** 2
    signal_var = None
    for w in windows:
        local = uniform_filter(energy, size=int(w), mode="reflect")
        est = np.maximum(local - noise_var, 0.0)
        signal_var = est if signal_var is None else np.minimum(signal_var, est)
    return coeffs * (signal_var / (signal_var + noise_var))


def denoise(img: ImagePlane, params: DenoiserParams | None = None) -> np.ndarray:
    """Wavelet-domain Wiener denoising of a luminance plane.

    The approximation band passes through untouched; detail bands are
    shrunk by `wiener_subband`. Non-dyadic sizes are symmetric-padded to
    the next multiple of 2^levels and cropped after reconstruction.
    """
    params = params or DenoiserParams()
    h, w = img.shape
    block = 1 << params.levels
    if h < block or w < block:
        raise DecompositionError(
            f"{w}x{h} too small for {params.levels} decomposition levels"
        )
    pad_h = (-h) % block
    pad_w = (-w) % block
    x = np.pad(img.samples, ((0, pad_h), (0, pad_w)), mode="symmetric")

    coeffs = wavelets.wavedec2(x, params.levels)
    cleaned = [coeffs[0]]
    for det in coeffs[1:]:
        cleaned.append(tuple(
            wiener_subband(band, params.sigma0, params.variance_windows)
            for band in det
        ))
    rec = wavelets.waverec2(cleaned, x.shape)
    return rec[:h, :w]


def extract_residual(img: ImagePlane, params: DenoiserParams | None = None) -> NoiseResidual:
    """Noise residual W = img - denoise(img); exact by construction."""
    den = denoise(img, params)
    return NoiseResidual.from_array(img.samples - den)
