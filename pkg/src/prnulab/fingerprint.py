"""Camera fingerprint estimation and non-unique artifact suppression.

The estimator forms K = sum(W_i * I_i) / sum(I_i^2) over the reference
images. Sums are evaluated by a fixed pairwise reduction tree over the
lexicographic image-id order, so the finalized fingerprint is bit-identical
no matter how accumulation calls or accumulator merges were interleaved.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.ndimage import uniform_filter

from .denoise import DenoiserParams, NoiseResidual
from .errors import EmptyAccumulatorError, ShapeError
from .raster import ImagePlane

# Dead-pixel guard: den entries below this fraction of max(den) produce k=0.
DEAD_PIXEL_EPS_FRACTION = 1e-6

FINGERPRINT_MAGIC = b"PRNUFP01"


def _pairwise_sum(arrays: list[np.ndarray]) -> np.ndarray:
    """Fixed-shape pairwise reduction; deterministic for a given order."""
    n = len(arrays)
    if n == 1:
        return arrays[0].copy()
    half = n // 2
    return _pairwise_sum(arrays[:half]) + _pairwise_sum(arrays[half:])


class FingerprintAccumulator:
    """Mergeable estimator state for one camera fingerprint.

    Per-image terms are kept until finalization (memory grows with the
    reference count) so the reduction order can be fixed by image id.
    """

    def __init__(self, width: int, height: int):
        self.width = int(width)
        self.height = int(height)
        self._terms: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def count(self) -> int:
        return len(self._terms)

    @property
    def source_ids(self) -> list[str]:
        return sorted(self._terms)

    @property
    def num(self) -> np.ndarray:
        """Current sum(W_i * I_i) under the fixed reduction tree."""
        self._require_nonempty()
        return _pairwise_sum([self._terms[i][0] for i in self.source_ids])

    @property
    def den(self) -> np.ndarray:
        """Current sum(I_i^2) under the fixed reduction tree."""
        self._require_nonempty()
        return _pairwise_sum([self._terms[i][1] for i in self.source_ids])

    def _require_nonempty(self):
        if not self._terms:
            raise EmptyAccumulatorError("no images accumulated")

    def add(self, image_id: str, img: ImagePlane, w: NoiseResidual) -> "FingerprintAccumulator":
        if img.shape != (self.height, self.width) or w.shape != (self.height, self.width):
            raise ShapeError(
                f"image {image_id!r}: got image {img.shape}, residual {w.shape}, "
                f"accumulator is {(self.height, self.width)}"
            )
        if image_id in self._terms:
            raise ValueError(f"image id {image_id!r} accumulated twice")
        self._terms[image_id] = (w.samples * img.samples, img.samples * img.samples)
        return self

    def merge(self, other: "FingerprintAccumulator") -> "FingerprintAccumulator":
        """Combine disjoint partial accumulations (parallel reference builds)."""
        if (other.width, other.height) != (self.width, self.height):
            raise ShapeError("cannot merge accumulators of different dims")
        overlap = set(self._terms) & set(other._terms)
        if overlap:
            raise ValueError(f"duplicate image ids in merge: {sorted(overlap)[:3]}")
        self._terms.update(other._terms)
        return self


def accumulate(
    acc: FingerprintAccumulator, image_id: str, img: ImagePlane, w: NoiseResidual
) -> FingerprintAccumulator:
    """Add one (image, residual) pair to the estimator state."""
    return acc.add(image_id, img, w)


@dataclass
class Fingerprint:
    """Finalized camera fingerprint estimate."""

    width: int
    height: int
    k: np.ndarray
    cleaned: bool = False
    params_digest: str = ""
    source_count: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.k = np.ascontiguousarray(self.k, dtype=np.float64)
        if self.k.shape != (self.height, self.width):
            raise ShapeError(f"fingerprint grid {self.k.shape} != {self.height}x{self.width}")
        if not np.isfinite(self.k).all():
            raise ValueError("fingerprint contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.k.shape


def _provenance_digest(provenance: dict) -> str:
    blob = json.dumps(provenance, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def finalize(
    acc: FingerprintAccumulator, denoiser_params: DenoiserParams | None = None
) -> Fingerprint:
    """Evaluate the ratio estimate; dead pixels (den ~ 0) map to k = 0."""
    num = acc.num  # raises EmptyAccumulatorError on count == 0
    den = acc.den
    eps = DEAD_PIXEL_EPS_FRACTION * float(den.max())
    k = np.zeros_like(num)
    alive = den >= max(eps, np.finfo(np.float64).tiny)
    np.divide(num, den, out=k, where=alive)
    provenance = {
        "denoiser": (denoiser_params or DenoiserParams()).to_dict(),
        "source_ids": acc.source_ids,
        "zero_mean": False,
        "whiten": False,
    }
    return Fingerprint(
        width=acc.width,
        height=acc.height,
        k=k,
        cleaned=False,
        params_digest=_provenance_digest(provenance),
        source_count=acc.count,
        provenance=provenance,
    )


def zero_mean_pass(k: np.ndarray) -> np.ndarray:
    """Subtract row means, then column means; kills row/column artifacts."""
    out = k - k.mean(axis=1, keepdims=True)
    out -= out.mean(axis=0, keepdims=True)
    return out


def spectral_whiten(k: np.ndarray) -> np.ndarray:
    """Flatten the magnitude spectrum against a 3x3 moving-average estimate.

    Periodic artifacts (demosaic lattices, JPEG block grids) appear as
    spectral spikes; dividing by the locally smoothed magnitude levels
    them while leaving the white PRNU component proportionally intact.
    """
    spectrum = scipy.fft.fft2(k)
    magnitude = np.abs(spectrum)
    smoothed = uniform_filter(magnitude, size=3, mode="wrap")
    flat = np.zeros_like(spectrum)
    np.divide(spectrum, smoothed, out=flat, where=smoothed > 0)
    flat[0, 0] = 0.0
    return scipy.fft.ifft2(flat).real


def remove_nua(fp: Fingerprint, zero_mean: bool = True, whiten: bool = True) -> Fingerprint:
    """Suppress non-unique artifacts shared across cameras.

    Runs the linear zero-mean pass first, then spectral whitening; either
    stage can be disabled for ablation runs. The `cleaned` flag is set
    only when the zero-mean pass ran, since it alone guarantees the
    zero row/column mean invariant.
    """
    k = fp.k
    if zero_mean:
        k = zero_mean_pass(k)
    if whiten:
        k = spectral_whiten(k)
    provenance = dict(fp.provenance)
    provenance["zero_mean"] = bool(zero_mean)
    provenance["whiten"] = bool(whiten)
    return Fingerprint(
        width=fp.width,
        height=fp.height,
        k=k,
        cleaned=bool(zero_mean),
        params_digest=_provenance_digest(provenance),
        source_count=fp.source_count,
        provenance=provenance,
    )


def save_fingerprint(fp: Fingerprint, path: str) -> None:
    """PRNUFP01 container: header, float64 grid, length-prefixed JSON block."""
    provenance = dict(fp.provenance)
    provenance.setdefault("source_ids", [])
    blob = json.dumps(provenance, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FINGERPRINT_MAGIC)
        fh.write(struct.pack("<IIBI", fp.width, fp.height, 1 if fp.cleaned else 0,
                             fp.source_count))
        fh.write(np.ascontiguousarray(fp.k, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_fingerprint(path: str) -> Fingerprint:
    with open(path, "rb") as fh:
        magic = fh.read(len(FINGERPRINT_MAGIC))
        if magic != FINGERPRINT_MAGIC:
            raise ValueError(f"{path}: not a PRNUFP01 fingerprint file")
        width, height, cleaned, source_count = struct.unpack("<IIBI", fh.read(13))
        grid = np.frombuffer(fh.read(width * height * 8), dtype="<f8")
        if grid.size != width * height:
            raise ValueError(f"{path}: truncated fingerprint grid")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        provenance = json.loads(fh.read(blob_len).decode("utf-8"))
    k = grid.reshape(height, width).astype(np.float64)
    return Fingerprint(
        width=width,
        height=height,
        k=k,
        cleaned=bool(cleaned),
        params_digest=_provenance_digest(provenance),
        source_count=source_count,
        provenance=provenance,
    )
