"""Synthetic cameras with known ground-truth sensor patterns.

The simulator produces images through a controllable chain: multiplicative
per-pixel sensitivity, read noise, optional pixel binning with a shared
interpolation kernel, an optional additive processing pattern shared
between cameras holding the same token, and a JPEG round-trip. It exists
so pipeline behavior (true matches, cross-camera false positives) can be
verified at desk scale against a known truth.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field, asdict
from typing import Optional

import cv2
import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ShapeError, SizeError
from .raster import ImagePlane

_KERNELS = {
    "nearest": cv2.INTER_NEAREST,
    "bilinear": cv2.INTER_LINEAR,
    "bicubic": cv2.INTER_CUBIC,
}

# Band limit (gaussian sigma, in pixels) of the shared processing pattern;
# mild smoothing keeps enough detail-band energy to survive denoising.
_PATTERN_SIGMA = 1.2


def _digest_int(*parts) -> int:
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def derived_rng(*parts) -> np.random.Generator:
    """Deterministic generator keyed by an arbitrary tuple of labels."""
    return np.random.default_rng(_digest_int(*parts))


@dataclass
class NuaProfile:
    """Controllable non-unique artifact injections.

    binning > 1 averages each factor^2 block and upsamples back with the
    named kernel; cameras with equal shared_pattern_id receive the same
    additive band-limited pattern at pattern_amplitude intensity units;
    jpeg_quality None means lossless (no round-trip).
    """

    binning: int = 1
    kernel: str = "bilinear"
    jpeg_quality: Optional[int] = 95
    shared_pattern_id: Optional[str] = None
    pattern_amplitude: float = 0.0

    def __post_init__(self):
        if self.binning not in (1, 2):
            raise ConfigError(f"binning factor {self.binning} must be 1 or 2")
        if self.kernel not in _KERNELS:
            raise ConfigError(f"unknown interpolation kernel {self.kernel!r}")
        if self.jpeg_quality is not None and not (1 <= int(self.jpeg_quality) <= 100):
            raise ConfigError(f"jpeg_quality {self.jpeg_quality} outside 1..100")
        if self.pattern_amplitude < 0:
            raise ConfigError("pattern_amplitude must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NuaProfile":
        return cls(
            binning=int(d.get("binning", 1)),
            kernel=d.get("kernel", "bilinear"),
            jpeg_quality=d.get("jpeg_quality", 95),
            shared_pattern_id=d.get("shared_pattern_id"),
            pattern_amplitude=float(d.get("pattern_amplitude", 0.0)),
        )


@dataclass
class SynthCamera:
    """One simulated sensor; k_true is zero-mean, unit-std."""

    camera_id: str
    dims: tuple[int, int]  # (width, height)
    k_true: np.ndarray
    strength: float
    nua: NuaProfile
    seed: int


def make_camera(
    seed: int,
    dims: tuple[int, int],
    strength: float,
    nua: NuaProfile | None = None,
    camera_id: Optional[str] = None,
) -> SynthCamera:
    """Draw a camera's true sensitivity pattern deterministically from seed."""
    width, height = int(dims[0]), int(dims[1])
    if width < 64 or height < 64:
        raise SizeError(f"camera dims {width}x{height} below 64x64")
    if strength < 0:
        raise ConfigError("strength must be >= 0")
    nua = nua or NuaProfile()
    if width % nua.binning or height % nua.binning:
        raise ConfigError(
            f"binning factor {nua.binning} does not divide dims {width}x{height}"
        )
    rng = derived_rng("camera", seed)
    k = rng.standard_normal((height, width))
    k -= k.mean()
    k /= k.std()
    return SynthCamera(
        camera_id=camera_id or f"cam{seed:08d}",
        dims=(width, height),
        k_true=k,
        strength=float(strength),
        nua=nua,
        seed=int(seed),
    )


def shared_pattern(token: str, dims: tuple[int, int]) -> np.ndarray:
    """The additive processing pattern for one token: band-limited noise,
    zero-mean, unit-std, identical for every camera holding the token."""
    width, height = dims
    rng = derived_rng("shared-pattern", token, width, height)
    noise = rng.standard_normal((height, width))
    pattern = gaussian_filter(noise, sigma=_PATTERN_SIGMA, mode="wrap")
    pattern -= pattern.mean()
    pattern /= pattern.std()
    return pattern


def _apply_binning(raw: np.ndarray, factor: int, kernel: str) -> np.ndarray:
    if factor == 1:
        return raw
    h, w = raw.shape
    binned = raw.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return cv2.resize(binned, (w, h), interpolation=_KERNELS[kernel]).astype(np.float64)


def jpeg_roundtrip(plane: np.ndarray, quality: int) -> np.ndarray:
    """Quantize to 8 bit, JPEG-encode at the given quality, decode back."""
    as_u8 = np.clip(np.rint(plane), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(as_u8, mode="L").save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    return np.asarray(Image.open(buf), dtype=np.float64)


def shoot(
    cam: SynthCamera,
    scene: ImagePlane,
    read_noise_std: float = 0.0,
    shot_index: int = 0,
) -> ImagePlane:
    """Produce one exposure of `scene` through the camera's full chain.

    Noise draws derive from (camera seed, camera id, shot index), so any
    shot can be regenerated independently of generation order.
    """
    if scene.shape != (cam.dims[1], cam.dims[0]):
        raise ShapeError(f"scene {scene.shape} does not match camera {cam.dims}")
    raw = scene.samples * (1.0 + cam.strength * cam.k_true)
    if read_noise_std > 0:
        rng = derived_rng("shot", cam.seed, cam.camera_id, shot_index)
        raw = raw + rng.normal(0.0, read_noise_std, raw.shape)
    raw = _apply_binning(raw, cam.nua.binning, cam.nua.kernel)
    if cam.nua.shared_pattern_id is not None and cam.nua.pattern_amplitude > 0:
        raw = raw + cam.nua.pattern_amplitude * shared_pattern(
            cam.nua.shared_pattern_id, cam.dims
        )
    if cam.nua.jpeg_quality is not None:
        raw = jpeg_roundtrip(raw, cam.nua.jpeg_quality)
    return ImagePlane.from_array(np.clip(raw, 0.0, 255.0))


# --- scene generation -------------------------------------------------------

SCENE_KINDS = ("flat", "gradient", "texture", "mixed")


def make_scene(kind: str, dims: tuple[int, int], rng: np.random.Generator) -> ImagePlane:
    """Seeded content: flat fields for clean estimation, gradients and
    smoothed-noise textures for content-leakage stress."""
    width, height = dims
    if kind == "mixed":
        kind = ("flat", "gradient", "texture")[int(rng.integers(0, 3))]
    if kind == "flat":
        level = float(rng.uniform(90.0, 180.0))
        plane = np.full((height, width), level)
    elif kind == "gradient":
        lo, hi = sorted(rng.uniform(30.0, 225.0, 2))
        angle = float(rng.uniform(0, 2 * np.pi))
        yy, xx = np.mgrid[0:height, 0:width]
        ramp = np.cos(angle) * xx / max(width - 1, 1) + np.sin(angle) * yy / max(height - 1, 1)
        ramp = (ramp - ramp.min()) / max(ramp.ptp(), 1e-12)
        plane = lo + ramp * (hi - lo)
    elif kind == "texture":
        base = rng.standard_normal((height, width))
        smooth = gaussian_filter(base, sigma=float(rng.uniform(2.0, 6.0)), mode="reflect")
        smooth = (smooth - smooth.mean()) / max(smooth.std(), 1e-12)
        mid = float(rng.uniform(100.0, 160.0))
        contrast = float(rng.uniform(20.0, 45.0))
        plane = mid + contrast * smooth
    else:
        raise ConfigError(f"unknown scene kind {kind!r}")
    return ImagePlane.from_array(np.clip(plane, 0.0, 255.0))


# --- scenario building ------------------------------------------------------


@dataclass
class UserSpec:
    """One simulated user; camera_seed may be shared to model two accounts
    photographing with the same physical device."""

    user_id: str
    camera_seed: Optional[int] = None
    nua: Optional[NuaProfile] = None


@dataclass
class ScenarioSpec:
    """Declarative description of a synthetic dataset."""

    name: str = "scenario"
    make: str = "SynthWorks"
    model: str = "SynthCam Z1"
    dims: tuple[int, int] = (512, 512)
    strength: float = 0.05
    read_noise_std: float = 2.0
    n_users: int = 2
    n_reference: int = 30
    n_test: int = 10
    reference_scene: str = "flat"
    test_scene: str = "mixed"
    nua: NuaProfile = field(default_factory=NuaProfile)
    seed: int = 0
    focal_length: float = 4.25
    users: Optional[list[UserSpec]] = None

    def __post_init__(self):
        errors = []
        if self.dims[0] < 64 or self.dims[1] < 64:
            errors.append(f"dims {self.dims} below 64x64")
        if self.n_reference < 1:
            errors.append("n_reference must be >= 1")
        if self.n_test < 0:
            errors.append("n_test must be >= 0")
        if self.users is None and self.n_users < 1:
            errors.append("n_users must be >= 1")
        if self.reference_scene not in SCENE_KINDS:
            errors.append(f"unknown reference_scene {self.reference_scene!r}")
        if self.test_scene not in SCENE_KINDS:
            errors.append(f"unknown test_scene {self.test_scene!r}")
        if errors:
            raise ConfigError(errors)

    def resolved_users(self) -> list[UserSpec]:
        if self.users is not None:
            return self.users
        return [UserSpec(user_id=f"user{i:03d}") for i in range(1, self.n_users + 1)]

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "make": self.make,
            "model": self.model,
            "dims": list(self.dims),
            "strength": self.strength,
            "read_noise_std": self.read_noise_std,
            "n_users": self.n_users,
            "n_reference": self.n_reference,
            "n_test": self.n_test,
            "reference_scene": self.reference_scene,
            "test_scene": self.test_scene,
            "nua": self.nua.to_dict(),
            "seed": self.seed,
            "focal_length": self.focal_length,
        }
        if self.users is not None:
            d["users"] = [
                {
                    "user_id": u.user_id,
                    "camera_seed": u.camera_seed,
                    "nua": u.nua.to_dict() if u.nua else None,
                }
                for u in self.users
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        users = None
        if d.get("users") is not None:
            users = [
                UserSpec(
                    user_id=u["user_id"],
                    camera_seed=u.get("camera_seed"),
                    nua=NuaProfile.from_dict(u["nua"]) if u.get("nua") else None,
                )
                for u in d["users"]
            ]
        known = {
            "name", "make", "model", "dims", "strength", "read_noise_std",
            "n_users", "n_reference", "n_test", "reference_scene", "test_scene",
            "nua", "seed", "focal_length", "users",
        }
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"unknown scenario field {k!r}" for k in unknown])
        return cls(
            name=d.get("name", "scenario"),
            make=d.get("make", "SynthWorks"),
            model=d.get("model", "SynthCam Z1"),
            dims=tuple(d.get("dims", (512, 512))),
            strength=float(d.get("strength", 0.05)),
            read_noise_std=float(d.get("read_noise_std", 2.0)),
            n_users=int(d.get("n_users", 2)),
            n_reference=int(d.get("n_reference", 30)),
            n_test=int(d.get("n_test", 10)),
            reference_scene=d.get("reference_scene", "flat"),
            test_scene=d.get("test_scene", "mixed"),
            nua=NuaProfile.from_dict(d.get("nua", {})),
            seed=int(d.get("seed", 0)),
            focal_length=float(d.get("focal_length", 4.25)),
            users=users,
        )


def _scenario_exif(spec: ScenarioSpec) -> Image.Exif:
    exif = Image.Exif()
    exif[271] = spec.make
    exif[272] = spec.model
    sub = exif.get_ifd(0x8769)
    sub[37386] = spec.focal_length
    sub[41988] = 1.0
    return exif


def _save_shot(plane: ImagePlane, path: str, exif: Image.Exif, quality: Optional[int]):
    as_u8 = np.clip(np.rint(plane.samples), 0, 255).astype(np.uint8)
    img = Image.fromarray(as_u8, mode="L")
    if quality is None:
        img.save(path, format="PNG", exif=exif)
    else:
        img.save(path, format="JPEG", quality=int(quality), exif=exif)


def build_scenario(spec: ScenarioSpec, out_dir: str) -> dict:
    """Materialize a scenario on disk.

    Writes one image file per shot (JPEG at the profile quality, or PNG
    when lossless), a curation-style manifest.csv, a campaign-ready
    unit.json, and ground_truth.json recording camera assignment.
    Returns a summary dict with those paths.

    Compression happens exactly once, at file write, so the in-memory
    chain is run with the JPEG stage disabled here.
    """
    os.makedirs(out_dir, exist_ok=True)
    users = spec.resolved_users()
    seen = set()
    for u in users:
        if u.user_id in seen:
            raise ConfigError(f"duplicate user id {u.user_id!r}")
        seen.add(u.user_id)

    manifest_rows = []
    unit_users = []
    truth_users = {}
    for index, user in enumerate(sorted(users, key=lambda u: u.user_id)):
        nua = user.nua or spec.nua
        quality = nua.jpeg_quality
        shoot_nua = NuaProfile(
            binning=nua.binning,
            kernel=nua.kernel,
            jpeg_quality=None,
            shared_pattern_id=nua.shared_pattern_id,
            pattern_amplitude=nua.pattern_amplitude,
        )
        cam_seed = user.camera_seed
        if cam_seed is None:
            cam_seed = _digest_int("scenario-camera", spec.seed, user.user_id)
        cam = make_camera(
            cam_seed, spec.dims, spec.strength, shoot_nua,
            camera_id=f"{spec.name}:{user.user_id}",
        )
        user_dir = os.path.join(out_dir, user.user_id)
        os.makedirs(user_dir, exist_ok=True)
        exif = _scenario_exif(spec)
        ext = "png" if quality is None else "jpg"
        reference_paths, test_paths = [], []
        shots = [("ref", i, spec.reference_scene) for i in range(spec.n_reference)]
        shots += [("test", i, spec.test_scene) for i in range(spec.n_test)]
        for role, i, scene_kind in shots:
            scene_rng = derived_rng("scene", spec.seed, user.user_id, role, i)
            scene = make_scene(scene_kind, spec.dims, scene_rng)
            plane = shoot(cam, scene, spec.read_noise_std, shot_index=_digest_int(role, i))
            path = os.path.join(user_dir, f"{role}_{i:04d}.{ext}")
            _save_shot(plane, path, exif, quality)
            (reference_paths if role == "ref" else test_paths).append(path)
            manifest_rows.append((user.user_id, path))
        unit_users.append({
            "user_id": user.user_id,
            "reference": reference_paths,
            "test": test_paths,
        })
        truth_users[user.user_id] = {
            "camera_id": cam.camera_id,
            "camera_seed": cam_seed,
            "nua": nua.to_dict(),
        }

    manifest_path = os.path.join(out_dir, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("user_id,image_path\n")
        for user_id, path in manifest_rows:
            fh.write(f"{user_id},{path}\n")

    unit_path = os.path.join(out_dir, "unit.json")
    unit = {
        "model": spec.model,
        "resolution": list(spec.dims),
        "users": unit_users,
    }
    with open(unit_path, "w", encoding="utf-8") as fh:
        json.dump(unit, fh, indent=2)

    truth_path = os.path.join(out_dir, "ground_truth.json")
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump({
            "scenario": spec.to_dict(),
            "users": truth_users,
        }, fh, indent=2)

    return {
        "out_dir": out_dir,
        "manifest": manifest_path,
        "unit": unit_path,
        "ground_truth": truth_path,
        "n_images": len(manifest_rows),
    }
