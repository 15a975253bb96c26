"""Dataset curation: metadata filtering, focal-length mode filter, and the
reference/test split that turns a pile of per-user images into
protocol-ready inputs."""

from __future__ import annotations

import hashlib
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Optional

from .errors import ConfigError, InsufficientReferenceError
from .raster import ExifRecord

logger = logging.getLogger(__name__)

REJECT_MISSING_MAKE_MODEL = "missing-make-model"
REJECT_MODEL_MISMATCH = "model-mismatch"
REJECT_WRONG_RESOLUTION = "wrong-resolution"
REJECT_SOFTWARE = "software-blacklisted"
REJECT_FOCAL_MODE = "focal-length-mode"

BLACKLIST_ENV_VAR = "PRNULAB_BLACKLIST"


def load_blacklist(path: Optional[str] = None) -> tuple[str, ...]:
    """Load software patterns: explicit path, else $PRNULAB_BLACKLIST,
    else the packaged default list."""
    path = path or os.environ.get(BLACKLIST_ENV_VAR)
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"blacklist file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = resources.files("prnulab.data").joinpath("blacklist.txt").read_text("utf-8")
    patterns = tuple(
        line.strip() for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    )
    if not patterns:
        raise ConfigError("software blacklist is empty")
    return patterns


def blacklist_digest(patterns: Iterable[str]) -> str:
    blob = "\n".join(patterns).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CurationRules:
    """The per-device filtering contract.

    max_resolution is the (width, height) the device produces at full
    size; orientation swaps are accepted. Software patterns match
    case-insensitively as substrings.
    """

    expected_make: str
    expected_model: str
    max_resolution: tuple[int, int]
    software_blacklist: tuple[str, ...] = ()
    reference_min: int = 20
    reference_max: int = 35

    def __post_init__(self):
        self.max_resolution = (int(self.max_resolution[0]), int(self.max_resolution[1]))
        if self.reference_min > self.reference_max:
            raise ConfigError(
                f"reference_min {self.reference_min} > reference_max {self.reference_max}"
            )
        if not self.software_blacklist:
            self.software_blacklist = load_blacklist()

    def to_dict(self) -> dict:
        return {
            "expected_make": self.expected_make,
            "expected_model": self.expected_model,
            "max_resolution": list(self.max_resolution),
            "blacklist_digest": blacklist_digest(self.software_blacklist),
            "reference_min": self.reference_min,
            "reference_max": self.reference_max,
        }


@dataclass
class UserImageSet:
    """Curation outcome for one user: the reference/test partition plus
    every discard with its reason."""

    user_id: str
    reference: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)
    discarded: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "reference": list(self.reference),
            "test": list(self.test),
            "discarded": [list(item) for item in self.discarded],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserImageSet":
        return cls(
            user_id=d["user_id"],
            reference=list(d.get("reference", [])),
            test=list(d.get("test", [])),
            discarded=[tuple(item) for item in d.get("discarded", [])],
        )


def _norm(text: Optional[str]) -> str:
    return (text or "").strip().casefold()


def filter_image(rec: ExifRecord, rules: CurationRules) -> Optional[str]:
    """Classify one record against the metadata rules.

    Returns None on accept, otherwise the reject reason. Resolution is
    compared against max_resolution allowing a width/height swap.
    """
    if not rec.make or not rec.model:
        return REJECT_MISSING_MAKE_MODEL
    if _norm(rec.make) != _norm(rules.expected_make) or _norm(rec.model) != _norm(
        rules.expected_model
    ):
        return REJECT_MODEL_MISMATCH
    dims = tuple(rec.pixel_dims)
    expected = rules.max_resolution
    if dims != expected and dims != (expected[1], expected[0]):
        return REJECT_WRONG_RESOLUTION
    if rec.software:
        software = rec.software.casefold()
        for pattern in rules.software_blacklist:
            if pattern.casefold() in software:
                return REJECT_SOFTWARE
    return None


@dataclass
class FocalFilterResult:
    kept: list[tuple[str, ExifRecord]]
    dropped: list[tuple[str, ExifRecord]]
    mode_focal: Optional[float]
    tie: tuple[float, ...] = ()


def focal_mode_filter(images: list[tuple[str, ExifRecord]]) -> FocalFilterResult:
    """Keep only images whose focal length equals the modal value.

    Images without a focal tag survive only when no focal values exist at
    all. A tie between modal groups keeps the group with the smallest
    focal value and reports the tied values.
    """
    if not images:
        raise ValueError("focal filter requires a non-empty image list")
    focals = [rec.focal_length for _, rec in images if rec.focal_length is not None]
    if not focals:
        return FocalFilterResult(kept=list(images), dropped=[], mode_focal=None)
    counts = Counter(focals)
    top = max(counts.values())
    tied = sorted(f for f, c in counts.items() if c == top)
    mode = tied[0]
    tie = tuple(tied) if len(tied) > 1 else ()
    if tie:
        logger.warning("focal mode tie between %s; keeping %s", tied, mode)
    kept, dropped = [], []
    for item in images:
        if item[1].focal_length == mode:
            kept.append(item)
        else:
            dropped.append(item)
    return FocalFilterResult(kept=kept, dropped=dropped, mode_focal=mode, tie=tie)


def _zoom_eligible(rec: ExifRecord) -> bool:
    return rec.digital_zoom is None or rec.digital_zoom == 1.0


def split_reference_test(
    images: list[tuple[str, ExifRecord]], rules: CurationRules, user_id: str = ""
) -> UserImageSet:
    """Partition already-filtered images into reference and test sets.

    Reference images are zoom-free, chosen in stable lexicographic id
    order up to reference_max; everything else is a test image. Fewer
    than reference_min eligible images is a per-user curation failure.
    """
    ordered = sorted(images, key=lambda item: item[0])
    eligible = [item for item in ordered if _zoom_eligible(item[1])]
    if len(eligible) < rules.reference_min:
        raise InsufficientReferenceError(user_id, len(eligible), rules.reference_min)
    reference_ids = {item[0] for item in eligible[: rules.reference_max]}
    result = UserImageSet(user_id=user_id)
    for image_id, _ in ordered:
        if image_id in reference_ids:
            result.reference.append(image_id)
        else:
            result.test.append(image_id)
    return result


def curate_user(
    user_id: str, images: list[tuple[str, ExifRecord]], rules: CurationRules
) -> UserImageSet:
    """Full per-user pipeline: metadata rules, focal mode, then the split."""
    surviving = []
    discarded: list[tuple[str, str]] = []
    for image_id, rec in sorted(images, key=lambda item: item[0]):
        reason = filter_image(rec, rules)
        if reason is None:
            surviving.append((image_id, rec))
        else:
            discarded.append((image_id, reason))
    if not surviving:
        raise InsufficientReferenceError(user_id, 0, rules.reference_min)
    focal = focal_mode_filter(surviving)
    discarded.extend((image_id, REJECT_FOCAL_MODE) for image_id, _ in focal.dropped)
    result = split_reference_test(focal.kept, rules, user_id=user_id)
    result.discarded = discarded
    return result
