"""Core data model: face shapes, boxes, samples, and coordinate frames.

Landmark coordinates live in one of two frames:

* ``Frame.IMAGE_PIXELS`` — raw pixel coordinates, x right, y down.
* ``Frame.CANONICAL`` — face-box normalized: the box center maps to the
  origin and coordinates are divided by the box's larger side, so faces of
  different scale and position become comparable.

All model fitting happens in the canonical frame; pixels appear only at
image I/O and descriptor sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Canonical coordinates of a plausible face stay well inside the unit box;
# anything beyond this bound means a mismatched shape/box pair.
CANONICAL_BOUND = 4.0


class Frame(Enum):
    IMAGE_PIXELS = "image"
    CANONICAL = "canonical"


def _as_points(points) -> np.ndarray:
    pts = np.array(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected a (D, 2) point array, got shape {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError("shape needs at least one landmark")
    if not np.all(np.isfinite(pts)):
        raise ValueError("shape contains non-finite coordinates")
    return pts


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face rectangle in pixel coordinates."""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.left, self.top, self.width, self.height)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("face box has non-finite fields")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"face box needs positive size, got {self.width} x {self.height}"
            )

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + 0.5 * self.width, self.top + 0.5 * self.height)

    @property
    def size(self) -> float:
        """Scalar face size: the larger of the two box sides."""
        return float(max(self.width, self.height))


@dataclass(frozen=True)
class FaceShape:
    """Ordered set of 2-D landmarks tagged with the frame they live in."""

    points: np.ndarray
    frame: Frame

    def __post_init__(self):
        pts = _as_points(self.points)
        if self.frame is Frame.CANONICAL and np.max(np.abs(pts)) > CANONICAL_BOUND:
            raise ValueError(
                "canonical coordinates out of range; shape/box mismatch?"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def vector(self) -> np.ndarray:
        """Flat ``(x0, y0, x1, y1, ...)`` copy of the coordinates."""
        return self.points.reshape(-1).copy()

    @classmethod
    def from_vector(cls, vec, frame: Frame) -> "FaceShape":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or vec.size % 2 != 0:
            raise ValueError("shape vector must be 1-D with even length")
        return cls(vec.reshape(-1, 2), frame)


def to_canonical(shape: FaceShape, box: FaceBox) -> FaceShape:
    """Map a pixel-frame shape into the box-normalized canonical frame."""
    if shape.frame is not Frame.IMAGE_PIXELS:
        raise ValueError("to_canonical expects a pixel-frame shape")
    cx, cy = box.center
    pts = (shape.points - np.array([cx, cy])) / box.size
    return FaceShape(pts, Frame.CANONICAL)


def from_canonical(shape: FaceShape, box: FaceBox) -> FaceShape:
    """Inverse of :func:`to_canonical` for the same box."""
    if shape.frame is not Frame.CANONICAL:
        raise ValueError("from_canonical expects a canonical-frame shape")
    cx, cy = box.center
    pts = shape.points * box.size + np.array([cx, cy])
    return FaceShape(pts, Frame.IMAGE_PIXELS)


def mean_shape(shapes: list[FaceShape]) -> FaceShape:
    """Coordinate-wise mean of canonical shapes with equal landmark counts."""
    if len(shapes) == 0:
        raise ValueError("mean_shape of an empty list")
    d = shapes[0].n_points
    for s in shapes:
        if s.frame is not Frame.CANONICAL:
            raise ValueError("mean_shape expects canonical-frame shapes")
        if s.n_points != d:
            raise ValueError("mean_shape with mixed landmark counts")
    acc = np.zeros((d, 2))
    for s in shapes:
        acc += s.points
    return FaceShape(acc / len(shapes), Frame.CANONICAL)


def interocular_distance(shape: FaceShape, left_eye: int, right_eye: int) -> float:
    """Euclidean distance between the two outer eye-corner landmarks."""
    d = shape.n_points
    if not (0 <= left_eye < d and 0 <= right_eye < d):
        raise ValueError("eye index out of range")
    if left_eye == right_eye:
        raise ValueError("eye indices must be distinct")
    return float(np.linalg.norm(shape.points[left_eye] - shape.points[right_eye]))


def validate_image(image) -> np.ndarray:
    """Check a grayscale image array: 2-D, finite, intensities in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError(f"expected a non-empty (H, W) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite pixels")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return img


@dataclass(frozen=True)
class Sample:
    """One annotated face: image, face box, ground-truth shape and labels."""

    image: np.ndarray
    box: FaceBox
    gt_shape: FaceShape
    labels: np.ndarray

    def __post_init__(self):
        img = validate_image(self.image)
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        if self.gt_shape.frame is not Frame.IMAGE_PIXELS:
            raise ValueError("ground-truth shape must be in the pixel frame")
        h, w = img.shape
        pts = self.gt_shape.points
        if (
            pts[:, 0].min() < 0
            or pts[:, 1].min() < 0
            or pts[:, 0].max() > w - 1
            or pts[:, 1].max() > h - 1
        ):
            raise ValueError("ground-truth landmarks fall outside the image")
        lab = np.asarray(self.labels)
        if lab.ndim != 1 or lab.size == 0:
            raise ValueError("labels must be a non-empty 1-D array")
        if not np.all((lab == 0) | (lab == 1)):
            raise ValueError("labels must be binary")
        lab = lab.astype(np.int64)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def n_labels(self) -> int:
        return int(self.labels.size)
