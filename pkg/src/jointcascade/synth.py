"""Synthetic face-like data with correlated activations and deformations.

Each sample is a line-drawing face rendered from a fixed 28-landmark
template: brows, eye rings, nose, and a mouth ring, plus a decorative face
outline.  A sample's active labels displace the landmarks along
per-label deformation directions (an orthonormal basis scaled to
``deform_magnitude``) and add a small localized stroke ("mark") near a
label-specific landmark, so labels are observable both through shape and
through appearance.  Labels are drawn from a pairwise binary model with
configurable couplings, sampled exactly by enumeration.

Dataset-level structure (label fields, deformation directions, mark
geometry) is drawn from a fixed internal seed, so two datasets generated
with different ``seed`` values are disjoint sample draws from the *same*
distribution — generate a training set and a test set with two seeds and
they remain mutually consistent.  Per-sample randomness is keyed by
``(seed, stream, sample index)``, so sample ``i`` is reproducible in
isolation and datasets are byte-identical across runs for the same config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import FaceBox, FaceShape, Frame, Sample
from .rbm import all_label_vectors
from .seeding import (
    STREAM_DEFORM,
    STREAM_FIELDS,
    STREAM_MARKS,
    STREAM_SAMPLE,
    rng_stream,
)

# Landmark template in canonical units (x right, y down, origin mid-face):
# 0-2 right brow, 3-5 left brow, 6-9 right eye ring, 10-13 left eye ring,
# 14-17 nose (bridge, tip, nostrils), 18-27 mouth ring.
TEMPLATE = np.array(
    [
        [-0.26, -0.22], [-0.18, -0.25], [-0.10, -0.22],
        [0.10, -0.22], [0.18, -0.25], [0.26, -0.22],
        [-0.28, -0.12], [-0.19, -0.145], [-0.10, -0.12], [-0.19, -0.095],
        [0.10, -0.12], [0.19, -0.145], [0.28, -0.12], [0.19, -0.095],
        [0.00, -0.02], [0.00, 0.10], [-0.07, 0.13], [0.07, 0.13],
        [-0.16, 0.24], [-0.08, 0.205], [0.00, 0.195], [0.08, 0.205],
        [0.16, 0.24], [0.11, 0.28], [0.05, 0.30], [0.00, 0.305],
        [-0.05, 0.30], [-0.11, 0.28],
    ]
)
TEMPLATE.setflags(write=False)

N_LANDMARKS = TEMPLATE.shape[0]

# Outer eye corners, used for the interocular normalization downstream.
EYE_INDICES = (6, 12)

# Polylines rendered as strokes.
EDGE_PATHS = (
    (0, 1, 2), (3, 4, 5),
    (6, 7, 8, 9, 6), (10, 11, 12, 13, 10),
    (14, 15), (16, 17),
    (18, 19, 20, 21, 22), (22, 23, 24, 25, 26, 27, 18),
)

# Decorative face-boundary ellipse (canonical semi-axes).
OUTLINE_AXES = (0.40, 0.48)

# Landmarks near which each label's appearance mark is placed (cyclic).
MARK_ANCHORS = (1, 4, 19, 21, 9, 13, 15, 25, 0, 5, 7, 11, 16, 17, 23, 27)

BACKGROUND = 0.85
STROKE_AMP = 0.10
OUTLINE_AMP = 0.08
MARK_CONTRAST = (0.17, 0.27)
PIXEL_NOISE = 0.30

# Pose ranges (per sample): face scale fraction of the image, rotation in
# degrees, center offset fraction of the image.  Rotation is kept small so
# the canonical frame (which does not undo rotation) stays well aligned
# with the shape distribution; difficulty comes from pixel noise instead.
POSE_SCALE = (0.42, 0.58)
POSE_ROTATION_DEG = 1.0
POSE_SHIFT = 0.04

BOX_INFLATE = 0.2

# Seed for dataset-level structure (fields, deformations, marks).  Kept
# independent of ``SynthConfig.seed`` so datasets generated with different
# seeds share one distribution and can serve as train/test splits.
WORLD_SEED = 7


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``au_pair_coupling`` is a tuple of ``(i, j, strength)`` triples; None
    selects a default pattern pairing consecutive labels with strengths
    cycling 3.0 / 2.5 / 2.0 (strongly correlated pairs), and an empty
    tuple gives independent labels.
    """

    n_samples: int
    n_aus: int = 8
    d_landmarks: int = 28
    image_size: int = 128
    shape_noise: float = 0.01
    au_pair_coupling: tuple | None = None
    deform_magnitude: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not (1 <= self.n_aus <= 20):
            raise ValueError("n_aus must be in [1, 20] (labels are enumerated)")
        if self.d_landmarks != N_LANDMARKS:
            raise ValueError(
                f"the template has {N_LANDMARKS} landmarks; "
                f"d_landmarks={self.d_landmarks} is not supported"
            )
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if self.shape_noise < 0 or self.deform_magnitude < 0:
            raise ValueError("noise and deformation magnitudes must be >= 0")
        if self.au_pair_coupling is not None:
            seen = set()
            for entry in self.au_pair_coupling:
                if len(entry) != 3:
                    raise ValueError("couplings are (i, j, strength) triples")
                i, j, s = int(entry[0]), int(entry[1]), float(entry[2])
                if not (0 <= i < self.n_aus and 0 <= j < self.n_aus) or i == j:
                    raise ValueError(f"bad coupling pair ({i}, {j})")
                if not np.isfinite(s):
                    raise ValueError("coupling strength must be finite")
                key = (min(i, j), max(i, j))
                if key in seen:
                    raise ValueError(f"duplicate coupling pair {key}")
                seen.add(key)
            object.__setattr__(
                self,
                "au_pair_coupling",
                tuple(
                    (int(i), int(j), float(s))
                    for i, j, s in self.au_pair_coupling
                ),
            )


def default_couplings(n_aus: int) -> tuple:
    """Pair labels (0,1), (2,3), ... with strengths cycling 3.0/2.5/2.0."""
    strengths = (3.0, 2.5, 2.0)
    return tuple(
        (2 * k, 2 * k + 1, strengths[k % 3]) for k in range(n_aus // 2)
    )


def resolved_couplings(cfg: SynthConfig) -> tuple:
    if cfg.au_pair_coupling is None:
        return default_couplings(cfg.n_aus)
    return cfg.au_pair_coupling


def label_fields(cfg: SynthConfig) -> np.ndarray:
    """Per-label base fields, compensated so couplings keep marginals sane.

    Fields are drawn negative (labels individually uncommon); each coupling
    subtracts half its strength from both endpoints so that switching a
    coupling on changes co-occurrence, not overall activation rates.
    """
    rng = rng_stream(WORLD_SEED, STREAM_FIELDS)
    fields = rng.uniform(-1.1, -0.3, size=cfg.n_aus)
    for i, j, s in resolved_couplings(cfg):
        fields[i] -= 0.5 * s
        fields[j] -= 0.5 * s
    return fields


def ising_distribution(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Exact label distribution: (all label vectors, their probabilities)."""
    combos = all_label_vectors(cfg.n_aus)
    score = combos @ label_fields(cfg)
    for i, j, s in resolved_couplings(cfg):
        score = score + s * combos[:, i] * combos[:, j]
    score -= score.max()
    p = np.exp(score)
    return combos, p / p.sum()


def au_deformations(cfg: SynthConfig) -> np.ndarray:
    """Per-label shape displacement directions, rows of an (N, 2D) matrix.

    Directions are orthonormal (QR of a seeded Gaussian matrix) scaled to
    ``deform_magnitude``, so distinct labels move the shape along
    non-redundant directions of equal size.
    """
    rng = rng_stream(WORLD_SEED, STREAM_DEFORM)
    raw = rng.standard_normal((2 * N_LANDMARKS, cfg.n_aus))
    q, r = np.linalg.qr(raw)
    q = q * np.sign(np.diag(r))
    return (q * cfg.deform_magnitude).T


def au_marks(cfg: SynthConfig) -> list[dict]:
    """Geometry of each label's appearance mark (canonical units)."""
    rng = rng_stream(WORLD_SEED, STREAM_MARKS)
    marks = []
    for i in range(cfg.n_aus):
        anchor = MARK_ANCHORS[i % len(MARK_ANCHORS)]
        off_angle = rng.uniform(0.0, 2.0 * np.pi)
        off_dist = rng.uniform(0.02, 0.045)
        direction = rng.uniform(0.0, 2.0 * np.pi)
        length = rng.uniform(0.06, 0.11)
        contrast = rng.uniform(*MARK_CONTRAST)
        marks.append(
            {
                "anchor": anchor,
                "offset": off_dist
                * np.array([np.cos(off_angle), np.sin(off_angle)]),
                "direction": np.array(
                    [np.cos(direction), np.sin(direction)]
                ),
                "length": length,
                "contrast": contrast,
            }
        )
    return marks


def _draw_segment(img, p0, p1, sigma, amp):
    """Subtract a Gaussian-profile stroke between two pixel points."""
    h, w = img.shape
    pad = 3.0 * sigma + 1.0
    x0, y0 = p0
    x1, y1 = p1
    xmin = max(0, int(np.floor(min(x0, x1) - pad)))
    xmax = min(w - 1, int(np.ceil(max(x0, x1) + pad)))
    ymin = max(0, int(np.floor(min(y0, y1) - pad)))
    ymax = min(h - 1, int(np.ceil(max(y0, y1) + pad)))
    if xmin > xmax or ymin > ymax:
        return
    xs = np.arange(xmin, xmax + 1)[None, :]
    ys = np.arange(ymin, ymax + 1)[:, None]
    dx = x1 - x0
    dy = y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        qx = xs - x0
        qy = ys - y0
        d2 = qx * qx + qy * qy
    else:
        t = ((xs - x0) * dx + (ys - y0) * dy) / seg2
        np.clip(t, 0.0, 1.0, out=t)
        qx = x0 + t * dx - xs
        qy = y0 + t * dy - ys
        d2 = qx * qx + qy * qy
    img[ymin : ymax + 1, xmin : xmax + 1] -= amp * np.exp(
        -d2 / (2.0 * sigma * sigma)
    )


def _draw_polyline(img, pts, sigma, amp):
    for a, b in zip(pts[:-1], pts[1:]):
        _draw_segment(img, a, b, sigma, amp)


def _render(cfg, landmarks_px, labels, rot, scale, center, marks, rng):
    size = cfg.image_size
    img = np.full((size, size), BACKGROUND)
    sigma = max(0.9, 0.02 * scale)

    angles = np.linspace(0.0, 2.0 * np.pi, 41)
    ring = np.stack(
        [OUTLINE_AXES[0] * np.cos(angles), OUTLINE_AXES[1] * np.sin(angles)],
        axis=1,
    )
    ring = ring @ rot.T * scale + center
    _draw_polyline(img, ring, sigma, OUTLINE_AMP)

    for path in EDGE_PATHS:
        _draw_polyline(img, landmarks_px[list(path)], sigma, STROKE_AMP)

    for i, mark in enumerate(marks):
        if labels[i] != 1:
            continue
        pos = landmarks_px[mark["anchor"]] + rot @ mark["offset"] * scale
        half = 0.5 * mark["length"] * scale * (rot @ mark["direction"])
        _draw_segment(
            img,
            pos - half,
            pos + half,
            max(0.8, 0.016 * scale),
            mark["contrast"],
        )

    img += rng.normal(0.0, PIXEL_NOISE, size=img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    # Snap to the 8-bit grid so in-memory samples match written PGM files.
    return np.round(img * 255.0) / 255.0


def _tight_box(pts: np.ndarray) -> FaceBox:
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    w = (xmax - xmin) * (1.0 + BOX_INFLATE)
    h = (ymax - ymin) * (1.0 + BOX_INFLATE)
    cx = 0.5 * (xmin + xmax)
    cy = 0.5 * (ymin + ymax)
    return FaceBox(left=cx - 0.5 * w, top=cy - 0.5 * h, width=w, height=h)


def generate(cfg: SynthConfig) -> list[Sample]:
    """Generate ``cfg.n_samples`` annotated samples."""
    combos, probs = ising_distribution(cfg)
    cum = np.cumsum(probs)
    basis = au_deformations(cfg)
    marks = au_marks(cfg)

    samples = []
    for idx in range(cfg.n_samples):
        rng = rng_stream(cfg.seed, STREAM_SAMPLE, idx)
        u = rng.random()
        row = min(int(np.searchsorted(cum, u, side="right")), combos.shape[0] - 1)
        labels = combos[row].astype(np.int64)

        canon = (
            TEMPLATE
            + (labels @ basis).reshape(-1, 2)
            + rng.standard_normal((N_LANDMARKS, 2)) * cfg.shape_noise
        )
        scale = cfg.image_size * rng.uniform(*POSE_SCALE)
        theta = np.deg2rad(rng.uniform(-POSE_ROTATION_DEG, POSE_ROTATION_DEG))
        center = 0.5 * cfg.image_size + rng.uniform(
            -POSE_SHIFT, POSE_SHIFT, size=2
        ) * cfg.image_size
        rot = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        pts = canon @ rot.T * scale + center

        img = _render(cfg, pts, labels, rot, scale, center, marks, rng)
        samples.append(
            Sample(
                image=img,
                box=_tight_box(pts),
                gt_shape=FaceShape(pts, Frame.IMAGE_PIXELS),
                labels=labels,
            )
        )
    return samples


def dataset_meta(cfg: SynthConfig) -> dict:
    """Manifest echo of the generator configuration."""
    couplings = resolved_couplings(cfg)
    coupling_str = (
        ",".join(f"{i}:{j}:{s}" for i, j, s in couplings) if couplings else "-"
    )
    return {
        "n_aus": cfg.n_aus,
        "d_landmarks": cfg.d_landmarks,
        "image_size": cfg.image_size,
        "eye_indices": EYE_INDICES,
        "seed": cfg.seed,
        "shape_noise": cfg.shape_noise,
        "deform_magnitude": cfg.deform_magnitude,
        "coupling": coupling_str,
    }
