"""Gradient-orientation patch descriptors sampled around landmarks.

Each landmark gets a grid_cells x grid_cells spatial histogram of gradient
orientations (orientation_bins bins per cell) accumulated over a square
window whose half-width is ``radius`` pixels.  Contributions are
Gaussian-weighted (sigma = radius / 2) and soft-assigned bilinearly to
neighboring cells and linearly to neighboring orientation bins.  The
histogram is L2-normalized, clipped, and renormalized; windows with no
gradient energy yield the zero vector.

The sampling lattice is anchored at the nearest integer pixel of the
landmark, so integer translations of image and landmark together shift the
window exactly and leave the descriptor unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import FaceBox, FaceShape, Frame


@dataclass(frozen=True)
class DescriptorConfig:
    """Patch descriptor geometry.

    radius_fraction: window half-width as a fraction of the face-box size.
    grid_cells: cells per side of the spatial grid.
    orientation_bins: orientation histogram bins per cell.
    clip_threshold: per-component clip applied after the first L2 norm.
    """

    radius_fraction: float = 0.166
    grid_cells: int = 4
    orientation_bins: int = 8
    clip_threshold: float = 0.2

    def __post_init__(self):
        if not (0 < self.radius_fraction <= 1):
            raise ValueError("radius_fraction must be in (0, 1]")
        if self.grid_cells < 1:
            raise ValueError("grid_cells must be >= 1")
        if self.orientation_bins < 2:
            raise ValueError("orientation_bins must be >= 2")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")

    @property
    def length(self) -> int:
        """Descriptor length per landmark."""
        return self.grid_cells * self.grid_cells * self.orientation_bins


def gradient_maps(image) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient magnitude and orientation maps.

    The image is replicate-padded so border pixels use one-sided context;
    orientation is in [0, 2*pi) with zero-gradient pixels mapped to 0.
    """
    img = np.ascontiguousarray(image, dtype=np.float64)
    padded = np.pad(img, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ori = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    return mag, ori


@njit(cache=True)
def _descriptor_kernel(mag, ori, centers, radius, grid, bins, clip, out):  # pragma: no cover
    h, w = mag.shape
    n = int(np.floor(radius))
    span = 2 * n + 1
    two_pi = 2.0 * np.pi
    sigma = 0.5 * radius
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    bin_scale = bins / two_pi
    cell_scale = grid / (2.0 * radius)
    nfeat = grid * grid * bins
    wrow = np.empty(span)
    wcol = np.empty(span)
    hist = np.empty(nfeat)
    for li in range(centers.shape[0]):
        cx = centers[li, 0]
        cy = centers[li, 1]
        ax = int(np.floor(cx + 0.5))
        ay = int(np.floor(cy + 0.5))
        for i in range(span):
            u = (ax - n + i) - cx
            wcol[i] = np.exp(-u * u * inv2s2)
            v = (ay - n + i) - cy
            wrow[i] = np.exp(-v * v * inv2s2)
        for i in range(nfeat):
            hist[i] = 0.0
        for iy in range(span):
            yy = ay - n + iy
            py = yy
            if py < 0:
                py = 0
            elif py >= h:
                py = h - 1
            v = yy - cy
            cv = (v + radius) * cell_scale - 0.5
            fv = np.floor(cv)
            iv = int(fv)
            tv = cv - fv
            g_row = wrow[iy]
            for ix in range(span):
                xx = ax - n + ix
                px = xx
                if px < 0:
                    px = 0
                elif px >= w:
                    px = w - 1
                m = mag[py, px]
                if m == 0.0:
                    continue
                u = xx - cx
                cu = (u + radius) * cell_scale - 0.5
                fu = np.floor(cu)
                iu = int(fu)
                tu = cu - fu
                ob = ori[py, px] * bin_scale
                fo = np.floor(ob)
                b0 = int(fo)
                to = ob - fo
                if b0 >= bins:
                    b0 = bins - 1
                    to = 1.0
                b1 = b0 + 1
                if b1 == bins:
                    b1 = 0
                base = m * g_row * wcol[ix]
                for dv in range(2):
                    rv = iv + dv
                    if rv < 0 or rv >= grid:
                        continue
                    wv = base * (tv if dv == 1 else 1.0 - tv)
                    for du in range(2):
                        ru = iu + du
                        if ru < 0 or ru >= grid:
                            continue
                        wu = wv * (tu if du == 1 else 1.0 - tu)
                        cell = (rv * grid + ru) * bins
                        hist[cell + b0] += wu * (1.0 - to)
                        hist[cell + b1] += wu * to
        norm = 0.0
        for i in range(nfeat):
            norm += hist[i] * hist[i]
        if norm <= 0.0:
            for i in range(nfeat):
                out[li, i] = 0.0
            continue
        norm = np.sqrt(norm)
        norm2 = 0.0
        for i in range(nfeat):
            val = hist[i] / norm
            if val > clip:
                val = clip
            hist[i] = val
            norm2 += val * val
        norm2 = np.sqrt(norm2)
        for i in range(nfeat):
            out[li, i] = hist[i] / norm2


def descriptors_at(
    mag: np.ndarray,
    ori: np.ndarray,
    centers: np.ndarray,
    radius: float,
    cfg: DescriptorConfig,
) -> np.ndarray:
    """Descriptors for many window centers over precomputed gradient maps.

    This is the hot path: ``centers`` is (L, 2) pixel coordinates and the
    result is (L, cfg.length).
    """
    if radius <= 0 or not np.isfinite(radius):
        raise ValueError("descriptor radius must be positive and finite")
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[1] != 2:
        raise ValueError("centers must be (L, 2)")
    if not np.all(np.isfinite(centers)):
        raise ValueError("descriptor centers must be finite")
    out = np.empty((centers.shape[0], cfg.length))
    _descriptor_kernel(
        mag,
        ori,
        centers,
        float(radius),
        cfg.grid_cells,
        cfg.orientation_bins,
        cfg.clip_threshold,
        out,
    )
    return out


def extract_descriptor(image, center, radius: float, cfg: DescriptorConfig) -> np.ndarray:
    """Descriptor of the window of half-width ``radius`` centered at ``center``."""
    mag, ori = gradient_maps(image)
    centers = np.asarray([center], dtype=np.float64)
    return descriptors_at(mag, ori, centers, radius, cfg)[0]


def stacked_features(
    image, shape: FaceShape, box: FaceBox, cfg: DescriptorConfig
) -> np.ndarray:
    """Concatenated per-landmark descriptors plus a trailing bias term.

    The window radius is ``cfg.radius_fraction`` times the face-box size, so
    the feature is invariant to face scale.  Length is
    ``shape.n_points * cfg.length + 1``.
    """
    if shape.frame is not Frame.IMAGE_PIXELS:
        raise ValueError("stacked_features expects a pixel-frame shape")
    mag, ori = gradient_maps(image)
    radius = cfg.radius_fraction * box.size
    desc = descriptors_at(mag, ori, shape.points, radius, cfg)
    return np.concatenate([desc.reshape(-1), [1.0]])
