"""File formats: landmark/label/box text files, 8-bit PGM images, datasets.

All text formats use shortest round-trip ``repr`` for reals, so writing and
re-reading a value is bit-exact and identical inputs produce byte-identical
files.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import FaceBox, FaceShape, Frame, Sample, validate_image


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# landmark / label / box text files


def write_pts(path, shape: FaceShape) -> None:
    """Landmark file: first line is the point count, then one "x y" per line."""
    if shape.frame is not Frame.IMAGE_PIXELS:
        raise ValueError("landmark files store pixel coordinates")
    lines = [str(shape.n_points)]
    for x, y in shape.points:
        lines.append(f"{_fmt(x)} {_fmt(y)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_pts(path) -> FaceShape:
    with open(path) as f:
        tokens = f.read().split()
    if not tokens:
        raise ValueError(f"{path}: empty landmark file")
    d = int(tokens[0])
    coords = tokens[1:]
    if len(coords) != 2 * d:
        raise ValueError(
            f"{path}: header says {d} points but found {len(coords) // 2}"
        )
    pts = np.array([float(t) for t in coords]).reshape(d, 2)
    return FaceShape(pts, Frame.IMAGE_PIXELS)


def write_labels(path, labels) -> None:
    """Label file: a single line of space-separated 0/1 values."""
    lab = np.asarray(labels)
    if not np.all((lab == 0) | (lab == 1)):
        raise ValueError("labels must be binary")
    with open(path, "w") as f:
        f.write(" ".join(str(int(v)) for v in lab) + "\n")


def read_labels(path) -> np.ndarray:
    with open(path) as f:
        tokens = f.read().split()
    if not tokens:
        raise ValueError(f"{path}: empty label file")
    vals = [int(t) for t in tokens]
    if any(v not in (0, 1) for v in vals):
        raise ValueError(f"{path}: labels must be 0/1")
    return np.array(vals, dtype=np.int64)


def write_probs(path, probs) -> None:
    """Probability file: a single line of space-separated reals in [0, 1]."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must be 1-D in [0, 1]")
    with open(path, "w") as f:
        f.write(" ".join(_fmt(v) for v in p) + "\n")


def read_probs(path) -> np.ndarray:
    with open(path) as f:
        tokens = f.read().split()
    if not tokens:
        raise ValueError(f"{path}: empty probability file")
    p = np.array([float(t) for t in tokens])
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{path}: probabilities out of [0, 1]")
    return p


def write_box(path, box: FaceBox) -> None:
    """Box file: one line "left top width height"."""
    with open(path, "w") as f:
        f.write(
            f"{_fmt(box.left)} {_fmt(box.top)} {_fmt(box.width)} {_fmt(box.height)}\n"
        )


def read_box(path) -> FaceBox:
    with open(path) as f:
        tokens = f.read().split()
    if len(tokens) != 4:
        raise ValueError(f"{path}: box file needs exactly 4 numbers")
    left, top, width, height = (float(t) for t in tokens)
    return FaceBox(left, top, width, height)


# ---------------------------------------------------------------------------
# PGM images


def write_pgm(path, image) -> None:
    """Write a [0, 1] grayscale image as binary 8-bit PGM (P5)."""
    img = validate_image(image)
    h, w = img.shape
    data = np.round(img * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM into a [0, 1] float image."""
    with open(path, "rb") as f:
        raw = f.read()
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PGM header")
        ch = raw[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    if pixels.size != w * h:
        raise ValueError(f"{path}: truncated PGM pixel data")
    return pixels.reshape(h, w).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# dataset directories


def sample_stem(index: int) -> str:
    return f"{index:04d}"


def write_dataset(out_dir, samples: list[Sample], meta: dict) -> None:
    """Write samples as ``NNNN.pgm/.pts/.au/.box`` plus a ``manifest.txt``.

    ``meta`` carries the generator configuration echo; recognized keys are
    written as ``key value`` lines ahead of the file table.
    """
    os.makedirs(out_dir, exist_ok=True)
    lines = ["format 1", f"n_samples {len(samples)}"]
    for key, val in meta.items():
        if isinstance(val, (tuple, list)):
            val = " ".join(str(v) for v in val)
        lines.append(f"{key} {val}")
    lines.append("files")
    for i, sample in enumerate(samples):
        stem = sample_stem(i)
        write_pgm(os.path.join(out_dir, stem + ".pgm"), sample.image)
        write_pts(os.path.join(out_dir, stem + ".pts"), sample.gt_shape)
        write_labels(os.path.join(out_dir, stem + ".au"), sample.labels)
        write_box(os.path.join(out_dir, stem + ".box"), sample.box)
        lines.append(f"{stem}.pgm {stem}.pts {stem}.au {stem}.box")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


def read_manifest(data_dir) -> dict:
    """Parse ``manifest.txt`` into a meta dict plus a ``files`` entry."""
    path = os.path.join(data_dir, "manifest.txt")
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    meta: dict = {}
    files: list[tuple[str, ...]] = []
    in_files = False
    for ln in lines:
        if not ln.strip():
            continue
        if in_files:
            files.append(tuple(ln.split()))
            continue
        if ln.strip() == "files":
            in_files = True
            continue
        key, _, val = ln.partition(" ")
        meta[key] = val
    meta["files"] = files
    for key in ("n_samples", "n_aus", "d_landmarks", "image_size", "seed"):
        if key in meta:
            meta[key] = int(meta[key])
    if "eye_indices" in meta:
        meta["eye_indices"] = tuple(int(t) for t in str(meta["eye_indices"]).split())
    return meta


def load_dataset(data_dir) -> tuple[list[Sample], dict]:
    """Load a dataset directory written by :func:`write_dataset`."""
    meta = read_manifest(data_dir)
    samples = []
    for entry in meta["files"]:
        if len(entry) != 4:
            raise ValueError(f"manifest file row needs 4 entries, got {entry}")
        pgm, pts, au, box = (os.path.join(data_dir, name) for name in entry)
        samples.append(
            Sample(
                image=read_pgm(pgm),
                box=read_box(box),
                gt_shape=read_pts(pts),
                labels=read_labels(au),
            )
        )
    if "n_samples" in meta and meta["n_samples"] != len(samples):
        raise ValueError(
            f"manifest claims {meta['n_samples']} samples, found {len(samples)}"
        )
    return samples, meta
