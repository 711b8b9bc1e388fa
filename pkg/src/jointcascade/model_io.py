"""JSON model files with lossless float round-trips.

The file stores the cascade and descriptor configuration echo, the mean
shape, the shape standardization, the energy-model weights, the per-label
mean-shape table, and the per-stage regressors.  Matrices are row-major
``{"rows", "cols", "data"}`` objects.  Floats are serialized with Python's
shortest-repr, so save -> load reproduces every value bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .cascade import CascadeConfig, CascadeModel, StageModel, Variant
from .descriptors import DescriptorConfig
from .rbm import JointPrior, RBMParams, Standardizer

FORMAT_VERSION = 1


def _vec(arr) -> list:
    return [float(v) for v in np.asarray(arr, dtype=np.float64).reshape(-1)]


def _mat(arr) -> dict:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a matrix")
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": _vec(a)}


def _read_vec(obj, length=None) -> np.ndarray:
    arr = np.asarray([float(v) for v in obj], dtype=np.float64)
    if length is not None and arr.size != length:
        raise ValueError(f"expected vector of length {length}, got {arr.size}")
    return arr


def _read_mat(obj) -> np.ndarray:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    data = _read_vec(obj["data"], rows * cols)
    return data.reshape(rows, cols)


def save_model(model: CascadeModel, path) -> None:
    cfg = model.config
    desc = model.descriptor
    prior = model.prior
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "stages": cfg.stages,
            "lambda_shape": cfg.lambda_shape,
            "lambda_prob": cfg.lambda_prob,
            "ridge": cfg.ridge,
            "augmentations": cfg.augmentations,
            "perturb_scale": cfg.perturb_scale,
            "perturb_rotation": cfg.perturb_rotation,
            "perturb_translation": cfg.perturb_translation,
            "variant": cfg.variant.value,
            "seed": cfg.seed,
        },
        "descriptor": {
            "radius_fraction": desc.radius_fraction,
            "grid_cells": desc.grid_cells,
            "orientation_bins": desc.orientation_bins,
            "clip_threshold": desc.clip_threshold,
        },
        "n_landmarks": model.n_landmarks,
        "n_aus": model.n_labels,
        "n_hidden": prior.rbm.n_hidden,
        "mean_shape": _vec(model.mean_shape_vec),
        "standardization": {
            "mean": _vec(prior.standardizer.mean),
            "std": _vec(prior.standardizer.std),
        },
        "rbm": {
            "w_x": _mat(prior.rbm.w_x),
            "w_a": _mat(prior.rbm.w_a),
            "b_x": _vec(prior.rbm.b_x),
            "b_a": _vec(prior.rbm.b_a),
            "c": _vec(prior.rbm.c),
        },
        "au_shapes": {
            "shapes": _mat(prior.au_shapes),
            "absent": [bool(v) for v in prior.au_absent],
            "fallback": _vec(prior.fallback_shape),
        },
        "stages": [
            {"shape_reg": _mat(s.shape_reg), "prob_reg": _mat(s.prob_reg)}
            for s in model.stages
        ],
        "eye_indices": [int(v) for v in model.eye_indices],
    }
    with open(path, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


def load_model(path) -> CascadeModel:
    with open(path) as f:
        doc = json.load(f)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format_version {version!r} "
            f"(this build reads {FORMAT_VERSION})"
        )
    c = doc["config"]
    cfg = CascadeConfig(
        stages=int(c["stages"]),
        lambda_shape=float(c["lambda_shape"]),
        lambda_prob=float(c["lambda_prob"]),
        ridge=float(c["ridge"]),
        augmentations=int(c["augmentations"]),
        perturb_scale=float(c["perturb_scale"]),
        perturb_rotation=float(c["perturb_rotation"]),
        perturb_translation=float(c["perturb_translation"]),
        variant=Variant(c["variant"]),
        seed=int(c["seed"]),
    )
    d = doc["descriptor"]
    desc = DescriptorConfig(
        radius_fraction=float(d["radius_fraction"]),
        grid_cells=int(d["grid_cells"]),
        orientation_bins=int(d["orientation_bins"]),
        clip_threshold=float(d["clip_threshold"]),
    )
    n_landmarks = int(doc["n_landmarks"])
    n_aus = int(doc["n_aus"])
    rbm_doc = doc["rbm"]
    rbm = RBMParams(
        w_x=_read_mat(rbm_doc["w_x"]),
        w_a=_read_mat(rbm_doc["w_a"]),
        b_x=_read_vec(rbm_doc["b_x"], 2 * n_landmarks),
        b_a=_read_vec(rbm_doc["b_a"], n_aus),
        c=_read_vec(rbm_doc["c"]),
    )
    std_doc = doc["standardization"]
    au_doc = doc["au_shapes"]
    prior = JointPrior(
        rbm=rbm,
        standardizer=Standardizer(
            mean=_read_vec(std_doc["mean"], 2 * n_landmarks),
            std=_read_vec(std_doc["std"], 2 * n_landmarks),
        ),
        au_shapes=_read_mat(au_doc["shapes"]),
        au_absent=np.asarray([bool(v) for v in au_doc["absent"]]),
        fallback_shape=_read_vec(au_doc["fallback"], 2 * n_landmarks),
    )
    stages = tuple(
        StageModel(
            shape_reg=_read_mat(s["shape_reg"]),
            prob_reg=_read_mat(s["prob_reg"]),
        )
        for s in doc["stages"]
    )
    if len(stages) != cfg.stages:
        raise ValueError("stage count does not match the configuration")
    eyes = doc["eye_indices"]
    return CascadeModel(
        config=cfg,
        descriptor=desc,
        mean_shape_vec=_read_vec(doc["mean_shape"], 2 * n_landmarks),
        prior=prior,
        stages=stages,
        eye_indices=(int(eyes[0]), int(eyes[1])),
    )
