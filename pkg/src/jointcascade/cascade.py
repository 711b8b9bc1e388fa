"""Constrained cascade regression of shapes and activation probabilities.

Each cascade stage holds two linear regressors over the same stacked patch
descriptors: one maps features to a shape increment, the other to an
activation-probability increment.  Between the raw regression step and the
next stage, both states are pulled toward what the joint prior expects —
shapes toward the activation-weighted mean shape, probabilities toward the
energy model's label posterior given the current shape — with strength
``lambda``; the two relaxed updates have the closed forms

    x_t = (x_{t-1} + R_t.phi + lambda_s * x_bar) / (1 + lambda_s)
    p_t = clamp((p_{t-1} + T_t.phi + lambda_p * q) / (1 + lambda_p), 0, 1)

Shapes start at the training mean, probabilities at 0.5.  Ablation
variants switch either constraint off by zeroing its lambda.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .descriptors import DescriptorConfig, descriptors_at, gradient_maps
from .geometry import FaceBox, FaceShape, Frame, Sample, to_canonical, validate_image
from .rbm import (
    CDConfig,
    JointPrior,
    fit_joint_prior,
    posterior_batch_from_prior,
    posterior_from_prior,
    shape_prior,
    shape_prior_batch,
)
from .seeding import STREAM_AUGMENT, rng_stream


class Variant(str, Enum):
    """Which of the two prior constraints are active."""

    FULL = "full"
    NOCONSTRAINT = "noconstraint"
    CONSTRAINT_LANDMARK = "constraint-landmark"
    CONSTRAINT_AU = "constraint-au"


@dataclass(frozen=True)
class CascadeConfig:
    """Cascade training settings."""

    stages: int = 4
    lambda_shape: float = 0.5
    lambda_prob: float = 0.5
    ridge: float = 1e-3
    augmentations: int = 10
    perturb_scale: float = 0.1
    perturb_rotation: float = 15.0
    perturb_translation: float = 0.05
    variant: Variant = Variant.FULL
    seed: int = 0

    def __post_init__(self):
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if self.lambda_shape < 0 or self.lambda_prob < 0:
            raise ValueError("constraint strengths must be >= 0")
        if not (np.isfinite(self.lambda_shape) and np.isfinite(self.lambda_prob)):
            raise ValueError("constraint strengths must be finite")
        if self.ridge <= 0:
            raise ValueError("ridge must be positive")
        if self.augmentations < 1:
            raise ValueError("augmentations must be >= 1")
        if not (0 <= self.perturb_scale < 1):
            raise ValueError("perturb_scale must be in [0, 1)")
        if self.perturb_rotation < 0 or self.perturb_translation < 0:
            raise ValueError("perturbation ranges must be >= 0")
        if not isinstance(self.variant, Variant):
            object.__setattr__(self, "variant", Variant(self.variant))


def effective_lambdas(cfg: CascadeConfig) -> tuple[float, float]:
    """(lambda_shape, lambda_prob) after applying the ablation variant."""
    lam_s = cfg.lambda_shape
    lam_p = cfg.lambda_prob
    if cfg.variant in (Variant.NOCONSTRAINT, Variant.CONSTRAINT_AU):
        lam_s = 0.0
    if cfg.variant in (Variant.NOCONSTRAINT, Variant.CONSTRAINT_LANDMARK):
        lam_p = 0.0
    return lam_s, lam_p


@dataclass(frozen=True)
class StageModel:
    """Linear regressors of one cascade stage.

    shape_reg: (2D, F) features -> shape increment.
    prob_reg:  (N, F)  features -> probability increment.
    """

    shape_reg: np.ndarray
    prob_reg: np.ndarray

    def __post_init__(self):
        shape_reg = np.asarray(self.shape_reg, dtype=np.float64)
        prob_reg = np.asarray(self.prob_reg, dtype=np.float64)
        if shape_reg.ndim != 2 or prob_reg.ndim != 2:
            raise ValueError("stage regressors must be matrices")
        if shape_reg.shape[1] != prob_reg.shape[1]:
            raise ValueError("stage regressors must share the feature dimension")
        object.__setattr__(self, "shape_reg", shape_reg)
        object.__setattr__(self, "prob_reg", prob_reg)


@dataclass(frozen=True)
class CascadeModel:
    """Trained cascade: configuration, mean shape, joint prior, stages.

    ``eye_indices`` names the two outer eye-corner landmarks used for
    error normalization downstream; it travels with the model so
    evaluation never needs out-of-band knowledge.
    """

    config: CascadeConfig
    descriptor: DescriptorConfig
    mean_shape_vec: np.ndarray
    prior: JointPrior
    stages: tuple[StageModel, ...]
    eye_indices: tuple[int, int] = (0, 1)

    def __post_init__(self):
        vec = np.asarray(self.mean_shape_vec, dtype=np.float64).copy()
        if vec.ndim != 1 or vec.size != self.prior.n_shape:
            raise ValueError("mean shape vector must match the prior dimension")
        vec.setflags(write=False)
        object.__setattr__(self, "mean_shape_vec", vec)
        object.__setattr__(self, "stages", tuple(self.stages))
        eyes = (int(self.eye_indices[0]), int(self.eye_indices[1]))
        d = vec.size // 2
        if not (0 <= eyes[0] < d and 0 <= eyes[1] < d) or eyes[0] == eyes[1]:
            raise ValueError("eye indices must be distinct valid landmarks")
        object.__setattr__(self, "eye_indices", eyes)

    @property
    def n_landmarks(self) -> int:
        return self.mean_shape_vec.size // 2

    @property
    def n_labels(self) -> int:
        return self.prior.n_labels

    @property
    def mean_shape(self) -> FaceShape:
        return FaceShape.from_vector(self.mean_shape_vec, Frame.CANONICAL)


# ---------------------------------------------------------------------------
# stage regression


def _ridge_factor(features: np.ndarray, ridge: float):
    gram = features.T @ features
    gram[np.diag_indices_from(gram)] += ridge
    return cho_factor(gram, lower=True, overwrite_a=True, check_finite=False)


def _solve_from_factor(factor, features: np.ndarray, targets: np.ndarray):
    rhs = features.T @ targets
    return cho_solve(factor, rhs, check_finite=False).T


def fit_linear_stage(features, targets, ridge: float) -> np.ndarray:
    """Ridge regression weights W minimizing ||phi.W' - Y||^2 + ridge*||W||^2.

    Solved through the normal equations with a Cholesky factorization;
    returns W of shape (targets_dim, n_features) so predictions are
    ``W @ phi_row``.
    """
    phi = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if phi.ndim != 2 or y.ndim != 2 or phi.shape[0] != y.shape[0]:
        raise ValueError("features and targets must be matrices of equal rows")
    if phi.shape[0] < 1:
        raise ValueError("need at least one training row")
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    if ridge <= 0 or not np.isfinite(ridge):
        raise ValueError("ridge must be positive and finite")
    factor = _ridge_factor(phi, ridge)
    return _solve_from_factor(factor, phi, y)


# ---------------------------------------------------------------------------
# constrained updates


def constrained_shape_update(
    x_prev: np.ndarray,
    features: np.ndarray,
    shape_reg: np.ndarray,
    prior_shape: np.ndarray | None,
    lam: float,
) -> np.ndarray:
    """One relaxed shape update; with ``lam == 0`` this is the plain
    regression step and ``prior_shape`` may be None."""
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lambda must be >= 0 and finite")
    step = shape_reg @ features
    if lam == 0.0:
        return x_prev + step
    if prior_shape is None:
        raise ValueError("prior_shape is required when lambda > 0")
    return (x_prev + step + lam * prior_shape) / (1.0 + lam)


def constrained_prob_update(
    p_prev: np.ndarray,
    features: np.ndarray,
    prob_reg: np.ndarray,
    posterior: np.ndarray | None,
    lam: float,
) -> np.ndarray:
    """One relaxed probability update, clamped to [0, 1] afterwards."""
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lambda must be >= 0 and finite")
    step = prob_reg @ features
    if lam == 0.0:
        raw = p_prev + step
    else:
        if posterior is None:
            raise ValueError("posterior is required when lambda > 0")
        raw = (p_prev + step + lam * posterior) / (1.0 + lam)
    return np.clip(raw, 0.0, 1.0)


# ---------------------------------------------------------------------------
# training


def _check_samples(samples: list[Sample], prior: JointPrior):
    if len(samples) == 0:
        raise ValueError("training needs at least one sample")
    d = samples[0].gt_shape.n_points
    n_lab = samples[0].n_labels
    for s in samples:
        if s.gt_shape.n_points != d or s.n_labels != n_lab:
            raise ValueError("samples disagree on landmark or label counts")
    if prior.n_labels != n_lab or prior.n_shape != 2 * d:
        raise ValueError("prior dimensions do not match the samples")
    return d, n_lab


def _initial_shapes(
    cfg: CascadeConfig, mean_pts: np.ndarray, n_samples: int
) -> np.ndarray:
    """Perturbed copies of the mean shape, one block per sample."""
    d = mean_pts.shape[0]
    aug = cfg.augmentations
    x0 = np.empty((n_samples * aug, 2 * d))
    for m in range(n_samples):
        for j in range(aug):
            rng = rng_stream(cfg.seed, STREAM_AUGMENT, m, j)
            sc = rng.uniform(1.0 - cfg.perturb_scale, 1.0 + cfg.perturb_scale)
            th = np.deg2rad(
                rng.uniform(-cfg.perturb_rotation, cfg.perturb_rotation)
            )
            shift = rng.uniform(
                -cfg.perturb_translation, cfg.perturb_translation, size=2
            )
            rot = np.array(
                [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
            )
            x0[m * aug + j] = (sc * mean_pts @ rot.T + shift).reshape(-1)
    return x0


def _fill_features(
    phi: np.ndarray,
    samples: list[Sample],
    maps: list[tuple[np.ndarray, np.ndarray]],
    shapes_canon: np.ndarray,
    desc_cfg: DescriptorConfig,
    aug: int,
) -> None:
    """Stacked descriptors (plus bias) for every instance, in place."""
    d2 = shapes_canon.shape[1]
    d = d2 // 2
    flen = desc_cfg.length
    for m, sample in enumerate(samples):
        lo = m * aug
        hi = lo + aug
        mag, ori = maps[m]
        center = np.array(sample.box.center)
        size = sample.box.size
        pts = shapes_canon[lo:hi].reshape(-1, 2) * size + center
        radius = desc_cfg.radius_fraction * size
        desc = descriptors_at(mag, ori, pts, radius, desc_cfg)
        phi[lo:hi, : d * flen] = desc.reshape(hi - lo, d * flen)
    phi[:, -1] = 1.0


def train(
    samples: list[Sample],
    cfg: CascadeConfig,
    desc_cfg: DescriptorConfig,
    prior: JointPrior,
    eye_indices: tuple[int, int] = (0, 1),
) -> CascadeModel:
    """Train the cascade on annotated samples against a fitted joint prior.

    Per stage: fit the shape regressor on features at the incoming shapes,
    apply the constrained shape update, refit features at the new shapes,
    fit the probability regressor there, apply the constrained probability
    update.  The feature matrix at the updated shapes is reused as the next
    stage's incoming features (the evaluation points coincide), which
    roughly halves the descriptor work.

    The ridge strength is scaled by the feature count so the default is
    insensitive to descriptor size.
    """
    d, n_lab = _check_samples(samples, prior)
    aug = cfg.augmentations
    n_samples = len(samples)
    n_inst = n_samples * aug
    lam_s, lam_p = effective_lambdas(cfg)

    gt_canon = np.stack(
        [to_canonical(s.gt_shape, s.box).vector for s in samples]
    )
    mean_vec = gt_canon.mean(axis=0)
    x_star = np.repeat(gt_canon, aug, axis=0)
    p_star = np.repeat(
        np.stack([s.labels for s in samples]).astype(np.float64), aug, axis=0
    )

    x_cur = _initial_shapes(cfg, mean_vec.reshape(d, 2), n_samples)
    p_cur = np.full((n_inst, n_lab), 0.5)

    maps = [gradient_maps(s.image) for s in samples]
    n_feat = d * desc_cfg.length + 1
    ridge_eff = cfg.ridge * n_feat

    phi = np.empty((n_inst, n_feat))
    _fill_features(phi, samples, maps, x_cur, desc_cfg, aug)
    factor = _ridge_factor(phi, ridge_eff)

    stages = []
    for _t in range(cfg.stages):
        shape_reg = _solve_from_factor(factor, phi, x_star - x_cur)
        step = phi @ shape_reg.T
        if lam_s > 0.0:
            x_bar = shape_prior_batch(p_cur, prior)
            x_cur = (x_cur + step + lam_s * x_bar) / (1.0 + lam_s)
        else:
            x_cur = x_cur + step

        phi_next = np.empty_like(phi)
        _fill_features(phi_next, samples, maps, x_cur, desc_cfg, aug)
        factor_next = _ridge_factor(phi_next, ridge_eff)
        prob_reg = _solve_from_factor(factor_next, phi_next, p_star - p_cur)
        p_step = phi_next @ prob_reg.T
        if lam_p > 0.0:
            q = posterior_batch_from_prior(x_cur, prior)
            p_cur = np.clip(
                (p_cur + p_step + lam_p * q) / (1.0 + lam_p), 0.0, 1.0
            )
        else:
            p_cur = np.clip(p_cur + p_step, 0.0, 1.0)

        stages.append(StageModel(shape_reg=shape_reg, prob_reg=prob_reg))
        phi, factor = phi_next, factor_next

    return CascadeModel(
        config=cfg,
        descriptor=desc_cfg,
        mean_shape_vec=mean_vec,
        prior=prior,
        stages=tuple(stages),
        eye_indices=eye_indices,
    )


def train_from_samples(
    samples: list[Sample],
    cfg: CascadeConfig,
    desc_cfg: DescriptorConfig | None = None,
    cd_cfg: CDConfig | None = None,
    n_hidden: int = 150,
    eye_indices: tuple[int, int] = (0, 1),
) -> CascadeModel:
    """Fit the joint prior from the samples, then train the cascade."""
    desc_cfg = desc_cfg or DescriptorConfig()
    cd_cfg = cd_cfg or CDConfig(seed=cfg.seed)
    labels = np.stack([s.labels for s in samples]).astype(np.float64)
    canon = np.stack([to_canonical(s.gt_shape, s.box).vector for s in samples])
    prior = fit_joint_prior(labels, canon, cd_cfg, n_hidden=n_hidden)
    return train(samples, cfg, desc_cfg, prior, eye_indices=eye_indices)


# ---------------------------------------------------------------------------
# inference


def _phi_single(mag, ori, x_canon, box: FaceBox, desc_cfg: DescriptorConfig):
    center = np.array(box.center)
    size = box.size
    pts = x_canon.reshape(-1, 2) * size + center
    radius = desc_cfg.radius_fraction * size
    desc = descriptors_at(mag, ori, pts, radius, desc_cfg)
    return np.concatenate([desc.reshape(-1), [1.0]])


def infer_stages(
    image, box: FaceBox, model: CascadeModel
) -> tuple[list[FaceShape], list[np.ndarray]]:
    """Full rollout: per-stage shapes (pixel frame) and probability vectors.

    Element 0 is the initialization (mean shape, probabilities 0.5); element
    t is the state after stage t.  Applies exactly the training-time update
    rules, so a model trained with either constraint uses it here too.
    """
    validate_image(image)
    mag, ori = gradient_maps(image)
    desc_cfg = model.descriptor
    lam_s, lam_p = effective_lambdas(model.config)
    center = np.array(box.center)
    size = box.size

    x = model.mean_shape_vec.copy()
    p = np.full(model.n_labels, 0.5)
    shapes = [x.copy()]
    probs = [p.copy()]
    for stage in model.stages:
        phi = _phi_single(mag, ori, x, box, desc_cfg)
        x_bar = shape_prior(p, model.prior) if lam_s > 0.0 else None
        x = constrained_shape_update(x, phi, stage.shape_reg, x_bar, lam_s)
        phi_next = _phi_single(mag, ori, x, box, desc_cfg)
        q = posterior_from_prior(x, model.prior) if lam_p > 0.0 else None
        p = constrained_prob_update(p, phi_next, stage.prob_reg, q, lam_p)
        shapes.append(x.copy())
        probs.append(p.copy())

    pixel_shapes = [
        FaceShape(vec.reshape(-1, 2) * size + center, Frame.IMAGE_PIXELS)
        for vec in shapes
    ]
    return pixel_shapes, probs


def infer(
    image, box: FaceBox, model: CascadeModel, threshold: float = 0.5
) -> tuple[FaceShape, np.ndarray, np.ndarray]:
    """Detect landmarks and activations: (shape, probabilities, labels)."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must be in (0, 1)")
    shapes, probs = infer_stages(image, box, model)
    p = probs[-1]
    labels = (p >= threshold).astype(np.int64)
    return shapes[-1], p, labels


def infer_sdm(image, box: FaceBox, model: CascadeModel) -> FaceShape:
    """Plain cascade rollout of the shape regressors with no constraints.

    Ignores the probability track entirely; useful as a baseline and for
    isolating what the constraints contribute at test time.
    """
    validate_image(image)
    mag, ori = gradient_maps(image)
    center = np.array(box.center)
    size = box.size
    x = model.mean_shape_vec.copy()
    for stage in model.stages:
        phi = _phi_single(mag, ori, x, box, model.descriptor)
        x = x + stage.shape_reg @ phi
    return FaceShape(x.reshape(-1, 2) * size + center, Frame.IMAGE_PIXELS)
