"""Joint facial landmark detection and action-unit recognition.

A cascade of linear regressors alternates between refining landmark
positions and activation probabilities, with both tracks constrained by a
joint energy-model prior linking shapes and labels.
"""

from .cascade import (
    CascadeConfig,
    CascadeModel,
    StageModel,
    Variant,
    constrained_prob_update,
    constrained_shape_update,
    fit_linear_stage,
    infer,
    infer_sdm,
    infer_stages,
    train,
    train_from_samples,
)
from .descriptors import DescriptorConfig, extract_descriptor, stacked_features
from .geometry import (
    FaceBox,
    FaceShape,
    Frame,
    Sample,
    from_canonical,
    interocular_distance,
    mean_shape,
    to_canonical,
)
from .metrics import EvalReport, auc_scores, evaluate, f1_scores, normalized_error
from .model_io import load_model, save_model
from .rbm import (
    CDConfig,
    JointPrior,
    RBMParams,
    au_dependent_shapes,
    au_posterior,
    cd_train,
    energy,
    fit_joint_prior,
    free_energy,
    shape_prior,
)
from .synth import EYE_INDICES, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig",
    "CascadeModel",
    "CDConfig",
    "DescriptorConfig",
    "EvalReport",
    "EYE_INDICES",
    "FaceBox",
    "FaceShape",
    "Frame",
    "JointPrior",
    "RBMParams",
    "Sample",
    "StageModel",
    "SynthConfig",
    "Variant",
    "au_dependent_shapes",
    "au_posterior",
    "auc_scores",
    "cd_train",
    "constrained_prob_update",
    "constrained_shape_update",
    "energy",
    "evaluate",
    "extract_descriptor",
    "f1_scores",
    "fit_joint_prior",
    "fit_linear_stage",
    "free_energy",
    "from_canonical",
    "generate",
    "infer",
    "infer_sdm",
    "infer_stages",
    "interocular_distance",
    "load_model",
    "mean_shape",
    "normalized_error",
    "save_model",
    "shape_prior",
    "stacked_features",
    "to_canonical",
    "train",
    "train_from_samples",
]
