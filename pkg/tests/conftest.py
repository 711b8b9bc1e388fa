"""Shared fixtures: small synthetic datasets and a cheaply trained model.

Session-scoped so the expensive pieces (rendering, cascade training) run
once; tests must not mutate what they receive.
"""

import numpy as np
import pytest

import jointcascade as jc
from jointcascade.geometry import to_canonical
from jointcascade.rbm import fit_joint_prior
from jointcascade.synth import EYE_INDICES


@pytest.fixture(scope="session")
def train_samples():
    return jc.generate(jc.SynthConfig(n_samples=48, seed=5))


@pytest.fixture(scope="session")
def test_samples():
    return jc.generate(jc.SynthConfig(n_samples=16, seed=9005))


@pytest.fixture(scope="session")
def tiny_prior(train_samples):
    canon = np.stack(
        [to_canonical(s.gt_shape, s.box).vector for s in train_samples]
    )
    labels = np.stack([s.labels for s in train_samples])
    return fit_joint_prior(
        labels, canon, jc.CDConfig(epochs=60, seed=1), n_hidden=24
    )


def _train_variant(train_samples, prior, variant):
    cfg = jc.CascadeConfig(
        stages=2, augmentations=3, variant=variant, seed=2
    )
    return jc.train(
        train_samples, cfg, jc.DescriptorConfig(), prior,
        eye_indices=EYE_INDICES,
    )


@pytest.fixture(scope="session")
def tiny_model(train_samples, tiny_prior):
    return _train_variant(train_samples, tiny_prior, jc.Variant.FULL)


@pytest.fixture(scope="session")
def tiny_model_nc(train_samples, tiny_prior):
    return _train_variant(
        train_samples, tiny_prior, jc.Variant.NOCONSTRAINT
    )
