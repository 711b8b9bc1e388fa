"""Joint shape / action-unit prior: a Gaussian-Bernoulli energy model.

The model couples a real-valued shape vector ``x`` (Gaussian visibles), a
binary label vector ``a`` (Bernoulli visibles), and binary hidden units
``h`` through the energy

    E(a, x, h) = 0.5 * ||x - b_x||^2 - b_a.a - c.h - x.W_x.h - a.W_a.h

Hidden units can be summed out in closed form, which gives the free energy
and, for small label counts, the exact conditional label distribution
given a shape by enumerating all 2^N label vectors.  The model is fit by
contrastive divergence; shapes are standardized coordinate-wise before
training and the standardization is stored with the model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from .seeding import STREAM_CD, rng_stream

# Above this label count the 2^N enumeration is refused and the posterior
# falls back to a damped mean-field fixed point.
EXACT_ENUMERATION_LIMIT = 20


class MeanFieldWarning(UserWarning):
    """Raised (as a warning) when the mean-field posterior fails to converge."""


@dataclass(frozen=True)
class RBMParams:
    """Energy-model parameters.

    w_x: (2D, K) shape-to-hidden weights.
    w_a: (N, K) label-to-hidden weights.
    b_x: (2D,) Gaussian visible offsets.
    b_a: (N,) label biases.
    c:   (K,) hidden biases.
    """

    w_x: np.ndarray
    w_a: np.ndarray
    b_x: np.ndarray
    b_a: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        w_x = np.asarray(self.w_x, dtype=np.float64)
        w_a = np.asarray(self.w_a, dtype=np.float64)
        b_x = np.asarray(self.b_x, dtype=np.float64)
        b_a = np.asarray(self.b_a, dtype=np.float64)
        c = np.asarray(self.c, dtype=np.float64)
        if w_x.ndim != 2 or w_a.ndim != 2:
            raise ValueError("w_x and w_a must be matrices")
        k = w_x.shape[1]
        if w_a.shape[1] != k or c.shape != (k,):
            raise ValueError("hidden dimension mismatch between w_x, w_a, c")
        if b_x.shape != (w_x.shape[0],):
            raise ValueError("b_x length must match w_x rows")
        if b_a.shape != (w_a.shape[0],):
            raise ValueError("b_a length must match w_a rows")
        for arr in (w_x, w_a, b_x, b_a, c):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")
        for name, arr in (
            ("w_x", w_x), ("w_a", w_a), ("b_x", b_x), ("b_a", b_a), ("c", c)
        ):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_shape(self) -> int:
        return int(self.w_x.shape[0])

    @property
    def n_labels(self) -> int:
        return int(self.w_a.shape[0])

    @property
    def n_hidden(self) -> int:
        return int(self.w_x.shape[1])


@dataclass(frozen=True)
class CDConfig:
    """Contrastive-divergence training settings."""

    epochs: int = 800
    learning_rate: float = 0.01
    batch_size: int = 64
    cd_steps: int = 1
    momentum: float = 0.5
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.cd_steps < 1:
            raise ValueError("epochs, batch_size, cd_steps must be >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must be in [0, 1)")


def _check_pair(labels, shapes):
    a = np.asarray(labels, dtype=np.float64)
    x = np.asarray(shapes, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
        x = x[None, :]
    if a.shape[0] != x.shape[0]:
        raise ValueError("labels and shapes must have the same number of rows")
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("labels must be binary")
    if not np.all(np.isfinite(x)):
        raise ValueError("shapes must be finite")
    return a, x


def energy(labels, shape_vec, hidden, params: RBMParams) -> float:
    """Joint energy of a full configuration (labels, shape, hidden)."""
    a = np.asarray(labels, dtype=np.float64)
    x = np.asarray(shape_vec, dtype=np.float64)
    h = np.asarray(hidden, dtype=np.float64)
    quad = 0.5 * np.sum((x - params.b_x) ** 2)
    return float(
        quad
        - params.b_a @ a
        - params.c @ h
        - x @ params.w_x @ h
        - a @ params.w_a @ h
    )


def hidden_input(labels, shape_vec, params: RBMParams) -> np.ndarray:
    """Per-hidden-unit input c_k + x.W_x[:, k] + a.W_a[:, k] (vectorized)."""
    a, x = _check_pair(labels, shape_vec)
    act = params.c + x @ params.w_x + a @ params.w_a
    return act[0] if np.asarray(labels).ndim == 1 else act


def free_energy(labels, shape_vec, params: RBMParams) -> float:
    """Negative log of the unnormalized marginal over hidden units.

    F(a, x) = 0.5*||x - b_x||^2 - b_a.a - sum_k softplus(c_k + x.W_x[:,k] + a.W_a[:,k])
    """
    a = np.asarray(labels, dtype=np.float64)
    x = np.asarray(shape_vec, dtype=np.float64)
    act = params.c + x @ params.w_x + a @ params.w_a
    quad = 0.5 * np.sum((x - params.b_x) ** 2)
    return float(quad - params.b_a @ a - np.sum(np.logaddexp(0.0, act)))


# ---------------------------------------------------------------------------
# contrastive-divergence training


def cd_train(
    labels,
    shapes,
    cfg: CDConfig,
    n_hidden: int = 150,
    init: RBMParams | None = None,
) -> RBMParams:
    """Fit the energy model by CD over mini-batches.

    ``labels`` is (M, N) binary, ``shapes`` is (M, 2D) real (already in the
    space the model should see, e.g. standardized).  Gradients use hidden
    probabilities at both ends of the chain and sampled states inside it;
    weight decay applies to the pairwise weights only; updates carry
    momentum.  With ``learning_rate = 0`` the initialization is returned
    unchanged.
    """
    a_all, x_all = _check_pair(labels, shapes)
    m_total = a_all.shape[0]
    if m_total == 0:
        raise ValueError("cd_train needs at least one example")
    nv = x_all.shape[1]
    na = a_all.shape[1]
    rng = rng_stream(cfg.seed, STREAM_CD)

    if init is not None:
        if init.n_shape != nv or init.n_labels != na:
            raise ValueError("init parameters do not match the data dimensions")
        w_x = init.w_x.copy()
        w_a = init.w_a.copy()
        b_x = init.b_x.copy()
        b_a = init.b_a.copy()
        c = init.c.copy()
        k = init.n_hidden
    else:
        k = int(n_hidden)
        if k < 1:
            raise ValueError("n_hidden must be >= 1")
        w_x = rng.uniform(-0.01, 0.01, size=(nv, k))
        w_a = rng.uniform(-0.01, 0.01, size=(na, k))
        b_x = np.zeros(nv)
        b_a = np.zeros(na)
        c = np.zeros(k)

    v_wx = np.zeros_like(w_x)
    v_wa = np.zeros_like(w_a)
    v_bx = np.zeros_like(b_x)
    v_ba = np.zeros_like(b_a)
    v_c = np.zeros_like(c)
    lr = cfg.learning_rate
    mom = cfg.momentum
    decay = cfg.weight_decay

    for _epoch in range(cfg.epochs):
        order = rng.permutation(m_total)
        for start in range(0, m_total, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = x_all[idx]
            ab = a_all[idx]
            m = idx.size
            h_pos = expit(c + xb @ w_x + ab @ w_a)
            h_state = h_pos
            for _step in range(cfg.cd_steps):
                h_samp = (rng.random(h_state.shape) < h_state).astype(np.float64)
                x_neg = b_x + h_samp @ w_x.T
                a_prob = expit(b_a + h_samp @ w_a.T)
                a_neg = (rng.random(a_prob.shape) < a_prob).astype(np.float64)
                h_state = expit(c + x_neg @ w_x + a_neg @ w_a)
            h_neg = h_state
            g_wx = (xb.T @ h_pos - x_neg.T @ h_neg) / m
            g_wa = (ab.T @ h_pos - a_neg.T @ h_neg) / m
            g_bx = np.mean(xb - x_neg, axis=0)
            g_ba = np.mean(ab - a_neg, axis=0)
            g_c = np.mean(h_pos - h_neg, axis=0)
            v_wx = mom * v_wx + lr * (g_wx - decay * w_x)
            v_wa = mom * v_wa + lr * (g_wa - decay * w_a)
            v_bx = mom * v_bx + lr * g_bx
            v_ba = mom * v_ba + lr * g_ba
            v_c = mom * v_c + lr * g_c
            w_x += v_wx
            w_a += v_wa
            b_x += v_bx
            b_a += v_ba
            c += v_c

    return RBMParams(w_x=w_x, w_a=w_a, b_x=b_x, b_a=b_a, c=c)


# ---------------------------------------------------------------------------
# exact label posterior (and mean-field fallback)


def all_label_vectors(n_labels: int) -> np.ndarray:
    """All 2^N binary label vectors, one per row (bit i -> column i)."""
    if n_labels > EXACT_ENUMERATION_LIMIT:
        raise ValueError(
            f"refusing to enumerate 2^{n_labels} label vectors "
            f"(limit {EXACT_ENUMERATION_LIMIT})"
        )
    codes = np.arange(2**n_labels, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_labels)) & 1).astype(np.float64)


def label_distribution(shape_vec, params: RBMParams) -> np.ndarray:
    """Exact conditional P(a | x) over all label vectors, hidden summed out.

    Goes with :func:`all_label_vectors`; entry ``i`` is the probability of
    row ``i`` of that enumeration.
    """
    x = np.asarray(shape_vec, dtype=np.float64)
    combos = all_label_vectors(params.n_labels)
    act = params.c + x @ params.w_x + combos @ params.w_a
    scores = combos @ params.b_a + np.sum(np.logaddexp(0.0, act), axis=1)
    scores -= scores.max()
    p = np.exp(scores)
    return p / p.sum()


def _mean_field_posterior(
    x, params, damping=0.5, max_iter=200, tol=1e-8
) -> np.ndarray:
    base = params.c + x @ params.w_x
    mu_a = np.full(params.n_labels, 0.5)
    mu_h = expit(base + mu_a @ params.w_a)
    for _ in range(max_iter):
        new_h = expit(base + mu_a @ params.w_a)
        mu_h_next = damping * mu_h + (1.0 - damping) * new_h
        new_a = expit(params.b_a + params.w_a @ mu_h_next)
        mu_a_next = damping * mu_a + (1.0 - damping) * new_a
        delta = max(
            np.max(np.abs(mu_a_next - mu_a)), np.max(np.abs(mu_h_next - mu_h))
        )
        mu_a, mu_h = mu_a_next, mu_h_next
        if delta < tol:
            break
    else:
        warnings.warn(
            "mean-field label posterior did not converge", MeanFieldWarning
        )
    return mu_a


def au_posterior(shape_vec, params: RBMParams) -> np.ndarray:
    """Marginal activation probabilities P(a_i = 1 | x).

    Exact by label enumeration when the label count permits; otherwise a
    damped mean-field approximation (with a warning on non-convergence).
    """
    x = np.asarray(shape_vec, dtype=np.float64)
    if x.shape != (params.n_shape,):
        raise ValueError("shape vector does not match the model dimension")
    if params.n_labels <= EXACT_ENUMERATION_LIMIT:
        combos = all_label_vectors(params.n_labels)
        return label_distribution(x, params) @ combos
    return _mean_field_posterior(x, params)


# Batch posterior kernel.  Same enumeration as label_distribution, but the
# softplus sum over hidden units is computed in product form: softplus(z) =
# max(z, 0) + log1p(exp(-|z|)), and since each 1 + exp(-|z|) lies in (1, 2]
# the product over hidden units never overflows, so one log per label
# combo suffices.  exp(-|z|) uses a range-reduced polynomial with a 2^-k
# table (libm exp dominates runtime otherwise).

_POW2_NEG = 0.5 ** np.arange(1076)
_LOG2E = 1.4426950408889634
_LN2 = 0.6931471805599453


@njit(inline="always", cache=True)
def _exp_neg(az):  # pragma: no cover
    # exp(-az) for az >= 0; relative error < 1e-11.
    if az > 745.0:
        return 0.0
    k = int(az * _LOG2E + 0.5)
    r = k * _LN2 - az
    r2 = r * r
    r4 = r2 * r2
    p01 = 1.0 + r
    p23 = 0.5 + r * (1.0 / 6.0)
    p45 = (1.0 / 24.0) + r * (1.0 / 120.0)
    p67 = (1.0 / 720.0) + r * (1.0 / 5040.0)
    p89 = (1.0 / 40320.0) + r * (1.0 / 362880.0)
    p = (p01 + r2 * p23) + r4 * ((p45 + r2 * p67) + r4 * p89)
    return p * _POW2_NEG[k]


@njit(cache=True)
def _posterior_batch_kernel(t_all, pre, lin_scores, combos, out):  # pragma: no cover
    m_total, k_total = t_all.shape
    n_combo = pre.shape[0]
    n_lab = combos.shape[1]
    scores = np.empty(n_combo)
    for mi in range(m_total):
        best = -1.0e300
        for ai in range(n_combo):
            lin0 = 0.0
            lin1 = 0.0
            prod0 = 1.0
            prod1 = 1.0
            for k in range(0, k_total - 1, 2):
                za = pre[ai, k] + t_all[mi, k]
                zb = pre[ai, k + 1] + t_all[mi, k + 1]
                aa = abs(za)
                ab = abs(zb)
                lin0 += 0.5 * (za + aa)
                lin1 += 0.5 * (zb + ab)
                prod0 *= 1.0 + _exp_neg(aa)
                prod1 *= 1.0 + _exp_neg(ab)
            if k_total % 2 == 1:
                za = pre[ai, k_total - 1] + t_all[mi, k_total - 1]
                aa = abs(za)
                lin0 += 0.5 * (za + aa)
                prod0 *= 1.0 + _exp_neg(aa)
            s = lin_scores[ai] + (lin0 + lin1) + np.log(prod0 * prod1)
            scores[ai] = s
            if s > best:
                best = s
        total = 0.0
        for ai in range(n_combo):
            wgt = np.exp(scores[ai] - best)
            scores[ai] = wgt
            total += wgt
        for i in range(n_lab):
            out[mi, i] = 0.0
        for ai in range(n_combo):
            wgt = scores[ai] / total
            for i in range(n_lab):
                out[mi, i] += wgt * combos[ai, i]


def posterior_batch(shape_vecs: np.ndarray, params: RBMParams) -> np.ndarray:
    """Exact marginal posteriors for many shape vectors at once.

    Functionally identical to calling :func:`au_posterior` per row (the
    test suite checks agreement); this path is what cascade training and
    inference use.
    """
    x = np.ascontiguousarray(shape_vecs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_shape:
        raise ValueError("shape_vecs must be (M, 2D) matching the model")
    combos = all_label_vectors(params.n_labels)
    t_all = np.ascontiguousarray(params.c + x @ params.w_x)
    pre = np.ascontiguousarray(combos @ params.w_a)
    lin_scores = np.ascontiguousarray(combos @ params.b_a)
    out = np.empty((x.shape[0], params.n_labels))
    _posterior_batch_kernel(t_all, pre, lin_scores, combos, out)
    return out


# ---------------------------------------------------------------------------
# shape standardization and the combined prior


@dataclass(frozen=True)
class Standardizer:
    """Coordinate-wise affine map used on shapes before the energy model."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        std = np.asarray(self.std, dtype=np.float64).copy()
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be matching vectors")
        if np.any(std <= 0):
            raise ValueError("std entries must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def au_dependent_shapes(
    labels, canon_vecs, fallback: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Mean canonical shape over samples where each label is active.

    Returns ``(shapes, absent)``: shapes is (N, 2D); labels with no active
    sample get the fallback shape and their ``absent`` flag set.
    """
    a, x = _check_pair(labels, canon_vecs)
    n = a.shape[1]
    shapes = np.empty((n, x.shape[1]))
    absent = np.zeros(n, dtype=bool)
    for i in range(n):
        active = a[:, i] == 1
        if np.any(active):
            shapes[i] = x[active].mean(axis=0)
        else:
            shapes[i] = fallback
            absent[i] = True
    return shapes, absent


@dataclass(frozen=True)
class JointPrior:
    """Everything the cascade constraints need: the fitted energy model in
    standardized shape space, the standardizer, and per-label mean shapes."""

    rbm: RBMParams
    standardizer: Standardizer
    au_shapes: np.ndarray
    au_absent: np.ndarray
    fallback_shape: np.ndarray

    def __post_init__(self):
        au_shapes = np.asarray(self.au_shapes, dtype=np.float64).copy()
        au_absent = np.asarray(self.au_absent, dtype=bool).copy()
        fallback = np.asarray(self.fallback_shape, dtype=np.float64).copy()
        if au_shapes.shape != (self.rbm.n_labels, self.rbm.n_shape):
            raise ValueError("au_shapes must be (N, 2D) matching the model")
        if au_absent.shape != (self.rbm.n_labels,):
            raise ValueError("au_absent must be (N,)")
        if fallback.shape != (self.rbm.n_shape,):
            raise ValueError("fallback_shape must be (2D,)")
        for name, arr in (
            ("au_shapes", au_shapes),
            ("au_absent", au_absent),
            ("fallback_shape", fallback),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_labels(self) -> int:
        return self.rbm.n_labels

    @property
    def n_shape(self) -> int:
        return self.rbm.n_shape


def shape_prior(probs, prior: JointPrior) -> np.ndarray:
    """Activation-weighted blend of the per-label mean shapes.

    x_bar = sum_i p_i * au_shapes[i] / sum_i p_i, falling back to the mean
    shape when the probability mass is (numerically) zero.  Weights are
    normalized, so any positive rescaling of ``probs`` gives the same
    result; entries only need to be non-negative.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (prior.n_labels,):
        raise ValueError("probability vector does not match the label count")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("activation weights must be non-negative and finite")
    total = p.sum()
    if total < 1e-9:
        return prior.fallback_shape.copy()
    return (p / total) @ prior.au_shapes


def shape_prior_batch(probs: np.ndarray, prior: JointPrior) -> np.ndarray:
    """Row-wise :func:`shape_prior` for an (M, N) probability matrix."""
    p = np.asarray(probs, dtype=np.float64)
    totals = p.sum(axis=1)
    out = np.empty((p.shape[0], prior.n_shape))
    ok = totals >= 1e-9
    if np.any(ok):
        out[ok] = (p[ok] / totals[ok, None]) @ prior.au_shapes
    if np.any(~ok):
        out[~ok] = prior.fallback_shape
    return out


def posterior_from_prior(canon_vec: np.ndarray, prior: JointPrior) -> np.ndarray:
    """Label posterior for one canonical shape vector (standardizes first)."""
    z = prior.standardizer.apply(canon_vec)
    return posterior_batch(z[None, :], prior.rbm)[0]


def posterior_batch_from_prior(
    canon_vecs: np.ndarray, prior: JointPrior
) -> np.ndarray:
    z = prior.standardizer.apply(canon_vecs)
    return posterior_batch(z, prior.rbm)


def fit_joint_prior(
    labels, canon_vecs, cfg: CDConfig, n_hidden: int = 150
) -> JointPrior:
    """Standardize canonical shapes, fit the energy model, collect AU shapes."""
    a, x = _check_pair(labels, canon_vecs)
    mean_vec = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-8)
    standardizer = Standardizer(mean=mean_vec, std=std)
    params = cd_train(a, standardizer.apply(x), cfg, n_hidden=n_hidden)
    au_shapes, absent = au_dependent_shapes(a, x, mean_vec)
    return JointPrior(
        rbm=params,
        standardizer=standardizer,
        au_shapes=au_shapes,
        au_absent=absent,
        fallback_shape=mean_vec,
    )
