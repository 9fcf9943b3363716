"""Self-supervised losses for a linear model ``f(x) = W x (+ b)``.

Two views of every loss live here:

* the Gaussian effective landscape
  ``-Tr[W B W^T] + Tr[W S W^T W S W^T] (+ kappa (rho - c)^2)`` with
  ``S = A0 + C`` and ``rho = Tr[W S W^T]``, together with its analytic
  gradient;
* Monte-Carlo estimators of the exact finite-sample contrastive losses on a
  dataset with additive Gaussian augmentation, used to check the expansion.

The quadratic coefficient ``B`` for each family comes from ``hessian_b``.
``sample_hessian_b`` gives the coefficient the finite-sample loss actually
has in expectation, which differs for the weighted and beta variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .datamodel import (
    AugmentationSpec,
    CovarianceModel,
    Dataset,
    augmentation_cov,
    noise_root,
    rng_for,
)
from .errors import DimensionError, NeedsNegatives, UnsupportedInfiniteKappa
from .spectra import as_sym

Family = Literal[
    "infonce",
    "weighted_infonce",
    "beta_infonce",
    "spectral_contrastive",
    "barlow_twins",
    "effective_quartic",
]
FAMILIES = (
    "infonce",
    "weighted_infonce",
    "beta_infonce",
    "spectral_contrastive",
    "barlow_twins",
    "effective_quartic",
)
SAMPLE_FAMILIES = ("infonce", "weighted_infonce", "beta_infonce")


@dataclass(frozen=True)
class LossSpec:
    """Which loss, plus every hyperparameter that shapes its landscape.

    ``kappa=None`` means no normalization; ``kappa=math.inf`` is the hard
    norm constraint handled by the solver's limit formulas. ``target`` is the
    norm target ``c`` of the regularizer ``kappa (E||f||^2 - c)^2``.
    """

    family: Family = "infonce"
    alpha: float = 1.0
    beta: float = 1.0
    b: np.ndarray | None = None
    weight_decay: float = 0.0
    kappa: float | None = None
    target: float = 1.0
    bias: bool = False
    n: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown loss family {self.family!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.family == "weighted_infonce" and (self.n is None or self.n < 2):
            raise ValueError("weighted_infonce needs the dataset size n >= 2")
        if self.family == "effective_quartic":
            if self.b is None:
                raise ValueError("effective_quartic needs its matrix b")
            object.__setattr__(self, "b", as_sym(self.b, name="B"))
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be > 0 (or None for no normalization)")
        if self.kappa is not None and not self.target > 0:
            raise ValueError("normalization target must be > 0")

    @property
    def normalized(self) -> bool:
        return self.kappa is not None

    def with_(self, **changes) -> LossSpec:
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return LossSpec(**fields)


@dataclass(frozen=True)
class Weights:
    w: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.w, dtype=float))
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w", w)
        if self.b is not None:
            object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    draws: np.ndarray

    def __float__(self):
        return self.value


def hessian_b(spec: LossSpec, cov: CovarianceModel) -> np.ndarray:
    """Quadratic coefficient ``B`` of the effective landscape ``-Tr[W B W^T]``.

    Weight decay enters as ``-gamma I``.
    """
    a0, c, sigma = cov.a0, cov.c, cov.sigma
    fam = spec.family
    if fam == "infonce":
        b = a0
    elif fam == "weighted_infonce":
        b = a0 - (1.0 - spec.alpha) / spec.n * c
    elif fam == "beta_infonce":
        b = a0 - (1.0 - spec.beta) * c
    elif fam == "spectral_contrastive":
        b = 2.0 * c
    elif fam == "barlow_twins":
        b = 2.0 * sigma
    else:
        if spec.b.shape != a0.shape:
            raise DimensionError(f"B {spec.b.shape} does not match covariances {a0.shape}")
        b = spec.b
    if spec.weight_decay:
        b = b - spec.weight_decay * np.eye(cov.dim)
    return as_sym(b, name="B")


def _unpack(w, b):
    if isinstance(w, Weights):
        return w.w, w.b if b is None else b
    return np.atleast_2d(np.asarray(w, dtype=float)), b


def _norm_excess(spec, rho, b):
    bias_sq = float(b @ b) if (spec.bias and b is not None) else 0.0
    return rho + bias_sq - spec.target


def effective_loss(spec: LossSpec, cov: CovarianceModel, w, b=None) -> float:
    w, b = _unpack(w, b)
    if spec.kappa is not None and math.isinf(spec.kappa):
        raise UnsupportedInfiniteKappa("loss is undefined at kappa=inf; use solver.normalized_limit")
    bm = hessian_b(spec, cov)
    p = w @ cov.sigma @ w.T
    loss = -np.trace(w @ bm @ w.T) + np.sum(p * p)
    if spec.normalized:
        loss += spec.kappa * _norm_excess(spec, np.trace(p), b) ** 2
    return float(loss)


def effective_grad(spec: LossSpec, cov: CovarianceModel, w, b=None):
    """Gradient of ``effective_loss`` with respect to ``W``.

    When a bias vector is passed the pair ``(dW, db)`` is returned; the bias
    only enters through the normalization term.
    """
    w, b_vec = _unpack(w, b)
    if spec.kappa is not None and math.isinf(spec.kappa):
        raise UnsupportedInfiniteKappa("gradient is undefined at kappa=inf")
    bm = hessian_b(spec, cov)
    s = cov.sigma
    ws = w @ s
    g = -2.0 * w @ bm + 4.0 * (ws @ w.T) @ ws
    gb = None if b_vec is None else np.zeros_like(b_vec)
    if spec.normalized:
        excess = _norm_excess(spec, np.trace(ws @ w.T), b_vec)
        g = g + 4.0 * spec.kappa * excess * ws
        if b_vec is not None and spec.bias:
            gb = 4.0 * spec.kappa * excess * b_vec
    return g if b_vec is None else (g, gb)


def effective_quadratic_and_quartic(bm, sigma, w) -> tuple[float, float]:
    w = np.atleast_2d(w)
    p = w @ sigma @ w.T
    return float(-np.trace(w @ bm @ w.T)), float(np.sum(p * p))


# ---------------------------------------------------------------------------
# Monte-Carlo estimators of the finite-sample loss


def _weights_of(spec: LossSpec) -> tuple[float, float]:
    if spec.family not in SAMPLE_FAMILIES:
        raise ValueError(f"no sample estimator for family {spec.family!r}")
    alpha = spec.alpha if spec.family == "weighted_infonce" else 1.0
    beta = spec.beta if spec.family == "beta_infonce" else 1.0
    return alpha, beta


def _points(ds) -> np.ndarray:
    x = ds.points if isinstance(ds, Dataset) else np.atleast_2d(np.asarray(ds, dtype=float))
    if x.shape[0] < 2:
        raise NeedsNegatives("contrastive losses need at least two data points")
    return x


def draw_views(x: np.ndarray, aug: AugmentationSpec, seed: int, k: int):
    """Anchor, positive and negative views for Monte-Carlo draw ``k``."""
    n, d = x.shape
    root = noise_root(aug, d)
    rng = rng_for(seed, 1, k)
    anchor = x + rng.standard_normal((n, d)) @ root
    positive = x + rng.standard_normal((n, d)) @ root
    negative = x + rng.standard_normal((n, d)) @ root
    return anchor, positive, negative


def _chunks(n: int):
    step = max(1, min(n, (1 << 21) // max(n, 1)))
    for start in range(0, n, step):
        yield start, min(n, start + step)


def _row_logits(z, zp, zc, lo, hi, log_alpha, keep_dist: bool = True):
    """Logits ``-d_ij / 2`` for anchors lo:hi; the i==j slot holds the positive pair.

    With ``keep_dist=False`` the distance array is reused for the logits and
    ``None`` is returned in its place.
    """
    zi = z[lo:hi]
    d = zi @ zc.T
    d *= -2.0
    d += np.einsum("ij,ij->i", zc, zc)[None, :]
    d += np.einsum("ij,ij->i", zi, zi)[:, None]
    rows = np.arange(hi - lo)
    diff = zi - zp[lo:hi]
    dpos = np.einsum("ij,ij->i", diff, diff)
    d[rows, rows + lo] = dpos
    if keep_dist:
        logits = d * -0.5
    else:
        logits = d
        logits *= -0.5
    logits[rows, rows + lo] += log_alpha
    return logits, (d if keep_dist else None), dpos


def _softmax_(logits):
    """Row softmax computed in place; returns ``(probabilities, log-sum-exp)``."""
    m = logits.max(axis=1)
    logits -= m[:, None]
    np.exp(logits, out=logits)
    s = logits.sum(axis=1)
    logits /= s[:, None]
    return logits, np.log(s) + m


def _draw_value(z, zp, zc, alpha, beta):
    n = z.shape[0]
    log_alpha = math.log(alpha) if alpha > 0 else -np.inf
    total = 0.0
    for lo, hi in _chunks(n):
        logits, _, dpos = _row_logits(z, zp, zc, lo, hi, log_alpha, keep_dist=False)
        m = logits.max(axis=1)
        logits -= m[:, None]
        np.exp(logits, out=logits)
        total += np.sum(0.5 * dpos + beta * (np.log(logits.sum(axis=1)) + m))
    return total / n


def sample_loss(spec: LossSpec, ds, aug: AugmentationSpec, w, mc_draws: int = 1, seed: int = 0,
                *, b=None, control_variate: bool = False) -> MCEstimate:
    """Monte-Carlo estimate of the finite-sample contrastive loss.

    Each draw augments every point three times (anchor, positive, negative
    view) and evaluates, averaged over anchors ``i``::

        1/2 |f(x_i) - f(x_i')|^2
            + beta * log( sum_{j != i} exp(-|f(x_i) - f(chi_j)|^2 / 2)
                          + alpha * exp(-|f(x_i) - f(x_i')|^2 / 2) )

    With ``control_variate=True`` the realized quadratic part of each draw
    is swapped for its exact expectation (see ``sample_hessian_b``); the
    estimator stays unbiased and loses the O(|W|^2) augmentation noise.
    """
    x = _points(ds)
    alpha, beta = _weights_of(spec)
    if mc_draws < 1:
        raise ValueError("mc_draws must be >= 1")
    w, b = _unpack(w, b)
    shift = 0.0 if b is None else b
    values = np.empty(mc_draws)
    for k in range(mc_draws):
        xa, xp, xc = draw_views(x, aug, seed, k)
        values[k] = _draw_value(xa @ w.T + shift, xp @ w.T + shift, xc @ w.T + shift, alpha, beta)
        if control_variate:
            bk = _draw_quadratic(xa, xp, xc, alpha, beta)
            values[k] += np.trace(w @ bk @ w.T)
    if control_variate:
        values -= np.trace(w @ sample_hessian_b(spec, ds, aug) @ w.T)
    err = float(np.std(values, ddof=1) / math.sqrt(mc_draws)) if mc_draws > 1 else 0.0
    return MCEstimate(float(values.mean()), err, values)


def _pair_second_moment(xa, xp, xc, alpha):
    """``sum_i [sum_{j!=i} v_ij v_ij^T + alpha v_pos v_pos^T]`` for one draw."""
    n = xa.shape[0]
    sa, sc = xa.sum(axis=0), xc.sum(axis=0)
    cross = np.outer(sa, sc) - xa.T @ xc
    neg = (n - 1) * (xa.T @ xa + xc.T @ xc) - cross - cross.T
    vpos = xa - xp
    return neg + alpha * vpos.T @ vpos


def _draw_quadratic(xa, xp, xc, alpha, beta):
    """Realized ``B`` of one draw: its loss is ``-Tr[W B W^T] + O(|W|^4)``."""
    n = xa.shape[0]
    vpos = xa - xp
    energy = 0.5 * vpos.T @ vpos / n
    repulsion = 0.5 * _pair_second_moment(xa, xp, xc, alpha) / (n * (n - 1 + alpha))
    return as_sym(beta * repulsion - energy)


def sample_quadratic(spec: LossSpec, ds, aug: AugmentationSpec, mc_draws: int = 1, seed: int = 0):
    """Realized quadratic coefficient averaged over the same draws as ``sample_loss``."""
    x = _points(ds)
    alpha, beta = _weights_of(spec)
    acc = np.zeros((x.shape[1], x.shape[1]))
    for k in range(mc_draws):
        acc += _draw_quadratic(*draw_views(x, aug, seed, k), alpha, beta)
    return as_sym(acc / mc_draws)


def sample_hessian_b(spec: LossSpec, ds, aug: AugmentationSpec) -> np.ndarray:
    """Exact expected quadratic coefficient of the finite-sample loss.

    ``beta * N / (N - 1 + alpha) * (S - m m^T) - (1 - beta) * C`` with ``S``
    the uncentered second moment and ``m`` the mean of the dataset. The
    augmentation covariance cancels between the attraction and repulsion
    terms whenever ``beta = 1``, whatever ``alpha`` is.
    """
    x = _points(ds)
    alpha, beta = _weights_of(spec)
    n, d = x.shape
    m = x.mean(axis=0)
    s = x.T @ x / n
    c = augmentation_cov(aug, d)
    return as_sym(beta * n / (n - 1 + alpha) * (s - np.outer(m, m)) - (1.0 - beta) * c)


def variance_quartic(ds, aug: AugmentationSpec, w, mc_draws: int = 1, seed: int = 0, *,
                     per_anchor: bool = False, alpha: float = 1.0, beta: float = 1.0) -> MCEstimate:
    """Estimate of the quartic term ``(1/8) Var[|W(x - chi)|^2]``.

    By default the variance is taken over independent pairs ``(x, chi)`` of
    augmented points from different data points; for Gaussian data this
    converges to ``Tr[W S W^T W S W^T]``.

    ``per_anchor=True`` instead returns the quartic coefficient of the
    finite-sample loss itself: the weighted variance over each anchor's
    softmax terms, averaged over anchors, on exactly the draws
    ``sample_loss`` uses for the same seed. It omits the between-anchor
    part of the variance, so for Gaussian data it tends to three quarters
    of the pair variance.
    """
    x = _points(ds)
    w = np.atleast_2d(np.asarray(w, dtype=float))
    n, d = x.shape
    values = np.empty(mc_draws)
    if per_anchor:
        log_alpha = math.log(alpha) if alpha > 0 else -np.inf
        for k in range(mc_draws):
            xa, xp, xc = draw_views(x, aug, seed, k)
            z, zp, zc = xa @ w.T, xp @ w.T, xc @ w.T
            tot = 0.0
            for lo, hi in _chunks(n):
                logits, dist, _ = _row_logits(z, zp, zc, lo, hi, log_alpha)
                wts = np.ones_like(dist)
                rows = np.arange(hi - lo)
                wts[rows, rows + lo] = alpha
                wts /= wts.sum(axis=1, keepdims=True)
                mean = np.sum(wts * dist, axis=1)
                var = np.sum(wts * (dist - mean[:, None]) ** 2, axis=1)
                tot += var.sum()
            values[k] = beta * tot / (8.0 * n)
    else:
        root = noise_root(aug, d)
        for k in range(mc_draws):
            rng = rng_for(seed, 2, k)
            partner = (np.arange(n) + rng.integers(1, n, size=n)) % n
            xa = x + rng.standard_normal((n, d)) @ root
            xc = x[partner] + rng.standard_normal((n, d)) @ root
            dist = np.sum(((xa - xc) @ w.T) ** 2, axis=1)
            values[k] = np.var(dist) / 8.0
    err = float(np.std(values, ddof=1) / math.sqrt(mc_draws)) if mc_draws > 1 else 0.0
    return MCEstimate(float(values.mean()), err, values)


class SampleObjective:
    """Finite-sample loss on a frozen set of augmentation draws.

    Used by the trainer: the draws are fixed at construction so the
    objective is deterministic. ``first_draw`` picks which block of draw
    substreams is used, so a trainer can step through fresh draws.
    """

    def __init__(self, spec: LossSpec, ds, aug: AugmentationSpec, mc_draws: int = 1,
                 seed: int = 0, control_variate: bool = True, first_draw: int = 0, exact_b=None):
        self.spec = spec
        self.x = _points(ds)
        self.alpha, self.beta = _weights_of(spec)
        self.views = [draw_views(self.x, aug, seed, k) for k in range(first_draw, first_draw + mc_draws)]
        self.control_variate = control_variate
        self.cv_matrix = None
        if control_variate:
            if exact_b is None:
                exact_b = sample_hessian_b(spec, ds, aug)
            realized = sum(_draw_quadratic(*v, self.alpha, self.beta) for v in self.views) / mc_draws
            self.cv_matrix = as_sym(realized - exact_b)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def value(self, w) -> float:
        w = np.atleast_2d(w)
        vals = [_draw_value(xa @ w.T, xp @ w.T, xc @ w.T, self.alpha, self.beta)
                for xa, xp, xc in self.views]
        out = float(np.mean(vals))
        if self.cv_matrix is not None:
            out += float(np.trace(w @ self.cv_matrix @ w.T))
        return out

    def grad(self, w) -> np.ndarray:
        w = np.atleast_2d(w)
        alpha, beta = self.alpha, self.beta
        log_alpha = math.log(alpha) if alpha > 0 else -np.inf
        m = np.zeros((self.dim, self.dim))
        for xa, xp, xc in self.views:
            n = xa.shape[0]
            z, zp, zc = xa @ w.T, xp @ w.T, xc @ w.T
            vpos = xa - xp
            acc = vpos.T @ vpos
            rep = np.zeros_like(acc)
            for lo, hi in _chunks(n):
                logits, _, _ = _row_logits(z, zp, zc, lo, hi, log_alpha, keep_dist=False)
                p, _ = _softmax_(logits)
                rows = np.arange(hi - lo)
                p_pos = p[rows, rows + lo].copy()
                p[rows, rows + lo] = 0.0
                xi = xa[lo:hi]
                r = p.sum(axis=1)
                xpc = xi.T @ p @ xc
                rep += (xi * r[:, None]).T @ xi - xpc - xpc.T + (xc * p.sum(axis=0)[:, None]).T @ xc
                vp = vpos[lo:hi]
                rep += (vp * p_pos[:, None]).T @ vp
            m += (acc - beta * rep) / n
        g = w @ (m / len(self.views))
        if self.cv_matrix is not None:
            g = g + 2.0 * w @ self.cv_matrix
        return g
