import math

import numpy as np
import pytest
from conftest import FAMILIES, commuting_instance, random_rotation, random_spec

from collapselab.datamodel import (
    AugmentationSpec,
    CovarianceModel,
    empirical_cov,
    sample_gaussian,
)
from collapselab.errors import NeedsNegatives, UnsupportedInfiniteKappa
from collapselab.losses import (
    LossSpec,
    SampleObjective,
    Weights,
    effective_grad,
    effective_loss,
    hessian_b,
    sample_hessian_b,
    sample_loss,
    sample_quadratic,
    variance_quartic,
)


def _diag_cov(a, c):
    return CovarianceModel.diagonal(a, c)


def test_hessian_b_families():
    cov = _diag_cov([1.0, 2.0], [0.5, 4.0])
    np.testing.assert_array_equal(hessian_b(LossSpec("infonce"), cov), cov.a0)
    np.testing.assert_allclose(hessian_b(LossSpec("weighted_infonce", alpha=1.0, n=10), cov), cov.a0)
    np.testing.assert_allclose(hessian_b(LossSpec("weighted_infonce", alpha=0.5, n=10), cov),
                               cov.a0 - 0.05 * cov.c)
    np.testing.assert_allclose(hessian_b(LossSpec("spectral_contrastive"), cov), 2 * cov.c)
    np.testing.assert_allclose(hessian_b(LossSpec("barlow_twins"), cov), 2 * cov.sigma)
    np.testing.assert_allclose(hessian_b(LossSpec("infonce", weight_decay=0.3), cov), cov.a0 - 0.3 * np.eye(2))
    bm = np.array([[1.0, 0.2], [0.2, -1.0]])
    np.testing.assert_allclose(hessian_b(LossSpec("effective_quartic", b=bm), cov), bm)


def test_beta_infonce_plug_in():
    cov = _diag_cov([1.0, 1.0], [0.0, 4.0])
    np.testing.assert_allclose(hessian_b(LossSpec("beta_infonce", beta=0.5), cov), np.diag([1.0, -1.0]))


def test_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("weighted_infonce", alpha=0.1)
    with pytest.raises(ValueError):
        LossSpec("effective_quartic")
    with pytest.raises(ValueError):
        LossSpec("nope")
    with pytest.raises(ValueError):
        Weights(np.array([[np.inf]]))


def test_effective_loss_examples():
    cov = _diag_cov([1.0, 2.0], [0.5, 0.5])
    w0 = np.zeros((2, 2))
    assert effective_loss(LossSpec(), cov, w0) == 0.0
    assert effective_loss(LossSpec(kappa=1.0, target=1.0), cov, w0) == 1.0
    scalar = _diag_cov([1.0], [0.0])
    assert abs(effective_loss(LossSpec(), scalar, [[math.sqrt(0.5)]]) + 0.25) < 1e-15
    grid = np.linspace(-2, 2, 4001)
    vals = [effective_loss(LossSpec(), scalar, [[w]]) for w in grid]
    assert abs(grid[int(np.argmin(vals))] ** 2 - 0.5) < 2e-3
    assert abs(min(vals) + 0.25) < 1e-6


def test_infinite_kappa_rejected():
    cov = _diag_cov([1.0], [0.0])
    spec = LossSpec(kappa=math.inf)
    with pytest.raises(UnsupportedInfiniteKappa):
        effective_loss(spec, cov, [[0.1]])
    with pytest.raises(UnsupportedInfiniteKappa):
        effective_grad(spec, cov, [[0.1]])


def test_grad_zero_at_origin():
    cov = _diag_cov([1.0, 2.0], [0.5, 0.5])
    assert np.all(effective_grad(LossSpec(), cov, np.zeros((3, 2))) == 0)


def _fd_grad(f, w, h=1e-5):
    g = np.zeros_like(w)
    for idx in np.ndindex(*w.shape):
        e = np.zeros_like(w)
        e[idx] = h
        g[idx] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    worst = 0.0
    for k in range(100):
        d0 = int(rng.integers(1, 5))
        d1 = int(rng.integers(1, 5))
        cov = commuting_instance(rng, d0)
        fam = FAMILIES[k % len(FAMILIES)]
        spec = random_spec(rng, fam, d0)
        if k % 3 == 0:
            spec = spec.with_(kappa=float(rng.uniform(0.1, 5)), target=float(rng.uniform(0.2, 2)),
                              weight_decay=float(rng.uniform(0, 0.5)))
        w = rng.standard_normal((d1, d0)) * 0.5
        g = effective_grad(spec, cov, w)
        fd = _fd_grad(lambda x: effective_loss(spec, cov, x), w)
        worst = max(worst, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))))
    assert worst <= 1e-5


def test_bias_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    cov = commuting_instance(rng, 3)
    spec = LossSpec(kappa=2.0, target=1.5, bias=True)
    w = rng.standard_normal((2, 3)) * 0.4
    b = rng.standard_normal(2) * 0.3
    g, gb = effective_grad(spec, cov, w, b)
    fd_b = _fd_grad(lambda x: effective_loss(spec, cov, w, x[0]), b[None, :])[0]
    np.testing.assert_allclose(gb, fd_b, atol=1e-7)
    np.testing.assert_allclose(g, _fd_grad(lambda x: effective_loss(spec, cov, x, b), w), atol=1e-7)


def test_rotation_and_sign_symmetry():
    rng = np.random.default_rng(3)
    for fam in FAMILIES:
        cov = commuting_instance(rng, 4)
        spec = random_spec(rng, fam, 4).with_(kappa=1.0)
        w = rng.standard_normal((3, 4))
        r = random_rotation(rng, 3)
        base = effective_loss(spec, cov, w)
        assert abs(effective_loss(spec, cov, r @ w) - base) <= 1e-10 * max(1.0, abs(base))
        assert effective_loss(spec, cov, -w) == base


def test_sample_loss_at_origin():
    ds = sample_gaussian(3, 20, np.eye(3), 0)
    aug = AugmentationSpec.isotropic(0.5)
    w0 = np.zeros((2, 3))
    assert abs(sample_loss(LossSpec(), ds, aug, w0).value - math.log(20)) < 1e-12
    spec = LossSpec("weighted_infonce", alpha=0.0, n=20)
    assert abs(sample_loss(spec, ds, aug, w0).value - math.log(19)) < 1e-12


def test_sample_loss_needs_negatives():
    with pytest.raises(NeedsNegatives):
        sample_loss(LossSpec(), np.ones((1, 2)), AugmentationSpec.isotropic(0.1), np.eye(2))


def test_sample_loss_translation_invariance():
    ds = sample_gaussian(3, 30, np.eye(3), 1)
    aug = AugmentationSpec.isotropic(0.3)
    w = np.random.default_rng(0).standard_normal((2, 3))
    a = sample_loss(LossSpec(), ds, aug, w, mc_draws=2).value
    b = sample_loss(LossSpec(), ds, aug, w, mc_draws=2, b=np.array([5.0, -3.0])).value
    assert abs(a - b) < 1e-10


def test_sample_loss_reports_stderr():
    ds = sample_gaussian(2, 40, np.eye(2), 1)
    est = sample_loss(LossSpec(), ds, AugmentationSpec.isotropic(0.5), 0.3 * np.eye(2), mc_draws=8)
    assert est.stderr > 0 and est.draws.shape == (8,)
    assert abs(float(est) - est.draws.mean()) < 1e-15


def test_sample_hessian_b_matches_realized_mean():
    # the realized quadratic of many draws tends to its exact expectation
    ds = sample_gaussian(2, 64, np.diag([1.0, 0.5]), 2)
    aug = AugmentationSpec.diagonal([0.3, 1.0])
    for spec in (LossSpec(), LossSpec("beta_infonce", beta=0.6), LossSpec("weighted_infonce", alpha=0.2, n=64)):
        exact = sample_hessian_b(spec, ds, aug)
        real = sample_quadratic(spec, ds, aug, mc_draws=400, seed=3)
        assert np.max(np.abs(real - exact)) < 0.05


def test_control_variate_is_unbiased_at_origin_scale():
    ds = sample_gaussian(3, 50, np.eye(3), 4)
    aug = AugmentationSpec.isotropic(1.0)
    w = 0.05 * np.random.default_rng(1).standard_normal((3, 3))
    plain = sample_loss(LossSpec(), ds, aug, w, mc_draws=200, seed=1)
    cv = sample_loss(LossSpec(), ds, aug, w, mc_draws=200, seed=1, control_variate=True)
    assert cv.stderr < plain.stderr
    assert abs(cv.value - plain.value) < 3 * math.hypot(cv.stderr, plain.stderr)


def test_sample_objective_gradient():
    ds = sample_gaussian(3, 25, np.eye(3), 5)
    aug = AugmentationSpec.isotropic(0.5)
    for cv in (False, True):
        obj = SampleObjective(LossSpec("beta_infonce", beta=0.7), ds, aug, mc_draws=2, seed=0, control_variate=cv)
        w = 0.3 * np.random.default_rng(2).standard_normal((2, 3))
        np.testing.assert_allclose(obj.grad(w), _fd_grad(obj.value, w, 1e-6), atol=1e-6)


def test_variance_quartic_origin():
    ds = sample_gaussian(2, 10, np.eye(2), 0)
    assert variance_quartic(ds, AugmentationSpec.isotropic(1.0), np.zeros((1, 2))).value == 0.0


def test_variance_quartic_rank_one():
    # Var[z^2] = 2 Var[z]^2 with Var[z] = 2 w S w^T, so Var/8 = (w S w^T)^2
    ds = sample_gaussian(3, 4096, np.eye(3), 0)
    aug = AugmentationSpec.isotropic(0.5)
    w = np.array([[0.3, -0.2, 0.5]])
    est = variance_quartic(ds, aug, w, mc_draws=32, seed=1)
    s = empirical_cov(ds) + 0.25 * np.eye(3)
    expected = float((w @ s @ w.T)[0, 0]) ** 2
    assert abs(est.value - expected) < 3 * est.stderr + 1e-3 * expected


def test_variance_quartic_matrix_form():
    ds = sample_gaussian(3, 4096, np.diag([1.0, 0.6, 0.3]), 1)
    aug = AugmentationSpec.isotropic(0.4)
    w = np.random.default_rng(4).standard_normal((2, 3)) * 0.5
    est = variance_quartic(ds, aug, w, mc_draws=64, seed=2)
    s = empirical_cov(ds) + 0.16 * np.eye(3)
    p = w @ s @ w.T
    assert abs(est.value - np.sum(p * p)) < 3 * est.stderr + 1e-3 * np.sum(p * p)


def test_per_anchor_quartic_is_three_quarters():
    # the softmax variance is taken per anchor, which drops the between-anchor
    # part of Var|W(x - chi)|^2: 2 Tr[P^2] + 4 Tr[P^2] out of 8 Tr[P^2]
    ds = sample_gaussian(3, 2048, np.diag([1.0, 0.7, 0.4]), 2)
    aug = AugmentationSpec.isotropic(0.5)
    w = np.random.default_rng(5).standard_normal((2, 3)) * 0.3
    est = variance_quartic(ds, aug, w, mc_draws=16, seed=0, per_anchor=True)
    s = empirical_cov(ds) + 0.25 * np.eye(3)
    p = w @ s @ w.T
    assert abs(est.value / np.sum(p * p) - 0.75) < 0.03
