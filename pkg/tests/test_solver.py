import math

import numpy as np
import pytest
from conftest import FAMILIES, commuting_instance, random_spec

from collapselab.datamodel import CovarianceModel
from collapselab.errors import EmptyMask, SingularSigma
from collapselab.losses import LossSpec, effective_grad, effective_loss, hessian_b
from collapselab.solver import (
    appendix_c_cases,
    bias_constrained_solutions,
    bias_vector,
    global_minimum,
    gram_commuting_route,
    gram_general_route,
    mode_basis,
    normalized_limit,
    normalized_solution_finite_kappa,
    predict_collapse,
    shifted_verdicts,
    stationary_points,
)
from collapselab.spectra import lift

diag = CovarianceModel.diagonal


def test_scalar_stationary_point():
    pts = stationary_points(LossSpec(), diag([1.0], [1.0]))
    nonempty = [p for p in pts if p.d_m == 1]
    assert len(nonempty) == 1
    assert abs(nonempty[0].wtw[0, 0] - 0.125) < 1e-15


def test_negative_b_only_origin():
    spec = LossSpec("effective_quartic", b=-np.diag([1.0, 2.0]))
    pts = stationary_points(spec, diag([1.0, 1.0], [0.0, 0.0]))
    assert len(pts) == 1 and pts[0].d_m == 0
    assert np.all(pts[0].wtw == 0)
    gm = global_minimum(spec, diag([1.0, 1.0], [0.0, 0.0]))
    assert gm.loss_value == 0.0 and gm.is_local_min


def test_rank_limited_global_minimum():
    cov = diag([2.0, 1.0], [0.0, 0.0])
    pts = stationary_points(LossSpec(), cov, d1=1)
    assert max(p.d_m for p in pts) == 1
    gm = global_minimum(LossSpec(), cov, d1=1)
    np.testing.assert_allclose(gm.wtw, np.diag([0.25, 0.0]), atol=1e-15)


def test_global_minimum_examples():
    cov = diag([1.0, 1.0], [0.0, 4.0])
    np.testing.assert_allclose(global_minimum(LossSpec(), cov).wtw, np.diag([0.5, 1 / 50]), atol=1e-15)
    gm = global_minimum(LossSpec("beta_infonce", beta=0.5), cov)
    np.testing.assert_allclose(gm.wtw, np.diag([0.5, 0.0]), atol=1e-15)
    assert gm.rank == 1


def test_singular_sigma():
    with pytest.raises(SingularSigma):
        stationary_points(LossSpec(), diag([1.0, 0.0], [0.0, 0.0]))


def test_stationary_points_are_stationary():
    rng = np.random.default_rng(7)
    for k in range(30):
        d = int(rng.integers(1, 5))
        cov = commuting_instance(rng, d)
        spec = random_spec(rng, FAMILIES[k % len(FAMILIES)], d, cov)
        for p in stationary_points(spec, cov):
            w = lift(p.wtw, d)
            assert np.max(np.abs(effective_grad(spec, cov, w))) < 1e-8
            assert abs(effective_loss(spec, cov, w) - p.loss_value) < 1e-9 * (1 + abs(p.loss_value))
            assert np.linalg.eigvalsh(p.wtw).min() >= -1e-10
            assert p.rank == p.d_m == int(np.sum(np.linalg.eigvalsh(p.wtw) > 1e-10))


def test_global_minimum_is_lowest():
    rng = np.random.default_rng(8)
    for k in range(20):
        cov = commuting_instance(rng, 4)
        spec = random_spec(rng, FAMILIES[k % len(FAMILIES)], 4, cov)
        gm = global_minimum(spec, cov)
        assert all(gm.loss_value <= p.loss_value + 1e-12 for p in stationary_points(spec, cov))


def test_general_route_is_stationary():
    # non-commuting A0 and C still give zero-gradient points
    rng = np.random.default_rng(9)
    m = rng.standard_normal((3, 3))
    cov = CovarianceModel(np.diag([2.0, 1.0, 0.5]), m @ m.T * 0.3)
    assert not cov.commuting
    for p in stationary_points(LossSpec("beta_infonce", beta=0.3), cov):
        assert np.max(np.abs(effective_grad(LossSpec("beta_infonce", beta=0.3), cov, lift(p.wtw, 3)))) < 1e-8


def test_routes_agree_when_commuting():
    rng = np.random.default_rng(10)
    for _ in range(10):
        cov = commuting_instance(rng, 4)
        spec = LossSpec("beta_infonce", beta=float(rng.uniform(0, 1)))
        b = hessian_b(spec, cov)
        basis = mode_basis(b, cov)
        mask = basis.positive
        np.testing.assert_allclose(gram_general_route(b, cov.sigma, mask), gram_commuting_route(b, cov.sigma, mask),
                                   atol=1e-9)


def test_predict_collapse_examples():
    rng = np.random.default_rng(11)
    for _ in range(20):
        cov = commuting_instance(rng, 4)
        assert not predict_collapse(LossSpec(), cov).collapsed.any()
        c_pos = CovarianceModel(cov.a0, cov.c + 0.1 * np.eye(4))
        assert not predict_collapse(LossSpec("spectral_contrastive"), c_pos).collapsed.any()
    cov = diag([1.0], [25.0])
    assert predict_collapse(LossSpec("weighted_infonce", alpha=0.1, n=20), cov).complete_collapse
    assert not predict_collapse(LossSpec("weighted_infonce", alpha=0.1, n=23), cov).collapsed.any()


def test_report_flags():
    rep = predict_collapse(LossSpec("beta_infonce", beta=0.5), diag([1.0, 1.0, 1.0], [0.0, 2.0, 4.0]))
    assert rep.dimensional_collapse and not rep.complete_collapse
    assert list(rep.collapsed) == [False, True, True]
    rep = predict_collapse(LossSpec("beta_infonce", beta=0.0), diag([1.0, 1.0], [2.0, 4.0]))
    assert rep.complete_collapse and not rep.dimensional_collapse


def test_boundary_mode_collapses():
    # (1 - beta) c = a exactly counts as collapsed
    rep = predict_collapse(LossSpec("beta_infonce", beta=0.5), diag([1.0], [2.0]))
    assert rep.complete_collapse


def test_collapse_monotone_in_c():
    rng = np.random.default_rng(12)
    for _ in range(20):
        a = rng.uniform(0.2, 2, 4)
        c = rng.uniform(0, 4, 4)
        spec = LossSpec("weighted_infonce", alpha=0.2, n=3)
        before = predict_collapse(spec, diag(a, c)).collapsed
        c2 = c + rng.uniform(0, 2, 4)
        after = predict_collapse(spec, diag(a, c2)).collapsed
        assert np.all(after[before])


def test_normalized_limit_examples():
    spec = LossSpec(kappa=math.inf, target=1.0)
    sol = normalized_limit(spec, diag([1.0, 1.0], [0.0, 0.0]), [1, 1])
    np.testing.assert_allclose(sol.wtw, 0.5 * np.eye(2), atol=1e-15)
    assert abs(sol.rho - 1.0) < 1e-12 and sol.feasible
    with pytest.raises(EmptyMask):
        normalized_limit(spec, diag([1.0, 1.0], [0.0, 0.0]), [0, 0])


def test_normalized_limit_shifted_example():
    # lam = (a - c)/(a + c) = (1, -0.8), mean 0.1, 2c/d_M = 1
    spec = LossSpec("beta_infonce", beta=0.0, kappa=math.inf, target=1.0)
    cov = diag([1.0, 1.0], [0.0, 9.0])
    sol = normalized_limit(spec, cov, [1, 1])
    # shifted modes lam + (2c - sum(lam)) / d_M
    np.testing.assert_allclose(np.sort(sol.shifted_lam)[::-1], [1.9, 0.1], atol=1e-12)
    assert sol.feasible
    assert abs(np.trace(sol.wtw @ cov.sigma) - 1.0) < 1e-8
    assert shifted_verdicts(np.array([1.0, -0.8]), np.array([True, True]), 1.0).all()


def test_single_strong_mode_needs_dm_one():
    spec = LossSpec("beta_infonce", beta=0.0, kappa=math.inf, target=1.0)
    cov = diag([1.0, 1.0, 1.0], [0.0, 0.0, 1e4])
    sol = normalized_limit(spec, cov, [1, 1, 1])
    assert not sol.feasible
    only = normalized_limit(spec, diag([1.0], [1e4]), [1])
    assert only.feasible


def test_finite_kappa_stationary_and_converges():
    spec = LossSpec("beta_infonce", beta=0.5, target=1.0)
    cov = diag([1.0, 0.8, 0.6], [0.1, 0.2, 0.3])
    limit = normalized_limit(spec.with_(kappa=math.inf), cov, [1, 1, 1])
    errs = []
    for kappa in (1e2, 1e3, 1e4):
        sols = normalized_solution_finite_kappa(spec.with_(kappa=kappa), cov)
        for s in sols:
            w = lift(s.wtw, 3)
            g = effective_grad(spec.with_(kappa=kappa), cov, w)
            assert np.max(np.abs(g)) < 1e-7
        full = [s for s in sols if s.d_m == 3]
        errs.append(np.max(np.abs(full[0].wtw - limit.wtw)))
    assert errs[1] <= errs[0] / 10 * 1.5 and errs[2] <= errs[1] / 10 * 1.5


def test_finite_kappa_weak_normalization_collapses():
    # B negative definite plus a weak regularizer: only the origin
    spec = LossSpec("effective_quartic", b=-np.diag([1.0, 2.0]), kappa=1e-3, target=1.0)
    sols = normalized_solution_finite_kappa(spec, diag([1.0, 2.0], [0.0, 0.0]))
    assert all(s.d_m == 0 for s in sols)


def test_finite_kappa_neutral_target():
    cov = diag([1.0, 2.0], [0.5, 0.5])
    base = global_minimum(LossSpec(), cov)
    target = base.rho  # = 1/2 Tr[S^-1 B_M]
    for kappa in (0.5, 50.0):
        sols = normalized_solution_finite_kappa(LossSpec(kappa=kappa, target=target), cov)
        full = [s for s in sols if s.d_m == 2][0]
        assert abs(full.rho - target) < 1e-12
        np.testing.assert_allclose(full.wtw, base.wtw, atol=1e-12)


def test_bias_constrained():
    a = np.linspace(1.0, 2.0, 8)
    cov = diag(a, 1e-3 * a)
    res = bias_constrained_solutions(LossSpec("beta_infonce", beta=0.0, kappa=1.0, target=1.0, bias=True), cov)
    assert res.max_d_m <= 2
    for p in res.solutions:
        b = bias_vector(p, 1.0, 8)
        spec = LossSpec("beta_infonce", beta=0.0, kappa=1.0, target=1.0, bias=True)
        g, gb = effective_grad(spec, cov, lift(p.wtw, 8), b)
        assert np.max(np.abs(g)) < 1e-8 and np.max(np.abs(gb)) < 1e-8


def test_bias_constraint_inactive_for_large_target():
    cov = diag([1.0, 2.0, 3.0], [0.1, 0.1, 0.1])
    spec = LossSpec(kappa=1.0, target=100.0, bias=True)
    res = bias_constrained_solutions(spec, cov)
    assert len(res.solutions) == len(stationary_points(LossSpec(), cov))


def test_complete_collapse_flag():
    cov = diag([1.0] * 4, [0.5] * 4)
    spec = LossSpec("beta_infonce", beta=0.0, kappa=1.0, target=0.2, bias=True)
    assert bias_constrained_solutions(spec, cov).complete_collapse_possible
    spec = spec.with_(target=0.5)
    assert not bias_constrained_solutions(spec, cov).complete_collapse_possible


def test_case_analysis_small_and_strong():
    cases = {c.name: c for c in appendix_c_cases(diag([1.0, 2.0, 3.0], [1e-6, 2e-6, 3e-6]))}
    assert cases["small_augmentation"].applies and cases["small_augmentation"].passed
    assert not cases["small_augmentation"].shifted_collapse.any()
    cases = {c.name: c for c in appendix_c_cases(diag([1.0, 1.0, 1.0], [0.0, 1e4, 0.0]))}
    s = cases["strong_single_mode"]
    assert s.applies and s.passed
    assert list(s.shifted_collapse) == [False, True, False]


def test_case_analysis_weak_mode():
    # d_M = 4, a = 1 everywhere, mode 0 with c = 1 - eps
    eps = 0.1
    cases = {c.name: c for c in appendix_c_cases(diag([1.0] * 4, [1.0 - eps, 0, 0, 0]))}
    w = cases["weak_single_mode"]
    assert w.applies and w.passed
    # eps/(a+c) = 0.0526 <= (4 - 1 - 2)/3 = 1/3 -> collapses
    assert w.shifted_collapse[0]
    assert "printed_threshold" in w.detail
