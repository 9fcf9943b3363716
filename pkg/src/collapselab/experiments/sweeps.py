"""Scripted sweeps: every experiment returns a filled ``SweepGrid``.

Each sweep has an ``analytic`` mode (solver formulas) and, where it makes
sense, a ``trained`` mode that runs the trainer on the same instance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..datamodel import (
    AugmentationSpec,
    CovarianceModel,
    ImbalanceSpec,
    covariance_model,
    imbalanced_cov,
    rng_for,
    sample_gaussian,
)
from ..losses import LossSpec, effective_loss, hessian_b
from ..solver import (
    best_normalized_limit,
    global_minimum,
    mode_basis,
    predict_collapse,
    shifted_verdicts,
)
from ..spectra import as_sym, eig_sym, lift, mat_pow, principal_angle
from ..trainer import ClosedForm, Samples, TrainConfig, train
from .grid import Axis, SweepGrid

TRAINED_REL = 1e-4
TRAINED_ABS = 1e-8
PATTERNS = ("none", "mode-1 only", "mode-2 only", "complete")


def _map(fn, items, threads: int = 1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _a0_matrix(a0) -> np.ndarray:
    a = np.asarray(a0, dtype=float)
    return np.diag(a) if a.ndim == 1 else as_sym(a)


def _smallest(vals, k=3) -> np.ndarray:
    v = np.sort(np.asarray(vals, dtype=float))
    out = np.full(k, np.nan)
    out[: min(k, v.size)] = v[:k]
    return out


def trained_collapsed(eigs) -> np.ndarray:
    """Collapse flags for trained eigenvalues: below 1e-4 of the largest (or 1e-8)."""
    eigs = np.asarray(eigs, dtype=float)
    thr = max(TRAINED_REL * float(np.max(eigs, initial=0.0)), TRAINED_ABS)
    return eigs < thr


def _loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


# ---------------------------------------------------------------------------


def sigma_scaling(a0, sigmas, mode: str = "analytic", train_config: TrainConfig | None = None,
                  d1: int | None = None, threads: int = 1) -> SweepGrid:
    """Three smallest eigenvalues of the InfoNCE solution versus isotropic noise strength."""
    a0m = _a0_matrix(a0)
    d0 = a0m.shape[0]
    d1 = d0 if d1 is None else d1
    a = np.array(eig_sym(a0m).eigenvalues)
    spec = LossSpec("infonce")
    cols = ["eig_0", "eig_1", "eig_2", "closed_0", "closed_1", "closed_2"]
    grid = SweepGrid("sigma_scaling", [Axis("sigma", sigmas)], cols)

    def cell(i):
        s = float(grid.axes[0].values[i])
        cov = covariance_model(a0m, AugmentationSpec.isotropic(s))
        if mode == "trained":
            eig = train(spec, ClosedForm(cov), d1, train_config or TrainConfig()).eigenvalues
        else:
            eig = np.array(global_minimum(spec, cov, d1).eigenvalues)
        closed = np.sort(0.5 * a / (a + s * s) ** 2)[::-1][: min(d0, d1)]
        e, c = _smallest(eig), _smallest(closed)
        return {"eig_0": e[0], "eig_1": e[1], "eig_2": e[2],
                "closed_0": c[0], "closed_1": c[1], "closed_2": c[2]}

    for i, rec in enumerate(_map(cell, range(len(grid.axes[0])), threads)):
        grid.set((i,), rec)
    s = grid.axes[0].values
    top = s >= s.max() / 10.0
    e0 = grid.column("eig_0")
    grid.summary = {
        "mode": mode,
        "slope_top_decade": _loglog_slope(s[top], e0[top]),
        "all_positive": bool(np.all(e0 > 0)),
        "max_rel_err_closed": float(np.nanmax(np.abs(e0 - grid.column("closed_0")) / grid.column("closed_0"))),
    }
    return grid


def critical_n_sweep(alpha: float, sigma: float, a0, ns, mode: str = "analytic",
                     train_config: TrainConfig | None = None, mc_draws: int = 1, seed: int = 0,
                     threads: int = 1, resample: bool = True) -> SweepGrid:
    """Weighted InfoNCE solution and collapse verdict versus dataset size ``N``.

    Trained mode draws fresh augmentations every step by default; with
    frozen draws a small-``N`` run can leave the neighbourhood of the origin.
    """
    a0m = _a0_matrix(a0)
    d0 = a0m.shape[0]
    aug = AugmentationSpec.isotropic(sigma)
    cov = covariance_model(a0m, aug)
    cols = ["b_min", "predicted_collapse", "n_collapsed", "eig_0", "eig_1", "eig_2"]
    if mode == "trained":
        cols += ["trained_0", "trained_1", "trained_2", "trained_max", "trained_collapse"]
    grid = SweepGrid("critical_n_sweep", [Axis("n", ns)], cols)

    def cell(i):
        n = int(round(grid.axes[0].values[i]))
        spec = LossSpec("weighted_infonce", alpha=alpha, n=n)
        rep = predict_collapse(spec, cov)
        b = np.array([m.b for m in rep.modes])
        e = _smallest(global_minimum(spec, cov, d0).eigenvalues)
        rec = {"b_min": float(b.min()), "predicted_collapse": bool(rep.collapsed.any()),
               "n_collapsed": int(rep.collapsed.sum()), "eig_0": e[0], "eig_1": e[1], "eig_2": e[2]}
        if mode == "trained":
            ds = sample_gaussian(d0, n, a0m, seed)
            src = Samples(ds, aug, mc_draws, seed, resample=resample)
            eig = train(spec, src, d0, train_config or TrainConfig()).eigenvalues
            t = _smallest(eig)
            rec.update({"trained_0": t[0], "trained_1": t[1], "trained_2": t[2],
                        "trained_max": float(eig.max()), "trained_collapse": bool(trained_collapsed(eig).any())})
        return rec

    for i, rec in enumerate(_map(cell, range(len(grid.axes[0])), threads)):
        grid.set((i,), rec)
    nv = grid.axes[0].values
    pred = grid.column("predicted_collapse").astype(bool)
    flips = [(float(nv[i]), float(nv[i + 1])) for i in range(len(nv) - 1) if pred[i] != pred[i + 1]]
    a_min = float(eig_sym(a0m).eigenvalues[-1])
    grid.summary = {
        "mode": mode,
        "flips": flips,
        "n_star_main_text": (1.0 - alpha) * sigma**2 / a_min,
        "n_crit_reciprocal_form": a_min / (sigma**2 * (1.0 - alpha)) if alpha < 1 else math.inf,
    }
    if mode == "trained":
        grid.summary["trained_matches_verdict"] = bool(
            np.array_equal(pred, grid.column("trained_collapse").astype(bool)))
    return grid


def beta_collapse_sweep(a, c, values, over: str = "beta", beta: float = 0.5, mode: str = "analytic",
                        train_config: TrainConfig | None = None, threads: int = 1) -> SweepGrid:
    """Per-mode solution of beta-InfoNCE over a ``beta`` or noise-scale axis.

    ``over="beta"`` sweeps beta with ``C = diag(c)``; ``over="sigma"`` keeps
    ``beta`` fixed and uses ``C = sigma^2 diag(c)``.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    d0 = a.size
    cols = [f"mode_{i}" for i in range(d0)] + [f"collapsed_{i}" for i in range(d0)]
    cols += [f"margin_{i}" for i in range(d0)]
    if mode == "trained":
        cols += [f"trained_{i}" for i in range(d0)] + [f"trained_collapsed_{i}" for i in range(d0)]
    if over not in ("beta", "sigma"):
        raise ValueError("over must be 'beta' or 'sigma'")
    grid = SweepGrid("beta_collapse_sweep", [Axis(over, values)], cols)

    def instance(v):
        if over == "beta":
            return LossSpec("beta_infonce", beta=v), CovarianceModel.diagonal(a, c)
        return LossSpec("beta_infonce", beta=beta), CovarianceModel.diagonal(a, v * v * c)

    def cell(i):
        v = float(grid.axes[0].values[i])
        spec, cov = instance(v)
        gm = global_minimum(spec, cov, d0)
        per_mode = np.diag(gm.wtw)
        rep = predict_collapse(spec, cov)
        rec = {}
        for k in range(d0):
            rec[f"mode_{k}"] = float(per_mode[k])
            rec[f"collapsed_{k}"] = bool(rep.modes[k].collapses)
            rec[f"margin_{k}"] = float((1.0 - spec.beta) * np.diag(cov.c)[k] - a[k])
        if mode == "trained":
            rt = train(spec, ClosedForm(cov), d0, train_config or TrainConfig())
            tm = np.diag(rt.wtw)
            flags = trained_collapsed(tm)
            for k in range(d0):
                rec[f"trained_{k}"] = float(tm[k])
                rec[f"trained_collapsed_{k}"] = bool(flags[k])
        return rec

    for i, rec in enumerate(_map(cell, range(len(grid.axes[0])), threads)):
        grid.set((i,), rec)
    summary = {"mode": mode, "over": over}
    vals = grid.axes[0].values
    if over == "beta" and np.any(np.isclose(vals, 1.0, rtol=0, atol=0)):
        i = int(np.flatnonzero(vals == 1.0)[0])
        ref = np.diag(global_minimum(LossSpec("infonce"), CovarianceModel.diagonal(a, c), d0).wtw)
        got = np.array([grid.cells[(i,)][f"mode_{k}"] for k in range(d0)])
        summary["beta1_vs_infonce_max_abs"] = float(np.max(np.abs(got - ref)))
    if mode == "trained":
        agree = all(grid.cells[(i,)][f"collapsed_{k}"] == grid.cells[(i,)][f"trained_collapsed_{k}"]
                    for i in range(len(vals)) for k in range(d0))
        summary["trained_matches_verdict"] = bool(agree)
    grid.summary = summary
    return grid


def normalized_collapse_sigma(a, target: float, sigma_max: float, family: str = "infonce",
                        points: int = 2001) -> np.ndarray:
    """Per mode, the smallest isotropic noise level at which the full-mask
    condition ``lam_i + 2c/d > mean(lam)`` fails (NaN if it never fails
    below ``sigma_max``). ``a`` is the diagonal of A0."""
    a = np.asarray(a, dtype=float)
    d = a.size
    spec = LossSpec(family)

    def margins(s):
        cov = CovarianceModel.diagonal(a, np.full(d, s * s))
        lam = np.diag(hessian_b(spec, cov)) / np.diag(cov.sigma)
        return lam + 2.0 * target / d - lam.mean()

    grid = np.linspace(0.0, sigma_max, points)
    vals = np.array([margins(s) for s in grid])
    out = np.full(d, np.nan)
    for i in range(d):
        bad = np.flatnonzero(vals[:, i] <= 0)
        if bad.size == 0:
            continue
        j = bad[0]
        out[i] = 0.0 if j == 0 else brentq(lambda s: margins(s)[i], grid[j - 1], grid[j], xtol=1e-14)
    return out


def normalization_collapse(a, sigmas, target: float = 1.0, family: str = "infonce",
                           mode: str = "analytic", kappa: float = 1e3,
                           train_config: TrainConfig | None = None, d1: int | None = None,
                           threads: int = 1) -> SweepGrid:
    """Hard-normalized (kappa -> infinity) solution versus isotropic noise level."""
    a = np.asarray(a, dtype=float)
    d0 = a.size
    d1 = d0 if d1 is None else d1
    cols = ["eig_0", "eig_1", "eig_2", "d_m", "full_mask_feasible", "verdict_failures", "unnormalized_min"]
    if mode == "trained":
        cols += ["trained_0", "trained_1", "trained_2"]
    grid = SweepGrid("normalization_collapse", [Axis("sigma", sigmas)], cols)
    spec = LossSpec(family, kappa=math.inf, target=target)

    def cell(i):
        s = float(grid.axes[0].values[i])
        cov = CovarianceModel.diagonal(a, np.full(d0, s * s))
        sol = best_normalized_limit(spec, cov, d1)
        basis = mode_basis(hessian_b(spec, cov), cov)
        full = np.ones(d0, dtype=bool)
        ok = shifted_verdicts(basis.lam, full, target)
        un = global_minimum(spec.with_(kappa=None), cov, d1)
        e = _smallest(eig_sym(sol.wtw).eigenvalues)
        rec = {"eig_0": e[0], "eig_1": e[1], "eig_2": e[2], "d_m": sol.d_m,
               "full_mask_feasible": bool(ok.all()), "verdict_failures": int((~ok).sum()),
               "unnormalized_min": float(np.min(un.eigenvalues))}
        if mode == "trained":
            rt = train(spec.with_(kappa=kappa), ClosedForm(cov), d1, train_config or TrainConfig())
            t = _smallest(rt.eigenvalues)
            rec.update({"trained_0": t[0], "trained_1": t[1], "trained_2": t[2]})
        return rec

    for i, rec in enumerate(_map(cell, range(len(grid.axes[0])), threads)):
        grid.set((i,), rec)
    sig = grid.axes[0].values
    cs = normalized_collapse_sigma(a, target, float(sig.max()), family)
    grid.summary = {
        "mode": mode,
        "collapse_sigma": cs,
        "collapse_sigma2": cs**2,
        "unnormalized_collapses": bool(np.any(grid.column("unnormalized_min") <= 0)),
    }
    return grid


def phase_label(collapsed) -> tuple[str, int]:
    c1, c2 = bool(collapsed[0]), bool(collapsed[1])
    code = int(c1) + 2 * int(c2)
    return PATTERNS[code], code


def phase_diagram(sigmas, thetas, beta: float = 0.5, a=(1.0, 1.0), threads: int = 1) -> SweepGrid:
    """Collapse pattern of beta-InfoNCE under the two-feature structured augmentation."""
    a = np.asarray(a, dtype=float)
    cols = ["pattern", "code", "collapsed_1", "collapsed_2", "b_1", "b_2"]
    grid = SweepGrid("phase_diagram", [Axis("sigma", sigmas), Axis("theta", thetas)], cols)
    spec = LossSpec("beta_infonce", beta=beta)

    def cell(idx):
        pt = grid.point(idx)
        cov = covariance_model(np.diag(a), AugmentationSpec.structured(pt["sigma"], pt["theta"]))
        rep = predict_collapse(spec, cov)
        label, code = phase_label(rep.collapsed)
        return {"pattern": label, "code": code, "collapsed_1": bool(rep.collapsed[0]),
                "collapsed_2": bool(rep.collapsed[1]), "b_1": rep.modes[0].b, "b_2": rep.modes[1].b}

    idxs = list(grid.indices())
    for idx, rec in zip(idxs, _map(cell, idxs, threads)):
        grid.set(idx, rec)
    grid.summary = {"beta": beta, **phase_boundary_check(grid, a, beta)}
    return grid


def phase_boundary_check(grid: SweepGrid, a, beta: float) -> dict:
    """Compare the first collapsed sigma per theta with ``(1-beta) sigma^2 theta_k = a_k``."""
    sig = grid.axes[0].values
    step = float(np.max(np.abs(np.diff(sig)))) if sig.size > 1 else math.inf
    worst = 0.0
    ok = True
    for j, th in enumerate(grid.axes[1].values):
        for k, frac in ((1, 1.0 - th), (2, th)):
            col = grid.labels(f"collapsed_{k}")[:, j].astype(bool)
            exact = math.sqrt(a[k - 1] / ((1.0 - beta) * frac)) if (1.0 - beta) * frac > 0 else math.inf
            hit = np.flatnonzero(col)
            if hit.size == 0:
                good = exact > sig.max() - 1e-12
                err = 0.0 if good else abs(sig.max() - exact)
            else:
                first = float(sig[hit[0]])
                err = abs(first - exact) if math.isfinite(exact) else math.inf
                good = err <= step + 1e-12
            worst = max(worst, err if math.isfinite(err) else 0.0)
            ok = ok and good
    return {"boundary_within_one_cell": bool(ok), "max_boundary_error": worst, "sigma_step": step}


@dataclass(frozen=True)
class DownstreamTask:
    d_c: int = 1
    d0: int = 2
    target_coeff: float = 1.0
    ridge: float = 1e-3
    n_train: int = 2048
    n_test: int = 2048
    seed: int = 0

    def __post_init__(self):
        if not self.d_c < self.d0:
            raise ValueError("d_c must be < d0")
        if not self.ridge > 0:
            raise ValueError("ridge must be > 0")


def ridge_fit(z, y, lam: float) -> np.ndarray:
    """Closed-form ``argmin_G mean|G z - y|^2 + lam |G|^2``."""
    n, k = z.shape
    return np.linalg.solve(z.T @ z / n + lam * np.eye(k), z.T @ y / n)


def _task_data(task: DownstreamTask, a):
    root = mat_pow(np.diag(a), 0.5)
    xtr = rng_for(task.seed, 10).standard_normal((task.n_train, task.d0)) @ root
    xte = rng_for(task.seed, 11).standard_normal((task.n_test, task.d0)) @ root
    ytr = task.target_coeff * xtr[:, : task.d_c].sum(axis=1)
    yte = task.target_coeff * xte[:, : task.d_c].sum(axis=1)
    return xtr, ytr, xte, yte


def _mse(w, task, data):
    xtr, ytr, xte, yte = data
    g = ridge_fit(xtr @ w.T, ytr, task.ridge)
    return float(np.mean((xte @ w.T @ g - yte) ** 2))


def downstream_eval(task: DownstreamTask, sigmas, thetas=(0.5, 1.0), beta: float = 0.5,
                    a=(1.0, 1.0), mode: str = "analytic", train_config: TrainConfig | None = None,
                    threads: int = 1) -> SweepGrid:
    """Ridge-regression test error on the learned representation ``z = W x``."""
    a = np.asarray(a, dtype=float)
    data = _task_data(task, a)
    spec = LossSpec("beta_infonce", beta=beta)
    cols = ["mse", "var_y", "mse_over_var", "code"]
    grid = SweepGrid("downstream_eval", [Axis("sigma", sigmas), Axis("theta", thetas)], cols)
    var_y = float(np.var(data[3]))

    def model(sig, th):
        cov = covariance_model(np.diag(a), AugmentationSpec.structured(sig, th))
        if mode == "trained":
            return train(spec, ClosedForm(cov), task.d0, train_config or TrainConfig()).w, cov
        return lift(global_minimum(spec, cov, task.d0).wtw, task.d0), cov

    def cell(idx):
        pt = grid.point(idx)
        w, cov = model(pt["sigma"], pt["theta"])
        mse = _mse(w, task, data)
        _, code = phase_label(predict_collapse(spec, cov).collapsed)
        return {"mse": mse, "var_y": var_y, "mse_over_var": mse / var_y, "code": code}

    idxs = list(grid.indices())
    for idx, rec in zip(idxs, _map(cell, idxs, threads)):
        grid.set(idx, rec)

    # content-only reference: the clean representation restricted to the task feature
    w0, _ = model(0.0, 0.5)
    g0 = np.diag(w0.T @ w0)
    wc = np.zeros((task.d_c, task.d0))
    wc[np.arange(task.d_c), np.arange(task.d_c)] = np.sqrt(g0[: task.d_c])
    mse = grid.column("mse")
    th = grid.axes[1].values
    summary = {"var_y": var_y, "content_only_baseline": _mse(wc, task, data),
               "sigma0_mse": {repr(float(t)): float(mse[0, j]) for j, t in enumerate(th)}}
    if np.any(th == 1.0) and np.any(th == 0.5):
        j1, jh = int(np.flatnonzero(th == 1.0)[0]), int(np.flatnonzero(th == 0.5)[0])
        summary["largest_sigma_style_beats_isotropic"] = bool(mse[-1, j1] < mse[-1, jh])
        codes = grid.column("code")
        full = codes[:, jh] == 3
        if full.any():
            summary["complete_collapse_mse_over_var"] = float(np.max(np.abs(mse[full, jh] / var_y - 1.0)))
    grid.summary = summary
    return grid


def _top_k(m, k) -> np.ndarray:
    return np.array(eig_sym(m).eigenvectors)[:, :k]


def imbalance_robustness(ps, class_means, class_covs, c, families=("infonce", "spectral_contrastive"),
                         ref_p: float = 0.5, threads: int = 1) -> SweepGrid:
    """Drift of the learned subspace as the two-class proportions move away from ``ref_p``.

    ``angle_<family>`` is the largest principal angle between the top-k
    eigenvectors of the quadratic coefficient ``B`` at ``p`` and at ``ref_p``,
    with ``k`` the number of eigenvalues of ``B`` above half the largest at
    the reference. ``wtw_angle_<family>`` does the same for the global
    minimum's ``W^T W``.
    """
    c = as_sym(c)
    means = tuple(np.asarray(m, dtype=float) for m in class_means)
    covs = tuple(as_sym(m) for m in class_covs)

    def cov_at(p):
        return CovarianceModel(imbalanced_cov(ImbalanceSpec((p, 1.0 - p), means, covs)), c)

    refs = {}
    for fam in families:
        spec = LossSpec(fam)
        cov = cov_at(ref_p)
        bm = hessian_b(spec, cov)
        ev = eig_sym(bm).eigenvalues
        k = max(1, int(np.sum(ev > 0.5 * ev[0])))
        refs[fam] = (k, _top_k(bm, k), _top_k(global_minimum(spec, cov).wtw, k))
    cols = [f"angle_{f}" for f in families] + [f"wtw_angle_{f}" for f in families]
    grid = SweepGrid("imbalance_robustness", [Axis("p", ps)], cols)

    def cell(i):
        p = float(grid.axes[0].values[i])
        cov = cov_at(p)
        rec = {}
        for fam in families:
            k, ub, uw = refs[fam]
            spec = LossSpec(fam)
            rec[f"angle_{fam}"] = principal_angle(_top_k(hessian_b(spec, cov), k), ub)
            rec[f"wtw_angle_{fam}"] = principal_angle(_top_k(global_minimum(spec, cov).wtw, k), uw)
        return rec

    for i, rec in enumerate(_map(cell, range(len(grid.axes[0])), threads)):
        grid.set((i,), rec)
    grid.summary = {"ref_p": ref_p, "k": {f: refs[f][0] for f in families},
                    "max_angle": {f: float(np.nanmax(grid.column(f"angle_{f}"))) for f in families}}
    return grid


def slice_directions(spec: LossSpec, cov: CovarianceModel) -> tuple[np.ndarray, np.ndarray]:
    """Unit ``d0 x d0`` weight directions for the larger and smaller half of the modes."""
    basis = mode_basis(hessian_b(spec, cov), cov)
    v = basis.vectors if basis.route == "commuting" else basis.sigma_inv_half @ basis.vectors
    v = v / np.linalg.norm(v, axis=0)
    d = basis.dim
    half = (d + 1) // 2
    e1 = np.zeros((d, d))
    e2 = np.zeros((d, d))
    for i in range(d):
        target = e1 if i < half else e2
        target[i] = v[:, i]
    return e1, e2


def classify_origin(d2s) -> str:
    d2s = np.asarray(d2s, dtype=float)
    if np.all(d2s < 0):
        return "local max"
    if np.all(d2s > 0):
        return "local min"
    return "saddle"


def landscape_slice(spec: LossSpec, cov: CovarianceModel, values, kind: str = "2d",
                    w_star=None, threads: int = 1) -> SweepGrid:
    """Loss on a scalar ray ``a W*`` or on the ``(r1, r2)`` mode-split plane.

    The grid must contain 0 with symmetric neighbours; the origin is
    classified from central second differences there.
    """
    vals = np.asarray(values, dtype=float)
    zero = np.flatnonzero(vals == 0.0)
    if zero.size != 1 or zero[0] in (0, vals.size - 1):
        raise ValueError("slice grid must contain 0 strictly inside")
    z = int(zero[0])
    h_lo, h_hi = vals[z] - vals[z - 1], vals[z + 1] - vals[z]
    if kind == "scalar":
        if w_star is None:
            w_star = lift(global_minimum(spec, cov).wtw, cov.dim)
            if not np.any(w_star):
                e1, e2 = slice_directions(spec, cov)
                w_star = e1 + e2
        w_star = np.atleast_2d(np.asarray(w_star, dtype=float))
        grid = SweepGrid("landscape_slice", [Axis("a", vals)], ["loss"])
        losses = _map(lambda t: effective_loss(spec, cov, t * w_star), vals, threads)
        for i, l in enumerate(losses):
            grid.set((i,), {"loss": l})
        lo = np.asarray(losses)
        d2 = [_second_diff(lo[z - 1], lo[z], lo[z + 1], h_lo, h_hi)]
    elif kind == "2d":
        e1, e2 = slice_directions(spec, cov)
        grid = SweepGrid("landscape_slice", [Axis("r1", vals), Axis("r2", vals)], ["loss"])
        idxs = list(grid.indices())
        losses = _map(lambda ij: effective_loss(spec, cov, vals[ij[0]] * e1 + vals[ij[1]] * e2), idxs, threads)
        for idx, l in zip(idxs, losses):
            grid.set(idx, {"loss": l})
        lo = grid.column("loss")
        d2 = [_second_diff(lo[z - 1, z], lo[z, z], lo[z + 1, z], h_lo, h_hi)]
        if np.any(e2):
            d2.append(_second_diff(lo[z, z - 1], lo[z, z], lo[z, z + 1], h_lo, h_hi))
    else:
        raise ValueError("kind must be 'scalar' or '2d'")
    grid.summary = {"kind": kind, "second_differences": d2, "origin": classify_origin(d2)}
    return grid


def _second_diff(fm, f0, fp, h_lo, h_hi) -> float:
    return float(2.0 * (h_lo * fp - (h_lo + h_hi) * f0 + h_hi * fm) / (h_lo * h_hi * (h_lo + h_hi)))
