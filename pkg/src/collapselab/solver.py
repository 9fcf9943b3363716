"""Closed-form stationary points of the effective landscape and collapse prediction.

Stationary points of ``-Tr[W B W^T] + Tr[W S W^T W S W^T]`` are indexed by
masks over the eigenmodes of ``K = S^{-1/2} B S^{-1/2}`` (eigenvalues
``lam``)::

    W^T W = 1/2 S^{-1/2} U diag(m * lam) U^T S^{-1/2}

When ``B`` and ``S`` commute the modes are the shared eigenvectors and
``lam_i = b_i / s_i``, so ``W^T W = 1/2 S^{-1} B_M S^{-1}``. At every
stationary point the loss equals ``-1/4 sum_{i in M} lam_i^2``.

Masks are boolean vectors over the modes sorted by ``lam`` descending
(ties keep the basis order, which for diagonal inputs is the axis order).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import CovarianceModel
from .errors import EmptyMask, SingularSigma
from .losses import LossSpec, hessian_b
from .spectra import as_sym, commutes, eig_sym, joint_basis, mat_pow, stable_desc_order

SIGN_RTOL = 1e-12
EXHAUSTIVE_MAX_DIM = 20
GRAM_ZERO = 1e-10


@dataclass(frozen=True)
class ModeBasis:
    """Eigenmodes of the governing problem, sorted by ``lam`` descending."""

    route: str
    vectors: np.ndarray
    lam: np.ndarray
    sigma_inv_half: np.ndarray
    b: np.ndarray | None = None
    s: np.ndarray | None = None
    a: np.ndarray | None = None
    c: np.ndarray | None = None
    axis_order: np.ndarray | None = None
    threshold: float = 0.0

    @property
    def dim(self) -> int:
        return self.lam.shape[0]

    @property
    def positive(self) -> np.ndarray:
        return self.lam > self.threshold

    def gram(self, mu) -> np.ndarray:
        """``1/2 S^{-1/2} U diag(mu) U^T S^{-1/2}`` for per-mode values ``mu``."""
        mu = np.asarray(mu, dtype=float)
        if self.route == "commuting":
            q = self.vectors
            return as_sym((q * (0.5 * mu / self.s)) @ q.T)
        v = self.sigma_inv_half @ self.vectors
        return as_sym((v * (0.5 * mu)) @ v.T)


@dataclass(frozen=True)
class StationaryPoint:
    mask: np.ndarray
    wtw: np.ndarray
    loss_value: float
    is_local_min: bool
    rank: int
    rho: float = 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        return eig_sym(self.wtw).eigenvalues

    @property
    def d_m(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class ModeVerdict:
    index: int
    b: float
    verdict: str
    threshold_quantity: float
    lhs: float
    rhs: float
    a: float | None = None
    c: float | None = None

    @property
    def collapses(self) -> bool:
        return self.verdict == "collapses"


@dataclass(frozen=True)
class CollapseReport:
    modes: list[ModeVerdict]
    commuting: bool

    @property
    def complete_collapse(self) -> bool:
        return all(m.collapses for m in self.modes)

    @property
    def dimensional_collapse(self) -> bool:
        n = sum(m.collapses for m in self.modes)
        return 0 < n < len(self.modes)

    @property
    def collapsed(self) -> np.ndarray:
        return np.array([m.collapses for m in self.modes])


@dataclass(frozen=True)
class NormalizedSolution:
    mask: np.ndarray
    wtw: np.ndarray
    d_m: int
    rho: float
    feasible: bool
    self_consistent: bool = True
    loss_value: float = float("nan")
    shifted_lam: np.ndarray | None = None


@dataclass(frozen=True)
class BiasConstrainedResult:
    solutions: list[StationaryPoint]
    max_d_m: int
    complete_collapse_possible: bool
    only_origin_feasible: bool
    target: float
    lam: np.ndarray = field(repr=False, default=None)


def _check_sigma(cov: CovarianceModel):
    w = eig_sym(cov.sigma).eigenvalues
    if w[-1] <= 1e-10:
        raise SingularSigma(f"Sigma is singular (smallest eigenvalue {w[-1]:.3e})")


def mode_basis(b, cov: CovarianceModel) -> ModeBasis:
    """Eigenmodes of ``S^{-1/2} B S^{-1/2}``, using the shared basis when ``B`` and ``S`` commute."""
    _check_sigma(cov)
    b = as_sym(b, name="B")
    sigma = cov.sigma
    scale = max(1.0, float(np.abs(eig_sym(b).eigenvalues).max()) if b.size else 1.0)
    if commutes(b, sigma, 1e-10):
        try:
            q = joint_basis(cov.a0, cov.c, b) if cov.commuting else joint_basis(b, sigma)
        except ValueError:
            q = None
        if q is not None:
            bi = np.einsum("ij,jk,ki->i", q.T, b, q)
            si = np.einsum("ij,jk,ki->i", q.T, sigma, q)
            lam = bi / si
            order = stable_desc_order(lam)
            ai = ci = None
            if cov.commuting:
                ai = np.einsum("ij,jk,ki->i", q.T, cov.a0, q)[order]
                ci = np.einsum("ij,jk,ki->i", q.T, cov.c, q)[order]
            return ModeBasis(
                route="commuting",
                vectors=q[:, order],
                lam=lam[order],
                sigma_inv_half=mat_pow(sigma, -0.5),
                b=bi[order],
                s=si[order],
                a=ai,
                c=ci,
                axis_order=order,
                threshold=SIGN_RTOL * scale / float(si.min()),
            )
    sih = mat_pow(sigma, -0.5)
    pair = eig_sym(sih @ b @ sih)
    return ModeBasis(
        route="general",
        vectors=np.array(pair.eigenvectors),
        lam=np.array(pair.eigenvalues),
        sigma_inv_half=sih,
        threshold=SIGN_RTOL * max(1.0, float(np.abs(pair.eigenvalues).max())),
    )


def _d_star(cov: CovarianceModel, d1: int | None) -> int:
    return cov.dim if d1 is None else min(cov.dim, int(d1))


def _candidate_masks(basis: ModeBasis, d_star: int):
    pos = np.flatnonzero(basis.positive)
    n = basis.dim
    if n <= EXHAUSTIVE_MAX_DIM:
        for k in range(0, min(len(pos), d_star) + 1):
            for subset in itertools.combinations(pos, k):
                m = np.zeros(n, dtype=bool)
                m[list(subset)] = True
                yield m
        return
    # truncated family: empty, global minimum, and the global minimum with one mode dropped
    top = pos[: min(len(pos), d_star)]
    yield np.zeros(n, dtype=bool)
    best = np.zeros(n, dtype=bool)
    best[top] = True
    yield best
    for i in top:
        m = best.copy()
        m[i] = False
        if m.any():
            yield m


def _mask_key(m: np.ndarray) -> int:
    return int(sum(1 << i for i in np.flatnonzero(m)))


def _point(basis: ModeBasis, mask: np.ndarray, d_star: int, sigma) -> StationaryPoint:
    mu = np.where(mask, basis.lam, 0.0)
    wtw = basis.gram(mu)
    pos = basis.positive
    m_pos = int(pos.sum())
    rank = int(mask.sum())
    sel = basis.lam[mask]
    unsel_pos = basis.lam[pos & ~mask]
    tol = 1e-9 * max(1.0, float(np.abs(basis.lam).max()))
    local = rank == min(m_pos, d_star) and (
        sel.size == 0 or unsel_pos.size == 0 or sel.min() >= unsel_pos.max() - tol
    )
    loss = -0.25 * float(np.sum(sel**2))
    rho = 0.5 * float(np.sum(sel))
    return StationaryPoint(mask, wtw, loss, bool(local), rank, rho)


def stationary_points(spec: LossSpec, cov: CovarianceModel, d1: int | None = None) -> list[StationaryPoint]:
    """Every stationary point of the (unnormalized) effective landscape.

    For dim > 20 only the empty mask, the global minimum and its single-mode
    deletions are returned.
    """
    basis = mode_basis(hessian_b(spec, cov), cov)
    d_star = _d_star(cov, d1)
    masks = sorted(_candidate_masks(basis, d_star), key=_mask_key)
    return [_point(basis, m, d_star, cov.sigma) for m in masks]


def global_minimum(spec: LossSpec, cov: CovarianceModel, d1: int | None = None) -> StationaryPoint:
    """Keep the ``min(m, d*)`` largest positive modes; ties go to the lower index."""
    basis = mode_basis(hessian_b(spec, cov), cov)
    d_star = _d_star(cov, d1)
    pos = np.flatnonzero(basis.positive)[:d_star]
    mask = np.zeros(basis.dim, dtype=bool)
    mask[pos] = True
    return _point(basis, mask, d_star, cov.sigma)


def gram_general_route(b, sigma, mask) -> np.ndarray:
    """``1/2 S^{-1/2} U M Lambda U^T S^{-1/2}`` straight from an eigendecomposition of K."""
    sih = mat_pow(sigma, -0.5)
    pair = eig_sym(sih @ as_sym(b) @ sih)
    lam = np.where(np.asarray(mask, dtype=bool), pair.eigenvalues, 0.0)
    u = sih @ pair.eigenvectors
    return as_sym((u * (0.5 * lam)) @ u.T)


def gram_commuting_route(b, sigma, mask) -> np.ndarray:
    """``1/2 S^{-1} B_M S^{-1}`` with the mask applied to modes sorted by ``b_i/s_i``."""
    q = joint_basis(b, sigma)
    bi = np.einsum("ij,jk,ki->i", q.T, as_sym(b), q)
    si = np.einsum("ij,jk,ki->i", q.T, as_sym(sigma), q)
    order = stable_desc_order(bi / si)
    keep = np.zeros_like(bi, dtype=bool)
    keep[order[np.asarray(mask, dtype=bool)]] = True
    sinv = mat_pow(sigma, -1)
    b_m = (q * np.where(keep, bi, 0.0)) @ q.T
    return as_sym(0.5 * sinv @ b_m @ sinv)


def _family_terms(spec: LossSpec, a, c, b):
    """(lhs, rhs) of the collapse inequality ``lhs >= rhs`` for one mode."""
    g = spec.weight_decay
    fam = spec.family
    if fam == "infonce":
        return g, a
    if fam == "weighted_infonce":
        return (1.0 - spec.alpha) * c / spec.n + g, a
    if fam == "beta_infonce":
        return (1.0 - spec.beta) * c + g, a
    if fam == "spectral_contrastive":
        return g, 2.0 * c
    if fam == "barlow_twins":
        return g, 2.0 * (a + c)
    return g, b + g


def predict_collapse(spec: LossSpec, cov: CovarianceModel) -> CollapseReport:
    """Per-mode survive/collapse verdicts from the sign of the Hessian at the origin.

    A mode collapses when its eigenvalue ``b_i`` of ``B`` is at most
    ``1e-12 ||B||`` (boundary modes collapse). Under commuting covariances
    the records are in the shared eigenbasis, ordered by axis, and carry the
    paired ``a_i``, ``c_i``; otherwise they follow the eigenvalues of ``B``.
    """
    bm = hessian_b(spec, cov)
    norm_b = float(np.abs(eig_sym(bm).eigenvalues).max()) if bm.size else 0.0
    thr = SIGN_RTOL * norm_b
    modes = []
    if cov.commuting:
        q = joint_basis(cov.a0, cov.c)
        diag = lambda m: np.einsum("ij,jk,ki->i", q.T, m, q)
        a, c = diag(cov.a0), diag(cov.c)
        if commutes(bm, cov.sigma, 1e-10) and commutes(bm, cov.a0, 1e-10):
            bi = diag(bm)
            for i in range(cov.dim):
                lhs, rhs = _family_terms(spec, a[i], c[i], bi[i])
                verdict = "collapses" if bi[i] <= thr else "survives"
                modes.append(ModeVerdict(i, float(bi[i]), verdict, float(bi[i]), float(lhs),
                                         float(rhs), float(a[i]), float(c[i])))
            return CollapseReport(modes, True)
    pair = eig_sym(bm)
    for i, bi in enumerate(pair.eigenvalues):
        verdict = "collapses" if bi <= thr else "survives"
        modes.append(ModeVerdict(i, float(bi), verdict, float(bi), spec.weight_decay,
                                 float(bi + spec.weight_decay)))
    return CollapseReport(modes, False)


# ---------------------------------------------------------------------------
# normalization and bias


def _commuting_basis(spec: LossSpec, cov: CovarianceModel) -> ModeBasis:
    basis = mode_basis(hessian_b(spec, cov), cov)
    if basis.route != "commuting":
        raise ValueError("normalization theory needs B and Sigma to commute")
    return basis


def _as_mask(mask, n: int) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ValueError(f"mask length {m.shape} != {n}")
    return m


def _normalized_loss(basis: ModeBasis, mu: np.ndarray, mask: np.ndarray, kappa, target, rho):
    # per mode: -b g + s^2 g^2 with g = mu / (2 s)
    g = 0.5 * np.where(mask, mu, 0.0) / basis.s
    loss = float(np.sum(-basis.b * g + (basis.s * g) ** 2))
    if kappa is not None and math.isfinite(kappa):
        loss += kappa * (rho - target) ** 2
    return loss


def normalized_limit(spec: LossSpec, cov: CovarianceModel, mask) -> NormalizedSolution:
    """Hard-constraint (kappa -> infinity) stationary point for a given mask.

    ``W^T W = 1/2 S^{-1} [B_M + (2c - Tr[S^{-1} B_M]) / d_M * S_M] S^{-1}``;
    it is feasible when every kept mode satisfies
    ``lam_i + 2c/d_M > mean(lam over M)``.
    """
    basis = _commuting_basis(spec, cov)
    m = _as_mask(mask, basis.dim)
    d_m = int(m.sum())
    if d_m == 0:
        raise EmptyMask("the kappa -> infinity limit needs a nonempty mask")
    c = spec.target
    lam = basis.lam
    total = float(lam[m].sum())
    mu = np.where(m, lam + (2.0 * c - total) / d_m, 0.0)
    feasible = bool(np.all(mu[m] > 0))
    wtw = basis.gram(mu)
    rho = float(np.sum(wtw * cov.sigma))
    return NormalizedSolution(m, wtw, d_m, rho, feasible, feasible,
                              _normalized_loss(basis, mu, m, None, c, rho), mu)


def shifted_verdicts(lam, mask, target: float) -> np.ndarray:
    """Boolean survive flags ``lam_i + 2c/d_M > mean(lam_M)`` for the kept modes."""
    lam = np.asarray(lam, dtype=float)
    m = np.asarray(mask, dtype=bool)
    d_m = int(m.sum())
    mean = lam[m].mean()
    return np.where(m, lam + 2.0 * target / d_m > mean, False)


def normalized_solution_finite_kappa(spec: LossSpec, cov: CovarianceModel, d1: int | None = None,
                                     *, all_stationary: bool = False) -> list[NormalizedSolution]:
    """Stationary points of the landscape with the ``kappa (rho - c)^2`` term.

    For each mask the norm is fixed in closed form,
    ``c - rho = (c - 1/2 Tr[S^{-1} B_M]) / (1 + kappa d_M)``, and the shifted
    modes ``lam_i + 2 kappa (c - rho)`` must be positive on the mask. By
    default only self-consistent masks are kept: every dropped mode has a
    non-positive shifted value unless the mask is already at rank ``d*``.
    The origin is returned when nothing else qualifies.
    """
    if spec.kappa is None or math.isinf(spec.kappa):
        raise ValueError("finite kappa required")
    basis = _commuting_basis(spec, cov)
    kappa, c = spec.kappa, spec.target
    d_star = _d_star(cov, d1)
    n = basis.dim
    lam = basis.lam
    out = []
    origin = None
    masks = [np.array(bits, dtype=bool) for bits in itertools.product([False, True], repeat=n)
             if sum(bits) <= d_star] if n <= EXHAUSTIVE_MAX_DIM else list(_candidate_masks(basis, d_star))
    for m in sorted(masks, key=_mask_key):
        d_m = int(m.sum())
        half_trace = 0.5 * float(lam[m].sum())
        gap = (c - half_trace) / (1.0 + kappa * d_m)
        shifted = lam + 2.0 * kappa * gap
        if d_m and not np.all(shifted[m] > 0):
            continue
        consistent = d_m == d_star or bool(np.all(shifted[~m] <= 0))
        mu = np.where(m, shifted, 0.0)
        wtw = basis.gram(mu)
        rho = c - gap if d_m else 0.0
        sol = NormalizedSolution(m, wtw, d_m, rho, True, consistent,
                                 _normalized_loss(basis, mu, m, kappa, c, rho), shifted)
        if d_m == 0:
            origin = sol
        if all_stationary or consistent:
            out.append(sol)
    if not out and origin is not None:
        out.append(origin)
    return out


def best_normalized_limit(spec: LossSpec, cov: CovarianceModel, d1: int | None = None) -> NormalizedSolution:
    """Lowest-loss feasible hard-constraint solution among the top-k masks."""
    basis = _commuting_basis(spec, cov)
    d_star = _d_star(cov, d1)
    best = None
    for k in range(1, d_star + 1):
        m = np.zeros(basis.dim, dtype=bool)
        m[:k] = True
        sol = normalized_limit(spec, cov, m)
        if sol.feasible and (best is None or sol.loss_value < best.loss_value - 1e-15):
            best = sol
    return best


def bias_constrained_solutions(spec: LossSpec, cov: CovarianceModel,
                               d1: int | None = None) -> BiasConstrainedResult:
    """Stationary points with a free bias under normalization.

    The unnormalized solutions survive when their norm ``rho = Tr[W^T S W]``
    does not exceed the target ``c``; the bias then absorbs ``c - rho``.
    ``complete_collapse_possible`` uses the sufficient condition
    ``c < lam_i`` for every mode (``lam_i = (a_i - c_i)/(a_i + c_i)`` when
    ``B = A0 - C``); ``only_origin_feasible`` is the exact statement that no
    nonempty solution fits under the target.
    """
    basis = _commuting_basis(spec, cov)
    c = spec.target
    pts = stationary_points(spec.with_(kappa=None, bias=False), cov, d1)
    tol = 1e-12 * max(1.0, c)
    feasible = [p for p in pts if p.rho <= c + tol]
    max_d_m = max(p.d_m for p in feasible)
    possible = bool(np.all(c < basis.lam))
    only_origin = max_d_m == 0
    return BiasConstrainedResult(feasible, max_d_m, possible, only_origin, c, basis.lam)


def bias_vector(point: StationaryPoint, target: float, d1: int) -> np.ndarray:
    """A bias with ``|b|^2 = c - rho`` that zeroes the normalization gradient."""
    b = np.zeros(d1)
    b[0] = math.sqrt(max(0.0, target - point.rho))
    return b


# ---------------------------------------------------------------------------
# case analysis of the normalized collapse condition


@dataclass(frozen=True)
class CaseResult:
    name: str
    applies: bool
    predicted_collapse: np.ndarray | None
    shifted_collapse: np.ndarray | None
    passed: bool | None
    detail: dict = field(default_factory=dict)


def appendix_c_cases(cov: CovarianceModel, c: float = 1.0, *, small_ratio: float = 1e-3,
                     strong_ratio: float = 1e3) -> list[CaseResult]:
    """Check the three analytic regimes of the normalized collapse condition.

    Uses the full mask and ``lam_i = (a_i - c_i) / (a_i + c_i)``, i.e.
    ``B = A0 - C``. For each regime that applies to ``cov`` the analytic
    prediction is compared with a direct evaluation of
    ``lam_i + 2c/d_M > mean(lam)``:

    * small augmentation (every ``c_i <= small_ratio * a_i``): nothing collapses;
    * one strongly augmented mode (``c_j >= strong_ratio * a_j``, others
      unaugmented): only that mode collapses, and only when ``d_M >= 2``;
    * one weakly augmented mode with ``a_j - c_j = eps > 0``: it collapses
      exactly when ``eps / (a_j + c_j) <= (d_M - 1 - 2c) / (d_M - 1)``. The
      printed threshold ``(a+c)(d_M-3)/(a+c+d_M)`` is reported alongside.
    """
    if not cov.commuting:
        raise ValueError("case analysis needs commuting covariances")
    q = joint_basis(cov.a0, cov.c)
    a = np.einsum("ij,jk,ki->i", q.T, cov.a0, q)
    cc = np.einsum("ij,jk,ki->i", q.T, cov.c, q)
    lam = (a - cc) / (a + cc)
    n = lam.size
    full = np.ones(n, dtype=bool)
    shifted = ~shifted_verdicts(lam, full, c)
    tiny = 1e-12 * max(1.0, float(a.max()))
    results = []

    small = bool(np.all(cc <= small_ratio * a))
    pred = np.zeros(n, dtype=bool) if small else None
    results.append(CaseResult("small_augmentation", small, pred, shifted if small else None,
                              bool(np.array_equal(pred, shifted)) if small else None))

    strong_idx = np.flatnonzero(cc >= strong_ratio * a)
    others_clean = np.all(np.delete(cc, strong_idx) <= tiny) if strong_idx.size == 1 else False
    applies = strong_idx.size == 1 and bool(others_clean)
    pred = None
    if applies:
        pred = np.zeros(n, dtype=bool)
        pred[strong_idx[0]] = n >= 2
    results.append(CaseResult("strong_single_mode", applies, pred, shifted if applies else None,
                              bool(np.array_equal(pred, shifted)) if applies else None))

    weak_idx = np.flatnonzero((cc > tiny) & (cc < a))
    applies = weak_idx.size == 1 and bool(np.all(np.delete(cc, weak_idx) <= tiny))
    pred, detail = None, {}
    if applies:
        j = weak_idx[0]
        eps = a[j] - cc[j]
        total = a[j] + cc[j]
        derived = total * (n - 1 - 2.0 * c) / (n - 1) if n > 1 else -np.inf
        printed = total * (n - 3) / (total + n)
        pred = np.zeros(n, dtype=bool)
        pred[j] = eps <= derived
        detail = {
            "eps": float(eps),
            "derived_threshold": float(derived),
            "printed_threshold": float(printed),
            "printed_predicts_collapse": bool(eps < printed),
            "printed_agrees": bool((eps < printed) == bool(shifted[j])),
        }
    results.append(CaseResult("weak_single_mode", applies, pred, shifted if applies else None,
                              bool(np.array_equal(pred, shifted)) if applies else None, detail))
    return results
