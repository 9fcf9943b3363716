"""Full-batch first-order training and comparison with the analytic solution.

The objective is either the closed-form effective landscape of a
``CovarianceModel`` or the finite-sample contrastive loss, on augmentation
draws that are either frozen or redrawn every step. Checkpoints track the spectrum of ``W^T W``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .datamodel import AugmentationSpec, CovarianceModel, Dataset, rng_for
from .errors import Diverged, NotConverged
from .losses import (
    LossSpec,
    SampleObjective,
    effective_grad,
    effective_loss,
    hessian_b,
    sample_hessian_b,
)
from .solver import global_minimum, predict_collapse
from .spectra import eig_sym, joint_basis

DIVERGE_AT = 1e12
COLLAPSE_EIG = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings. The defaults follow a full-batch Adam run."""

    optimizer: Literal["gd", "adam"] = "adam"
    lr: float = 6e-4
    max_iters: int = 5000
    grad_tol: float = 1e-8
    seed: int = 0
    init_scale: float = 0.1
    record_every: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if self.max_iters < 0 or self.record_every < 1:
            raise ValueError("max_iters must be >= 0 and record_every >= 1")


@dataclass(frozen=True)
class ClosedForm:
    cov: CovarianceModel


@dataclass(frozen=True)
class Samples:
    """Finite-sample loss on ``ds``.

    With ``resample=False`` the ``mc_draws`` augmentation draws are frozen
    for the whole run. With ``resample=True`` every step uses fresh draws,
    which keeps the control-variate correction zero-mean; frozen draws let
    a run drift to the large-|W| regime where the positive pair dominates.
    """

    ds: Dataset
    aug: AugmentationSpec
    mc_draws: int = 1
    seed: int = 0
    control_variate: bool = True
    resample: bool = False


@dataclass(frozen=True)
class Checkpoint:
    iter: int
    loss: float
    grad_norm: float
    eigenvalues: np.ndarray


@dataclass
class TrajectoryRecord:
    checkpoints: list[Checkpoint]
    w: np.ndarray
    b: np.ndarray | None
    converged: bool
    iters_to_converge: int | None
    final_grad_norm: float = math.nan

    @property
    def wtw(self) -> np.ndarray:
        return self.w.T @ self.w

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array(eig_sym(self.wtw).eigenvalues)

    def to_csv(self, path) -> None:
        d = self.w.shape[1]
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\r\n")
            out.writerow(["iter", "loss", "grad_norm"] + [f"eig_{i}" for i in range(d)])
            for c in self.checkpoints:
                out.writerow([c.iter, repr(c.loss), repr(c.grad_norm)] + [repr(float(v)) for v in c.eigenvalues])


class _Objective:
    """Loss and gradient in a single interface for both sources."""

    def __init__(self, spec: LossSpec, source):
        self.spec = spec
        self.source = source
        if isinstance(source, ClosedForm):
            if spec.kappa is not None and math.isinf(spec.kappa):
                raise ValueError("cannot train at kappa=inf; use a large finite kappa")
            self.dim = source.cov.dim
            self.sample = None
        elif isinstance(source, Samples):
            self.exact_b = sample_hessian_b(spec, source.ds, source.aug) if source.control_variate else None
            self.sample = self._sample_at(0)
            self.dim = source.ds.dim
        else:
            raise TypeError("source must be ClosedForm or Samples")

    def _sample_at(self, step: int) -> SampleObjective:
        s = self.source
        return SampleObjective(self.spec, s.ds, s.aug, s.mc_draws, s.seed, s.control_variate,
                               first_draw=step * s.mc_draws, exact_b=self.exact_b)

    def step(self, it: int) -> None:
        if self.sample is not None and self.source.resample:
            self.sample = self._sample_at(it)

    @property
    def has_bias(self) -> bool:
        return self.sample is None and self.spec.bias and self.spec.normalized

    def value(self, w, b):
        if self.sample is not None:
            return self.sample.value(w)
        return effective_loss(self.spec, self.source.cov, w, b)

    def grad(self, w, b):
        if self.sample is not None:
            return self.sample.grad(w), None
        if self.has_bias:
            return effective_grad(self.spec, self.source.cov, w, b)
        return effective_grad(self.spec, self.source.cov, w), None


def _max_norm(g, gb) -> float:
    m = float(np.max(np.abs(g))) if g.size else 0.0
    if gb is not None and gb.size:
        m = max(m, float(np.max(np.abs(gb))))
    return m


def init_weights(d1: int, d0: int, config: TrainConfig) -> np.ndarray:
    rng = rng_for(config.seed, 3)
    return rng.standard_normal((d1, d0)) * config.init_scale / math.sqrt(d0)


def train(spec: LossSpec, source, d1: int, config: TrainConfig = TrainConfig(), *,
          watch=None, change_tol: float | None = None) -> TrajectoryRecord:
    """Full-batch training from a small random start.

    Stops when the gradient max-norm falls to ``grad_tol``. With ``watch``
    (a unit vector) and ``change_tol`` it instead stops once the Rayleigh
    quotient ``v^T W^T W v`` moves less than ``change_tol`` in one step,
    which is how convergence time is measured near a collapse boundary.
    """
    obj = _Objective(spec, source)
    d0 = obj.dim
    w = init_weights(d1, d0, config)
    b = None
    if obj.has_bias:
        b = rng_for(config.seed, 4).standard_normal(d1) * config.init_scale / math.sqrt(d1)
    m1 = np.zeros_like(w)
    m2 = np.zeros_like(w)
    mb1 = None if b is None else np.zeros_like(b)
    mb2 = None if b is None else np.zeros_like(b)
    checkpoints: list[Checkpoint] = []
    converged = False
    stop_at = None
    watch = None if watch is None else np.asarray(watch, dtype=float)
    prev_q = None if watch is None else float(np.sum((w @ watch) ** 2))
    gn = math.nan

    def record(it, loss, gn):
        checkpoints.append(Checkpoint(it, float(loss), float(gn), np.array(eig_sym(w.T @ w).eigenvalues)))

    for it in range(config.max_iters + 1):
        obj.step(it)
        with np.errstate(over="ignore", invalid="ignore"):
            g, gb = obj.grad(w, b)
        gn = _max_norm(g, gb)
        loss = None
        if it % config.record_every == 0 or it == config.max_iters:
            with np.errstate(over="ignore", invalid="ignore"):
                loss = obj.value(w, b)
        if loss is not None and (not math.isfinite(loss) or abs(loss) > DIVERGE_AT):
            raise Diverged(f"loss {loss} at iteration {it}", checkpoints[-1] if checkpoints else None)
        if not math.isfinite(gn):
            raise Diverged(f"non-finite gradient at iteration {it}", checkpoints[-1] if checkpoints else None)
        if watch is None and gn <= config.grad_tol:
            converged, stop_at = True, it
            record(it, obj.value(w, b), gn)
            break
        if loss is not None:
            record(it, loss, gn)
        if it == config.max_iters:
            break
        if config.optimizer == "gd":
            w = w - config.lr * g
            if b is not None:
                b = b - config.lr * gb
        else:
            t = it + 1
            m1 = config.beta1 * m1 + (1 - config.beta1) * g
            m2 = config.beta2 * m2 + (1 - config.beta2) * g * g
            c1, c2 = 1 - config.beta1**t, 1 - config.beta2**t
            w = w - config.lr * (m1 / c1) / (np.sqrt(m2 / c2) + config.eps)
            if b is not None:
                mb1 = config.beta1 * mb1 + (1 - config.beta1) * gb
                mb2 = config.beta2 * mb2 + (1 - config.beta2) * gb * gb
                b = b - config.lr * (mb1 / c1) / (np.sqrt(mb2 / c2) + config.eps)
        if watch is not None:
            q = float(np.sum((w @ watch) ** 2))
            if abs(q - prev_q) < change_tol:
                converged, stop_at = True, it + 1
                g, gb = obj.grad(w, b)
                gn = _max_norm(g, gb)
                record(it + 1, obj.value(w, b), gn)
                break
            prev_q = q
    return TrajectoryRecord(checkpoints, w, b, converged, stop_at, gn)


@dataclass(frozen=True)
class Verification:
    passed: bool
    trained: np.ndarray
    theory: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    surviving: np.ndarray
    collapse_match: bool
    predicted_collapsed: np.ndarray
    trained_collapsed: np.ndarray
    tol: float
    detail: dict = field(default_factory=dict)


def verify_against_theory(record: TrajectoryRecord, spec: LossSpec, cov: CovarianceModel,
                          tol: float = 1e-3, d1: int | None = None) -> Verification:
    """Compare the trained spectrum with ``global_minimum`` and the collapse verdicts.

    Surviving modes (nonzero in theory) must agree to relative ``tol``;
    modes at zero in theory must be below ``tol`` times the largest
    theoretical eigenvalue. A mode counts as collapsed in training when its
    Rayleigh quotient on ``W^T W`` is below 1e-6.
    """
    if not record.converged:
        raise NotConverged("training did not converge; verification needs a converged record")
    d1 = record.w.shape[0] if d1 is None else d1
    trained = record.eigenvalues
    gm = global_minimum(spec, cov, d1)
    theory = np.array(gm.eigenvalues)
    abs_err = np.abs(trained - theory)
    surviving = theory > 1e-10
    scale = max(float(theory.max()), 1e-12)
    rel_err = np.where(surviving, abs_err / np.where(surviving, theory, 1.0), abs_err / scale)
    spectrum_ok = bool(np.all(rel_err <= tol))

    report = predict_collapse(spec, cov)
    pred = report.collapsed
    wtw = record.wtw
    if report.commuting and report.modes[0].a is not None:
        q = joint_basis(cov.a0, cov.c)
    else:
        q = np.array(eig_sym(hessian_b(spec, cov)).eigenvectors)
    quot = np.einsum("ij,jk,ki->i", q.T, wtw, q)
    got = quot < COLLAPSE_EIG
    if d1 >= cov.dim:
        match = bool(np.array_equal(got, pred))
    else:
        # rank-limited runs leave extra modes at zero; only predicted collapses are checked
        match = bool(np.all(got[pred]))
    return Verification(spectrum_ok and match, trained, theory, abs_err, rel_err, surviving, match,
                        pred, got, tol, {"theory_loss": gm.loss_value})


def convergence_time_sweep(spec_at, cov_at, ts, config: TrainConfig, d1: int = 1, *,
                           change_tol: float = 1e-9) -> list[tuple[float, int | None]]:
    """Iterations until the near-critical mode settles, for each parameter ``t``.

    ``spec_at(t)`` and ``cov_at(t)`` build the instance. The watched mode is
    the eigenvector of ``B`` whose eigenvalue is closest to zero; a run that
    reaches ``max_iters`` reports ``None``.
    """
    out = []
    for t in ts:
        spec, cov = spec_at(t), cov_at(t)
        pair = eig_sym(hessian_b(spec, cov))
        k = int(np.argmin(np.abs(pair.eigenvalues)))
        rec = train(spec, ClosedForm(cov), d1, config, watch=pair.eigenvectors[:, k], change_tol=change_tol)
        out.append((float(t), rec.iters_to_converge if rec.converged else None))
    return out
