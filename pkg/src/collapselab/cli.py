"""Command-line entry point.

    collapselab --config run.json [--out DIR] [--seed N] [--threads N] [--set key.path=value ...]

The config is JSON validated against ``RunConfig``. Every run writes
``results.csv`` (RFC-4180), ``summary.json`` and ``meta.json`` into the
output directory, plus ``plot.svg`` and ``plot.png`` for grid results.
``meta.json`` is the effective config with an extra ``meta`` block, so it
can be passed back as ``--config`` to redo the run.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (an
``error.json`` is written next to the partial artifacts).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time
from pathlib import Path
from typing import Literal, Union, get_args, get_origin

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from . import __version__
from .datamodel import (
    AugmentationSpec,
    CovarianceModel,
    Dataset,
    covariance_model,
    empirical_cov,
)
from .errors import (
    CollapseLabError,
    ConfigError,
    NotConverged,
    NumericFailure,
    SingularMatrix,
)
from .experiments import EXPERIMENTS, SweepGrid, dump_json
from .experiments import sweeps as ex
from .experiments.grid import Axis
from .losses import LossSpec
from .plotting import render_png, render_svg
from .solver import global_minimum, predict_collapse, stationary_points
from .trainer import ClosedForm, Samples, TrainConfig, train, verify_against_theory

COMMANDS = ("solve", "predict", "train", "verify", "slice") + tuple(f"sweep:{e}" for e in EXPERIMENTS)


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MatrixSource(_Block):
    """A symmetric matrix given by exactly one of its fields."""

    diag: list[float] | None = Field(None, description="diagonal entries")
    matrix: list[list[float]] | None = Field(None, description="full square matrix, row by row")
    identity: float | None = Field(None, description="multiple of the d0 x d0 identity")
    file: str | None = Field(None, description="CSV dataset (uses its second moment) or JSON matrix")

    @model_validator(mode="after")
    def _one(self):
        given = [k for k in ("diag", "matrix", "identity", "file") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"give exactly one of diag/matrix/identity/file, got {given or 'none'}")
        if self.file is not None and not Path(self.file).is_file():
            raise ValueError(f"file {self.file!r} does not exist")
        return self

    def build(self, d0: int) -> np.ndarray:
        if self.diag is not None:
            m = np.diag(self.diag)
        elif self.matrix is not None:
            m = np.array(self.matrix, dtype=float)
        elif self.identity is not None:
            m = self.identity * np.eye(d0)
        elif self.file.endswith(".json"):
            m = np.array(json.loads(Path(self.file).read_text()), dtype=float)
        else:
            m = empirical_cov(Dataset.from_csv(self.file))
        if m.shape != (d0, d0):
            raise ConfigError(f"matrix has shape {m.shape}, expected ({d0}, {d0})")
        return m


class AugmentationBlock(_Block):
    kind: Literal["isotropic", "diagonal", "structured"] = Field("isotropic", description="noise family")
    sigma: float = Field(0.0, ge=0, description="noise scale")
    theta: float = Field(0.5, ge=0, le=1, description="style fraction of the structured noise")
    variances: list[float] = Field(default_factory=list, description="per-feature variances (diagonal kind)")

    @field_validator("variances")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("variances must be >= 0")
        return v

    def build(self) -> AugmentationSpec:
        return AugmentationSpec(self.kind, sigma=self.sigma, theta=self.theta, variances=tuple(self.variances))


class LossBlock(_Block):
    family: Literal["infonce", "weighted_infonce", "beta_infonce", "spectral_contrastive",
                    "barlow_twins", "effective_quartic"] = Field("infonce", description="loss family")
    alpha: float = Field(1.0, ge=0, description="weight of the positive pair in the denominator")
    beta: float = Field(1.0, ge=0, description="weight of the entropy term")
    weight_decay: float = Field(0.0, ge=0, description="weight decay gamma")
    kappa: float | Literal["inf"] | None = Field(None, description="normalization strength; null = none")
    target: float = Field(1.0, gt=0, description="normalization target c")
    bias: bool = Field(False, description="learn a bias (only matters with normalization)")
    n: int | None = Field(None, ge=2, description="dataset size for weighted_infonce")
    b: MatrixSource | None = Field(None, description="quadratic coefficient for effective_quartic")

    @field_validator("kappa")
    @classmethod
    def _kappa(cls, v):
        if isinstance(v, float) and not v > 0:
            raise ValueError("kappa must be > 0")
        return v

    def build(self, d0: int) -> LossSpec:
        kappa = math.inf if self.kappa == "inf" else self.kappa
        b = self.b.build(d0) if self.b is not None else None
        return LossSpec(self.family, alpha=self.alpha, beta=self.beta, b=b, weight_decay=self.weight_decay,
                        kappa=kappa, target=self.target, bias=self.bias, n=self.n)


class InstanceBlock(_Block):
    d0: int = Field(2, ge=1, le=512, description="input dimension")
    d1: int | None = Field(None, ge=1, le=512, description="output dimension (default d0)")
    a0: MatrixSource = Field(default_factory=lambda: MatrixSource(identity=1.0), description="clean covariance A0")
    c: MatrixSource | None = Field(None, description="augmentation covariance C (or use augmentation)")
    augmentation: AugmentationBlock | None = Field(None, description="augmentation noise generating C")
    loss: LossBlock = Field(default_factory=LossBlock, description="loss family and hyperparameters")

    @model_validator(mode="after")
    def _c_or_aug(self):
        if self.c is not None and self.augmentation is not None:
            raise ValueError("give either c or augmentation, not both")
        return self

    def build(self) -> tuple[LossSpec, CovarianceModel, int]:
        a0 = self.a0.build(self.d0)
        if self.c is not None:
            cov = covariance_model(a0, c=self.c.build(self.d0))
        else:
            cov = covariance_model(a0, self.augmentation.build() if self.augmentation else None)
        return self.loss.build(self.d0), cov, self.d1 or self.d0


class TrainerBlock(_Block):
    optimizer: Literal["gd", "adam"] = Field("adam", description="gradient descent or Adam")
    lr: float = Field(6e-4, gt=0, description="learning rate")
    max_iters: int = Field(5000, ge=0, description="iteration cap")
    grad_tol: float = Field(1e-8, gt=0, description="stop when the gradient max-norm is below this")
    init_scale: float = Field(0.1, gt=0, description="initial weights ~ N(0,1) * init_scale / sqrt(d0)")
    record_every: int = Field(100, ge=1, description="checkpoint interval")
    source: Literal["closed_form", "samples"] = Field("closed_form", description="objective to train on")
    n_samples: int = Field(4096, ge=2, description="dataset size for the samples source")
    mc_draws: int = Field(1, ge=1, description="augmentation draws for the samples source")
    control_variate: bool = Field(True, description="swap each draw's quadratic for its expectation")
    resample: bool = Field(False, description="fresh augmentation draws every step (samples source)")
    verify_tol: float = Field(1e-3, gt=0, description="relative tolerance used by verify")

    def build(self, seed: int) -> TrainConfig:
        return TrainConfig(self.optimizer, self.lr, self.max_iters, self.grad_tol, seed, self.init_scale,
                           self.record_every)


class TaskBlock(_Block):
    target_coeff: float = Field(1.0, description="label y = target_coeff * x1")
    ridge: float = Field(1e-3, gt=0, description="ridge penalty")
    n_train: int = Field(2048, ge=2, description="train split size")
    n_test: int = Field(2048, ge=2, description="test split size")


def _probabilities(v):
    if v is not None and any(not 0 <= x <= 1 for x in v):
        raise ValueError("values must lie in [0, 1]")
    return v


class SweepBlock(_Block):
    mode: Literal["analytic", "trained"] = Field("analytic", description="solver formulas or trainer runs")
    sigmas: list[float] | None = Field(None, description="noise levels (experiment default if null)")
    thetas: list[float] | None = Field(None, description="structured-noise style fractions in [0, 1]")
    betas: list[float] | None = Field(None, description="beta values for beta_collapse_sweep")
    ns: list[int] | None = Field(None, description="dataset sizes for critical_n_sweep")
    ps: list[float] | None = Field(None, description="class-0 proportions in [0, 1]")
    values: list[float] | None = Field(None, description="slice coordinates (must contain 0)")
    over: Literal["beta", "sigma"] = Field("beta", description="axis of beta_collapse_sweep")
    a: list[float] | None = Field(None, description="diagonal of A0 (experiment default if null)")
    c: list[float] | None = Field(None, description="diagonal of C, or its profile when over=sigma")
    alpha: float = Field(0.1, ge=0, description="alpha for critical_n_sweep")
    beta: float = Field(0.5, ge=0, description="beta for phase_diagram, downstream_eval, over=sigma")
    sigma: float = Field(5.0, ge=0, description="noise level for critical_n_sweep")
    target: float = Field(1.0, gt=0, description="normalization target for normalization_collapse")
    kappa: float = Field(1e3, gt=0, description="finite kappa for trained normalization runs")
    slice_kind: Literal["2d", "scalar"] = Field("2d", description="landscape slice shape")
    class_means: list[list[float]] | None = Field(None, description="two class means (imbalance)")
    class_covs: list[list[list[float]]] | None = Field(None, description="two class covariances (imbalance)")
    aug_cov: list[list[float]] | None = Field(None, description="fixed C for imbalance_robustness")
    task: TaskBlock = Field(default_factory=TaskBlock, description="downstream regression task")
    log_x: bool | None = Field(None, description="log x axis in plots (experiment default if null)")
    log_y: bool | None = Field(None, description="log y axis in plots (experiment default if null)")

    @field_validator("thetas", "ps")
    @classmethod
    def _unit(cls, v):
        return _probabilities(v)

    @field_validator("sigmas", "betas")
    @classmethod
    def _nonneg(cls, v):
        if v is not None and any(x < 0 for x in v):
            raise ValueError("values must be >= 0")
        return v


class RunConfig(_Block):
    command: str = Field(..., description="one of " + ", ".join(COMMANDS))
    seed: int = Field(0, ge=0, le=(1 << 64) - 1, description="64-bit seed for every random stream")
    out: str | None = Field(None, description="output directory (overridden by --out)")
    threads: int | None = Field(None, ge=1, description="worker threads for sweeps")
    instance: InstanceBlock = Field(default_factory=InstanceBlock, description="problem instance")
    trainer: TrainerBlock = Field(default_factory=TrainerBlock, description="optimizer settings")
    sweep: SweepBlock = Field(default_factory=SweepBlock, description="experiment parameters")
    meta: dict | None = Field(None, description="run metadata written to meta.json; ignored on input")

    @field_validator("command")
    @classmethod
    def _command(cls, v):
        if v not in COMMANDS:
            raise ValueError(f"unknown command {v!r}")
        return v


# ---------------------------------------------------------------------------
# help text


def _type_name(ann) -> str:
    origin = get_origin(ann)
    if origin is Literal:
        return "|".join(repr(a) if not isinstance(a, str) else a for a in get_args(ann))
    if origin in (Union, getattr(__import__("types"), "UnionType", Union)):
        return " or ".join(_type_name(a) for a in get_args(ann))
    if origin is list:
        return f"list[{', '.join(_type_name(a) for a in get_args(ann))}]"
    if ann is type(None):
        return "null"
    return getattr(ann, "__name__", str(ann))


def config_keys(model=RunConfig, prefix="") -> list[str]:
    lines = []
    for name, f in model.model_fields.items():
        path = prefix + name
        ann = f.annotation
        if f.is_required():
            default = "required"
        elif f.default_factory is not None:
            default = "see nested keys"
        else:
            default = json.dumps(f.default)
        lines.append(f"  {path} ({_type_name(ann)}, default {default}): {f.description or ''}")
        for sub in (ann, *get_args(ann)):
            if isinstance(sub, type) and issubclass(sub, BaseModel):
                lines.extend(config_keys(sub, path + "."))
    return lines


# ---------------------------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
        else:
            node = node.setdefault(p, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(f"--set {key}: {p} is not a block")
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = _parse_value(value)
    else:
        node[last] = _parse_value(value)


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "config"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def load_config(path, overrides=(), seed=None) -> RunConfig:
    if path is None:
        raw = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {str(p)!r} does not exist")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: line {e.lineno} column {e.colno}: {e.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be a JSON object")
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["seed"] = seed
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format_validation(e)) from None


def _git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


# ---------------------------------------------------------------------------
# commands


def _table_grid(name: str, rows: list[dict], columns: list[str], axis: str = "row") -> SweepGrid:
    grid = SweepGrid(name, [Axis(axis, np.arange(len(rows), dtype=float))], columns)
    for i, r in enumerate(rows):
        grid.set((i,), r)
    return grid


def _cmd_solve(cfg: RunConfig, threads: int):
    spec, cov, d1 = cfg.instance.build()
    pts = stationary_points(spec, cov, d1)
    gm = global_minimum(spec, cov, d1)
    d0 = cov.dim
    cols = ["mask", "rank", "loss", "is_local_min", "rho"] + [f"eig_{i}" for i in range(d0)]
    rows = []
    for p in pts:
        r = {"mask": "".join("1" if m else "0" for m in p.mask), "rank": p.rank, "loss": p.loss_value,
             "is_local_min": p.is_local_min, "rho": p.rho}
        r.update({f"eig_{i}": float(v) for i, v in enumerate(p.eigenvalues)})
        rows.append(r)
    summary = {"global_minimum": {"mask": "".join("1" if m else "0" for m in gm.mask), "loss": gm.loss_value,
                                  "eigenvalues": gm.eigenvalues}, "count": len(pts)}
    return _table_grid("stationary_points", rows, cols, "point"), summary, None


def _cmd_predict(cfg: RunConfig, threads: int):
    spec, cov, _ = cfg.instance.build()
    rep = predict_collapse(spec, cov)
    cols = ["index", "a", "c", "b", "verdict", "threshold_quantity", "lhs", "rhs"]
    rows = [{"index": m.index, "a": m.a, "c": m.c, "b": m.b, "verdict": m.verdict,
             "threshold_quantity": m.threshold_quantity, "lhs": m.lhs, "rhs": m.rhs} for m in rep.modes]
    summary = {"complete_collapse": rep.complete_collapse, "dimensional_collapse": rep.dimensional_collapse,
               "commuting": rep.commuting}
    return _table_grid("collapse_report", rows, cols, "mode"), summary, None


def _source(cfg: RunConfig, cov: CovarianceModel):
    t = cfg.trainer
    if t.source == "closed_form":
        return ClosedForm(cov)
    from .datamodel import sample_gaussian

    inst = cfg.instance
    aug = inst.augmentation.build() if inst.augmentation else AugmentationSpec.isotropic(0.0)
    if inst.c is not None:
        raise ConfigError("trainer.source=samples needs instance.augmentation, not instance.c")
    ds = sample_gaussian(cov.dim, t.n_samples, cov.a0, cfg.seed)
    return Samples(ds, aug, t.mc_draws, cfg.seed, t.control_variate, t.resample)


def _trajectory_grid(rec, d0: int) -> SweepGrid:
    cols = ["loss", "grad_norm"] + [f"eig_{i}" for i in range(d0)]
    iters = [c.iter for c in rec.checkpoints]
    grid = SweepGrid("trajectory", [Axis("iter", np.array(iters, dtype=float))], cols)
    for i, c in enumerate(rec.checkpoints):
        r = {"loss": c.loss, "grad_norm": c.grad_norm}
        r.update({f"eig_{k}": float(v) for k, v in enumerate(c.eigenvalues)})
        grid.set((i,), r)
    return grid


def _cmd_train(cfg: RunConfig, threads: int):
    spec, cov, d1 = cfg.instance.build()
    rec = train(spec, _source(cfg, cov), d1, cfg.trainer.build(cfg.seed))
    summary = {"converged": rec.converged, "iters_to_converge": rec.iters_to_converge,
               "final_eigenvalues": rec.eigenvalues, "final_grad_norm": rec.final_grad_norm}
    grid = _trajectory_grid(rec, cov.dim)
    return grid, summary, {"keys": [f"eig_{i}" for i in range(cov.dim)], "log_y": False}


def _cmd_verify(cfg: RunConfig, threads: int):
    spec, cov, d1 = cfg.instance.build()
    rec = train(spec, _source(cfg, cov), d1, cfg.trainer.build(cfg.seed))
    v = verify_against_theory(rec, spec, cov, cfg.trainer.verify_tol, d1)
    cols = ["trained", "theory", "abs_err", "rel_err", "surviving"]
    rows = [{"trained": float(v.trained[i]), "theory": float(v.theory[i]), "abs_err": float(v.abs_err[i]),
             "rel_err": float(v.rel_err[i]), "surviving": bool(v.surviving[i])} for i in range(v.trained.size)]
    summary = {"passed": v.passed, "collapse_match": v.collapse_match, "tol": v.tol,
               "predicted_collapsed": v.predicted_collapsed, "trained_collapsed": v.trained_collapsed}
    return _table_grid("verification", rows, cols, "mode"), summary, None


def _diag_or(values, fallback):
    return np.asarray(values if values is not None else fallback, dtype=float)


def _instance_diag(cfg: RunConfig, which: str):
    inst = cfg.instance
    spec_, cov, _ = inst.build()
    m = cov.a0 if which == "a" else cov.c
    if not np.allclose(m, np.diag(np.diag(m)), rtol=0, atol=1e-14):
        raise ConfigError(f"instance.{'a0' if which == 'a' else 'c'} must be diagonal for this sweep; "
                          f"or set sweep.{which}")
    return np.diag(m)


def _cmd_sweep(cfg: RunConfig, threads: int, name: str):
    s = cfg.sweep
    tc = cfg.trainer.build(cfg.seed)
    plot = {}
    if name == "sigma_scaling":
        a = _diag_or(s.a, np.ones(32))
        sig = s.sigmas or list(np.logspace(-1, 3, 41))
        grid = ex.sigma_scaling(a, sig, s.mode, tc, cfg.instance.d1, threads)
        plot = {"keys": ["eig_0", "eig_1", "eig_2"], "log_x": True, "log_y": True}
    elif name == "critical_n_sweep":
        a = _diag_or(s.a, np.ones(32))
        ns = s.ns or [8, 12, 16, 20, 22, 23, 24, 28, 32, 48, 64]
        grid = ex.critical_n_sweep(s.alpha, s.sigma, a, ns, s.mode, tc, cfg.trainer.mc_draws, cfg.seed, threads,
                                   resample=True)
        plot = {"keys": ["eig_0", "eig_1", "eig_2"], "log_x": True, "log_y": False}
    elif name == "beta_collapse_sweep":
        a = _diag_or(s.a, [1.0] * 5)
        c = _diag_or(s.c, [0.0, 1.0, 2.0, 4.0, 8.0])
        if s.over == "beta":
            vals = s.betas or [round(x, 10) for x in np.linspace(0, 2, 21)]
        else:
            vals = s.sigmas or list(np.linspace(0, 2, 21))
        grid = ex.beta_collapse_sweep(a, c, vals, s.over, s.beta, s.mode, tc, threads)
        plot = {"keys": [f"mode_{i}" for i in range(a.size)]}
    elif name == "normalization_collapse":
        a = _diag_or(s.a, np.linspace(0.2, 2.0, 32))
        sig = s.sigmas or list(np.linspace(0, 3, 31))
        grid = ex.normalization_collapse(a, sig, s.target, cfg.instance.loss.family, s.mode, s.kappa, tc,
                                         cfg.instance.d1, threads)
        plot = {"keys": ["eig_0", "eig_1", "eig_2"]}
    elif name == "phase_diagram":
        a = _diag_or(s.a, [1.0, 1.0])
        grid = ex.phase_diagram(s.sigmas or list(np.linspace(0, 4, 17)), s.thetas or list(np.linspace(0, 1, 21)),
                                s.beta, a, threads)
        plot = {"key": "code"}
    elif name == "downstream_eval":
        a = _diag_or(s.a, [1.0, 1.0])
        task = ex.DownstreamTask(target_coeff=s.task.target_coeff, ridge=s.task.ridge, n_train=s.task.n_train,
                                 n_test=s.task.n_test, seed=cfg.seed)
        grid = ex.downstream_eval(task, s.sigmas or list(np.linspace(0, 4, 17)), s.thetas or [0.5, 1.0],
                                  s.beta, a, s.mode, tc, threads)
        plot = {"key": "mse_over_var"}
    elif name == "imbalance_robustness":
        means = s.class_means or [[3.0, 0.0, 0.0], [2.0, 2.0, 0.0]]
        d = len(means[0])
        covs = s.class_covs or [list(0.1 * np.eye(d)), list(0.1 * np.eye(d))]
        c = np.array(s.aug_cov) if s.aug_cov is not None else np.diag(np.linspace(2.0, 0.5, d))
        grid = ex.imbalance_robustness(s.ps or list(np.linspace(0.5, 0.95, 10)), means,
                                       [np.array(m, dtype=float) for m in covs], c, threads=threads)
        plot = {"keys": ["angle_infonce", "angle_spectral_contrastive"]}
    elif name == "landscape_slice":
        return _cmd_slice(cfg, threads)
    else:
        raise ConfigError(f"unknown experiment {name!r}")
    for k in ("log_x", "log_y"):
        if getattr(s, k) is not None:
            plot[k] = getattr(s, k)
    return grid, grid.summary, plot


def _cmd_slice(cfg: RunConfig, threads: int):
    spec, cov, _ = cfg.instance.build()
    vals = cfg.sweep.values or [round(x, 10) for x in np.linspace(-1.5, 1.5, 31)]
    grid = ex.landscape_slice(spec, cov, vals, cfg.sweep.slice_kind, threads=threads)
    return grid, grid.summary, {"key": "loss"}


def execute(cfg: RunConfig, threads: int = 1):
    cmd = cfg.command
    if cmd == "solve":
        return _cmd_solve(cfg, threads)
    if cmd == "predict":
        return _cmd_predict(cfg, threads)
    if cmd == "train":
        return _cmd_train(cfg, threads)
    if cmd == "verify":
        return _cmd_verify(cfg, threads)
    if cmd == "slice":
        return _cmd_slice(cfg, threads)
    return _cmd_sweep(cfg, threads, cmd.split(":", 1)[1])


def _threads(flag, cfg: RunConfig) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("COLLAPSELAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"COLLAPSELAB_THREADS={env!r} is not an integer") from None
    return cfg.threads or 1


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="")


def run(config_path, overrides=(), *, out=None, seed=None, threads=None, stdout=None, stderr=None) -> int:
    """Run one configured command; returns the process exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(config_path, overrides, seed)
        nthreads = _threads(threads, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=stderr)
        return 2
    out_dir = Path(out or cfg.out or "collapselab-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    config = cfg.model_dump(mode="json", exclude={"meta"})
    t0 = time.perf_counter()
    meta = {
        "version": __version__,
        "git_describe": _git_describe(),
        "seeds": {"seed": cfg.seed, "rng": "numpy Philox keyed by SeedSequence(seed, spawn_key=stream)"},
        "covariances": "uncentered second moments",
        "threads": nthreads,
    }
    _write(out_dir / "meta.json", dump_json({**config, "meta": {**meta, "status": "running"}}))
    try:
        grid, summary, plot = execute(cfg, nthreads)
    except (NumericFailure, NotConverged, SingularMatrix) as e:
        err = {"error": type(e).__name__, "message": str(e), "command": cfg.command}
        rec = getattr(e, "record", None)
        if rec is not None:
            err["last_checkpoint"] = {"iter": rec.iter, "loss": rec.loss, "grad_norm": rec.grad_norm,
                                      "eigenvalues": rec.eigenvalues}
        _write(out_dir / "error.json", dump_json(err))
        meta.update(status="failed", wall_time_s=time.perf_counter() - t0)
        _write(out_dir / "meta.json", dump_json({**config, "meta": meta}))
        print(f"numeric failure: {type(e).__name__}: {e}", file=stderr)
        return 3
    except (CollapseLabError, ValueError) as e:
        print(f"config error: {e}", file=stderr)
        return 2
    text = grid.to_csv_text()
    _write(out_dir / "results.csv", text)
    _write(out_dir / "summary.json", dump_json(summary))
    if plot is not None and len(grid.axes) in (1, 2) and grid.numeric_columns():
        _write(out_dir / "plot.svg", render_svg(grid, **plot))
        render_png(grid, out_dir / "plot.png", **plot)
    meta.update(status="ok", wall_time_s=time.perf_counter() - t0)
    _write(out_dir / "meta.json", dump_json({**config, "meta": meta}))
    stdout.write(text.replace("\r\n", "\n"))
    print(f"wrote {out_dir}", file=stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys (JSON; nested keys use dots with --set):\n" + "\n".join(config_keys())
    epilog += "\n\ncommands: " + ", ".join(COMMANDS)
    epilog += "\nexit codes: 0 ok, 2 config error, 3 numeric failure (error.json written)"
    p = argparse.ArgumentParser(prog="collapselab", description="Collapse analysis for linear SSL models.",
                                epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: COLLAPSELAB_THREADS)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. instance.loss.beta=0.5 (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.config, args.overrides, out=args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
