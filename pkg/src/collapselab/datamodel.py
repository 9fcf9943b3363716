"""Datasets, augmentation noise and the covariance triple (A0, C, Sigma).

All covariances are uncentered second moments, ``E[x x^T]``. Random numbers
come from numpy's counter-based Philox generator keyed by an explicit
64-bit seed plus a stream index, so every draw is reproducible and
independent streams never overlap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import DimensionError, InvalidCovariance, InvalidMatrix
from .spectra import as_sym, commutes, is_psd, mat_pow

SEED_MASK = (1 << 64) - 1


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional substream path."""
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class CovarianceModel:
    a0: np.ndarray
    c: np.ndarray
    sigma: np.ndarray = field(init=False)
    commuting: bool = field(init=False)

    def __post_init__(self):
        a0 = as_sym(self.a0, name="A0")
        c = as_sym(self.c, name="C")
        if a0.shape != c.shape:
            raise DimensionError(f"A0 {a0.shape} and C {c.shape} differ")
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sigma", as_sym(a0 + c, name="Sigma"))
        object.__setattr__(self, "commuting", commutes(a0, c, 1e-8))

    @property
    def dim(self) -> int:
        return self.a0.shape[0]

    @classmethod
    def diagonal(cls, a, c) -> CovarianceModel:
        return cls(np.diag(np.asarray(a, dtype=float)), np.diag(np.asarray(c, dtype=float)))


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise DimensionError("points must be an N x d array")
        if pts.shape[0] < 2:
            raise DimensionError("a dataset needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidMatrix("dataset has non-finite entries")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow([f"x{i}" for i in range(self.dim)])
            for row in self.points:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> Dataset:
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header != [f"x{i}" for i in range(len(header))]:
            raise ValueError(f"unexpected dataset header {header}")
        return cls(np.array([[float(v) for v in r] for r in body if r], dtype=float))


@dataclass(frozen=True)
class AugmentationSpec:
    """Additive Gaussian noise ``x = x_hat + eps``.

    ``structured`` is the two-feature augmentation ``sigma * diag(sqrt(1-theta),
    sqrt(theta)) xi``: theta=1 perturbs only the second (style) feature,
    theta=0.5 is isotropic.
    """

    kind: Literal["isotropic", "diagonal", "structured"] = "isotropic"
    sigma: float = 0.0
    theta: float = 0.5
    variances: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("isotropic", "diagonal", "structured"):
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if any(v < 0 for v in self.variances):
            raise ValueError("variances must be >= 0")
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))

    @classmethod
    def isotropic(cls, sigma: float) -> AugmentationSpec:
        return cls("isotropic", sigma=sigma)

    @classmethod
    def diagonal(cls, variances) -> AugmentationSpec:
        return cls("diagonal", variances=tuple(variances))

    @classmethod
    def structured(cls, sigma: float, theta: float) -> AugmentationSpec:
        return cls("structured", sigma=sigma, theta=theta)


@dataclass(frozen=True)
class ImbalanceSpec:
    proportions: tuple[float, float]
    class_means: tuple[np.ndarray, np.ndarray]
    class_covs: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=float)
        if p.shape != (2,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"proportions {self.proportions} are not a 2-simplex point")


def augmentation_cov(spec: AugmentationSpec, dim: int) -> np.ndarray:
    if spec.kind == "isotropic":
        return as_sym(spec.sigma**2 * np.eye(dim))
    if spec.kind == "diagonal":
        if len(spec.variances) != dim:
            raise DimensionError(f"{len(spec.variances)} variances for dim {dim}")
        return as_sym(np.diag(spec.variances))
    if dim != 2:
        raise DimensionError("structured augmentation is defined for dim == 2")
    return as_sym(spec.sigma**2 * np.diag([1.0 - spec.theta, spec.theta]))


def noise_root(spec: AugmentationSpec, dim: int) -> np.ndarray:
    """Matrix ``R`` with ``R R^T = C`` used to draw augmentation noise."""
    return mat_pow(augmentation_cov(spec, dim), 0.5)


def sample_gaussian(dim: int, n: int, cov, seed: int) -> Dataset:
    """``n`` zero-mean Gaussian rows with covariance ``cov``.

    Uses ``cov^{1/2}`` from the spectrum, so singular PSD covariances work.
    """
    cov = as_sym(cov, name="cov")
    if cov.shape != (dim, dim):
        raise DimensionError(f"cov shape {cov.shape} != ({dim}, {dim})")
    if not is_psd(cov):
        raise InvalidCovariance("covariance is not positive semidefinite")
    root = mat_pow(cov, 0.5)
    z = rng_for(seed, 0).standard_normal((n, dim))
    return Dataset(z @ root)


def empirical_cov(ds) -> np.ndarray:
    """Uncentered second moment ``(1/n) sum_i x_i x_i^T``; accepts raw arrays too."""
    x = ds.points if isinstance(ds, Dataset) else np.atleast_2d(np.asarray(ds, dtype=float))
    return as_sym(x.T @ x / x.shape[0])


def imbalanced_cov(spec: ImbalanceSpec) -> np.ndarray:
    out = 0.0
    for p, mu, cov in zip(spec.proportions, spec.class_means, spec.class_covs):
        mu = np.asarray(mu, dtype=float)
        out = out + p * (as_sym(cov) + np.outer(mu, mu))
    return as_sym(out)


def covariance_model(a0, aug: AugmentationSpec | None = None, c=None) -> CovarianceModel:
    """Assemble the covariance triple from A0 and either an augmentation or C."""
    a0 = as_sym(a0, name="A0")
    if c is None:
        c = augmentation_cov(aug or AugmentationSpec.isotropic(0.0), a0.shape[0])
    return CovarianceModel(a0, c)
