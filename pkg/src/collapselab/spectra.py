"""Small dense symmetric linear algebra.

Every analytic formula in the package goes through these helpers: the
eigendecomposition, eigenvalue masking, fractional matrix powers and the
commutation test used to decide which solver route applies.

Matrices are plain ``numpy`` arrays. ``as_sym`` is the single entry point
that validates and symmetrizes them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidMatrix, SingularMatrix

MAX_DIM = 512
POW_EPS = 1e-12


@dataclass(frozen=True)
class SpectralPair:
    """Eigenvalues sorted descending, eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return as_sym((u * self.eigenvalues) @ u.T)


def as_sym(m, *, name: str = "matrix") -> np.ndarray:
    """Return a symmetrized float copy of ``m``.

    Raises InvalidMatrix for non-finite entries and DimensionError for
    non-square input or anything above the desk-scale limit.
    """
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise DimensionError(f"{name} has dim {a.shape[0]} > {MAX_DIM}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    out = 0.5 * (a + a.T)
    out.setflags(write=False)
    return out


def _fix_signs(u: np.ndarray) -> np.ndarray:
    # largest-magnitude component of every column is made positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def stable_desc_order(values: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Indices sorting ``values`` descending; near-ties keep original order."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(-values, kind="stable")
    scale = max(1.0, float(np.max(np.abs(values)))) if values.size else 1.0
    out = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and values[order[i]] - values[order[j]] <= rtol * scale:
            j += 1
        out.extend(sorted(order[i:j]))
        i = j
    return np.asarray(out, dtype=int)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver.

    Stops once the off-diagonal Frobenius norm falls below ``tol`` times the
    diagonal norm. Returns unsorted ``(eigenvalues, eigenvectors)``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        diag = np.linalg.norm(np.diag(a))
        if off <= tol * max(diag, np.finfo(float).tiny):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300 or abs(apq) < 1e-18 * (abs(a[p, p]) + abs(a[q, q])):
                    # negligible next to the diagonal: drop it rather than rotate
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    return np.diag(a).copy(), v


def eig_sym(m, *, method: str = "lapack") -> SpectralPair:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    ``method="lapack"`` (default) calls ``numpy.linalg.eigh``;
    ``method="jacobi"`` uses the cyclic Jacobi sweep above. Both return the
    same sorted, sign-normalized pair up to rotations inside degenerate
    blocks.
    """
    a = as_sym(m)
    if method == "lapack":
        w, u = np.linalg.eigh(a)
    elif method == "jacobi":
        w, u = jacobi_eigh(a)
        asc = np.argsort(w, kind="stable")
        w, u = w[asc], u[:, asc]
    else:
        raise ValueError(f"unknown method {method!r}")
    order = stable_desc_order(w[::-1])
    w = w[::-1][order]
    u = _fix_signs(u[:, ::-1][:, order])
    w.setflags(write=False)
    u.setflags(write=False)
    return SpectralPair(w, u)


def masked(pair: SpectralPair, mask) -> np.ndarray:
    """``U (M∘Λ) U^T`` for a boolean mask over the sorted eigenvalues."""
    bits = np.asarray(mask, dtype=bool)
    if bits.shape != (pair.dim,):
        raise DimensionError(f"mask length {bits.shape} != dim {pair.dim}")
    lam = np.where(bits, pair.eigenvalues, 0.0)
    u = pair.eigenvectors
    return as_sym((u * lam) @ u.T)


def mat_pow(m, p: float) -> np.ndarray:
    """Symmetric matrix power via the spectrum.

    Negative or fractional powers need every eigenvalue above 1e-12
    (tiny negative round-off is clipped for ``p > 0``).
    """
    pair = eig_sym(m)
    w = pair.eigenvalues
    if p == 0:
        return as_sym(np.eye(pair.dim))
    integer = float(p).is_integer()
    if p < 0 and np.any(w <= POW_EPS):
        raise SingularMatrix(f"matrix power {p} of a matrix with eigenvalue {w.min():.3e}")
    if not integer:
        if np.any(w < -POW_EPS * max(1.0, abs(w).max())):
            raise SingularMatrix(f"fractional power {p} of an indefinite matrix")
        w = np.clip(w, 0.0, None)
    u = pair.eigenvectors
    return as_sym((u * w**p) @ u.T)


def commutes(a, b, tol: float = 1e-8) -> bool:
    a = as_sym(a)
    b = as_sym(b)
    if a.shape != b.shape:
        raise DimensionError(f"shapes {a.shape} and {b.shape} differ")
    scale = 1.0 + np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
    return float(np.max(np.abs(a @ b - b @ a))) <= tol * scale


def is_psd(m, tol: float = 1e-10) -> bool:
    w = eig_sym(m).eigenvalues
    return bool(w[-1] >= -tol * max(1.0, abs(w[0])))


_MIX = (1.0, np.sqrt(2.0), np.sqrt(3.0) / 7.0, np.pi / 11.0)


def joint_basis(*mats, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis diagonalizing a family of commuting symmetric matrices.

    Columns are ordered by the coordinate axis each vector loads on most,
    so diagonal inputs come back as the identity.
    """
    mats = [as_sym(m) for m in mats]
    n = mats[0].shape[0]
    combo = sum(w * m for w, m in zip(_MIX, mats))
    q = np.array(eig_sym(combo).eigenvectors)
    for m in mats:
        d = q.T @ m @ q
        off = np.max(np.abs(d - np.diag(np.diag(d)))) if n > 1 else 0.0
        if off > tol * (1.0 + np.abs(m).max()):
            raise ValueError("matrices do not share an eigenbasis")
    axis = np.argmax(np.abs(q), axis=0)
    q = q[:, np.argsort(axis, kind="stable")]
    return _fix_signs(q)


def lift(wtw, d1: int) -> np.ndarray:
    """A ``d1 x d0`` matrix ``W`` with ``W^T W`` equal to the given Gram matrix."""
    pair = eig_sym(wtw)
    d0 = pair.dim
    lam = np.clip(pair.eigenvalues, 0.0, None)
    # roundoff eigenvalues of a rank-deficient Gram would become 1e-8 rows
    lam[lam <= 1e-13 * max(float(lam.max(initial=0.0)), 1e-300)] = 0.0
    k = min(d1, d0)
    w = np.zeros((d1, d0))
    w[:k] = np.sqrt(lam[:k])[:, None] * pair.eigenvectors[:, :k].T
    return w


def principal_angle(u: np.ndarray, v: np.ndarray) -> float:
    """Largest principal angle (radians) between two column spaces."""
    qu, _ = np.linalg.qr(np.asarray(u, dtype=float))
    qv, _ = np.linalg.qr(np.asarray(v, dtype=float))
    if qu.shape[1] != qv.shape[1]:
        return float(np.pi / 2)
    # sine form keeps precision near zero, unlike arccos of the cosines
    resid = qv - qu @ (qu.T @ qv)
    s = np.linalg.norm(resid, 2)
    return float(np.arcsin(min(1.0, s)))
