import numpy as np
import pytest

from collapselab.datamodel import CovarianceModel
from collapselab.losses import LossSpec

FAMILIES = ("infonce", "weighted_infonce", "beta_infonce", "spectral_contrastive", "barlow_twins",
            "effective_quartic")


def random_rotation(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def commuting_instance(rng, d, rotate=True):
    """A0 and C diagonal in a shared random basis."""
    a = rng.uniform(0.2, 3.0, d)
    c = rng.uniform(0.0, 3.0, d)
    q = random_rotation(rng, d) if rotate else np.eye(d)
    return CovarianceModel((q * a) @ q.T, (q * c) @ q.T)


def random_spec(rng, family, d, cov=None):
    if family == "weighted_infonce":
        return LossSpec(family, alpha=float(rng.uniform(0, 1)), n=int(rng.integers(2, 6)))
    if family == "beta_infonce":
        return LossSpec(family, beta=float(rng.uniform(0, 1.5)))
    if family == "effective_quartic":
        m = rng.standard_normal((d, d))
        if cov is not None:
            # keep B in the joint basis so the commuting formulas apply
            q = np.linalg.eigh(cov.a0 + 0.37 * cov.c)[1]
            return LossSpec(family, b=(q * rng.uniform(-2, 2, d)) @ q.T)
        return LossSpec(family, b=m + m.T)
    return LossSpec(family)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
