"""Isotropic whitening of embedding sets.

Fits an affine map x -> (x - mu) @ w such that the fitting set comes out
zero-mean with identity covariance. The map is derived from the SVD of the
population covariance (divisor N, not N-1):

    sigma = U diag(s) U^T        w = U diag(s^-1/2)

Dimensionality is preserved; a numerically rank-deficient covariance is an
error rather than a silent pseudo-inverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput, RankDeficient, TooFewSamples

EPS_RANK = 1e-10


@dataclass(eq=False)
class WhiteningModel:
    mu: np.ndarray  # (dim,)
    w: np.ndarray   # (dim, dim); applied on the right to centered row vectors

    @property
    def dim(self) -> int:
        return int(self.mu.shape[0])


def fit_whitening(keys, eps_rank: float = EPS_RANK) -> WhiteningModel:
    """Fit a whitening model on a (n, dim) array of row vectors.

    Raises TooFewSamples for n < 2, NonFiniteInput on NaN/Inf, and
    RankDeficient when the smallest singular value of the covariance falls
    below eps_rank times the largest.
    """
    x = np.asarray(keys, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array of row vectors, got shape {x.shape}")
    n, dim = x.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 vectors to fit, got {n}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("fitting set holds NaN or Inf")

    mu = x.mean(axis=0)
    xc = x - mu
    sigma = (xc.T @ xc) / n
    u, s, _ = np.linalg.svd(sigma, hermitian=True)
    if s[0] <= 0.0 or s[-1] < eps_rank * s[0]:
        raise RankDeficient(
            f"covariance is numerically rank-deficient "
            f"(singular values {s[-1]:.3e} .. {s[0]:.3e})"
        )
    w = u * (1.0 / np.sqrt(s))
    return WhiteningModel(mu, w)


def apply_whitening(model: WhiteningModel, x) -> np.ndarray:
    """Whiten one vector (dim,) or a batch (n, dim).

    Uses a fixed per-element accumulation (no BLAS dispatch) so a row gives
    bitwise-identical output whether whitened alone or inside a batch.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != model.dim:
        raise DimensionMismatch(f"vector dim {arr.shape[-1]} != model dim {model.dim}")
    single = arr.ndim == 1
    centered = np.atleast_2d(arr) - np.asarray(model.mu, dtype=np.float64)
    w = np.asarray(model.w, dtype=np.float64)
    out = np.einsum("nd,de->ne", centered, w)
    return out[0] if single else out
