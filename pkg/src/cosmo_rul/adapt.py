"""Comparison feature pipelines: raw pass-through and CORAL alignment.

CORAL maps source rows so their covariance matches the target's: whiten with
the inverse square root of the source covariance, recolor with the square
root of the target covariance.  Square roots come from symmetric
eigendecompositions with eigenvalues clamped at ``eps`` from below, so the
full-rank case is aligned exactly (to rounding) and rank-deficient inputs
still produce a usable transform.  Means are deliberately left untouched:
this is second-order alignment only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Trajectory

EPS_DEFAULT = 1e-6


class RankDeficiencyWarning(UserWarning):
    """Covariance estimated from fewer rows than features + 1."""


@dataclass(frozen=True)
class CoralTransform:
    """Source-whitening and target-recoloring matrices (both d x d)."""

    whitening: np.ndarray
    recoloring: np.ndarray
    eps: float

    def __post_init__(self) -> None:
        for name in ("whitening", "recoloring"):
            mat = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got {mat.shape}")
            if not np.isfinite(mat).all():
                raise ValueError(f"{name} must be finite")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        if self.whitening.shape != self.recoloring.shape:
            raise ValueError("whitening and recoloring must have matching shapes")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def dim(self) -> int:
        return self.whitening.shape[0]


def _validated(rows: np.ndarray, name: str) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} must be finite")
    return X


def _clamped_sqrt(cov: np.ndarray, eps: float, inverse: bool) -> np.ndarray:
    # symmetric eigendecomposition; eigenvalues below eps are lifted to eps
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, eps)
    root = 1.0 / np.sqrt(w) if inverse else np.sqrt(w)
    return (v * root[None, :]) @ v.T


def fit_coral(
    source_features: np.ndarray, target_features: np.ndarray, eps: float = EPS_DEFAULT
) -> CoralTransform:
    """Fit the transform aligning source covariance to target covariance.

    Fewer than d+1 rows on either side leaves the covariance rank-deficient;
    that case warns (RankDeficiencyWarning) but still returns a transform,
    with the eps clamp standing in for the missing directions.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    Xs = _validated(source_features, "source_features")
    Xt = _validated(target_features, "target_features")
    if Xs.shape[1] != Xt.shape[1]:
        raise ValueError(
            f"source has {Xs.shape[1]} columns but target has {Xt.shape[1]}"
        )
    d = Xs.shape[1]
    for name, X in (("source", Xs), ("target", Xt)):
        if X.shape[0] < 2:
            raise ValueError(f"{name} needs at least 2 rows to estimate a covariance")
        if X.shape[0] < d + 1:
            warnings.warn(
                f"{name} covariance estimated from {X.shape[0]} rows for {d} features; "
                "rank-deficient directions fall back to the eps clamp",
                RankDeficiencyWarning,
                stacklevel=2,
            )
    cov_s = np.cov(Xs, rowvar=False, ddof=1).reshape(d, d)
    cov_t = np.cov(Xt, rowvar=False, ddof=1).reshape(d, d)
    return CoralTransform(
        whitening=_clamped_sqrt(cov_s, eps, inverse=True),
        recoloring=_clamped_sqrt(cov_t, eps, inverse=False),
        eps=float(eps),
    )


def apply_coral(transform: CoralTransform, rows: np.ndarray) -> np.ndarray:
    """rows @ whitening @ recoloring (row-linear; means untouched)."""
    X = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if X.ndim != 2 or X.shape[1] != transform.dim:
        raise ValueError(f"rows must have {transform.dim} columns, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("rows must be finite")
    out = (X @ transform.whitening) @ transform.recoloring
    if not np.isfinite(out).all():
        raise ValueError("transformed rows are not finite")
    return out


def raw_baseline(samples: np.ndarray | Sequence[Trajectory] | Sequence[np.ndarray]) -> np.ndarray:
    """Identity feature map: the 24 raw columns, unchanged.

    Accepts a sample matrix, a list of sample vectors, or a list of
    trajectories (rows stacked in order); an empty input yields a (0, 24)
    matrix.
    """
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.float64)
        return arr.reshape(0, 24) if arr.size == 0 else np.atleast_2d(arr).copy()
    parts = [t.samples if isinstance(t, Trajectory) else np.atleast_2d(np.asarray(t, float)) for t in samples]
    if not parts:
        return np.empty((0, 24), dtype=np.float64)
    return np.vstack(parts).astype(np.float64, copy=True)
