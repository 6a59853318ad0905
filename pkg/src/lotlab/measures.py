"""Discrete and Gaussian probability measures.

A :class:`DiscreteMeasure` is a weighted point cloud in R^d; a
:class:`GaussianMeasure` is an analytic mean/covariance pair.  Both are
immutable once built.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, EmptySupport, ZeroTotalMass

WEIGHT_SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
SYMMETRY_TOL = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud.

    Parameters
    ----------
    points : array_like, shape (m, d)
        Support points.  Duplicates are kept as separate atoms.
    weights : array_like, shape (m,)
        Nonnegative masses.  Their sum must be within ``1e-9`` of one; the
        constructor rescales them to sum to one exactly.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if pts.size else pts.reshape(0, 0)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {pts.shape}")
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} weights"
            )
        if pts.shape[0] == 0:
            raise EmptySupport("a measure needs at least one atom")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("points and weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ValueError(
                f"weights sum to {total!r}; use normalize() for unnormalized input"
            )
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            w = w / total
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def fingerprint(self) -> str:
        """Content hash of support and weights, used for reference matching."""
        h = hashlib.sha1()
        h.update(np.asarray(self.points.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.weights).tobytes())
        return h.hexdigest()

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def prune(self) -> "DiscreteMeasure":
        """Drop zero-weight atoms."""
        keep = self.weights > 0
        if keep.all():
            return self
        return DiscreteMeasure(self.points[keep], self.weights[keep])

    def coalesce(self) -> "DiscreteMeasure":
        """Merge exactly duplicated support points, summing their weights.

        First-occurrence order of the distinct points is preserved.
        """
        uniq, first, inverse = np.unique(
            self.points, axis=0, return_index=True, return_inverse=True
        )
        inverse = inverse.reshape(-1)
        summed = np.zeros(len(uniq))
        np.add.at(summed, inverse, self.weights)
        order = np.argsort(first, kind="stable")
        return DiscreteMeasure(uniq[order], summed[order])

    def to_json(self) -> dict:
        return {
            "d": self.dim,
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "DiscreteMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        d = int(obj["d"])
        pts = np.asarray(obj["points"], dtype=np.float64).reshape(-1, d)
        return cls(pts, obj["weights"])

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.asarray(point, dtype=np.float64).reshape(1, -1), [1.0])


def normalize(points, weights, prune_zero: bool = False) -> DiscreteMeasure:
    """Build a measure from arbitrary nonnegative weights by rescaling.

    >>> normalize([[0.0], [1.0]], [3, 1]).weights.tolist()
    [0.75, 0.25]
    """
    if isinstance(points, DiscreteMeasure):
        points = points.points
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != len(pts):
        raise ValueError(f"{len(pts)} points but {len(w)} weights")
    if len(w) == 0:
        raise EmptySupport("a measure needs at least one atom")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if not total > 0:
        raise ZeroTotalMass("all weights are zero")
    w = w / total
    if prune_zero:
        keep = w > 0
        pts, w = pts[keep], w[keep]
    return DiscreteMeasure(pts, w)


def pushforward(
    measure: DiscreteMeasure,
    fn: Callable[[np.ndarray], np.ndarray],
    vectorized: bool = False,
) -> DiscreteMeasure:
    """Move every atom through ``fn``, keeping its weight.

    ``fn`` maps one d-vector to one d'-vector.  With ``vectorized=True`` it
    is called once on the whole ``(m, d)`` support array instead.
    """
    if vectorized:
        moved = np.asarray(fn(measure.points), dtype=np.float64)
    else:
        moved = np.array([np.asarray(fn(p), dtype=np.float64) for p in measure.points])
    moved = moved.reshape(measure.size, -1)
    return DiscreteMeasure(moved, measure.weights)


def bounded_support_radius(measure: DiscreteMeasure) -> float:
    """Largest Euclidean norm over atoms that carry positive mass."""
    pts = measure.points[measure.weights > 0]
    if len(pts) == 0:
        raise EmptySupport("no atom carries positive mass")
    return float(np.max(np.linalg.norm(pts, axis=1)))


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Normal distribution N(mean, covariance) with SPD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        c = np.asarray(self.covariance, dtype=np.float64)
        if c.ndim == 0:
            c = c * np.eye(len(m))
        if c.shape != (len(m), len(m)):
            raise DimensionMismatch(
                f"mean has dimension {len(m)} but covariance has shape {c.shape}"
            )
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            raise ValueError("mean and covariance must be finite")
        if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.abs(c).max()):
            raise ValueError("covariance is not symmetric")
        c = 0.5 * (c + c.T)
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ValueError("covariance is not positive definite")
        object.__setattr__(self, "mean", _frozen(m))
        object.__setattr__(self, "covariance", _frozen(c))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def pushforward_affine(self, matrix, shift=None) -> "GaussianMeasure":
        """Law of ``matrix @ x + shift`` for x drawn from this Gaussian."""
        a = np.asarray(matrix, dtype=np.float64)
        b = np.zeros(a.shape[0]) if shift is None else np.asarray(shift, dtype=np.float64)
        cov = a @ self.covariance @ a.T
        return GaussianMeasure(a @ self.mean + b, 0.5 * (cov + cov.T))

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        diff = x - self.mean
        chol = np.linalg.cholesky(self.covariance)
        z = np.linalg.solve(chol, diff.T)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * (np.sum(z**2, axis=0) + logdet + self.dim * np.log(2 * np.pi))

    def sample(self, n: int, rng=None) -> np.ndarray:
        rng = np.random.default_rng(rng)
        chol = np.linalg.cholesky(self.covariance)
        return self.mean + rng.standard_normal((n, self.dim)) @ chol.T
