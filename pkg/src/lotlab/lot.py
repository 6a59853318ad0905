"""Linear optimal transport embeddings and separation-bound calculators.

A measure mu is embedded against a discrete reference sigma by solving the
discrete OT problem sigma -> mu and reading off an approximate Monge map,
one target point per reference atom.  Distances between embeddings are
taken in L2(sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InfeasibleBound, ReferenceMismatch
from .gaussian import sqrtm_psd
from .measures import DiscreteMeasure, GaussianMeasure
from .solver import (
    extract_monge_argmax,
    extract_monge_barycentric,
    sinkhorn,
    solve_exact,
)

EXTRACTIONS = ("argmax", "barycentric")


@dataclass(frozen=True, eq=False)
class LotFeature:
    """Flattened Monge targets T(x_1), ..., T(x_m) of length d * m.

    ``indices`` records the chosen target atom per reference atom when the
    map came from argmax extraction.
    """

    reference: DiscreteMeasure
    values: np.ndarray
    indices: Optional[np.ndarray] = None
    centered: bool = False
    reference_key: str = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if len(v) != self.reference.dim * self.reference.size:
            raise ValueError(
                f"feature length {len(v)} does not match reference "
                f"({self.reference.size} atoms in R^{self.reference.dim})"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "reference_key", self.reference.fingerprint())

    @property
    def targets(self) -> np.ndarray:
        return self.values.reshape(self.reference.size, self.reference.dim)


def embed(
    reference: DiscreteMeasure,
    measure: DiscreteMeasure,
    extraction: str = "argmax",
    solver: str = "exact",
    epsilon: Optional[float] = None,
    centered: bool = False,
) -> LotFeature:
    """LOT feature of ``measure`` with respect to ``reference``.

    ``solver`` is ``"exact"`` (network simplex) or ``"sinkhorn"``; the
    latter uses ``epsilon`` (default 1% of the median cost).  With
    ``centered=True`` the reference points are subtracted, giving T - id.
    """
    if reference.dim != measure.dim:
        raise DimensionMismatch(
            f"reference in R^{reference.dim}, measure in R^{measure.dim}"
        )
    if solver == "exact":
        coupling = solve_exact(reference, measure)
    elif solver == "sinkhorn":
        coupling = sinkhorn(reference, measure, epsilon=epsilon)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    if extraction == "argmax":
        monge = extract_monge_argmax(coupling)
    elif extraction == "barycentric":
        monge = extract_monge_barycentric(coupling)
    else:
        raise ValueError(f"unknown extraction {extraction!r}; use one of {EXTRACTIONS}")
    targets = monge.targets
    if centered:
        targets = targets - reference.points
    return LotFeature(reference, targets.ravel(), monge.indices, centered)


def _same_reference(a: LotFeature, b: LotFeature):
    if a.reference_key != b.reference_key or len(a.values) != len(b.values):
        raise ReferenceMismatch("features were computed against different references")
    if a.centered != b.centered:
        raise ReferenceMismatch("cannot compare centered and raw features")


def lot_distance(a: LotFeature, b: LotFeature) -> float:
    """sqrt(sum_i w_i |T_a(x_i) - T_b(x_i)|^2) with reference weights w."""
    _same_reference(a, b)
    diff = a.targets - b.targets
    return float(np.sqrt(a.reference.weights @ np.sum(diff * diff, axis=1)))


def multi_embed(references: Sequence[DiscreteMeasure], measure, **kwargs) -> list:
    if len(references) == 0:
        raise ValueError("need at least one reference")
    return [embed(ref, measure, **kwargs) for ref in references]


def concat_features(features: Sequence[LotFeature]) -> np.ndarray:
    """Classifier input for a multi-reference embedding."""
    return np.concatenate([f.values for f in features])


def product_distance(a: Sequence[LotFeature], b: Sequence[LotFeature], p: float = 2) -> float:
    """l_p norm of the per-reference LOT distances."""
    if len(a) != len(b):
        raise ReferenceMismatch(f"{len(a)} references against {len(b)}")
    parts = np.array([lot_distance(x, y) for x, y in zip(a, b)])
    if len(parts) == 0:
        return 0.0
    return float(np.linalg.norm(parts, ord=np.inf if math.isinf(p) else p))


def empirical_min_separation(features_a, features_b) -> float:
    """Smallest LOT distance over all cross-class pairs."""
    if len(features_a) == 0 or len(features_b) == 0:
        raise ValueError("both feature sets must be nonempty")
    for f in list(features_a) + list(features_b):
        _same_reference(features_a[0], f)
    ta = np.stack([f.targets for f in features_a])
    tb = np.stack([f.targets for f in features_b])
    w = features_a[0].reference.weights
    diff = ta[:, None] - tb[None, :]
    dists = np.sqrt(np.einsum("abmd,abmd,m->ab", diff, diff, w))
    return float(dists.min())


# ---------------------------------------------------------------------------
# Separation bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationInputs:
    """Parameters of the bounded-shear separation corollary.

    w2 is the W2 distance between the two templates, delta the target
    separation, epsilon the tube radius, r1/r2 the template support radii
    and m_b the shift bound.
    """

    w2: float
    delta: float = 0.0
    epsilon: float = 0.0
    r1: float = 0.0
    r2: float = 0.0
    m_b: float = 0.0

    def __post_init__(self):
        if not self.w2 > 0:
            raise ValueError("w2 must be positive")
        for name in ("delta", "epsilon", "r1", "r2", "m_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class ShearBounds:
    case: int
    m_max: float
    gamma_min: Optional[float]
    m_b_interval: tuple
    m_b_admissible: bool

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "m_max": self.m_max,
            "gamma_min": self.gamma_min,
            "m_b_interval": list(self.m_b_interval),
            "m_b_admissible": self.m_b_admissible,
        }


def transformation_budget(w2: float, delta: float = 0.0, epsilon: float = 0.0) -> float:
    """Largest allowed sup |h - id| for delta-separation: (w2 - delta)/2 - epsilon."""
    budget = (w2 - delta) / 2.0 - epsilon
    if not budget > 0:
        raise InfeasibleBound(
            f"(w2 - delta)/2 - epsilon = {budget!r} is not positive"
        )
    return budget


def shear_class_bounds(inputs: SeparationInputs) -> ShearBounds:
    """Eigenvalue bounds on SPD shears Ax + b, |b| <= m_b, for delta-separation.

    Case 1 (w2 > R + delta + 2 eps, R = r1 + r2): the largest eigenvalue
    may exceed 2, up to m_max.  Case 2 (delta + 2 eps < w2 <= R + delta +
    2 eps): 1 < M <= m_max, or alternatively lambda_min >= gamma_min.
    """
    w2, delta, eps = inputs.w2, inputs.delta, inputs.epsilon
    radius = inputs.r1 + inputs.r2
    margin = w2 - delta - 2.0 * eps
    if not margin > 0:
        raise InfeasibleBound(f"w2 = {w2!r} does not exceed delta + 2 epsilon")
    if not radius > 0:
        raise InfeasibleBound("support radii r1 + r2 must be positive")
    m_max = (margin - 2.0 * inputs.m_b + radius) / radius
    if margin > radius:
        interval = (0.0, (margin - radius) / 2.0)
        gamma_min = None
        case = 1
    else:
        interval = (max(0.0, (margin - radius) / 2.0), margin / 2.0)
        gamma_min = (2.0 * inputs.m_b + 2.0 * eps + delta - w2 + radius) / radius
        case = 2
    lo, hi = interval
    admissible = (lo < inputs.m_b < hi) or (inputs.m_b == 0.0 and lo == 0.0)
    return ShearBounds(case, m_max, gamma_min, interval, admissible)


def min_references(delta_star: float, w2: float, l: float, epsilon: float = 0.0) -> int:
    """Number of references guaranteeing delta_star separation in the product space."""
    gap = w2 - 2.0 * (l + epsilon)
    if not gap > 0:
        raise InfeasibleBound(f"2(L + epsilon) = {2 * (l + epsilon)!r} is not below w2")
    return max(1, math.ceil((delta_star / gap) ** 2))


def gaussian_shear_eigen_bounds(
    cov1, cov2, delta: float = 0.0
) -> tuple:
    """Admissible eigenvalue window [m, M] for linear shears of N(0, cov1), N(0, cov2).

    Returns ``(m, M, w2, scale)`` with scale = 2 max_j |cov_j^{1/2}|_F and
    max(|M - 1|, |1 - m|) <= (w2 - delta) / scale.
    """
    from .gaussian import gaussian_w2

    g1 = GaussianMeasure(np.zeros(len(cov1)), cov1)
    g2 = GaussianMeasure(np.zeros(len(cov2)), cov2)
    w2 = gaussian_w2(g1, g2)
    if not w2 > delta:
        raise InfeasibleBound("delta must be below the template distance")
    scale = 2.0 * max(
        np.linalg.norm(sqrtm_psd(g1.covariance)), np.linalg.norm(sqrtm_psd(g2.covariance))
    )
    half_width = (w2 - delta) / scale
    return 1.0 - half_width, 1.0 + half_width, w2, scale


def gaussian_min_references(cov1, cov2, delta: float) -> float:
    """Reference count letting the maximal Gaussian shear class reach the
    separation that a single reference gives at level ``delta``."""
    _, _, w2, scale = gaussian_shear_eigen_bounds(cov1, cov2, 0.0)
    if not 0 <= delta < w2:
        raise InfeasibleBound("delta must lie in [0, w2)")
    ratio = (scale + w2) / (scale + w2 - delta)
    return ratio**2 * ((scale - w2 + delta) / (scale - w2)) ** 4


def discretized_compatibility(
    template: GaussianMeasure,
    reference: GaussianMeasure,
    shear,
    side: int = 28,
    bounds=(-1.0, 1.0),
    extraction: str = "barycentric",
) -> tuple:
    """LOT distance between grid versions of ``template`` and ``shear # template``.

    ``shear`` is an affine map.  All three Gaussians are sampled on the
    same ``side`` x ``side`` grid.  Returns ``(w2_lot, w2)`` where ``w2`` is
    the closed-form distance between the continuous Gaussians.
    """
    from .datasets import gaussian_grid_reference
    from .gaussian import gaussian_w2

    moved = template.pushforward_affine(shear.matrix, shear.shift)
    ref = gaussian_grid_reference(reference, side, bounds)
    a = embed(ref, gaussian_grid_reference(template, side, bounds), extraction)
    b = embed(ref, gaussian_grid_reference(moved, side, bounds), extraction)
    return lot_distance(a, b), gaussian_w2(template, moved)
