"""Shear transformations: parameterization, random regimes, image warping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SingularMatrix
from .gaussian import AffineMap, check_orthogonal, rotation_matrix

# Largest condition number accepted by shear_image before the inverse is
# considered meaningless.
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class ShearParams:
    """A = R(theta)^T diag(lambda1, lambda2) R(theta), shift b.

    ``theta`` is in degrees.
    """

    lambda1: float
    lambda2: float
    theta: float = 0.0
    shift: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("shear eigenvalues must be positive")
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))
        if len(self.shift) != 2:
            raise ValueError("shift must have two components")


@dataclass(frozen=True)
class ShearRegime:
    """Uniform sampling ranges for eigenvalues, angle (degrees) and shift."""

    lambda_range: tuple = (0.5, 1.5)
    theta_range: tuple = (0.0, 360.0)
    shift_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not lo > 0:
            raise ValueError("lambda_range must lie in (0, inf)")
        for name in ("lambda_range", "theta_range", "shift_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} is empty: {lo} > {hi}")


MILD = ShearRegime(lambda_range=(0.5, 1.5))
SEVERE = ShearRegime(lambda_range=(0.5, 2.5))
REGIMES = {"mild": MILD, "severe": SEVERE}


def shear_matrix(lambda1: float, lambda2: float, theta_deg: float) -> np.ndarray:
    r = rotation_matrix(np.deg2rad(theta_deg))
    a = r.T @ np.diag([lambda1, lambda2]) @ r
    return 0.5 * (a + a.T)


def shear_to_affine(params: ShearParams) -> AffineMap:
    return AffineMap(shear_matrix(params.lambda1, params.lambda2, params.theta), params.shift)


def sample_shear(regime: ShearRegime, rng=None) -> ShearParams:
    """Draw every shear parameter uniformly from its regime interval.

    ``rng`` may be a seed or a ``numpy.random.Generator``; the draw order is
    lambda1, lambda2, theta, shift.
    """
    rng = np.random.default_rng(rng)
    l1, l2 = rng.uniform(*regime.lambda_range, size=2)
    theta = rng.uniform(*regime.theta_range)
    shift = rng.uniform(*regime.shift_range, size=2)
    return ShearParams(float(l1), float(l2), float(theta), tuple(shift.tolist()))


def shear_image(image, transform) -> np.ndarray:
    """Warp a square image by y = A (x - c) + b + c with c = (n/2, n/2).

    Pixel (i, j) uses 1-based coordinates as in the usual formulation of
    this procedure, so the centre of a 28x28 image is (14, 14).  Each output
    pixel pulls back to x = A^{-1}(y - c - b) + c; pre-images with a
    coordinate <= 0 or > n give 0, all others are bilinearly interpolated
    from the four surrounding grid points, with grid points outside the
    image (index 0 or n+1) read as 0.
    """
    if isinstance(transform, ShearParams):
        transform = shear_to_affine(transform)
    img = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    n = img.shape[0]
    a = transform.matrix
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > MAX_CONDITION:
        raise SingularMatrix("shear matrix is not invertible")
    inv = np.linalg.inv(a)
    centre = n / 2.0

    idx = np.arange(1, n + 1, dtype=np.float64)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    y = np.stack([ii.ravel() - centre, jj.ravel() - centre])
    x = inv @ (y - transform.shift[:, None]) + centre
    x1, x2 = x
    outside = (x1 > n) | (x1 <= 0) | (x2 > n) | (x2 <= 0)

    padded = np.zeros((n + 2, n + 2))
    padded[1 : n + 1, 1 : n + 1] = img
    x1 = np.where(outside, 1.0, x1)
    x2 = np.where(outside, 1.0, x2)
    r0 = np.floor(x1).astype(np.intp)
    c0 = np.floor(x2).astype(np.intp)
    fr = x1 - r0
    fc = x2 - c0
    out = (
        padded[r0, c0] * ((1.0 - fr) * (1.0 - fc))
        + padded[r0 + 1, c0] * (fr * (1.0 - fc))
        + padded[r0, c0 + 1] * ((1.0 - fr) * fc)
        + padded[r0 + 1, c0 + 1] * (fr * fc)
    )
    out[outside] = 0.0
    return out.reshape(n, n)


def shear_images(images, params: Sequence[ShearParams]) -> np.ndarray:
    return np.stack([shear_image(img, p) for img, p in zip(images, params)])


def _evaluate(fn, t: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(t), dtype=np.float64)
        if out.shape == t.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(v)) for v in t])


@dataclass(frozen=True, eq=False)
class GeneralizedShear:
    """x -> P^T [f_1((Px)_1), ..., f_d((Px)_d)] + b with increasing f_j.

    Orthogonality of ``basis`` is checked to 1e-10; each component function
    is spot-checked for strict increase on ``check_grid``.
    """

    basis: np.ndarray
    component_functions: tuple
    shift: np.ndarray = None
    check_grid: tuple = (-10.0, 10.0, 201)

    def __post_init__(self):
        p = np.array(check_orthogonal(self.basis), dtype=np.float64)
        d = len(p)
        fns = tuple(self.component_functions)
        if len(fns) != d:
            raise ValueError(f"need {d} component functions, got {len(fns)}")
        b = np.zeros(d) if self.shift is None else np.array(self.shift, dtype=np.float64).reshape(d)
        lo, hi, count = self.check_grid
        grid = np.linspace(lo, hi, int(count))
        for k, fn in enumerate(fns):
            if not np.all(np.diff(_evaluate(fn, grid)) > 0):
                raise ValueError(f"component function {k} is not strictly increasing")
        p.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "basis", p)
        object.__setattr__(self, "component_functions", fns)
        object.__setattr__(self, "shift", b)

    def __call__(self, x):
        return apply_generalized_shear(self, x)

    @classmethod
    def from_affine(cls, basis, diag, shift=None) -> "GeneralizedShear":
        """The affine member P^T diag(d) P x + b of the family."""
        fns = tuple((lambda t, s=float(s): s * np.asarray(t)) for s in diag)
        return cls(basis, fns, shift)


def apply_generalized_shear(shear: GeneralizedShear, x) -> np.ndarray:
    """Evaluate at one point (d,) or a stack of points (m, d)."""
    x = np.asarray(x, dtype=np.float64)
    z = x @ shear.basis.T
    flat = z.reshape(-1, z.shape[-1])
    cols = [_evaluate(fn, flat[:, k]) for k, fn in enumerate(shear.component_functions)]
    g = np.stack(cols, axis=-1).reshape(z.shape)
    return g @ shear.basis + shear.shift
