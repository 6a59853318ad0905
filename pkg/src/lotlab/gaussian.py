"""Closed-form optimal transport between Gaussians.

Also checks the compatibility condition T_sigma^{S#mu} = S o T_sigma^mu for
affine S exactly: both sides are affine maps, and the L2(sigma) norm of an
affine map has a closed form under a Gaussian sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonOrthogonalBasis, SingularCovariance, SingularMatrix
from .measures import GaussianMeasure

EIG_CLAMP = 1e-14
SPD_SYMMETRY_TOL = 1e-10
ORTHO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> matrix @ x + shift."""

    matrix: np.ndarray
    shift: np.ndarray = None
    spd: bool = field(init=False)

    def __post_init__(self):
        a = np.array(self.matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"matrix must be square, got shape {a.shape}")
        b = np.zeros(a.shape[0]) if self.shift is None else np.array(self.shift, dtype=np.float64).reshape(-1)
        if b.shape != (a.shape[0],):
            raise DimensionMismatch(f"shift has shape {b.shape}, matrix {a.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("affine map entries must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "shift", b)
        object.__setattr__(self, "spd", is_spd(a))

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d), np.zeros(d))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x):
        """Apply to one point of shape (d,) or a stack of shape (m, d)."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.matrix.T + self.shift

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self o inner."""
        return AffineMap(self.matrix @ inner.matrix, self.matrix @ inner.shift + self.shift)

    def inverse(self) -> "AffineMap":
        try:
            inv = np.linalg.inv(self.matrix)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrix(str(exc)) from None
        if not np.all(np.isfinite(inv)):
            raise SingularMatrix("matrix is not invertible")
        return AffineMap(inv, -inv @ self.shift)

    def __sub__(self, other: "AffineMap") -> "AffineMap":
        return AffineMap(self.matrix - other.matrix, self.shift - other.shift)


def is_spd(a: np.ndarray, tol: float = SPD_SYMMETRY_TOL) -> bool:
    a = np.asarray(a, dtype=np.float64)
    if np.abs(a - a.T).max() > tol:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (a + a.T)).min() > 0)


def _eigh(a):
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return np.where(w < EIG_CLAMP, np.maximum(w, 0.0), w), v


def sqrtm_psd(a) -> np.ndarray:
    """Symmetric square root; roundoff-negative eigenvalues are zeroed."""
    w, v = _eigh(np.asarray(a, dtype=np.float64))
    return (v * np.sqrt(w)) @ v.T


def inv_sqrtm_spd(a) -> np.ndarray:
    w, v = _eigh(np.asarray(a, dtype=np.float64))
    if w.min() < EIG_CLAMP:
        raise SingularCovariance("covariance is numerically singular")
    return (v / np.sqrt(w)) @ v.T


def gaussian_ot_map(source: GaussianMeasure, target: GaussianMeasure) -> AffineMap:
    """Brenier map pushing ``source`` onto ``target``.

    x -> m2 + S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2} (x - m1)
    """
    if source.dim != target.dim:
        raise DimensionMismatch("Gaussians live in different dimensions")
    root = sqrtm_psd(source.covariance)
    inv_root = inv_sqrtm_spd(source.covariance)
    middle = sqrtm_psd(root @ target.covariance @ root)
    a = inv_root @ middle @ inv_root
    a = 0.5 * (a + a.T)
    return AffineMap(a, target.mean - a @ source.mean)


def gaussian_w2(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Wasserstein-2 distance between two Gaussians (Bures formula)."""
    if a.dim != b.dim:
        raise DimensionMismatch("Gaussians live in different dimensions")
    root = sqrtm_psd(a.covariance)
    cross = sqrtm_psd(root @ b.covariance @ root)
    sq = float(
        np.sum((a.mean - b.mean) ** 2)
        + np.trace(a.covariance)
        + np.trace(b.covariance)
        - 2.0 * np.trace(cross)
    )
    return float(np.sqrt(max(sq, 0.0)))


def sigma_norm(fn: AffineMap, sigma: GaussianMeasure) -> float:
    """L2(sigma) norm of an affine map: sqrt(|M S^{1/2}|_F^2 + |M m + c|^2)."""
    spread = fn.matrix @ sqrtm_psd(sigma.covariance)
    centre = fn.matrix @ sigma.mean + fn.shift
    return float(np.sqrt(np.sum(spread**2) + np.sum(centre**2)))


def compatibility_residual(
    reference: GaussianMeasure, template: GaussianMeasure, s: AffineMap
) -> float:
    """|T_ref^{S#template} - S o T_ref^{template}| in L2(reference)."""
    moved = template.pushforward_affine(s.matrix, s.shift)
    lhs = gaussian_ot_map(reference, moved)
    rhs = s.compose(gaussian_ot_map(reference, template))
    return sigma_norm(lhs - rhs, reference)


def check_orthogonal(p, tol: float = ORTHO_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise NonOrthogonalBasis(f"basis must be square, got shape {p.shape}")
    if np.abs(p.T @ p - np.eye(len(p))).max() > tol:
        raise NonOrthogonalBasis("basis matrix is not orthogonal")
    return p


def basis_matrix(basis_p, diag) -> np.ndarray:
    """P^T diag(d) P, symmetrized."""
    p = check_orthogonal(basis_p)
    d = np.asarray(diag, dtype=np.float64).reshape(-1)
    if d.shape != (len(p),):
        raise DimensionMismatch(f"need {len(p)} diagonal entries, got {d.shape}")
    c = p.T @ np.diag(d) @ p
    return 0.5 * (c + c.T)


def make_compatible_reference(
    template: GaussianMeasure, basis_p, diag, shift=None
) -> GaussianMeasure:
    """Push ``template`` through x -> P^T D P x + shift.

    References built this way satisfy the compatibility condition for every
    shear whose SPD matrix is diagonalized by the same basis P.
    """
    d = np.asarray(diag, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("diagonal entries must be positive")
    c = basis_matrix(basis_p, d)
    b = np.zeros(template.dim) if shift is None else np.asarray(shift, dtype=np.float64)
    return template.pushforward_affine(c, b)


def rotation_matrix(theta_rad: float) -> np.ndarray:
    c, s = np.cos(theta_rad), np.sin(theta_rad)
    return np.array([[c, -s], [s, c]])
