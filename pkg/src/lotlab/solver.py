"""Discrete optimal transport with squared Euclidean cost.

The exact solver is the network simplex from POT (``ot.emd``), which
returns vertex solutions of the transportation LP.  Vertex plans for
uniform equal-size measures are permutations, so argmax Monge extraction is
well defined there.  A log-domain Sinkhorn solver is provided as a fast
approximate alternative.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, SolverFailure, ZeroRow
from .measures import DiscreteMeasure

MARGINAL_TOL = 1e-9
# Above this many cost entries the cost matrix is assembled block by block.
BLOCK_THRESHOLD = 10_000_000
EMD_MAX_ITER = 10_000_000

_emd = None


def _load_emd():
    global _emd
    if _emd is None:
        # POT probes every installed array backend on import; none are used here.
        for backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
            os.environ.setdefault(f"POT_BACKEND_DISABLE_{backend}", "1")
        import ot

        _emd = ot.emd
    return _emd


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between two discrete measures (rows: source atoms)."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    plan: np.ndarray
    converged: bool = True

    @property
    def cost(self) -> float:
        """Total transport cost sum_ij P_ij |x_i - y_j|^2."""
        return transport_cost(self.plan, self.source.points, self.target.points)

    def marginal_error(self) -> float:
        rows = np.abs(self.plan.sum(axis=1) - self.source.weights).max()
        cols = np.abs(self.plan.sum(axis=0) - self.target.weights).max()
        return float(max(rows, cols))

    def is_feasible(self, tol: float = MARGINAL_TOL) -> bool:
        return bool(self.plan.min() >= 0 and self.marginal_error() <= tol)

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "target": self.target.to_json(),
            "plan": self.plan.tolist(),
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class MongeMap:
    """Per-source-atom image points.

    ``indices`` holds the chosen target atom for argmax extraction and is
    ``None`` for barycentric extraction.
    """

    source: DiscreteMeasure
    targets: np.ndarray
    indices: Optional[np.ndarray] = None


def squared_distances(x, y, block_threshold: int = BLOCK_THRESHOLD) -> np.ndarray:
    """Matrix of |x_i - y_j|^2, computed from coordinate differences.

    Differences are used rather than the |x|^2 + |y|^2 - 2xy expansion
    so that small costs keep full relative precision.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, k = len(x), len(y)
    if m * k * x.shape[1] <= block_threshold:
        diff = x[:, None, :] - y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    out = np.empty((m, k))
    rows = max(1, block_threshold // max(1, k * x.shape[1]))
    for start in range(0, m, rows):
        diff = x[start : start + rows, None, :] - y[None, :, :]
        out[start : start + rows] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def transport_cost(plan, x, y) -> float:
    i, j = np.nonzero(plan)
    diff = np.asarray(x)[i] - np.asarray(y)[j]
    return float(np.sum(plan[i, j] * np.sum(diff * diff, axis=1)))


def _check_dims(source: DiscreteMeasure, target: DiscreteMeasure):
    if source.dim != target.dim:
        raise DimensionMismatch(
            f"source has dimension {source.dim}, target has {target.dim}"
        )


def solve_exact(source: DiscreteMeasure, target: DiscreteMeasure) -> Coupling:
    """Optimal coupling for squared Euclidean cost (network simplex).

    Zero-weight atoms are removed before solving; their rows/columns of the
    returned plan are zero.
    """
    _check_dims(source, target)
    emd = _load_emd()
    rs = np.flatnonzero(source.weights > 0)
    ct = np.flatnonzero(target.weights > 0)
    a = source.weights[rs]
    b = target.weights[ct]
    # Exact mass balance keeps the simplex from flagging a marginal mismatch.
    a = a / a.sum()
    b = b / b.sum()
    cost = squared_distances(source.points[rs], target.points[ct])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sub, log = emd(a, b, cost, numItermax=EMD_MAX_ITER, log=True)
    if log.get("result_code") != 1:
        raise SolverFailure(log.get("warning") or f"emd returned {log.get('result_code')}")
    sub = np.asarray(sub, dtype=np.float64)
    if len(rs) == source.size and len(ct) == target.size:
        plan = sub
    else:
        plan = np.zeros((source.size, target.size))
        plan[np.ix_(rs, ct)] = sub
    return Coupling(source, target, plan)


def wasserstein2(source: DiscreteMeasure, target: DiscreteMeasure) -> float:
    return float(np.sqrt(max(solve_exact(source, target).cost, 0.0)))


def default_epsilon(source: DiscreteMeasure, target: DiscreteMeasure) -> float:
    cost = squared_distances(source.points, target.points)
    med = float(np.median(cost))
    return 1e-2 * med if med > 0 else 1e-2


def sinkhorn(
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    epsilon: Optional[float] = None,
    max_iter: int = 10_000,
    tol: float = 1e-9,
) -> Coupling:
    """Entropic OT by log-domain Sinkhorn iterations.

    Stops once the largest row-marginal violation is below ``tol`` (column
    marginals are exact after each update).  If ``max_iter`` is reached
    first, the last iterate is returned with ``converged=False`` and a
    ``RuntimeWarning`` is issued.
    """
    _check_dims(source, target)
    if epsilon is None:
        epsilon = default_epsilon(source, target)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rs = np.flatnonzero(source.weights > 0)
    ct = np.flatnonzero(target.weights > 0)
    a, b = source.weights[rs], target.weights[ct]
    cost = squared_distances(source.points[rs], target.points[ct])
    log_a, log_b = np.log(a), np.log(b)
    kernel = -cost / epsilon
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    converged = False
    for _ in range(max_iter):
        f = epsilon * (log_a - logsumexp(kernel + g[None, :] / epsilon, axis=1))
        g = epsilon * (log_b - logsumexp(kernel + f[:, None] / epsilon, axis=0))
        log_plan = kernel + (f[:, None] + g[None, :]) / epsilon
        err = np.abs(np.exp(logsumexp(log_plan, axis=1)) - a).max()
        if err < tol:
            converged = True
            break
    sub = np.exp(kernel + (f[:, None] + g[None, :]) / epsilon)
    if not converged:
        warnings.warn(
            f"sinkhorn did not converge in {max_iter} iterations "
            f"(marginal error {err:.3g})",
            RuntimeWarning,
            stacklevel=2,
        )
    plan = np.zeros((source.size, target.size))
    plan[np.ix_(rs, ct)] = sub
    return Coupling(source, target, plan, converged=converged)


def extract_monge_argmax(coupling: Coupling) -> MongeMap:
    """Send each source atom to the target atom receiving most of its mass.

    Ties go to the lowest target index.
    """
    idx = np.argmax(coupling.plan, axis=1)
    return MongeMap(coupling.source, coupling.target.points[idx], idx)


def extract_monge_barycentric(coupling: Coupling) -> MongeMap:
    """Send each source atom to the mass-weighted mean of its targets."""
    mass = coupling.plan.sum(axis=1)
    if np.any(mass <= 0):
        bad = int(np.flatnonzero(mass <= 0)[0])
        raise ZeroRow(f"source atom {bad} sends no mass")
    targets = (coupling.plan @ coupling.target.points) / mass[:, None]
    return MongeMap(coupling.source, targets)
