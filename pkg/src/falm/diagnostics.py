"""Analysis quantities computed against a known primal-dual solution.

Everything here consumes recorded snapshots, never live solver state, so the
diagnostic path cannot perturb a run. The central object is the energy: a
Lyapunov-type scalar combining the scaled augmented-Lagrangian gap, distances
of the extrapolated primal/dual states measured in the solver's metric, and a
dual velocity term. Along a valid run it is nonincreasing when evaluated at a
saddle point, which is what the acceptance suite verifies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import Array, LinearMap
from .problem import Problem, aug_lagrangian, lagrangian


@dataclass(frozen=True)
class Metric:
    """The operator ``(1/sigma) Id - beta A*A`` used to measure primal distances.

    Positive semidefinite whenever the step size satisfies its admissibility
    bound (then ``1/sigma >= L/gamma + beta ||A||^2``).
    """

    q_shift: float
    q_beta: float
    a_map: LinearMap


def q_norm_sq(metric: Metric, u: Array) -> float:
    """Squared seminorm ``<u,u>/sigma - beta ||A u||^2`` of a primal vector."""
    if u.size != metric.a_map.dims[0]:
        raise DimensionMismatch(f"vector has dimension {u.size}, expected "
                                f"{metric.a_map.dims[0]}")
    out = metric.q_shift * float(np.dot(u, u))
    if metric.q_beta != 0.0:
        au = metric.a_map.forward(u)
        out -= metric.q_beta * float(np.dot(au, au))
    return out


@dataclass
class RunRecord:
    """One diagnostics row of a solver run.

    ``gap``, ``obj_err`` and ``energy`` need a reference saddle point and are
    None when the run had no oracle attached.
    """

    k: int
    t_k: float
    gap: float | None
    feas: float
    obj_err: float | None
    kkt_grad: float
    kkt_feas: float
    energy: float | None
    cg_iters: int


@dataclass(frozen=True)
class IterateSnapshot:
    """Copied primal-dual iterate, for diagnostics that need the raw vectors."""

    k: int
    t_k: float
    x: Array
    lam: Array


def gap(prob: Problem, x: Array, lam: Array, x_star: Array, lam_star: Array) -> float:
    """Primal-dual gap ``L(x, lam*) - L(x*, lam)``; nonnegative at saddle points."""
    return lagrangian(prob, x, lam_star) - lagrangian(prob, x_star, lam)


def energy(prob: Problem, metric: Metric, params, x_k: Array, x_prev: Array,
           lam_k: Array, lam_prev: Array, t_k: float, x_star: Array,
           lam_star: Array) -> float:
    """Energy of the iterate pair ``(x_k, x_prev, lam_k, lam_prev)`` at index k.

    ``params`` must expose ``gamma``, ``rho`` and ``beta`` (a validated solver
    config does). The reference ``(x_star, lam_star)`` must be a saddle point
    for the monotonicity and bound properties to hold.
    """
    g = params.gamma
    rho = params.rho
    beta = params.beta
    gap_beta = (aug_lagrangian(prob, x_k, lam_star, beta)
                - aug_lagrangian(prob, x_star, lam_k, beta))
    z = g * x_k + (t_k - 1.0) * (x_k - x_prev)
    nu = g * lam_k + (t_k - 1.0) * (lam_k - lam_prev)
    d_lam = lam_k - lam_star
    d_lam_prev = lam_k - lam_prev
    return (t_k * (t_k - 1.0 + g) * gap_beta
            + 0.5 * q_norm_sq(metric, z - g * x_star)
            + 0.5 / rho * float(np.dot(nu - g * lam_star, nu - g * lam_star))
            + 0.5 * g * (1.0 - g) * q_norm_sq(metric, x_k - x_star)
            + 0.5 * g * (1.0 - g) / rho * float(np.dot(d_lam, d_lam))
            + 0.5 * (1.0 - g) / rho * (t_k - 1.0) * float(np.dot(d_lam_prev, d_lam_prev)))


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(value) against log(k) over a window."""

    slope: float
    r2: float
    n_used: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "r2": self.r2, "n_used": self.n_used,
                "n_excluded": self.n_excluded}


def _loglog_fit(ks: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    lx = np.log(ks)
    ly = np.log(values)
    lx_c = lx - lx.mean()
    ly_c = ly - ly.mean()
    denom = float(np.dot(lx_c, lx_c))
    if denom == 0.0:
        raise ValueError("window contains a single distinct index")
    slope = float(np.dot(lx_c, ly_c)) / denom
    ss_res = float(np.sum((ly_c - slope * lx_c) ** 2))
    ss_tot = float(np.dot(ly_c, ly_c))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, r2


NEAR_ZERO = 1e-14


def rate_fit(records, field: str, k_min: int, k_max: int) -> RateFit:
    """Fit the decay exponent of ``field`` over recorded indices in [k_min, k_max].

    Values at or below ``1e-14`` sit in rounding noise and are excluded (their
    count is reported); at least 10 usable records are required.
    """
    ks = []
    vals = []
    n_excluded = 0
    for rec in records:
        if not (k_min <= rec.k <= k_max):
            continue
        v = getattr(rec, field)
        if v is None:
            continue
        if v <= NEAR_ZERO:
            n_excluded += 1
            continue
        ks.append(rec.k)
        vals.append(v)
    if len(ks) < 10:
        raise ValueError(f"too few usable records in window [{k_min}, {k_max}]: "
                         f"{len(ks)} usable, {n_excluded} excluded")
    slope, r2 = _loglog_fit(np.array(ks, dtype=float), np.array(vals))
    return RateFit(slope=slope, r2=r2, n_used=len(ks), n_excluded=n_excluded)


def dual_bound_series(snapshots, lam_star: Array,
                      a_map: LinearMap) -> tuple[np.ndarray, np.ndarray]:
    """Series ``t_k * ||A*(lam_k - lam*)||`` over the recorded snapshots.

    Its supremum estimates the constant of the dual decay bound; a run that
    honors the bound shows no upward trend.
    """
    ks = np.array([s.k for s in snapshots], dtype=float)
    vals = np.array([s.t_k * float(np.linalg.norm(a_map.adjoint(s.lam - lam_star)))
                     for s in snapshots])
    return ks, vals
