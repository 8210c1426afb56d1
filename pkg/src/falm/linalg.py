"""Vector primitives, matrix-free linear operators, and an SPD system solver.

Vectors are plain 1-d float64 numpy arrays. Operators are wrapped in
:class:`LinearMap`, which carries a forward and an adjoint procedure so the
solver never needs an explicit matrix; dense construction helpers are provided
for the desk-scale problems this package targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, NonFiniteError, SpdSolveError

Array = np.ndarray


def as_vector(x, dim: int | None = None, name: str = "vector") -> Array:
    """Coerce ``x`` to a finite 1-d float64 array, optionally checking its size."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"{name} has dimension {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or infinite entries")
    return v


def dot(u: Array, v: Array) -> float:
    """Euclidean inner product; raises on mismatched dimensions."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"inner product of shapes {u.shape} and {v.shape}")
    return float(np.dot(u, v))


def norm(u: Array) -> float:
    return float(np.linalg.norm(u))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Matrix-free linear operator between two coordinate spaces.

    ``forward`` maps dimension ``dims[0]`` to ``dims[1]``; ``adjoint`` goes the
    other way and must satisfy <forward(x), y> == <x, adjoint(y)>. ``matrix``
    optionally keeps the dense representation for serialization and oracles.
    Instances are immutable and safe to share across threads.
    """

    forward: Callable[[Array], Array]
    adjoint: Callable[[Array], Array]
    dims: tuple[int, int]
    matrix: Array | None = None

    def __call__(self, x: Array) -> Array:
        return self.forward(x)


def dense_map(a) -> LinearMap:
    """Wrap a dense p-by-n matrix as a LinearMap (forward is ``a @ x``)."""
    a = np.array(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"dense operator must be 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError("dense operator contains NaN or infinite entries")
    a.flags.writeable = False
    p, n = a.shape
    return LinearMap(forward=lambda x: a @ x, adjoint=lambda y: a.T @ y,
                     dims=(n, p), matrix=a)


def zero_map(n: int, p: int) -> LinearMap:
    """The operator sending everything to zero (unconstrained problems)."""
    m = np.zeros((p, n))
    m.flags.writeable = False
    return LinearMap(forward=lambda x: np.zeros(p), adjoint=lambda y: np.zeros(n),
                     dims=(n, p), matrix=m)


def scaled_identity(c: float, n: int) -> LinearMap:
    c = float(c)
    return LinearMap(forward=lambda x: c * x, adjoint=lambda y: c * y,
                     dims=(n, n), matrix=None)


def row_selection(indices, n: int) -> LinearMap:
    """Pick the listed coordinates; the adjoint scatters them back."""
    idx = np.array(indices, dtype=int)
    idx.flags.writeable = False

    def fwd(x: Array) -> Array:
        return x[idx]

    def adj(y: Array) -> Array:
        out = np.zeros(n)
        np.add.at(out, idx, y)
        return out

    return LinearMap(forward=fwd, adjoint=adj, dims=(n, int(idx.size)), matrix=None)


@dataclass(frozen=True)
class OpNormEstimate:
    """Result of the squared-operator-norm power iteration."""

    value: float
    iterations: int
    converged: bool


def op_norm_sq(a_map: LinearMap, tol: float = 1e-6, max_iter: int = 1000,
               seed: int = 0) -> OpNormEstimate:
    """Estimate the largest eigenvalue of ``A*A`` by power iteration.

    The returned value is the converged Rayleigh quotient inflated by
    ``1 + 10*tol`` so that it sits above the true eigenvalue; step-size
    bounds computed from it therefore stay on the safe side. The start
    vector is drawn from a fixed-seed generator, keeping the estimate
    deterministic. Non-convergence returns the inflated running estimate
    with ``converged=False`` and a warning.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = a_map.dims[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = a_map.adjoint(a_map.forward(v))
        rayleigh = float(np.dot(v, w))
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            # A*A annihilates the iterate; the operator is (numerically) zero.
            return OpNormEstimate(value=0.0, iterations=it, converged=True)
        if abs(rayleigh - estimate) <= tol * max(abs(rayleigh), 1e-300):
            estimate = rayleigh
            converged = True
            break
        estimate = rayleigh
        v = w / w_norm
    if not converged:
        warnings.warn(f"op_norm_sq did not converge within {max_iter} iterations; "
                      f"returning inflated running estimate {estimate:.6e}")
    return OpNormEstimate(value=estimate * (1.0 + 10.0 * tol),
                          iterations=it, converged=converged)


@dataclass(frozen=True)
class SpdSystem:
    """The operator ``shift*Id + scale*A*A`` (symmetric positive definite).

    ``shift`` must be positive and ``scale`` nonnegative. With ``a_map=None``
    or ``scale=0`` the system is a pure scaling of the identity.
    """

    shift: float
    scale: float
    a_map: LinearMap | None = None

    def apply(self, v: Array) -> Array:
        out = self.shift * v
        if self.scale != 0.0 and self.a_map is not None:
            out = out + self.scale * self.a_map.adjoint(self.a_map.forward(v))
        return out


@dataclass(frozen=True)
class CgResult:
    x: Array
    iterations: int
    residual: float


def solve_spd(system: SpdSystem, rhs: Array, warm: Array | None = None,
              tol: float = 1e-12, max_iter: int | None = None) -> CgResult:
    """Solve ``M x = rhs`` by conjugate gradients, warm-started at ``warm``.

    Terminates once the true residual satisfies
    ``||M x - rhs|| <= tol * max(1, ||rhs||)``; the recurrence residual is
    cross-checked against a freshly computed one before success is declared,
    so the contract holds even when the recurrence drifts near machine
    precision. Raises :class:`SpdSolveError` when ``max_iter`` is exhausted.
    """
    if system.shift <= 0 or system.scale < 0:
        raise ValueError("solve_spd requires shift > 0 and scale >= 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = rhs.size
    if max_iter is None:
        max_iter = 10 * n + 50
    target = tol * max(1.0, float(np.linalg.norm(rhs)))

    if system.scale == 0.0 or system.a_map is None:
        # Pure scaled identity: closed form, no iteration needed.
        x = rhs / system.shift
        residual = float(np.linalg.norm(rhs - system.shift * x))
        return CgResult(x=x, iterations=0, residual=residual)

    x = np.zeros(n) if warm is None else np.array(warm, dtype=float)
    r = rhs - system.apply(x)
    r_norm = float(np.linalg.norm(r))
    if r_norm <= target:
        return CgResult(x=x, iterations=0, residual=r_norm)
    p = r.copy()
    rs = float(np.dot(r, r))
    for it in range(1, max_iter + 1):
        ap = system.apply(p)
        denom = float(np.dot(p, ap))
        if denom <= 0.0:
            raise SpdSolveError("conjugate gradients met a non-positive curvature "
                                "direction; system is not positive definite",
                                residual=float(np.sqrt(rs)), iterations=it)
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(np.dot(r, r))
        if np.sqrt(rs_new) <= target:
            true_r = rhs - system.apply(x)
            true_norm = float(np.linalg.norm(true_r))
            if true_norm <= target:
                return CgResult(x=x, iterations=it, residual=true_norm)
            # Recurrence residual drifted; restart from the true one.
            r = true_r
            rs_new = float(np.dot(r, r))
            p = r.copy()
            rs = rs_new
            continue
        beta = rs_new / rs
        p = r + beta * p
        rs = rs_new
    final = float(np.linalg.norm(rhs - system.apply(x)))
    raise SpdSolveError(f"conjugate gradients exceeded {max_iter} iterations "
                        f"(residual {final:.3e}, target {target:.3e})",
                        residual=final, iterations=max_iter)
