"""Constrained problem instances and their Lagrangian evaluations.

A :class:`Problem` is ``min f(x) subject to A x = b`` with a smooth convex
objective supplied as value/gradient oracles plus a Lipschitz constant for the
gradient. The constant is user-supplied and only validated (via
:func:`grad_check` and the descent-lemma probes in the tests), never repaired:
the admissible step size depends on it and must stay under caller control.

Infeasible instances (``b`` outside the range of ``A``) are not detected; the
solver assumes a primal-dual solution exists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .linalg import Array, LinearMap, as_vector, dense_map, norm

OBJECTIVE_KINDS = ("quadratic", "least_squares")


@dataclass(frozen=True, eq=False)
class Objective:
    """Smooth convex objective given by value/gradient oracles.

    ``lipschitz`` bounds the gradient's Lipschitz constant and must be
    positive. ``data`` optionally keeps the dense description (kind plus
    matrices) used for serialization; matrix-free objectives leave it None.
    Oracles must be reentrant: Problem instances are shared across threads.
    """

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    lipschitz: float
    data: tuple | None = None

    def __post_init__(self):
        if not (self.lipschitz > 0 and np.isfinite(self.lipschitz)):
            raise ValueError(f"lipschitz must be a positive finite scalar, "
                             f"got {self.lipschitz}")


def quadratic_objective(q, c, lipschitz: float | None = None) -> Objective:
    """Objective ``f(x) = 0.5 x'Qx + c'x`` for symmetric PSD ``Q``.

    The default Lipschitz constant is the largest eigenvalue of the
    symmetrized ``Q``, computed by a dense eigendecomposition.
    """
    q = np.array(q, dtype=float)
    c = as_vector(c, name="c")
    if q.shape != (c.size, c.size):
        raise DimensionMismatch(f"Q has shape {q.shape}, expected {(c.size, c.size)}")
    q.flags.writeable = False
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh((q + q.T) / 2.0)[-1])
    return Objective(value=lambda x: float(0.5 * np.dot(x, q @ x) + np.dot(c, x)),
                     gradient=lambda x: q @ x + c,
                     lipschitz=lipschitz,
                     data=("quadratic", q, c))


def least_squares_objective(m, d, lipschitz: float | None = None) -> Objective:
    """Objective ``f(x) = 0.5 ||M x - d||^2`` with Lipschitz constant ``||M||^2``."""
    m = np.array(m, dtype=float)
    d = as_vector(d, name="d")
    if m.ndim != 2 or m.shape[0] != d.size:
        raise DimensionMismatch(f"M has shape {m.shape}, incompatible with d of "
                                f"dimension {d.size}")
    m.flags.writeable = False
    if lipschitz is None:
        lipschitz = float(np.linalg.eigvalsh(m.T @ m)[-1])

    def value(x: Array) -> float:
        r = m @ x - d
        return float(0.5 * np.dot(r, r))

    return Objective(value=value,
                     gradient=lambda x: m.T @ (m @ x - d),
                     lipschitz=lipschitz,
                     data=("least_squares", m, d))


@dataclass(frozen=True, eq=False)
class Problem:
    """Instance of ``min f(x) subject to A x = b``; immutable and shareable."""

    objective: Objective
    a_map: LinearMap
    b: Array

    def __post_init__(self):
        b = as_vector(self.b, name="b")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)
        if self.a_map.dims[1] != b.size:
            raise DimensionMismatch(f"operator maps into dimension "
                                    f"{self.a_map.dims[1]} but b has dimension {b.size}")

    @property
    def n(self) -> int:
        return self.a_map.dims[0]

    @property
    def p(self) -> int:
        return self.a_map.dims[1]


def _check_dims(prob: Problem, x: Array, lam: Array) -> None:
    if x.size != prob.n:
        raise DimensionMismatch(f"x has dimension {x.size}, expected {prob.n}")
    if lam.size != prob.p:
        raise DimensionMismatch(f"multiplier has dimension {lam.size}, expected {prob.p}")


def lagrangian(prob: Problem, x: Array, lam: Array) -> float:
    """``f(x) + <lam, A x - b>``."""
    _check_dims(prob, x, lam)
    return prob.objective.value(x) + float(np.dot(lam, prob.a_map.forward(x) - prob.b))


def aug_lagrangian(prob: Problem, x: Array, lam: Array, beta: float) -> float:
    """Lagrangian plus the quadratic constraint penalty ``(beta/2)||A x - b||^2``."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    _check_dims(prob, x, lam)
    residual = prob.a_map.forward(x) - prob.b
    return (prob.objective.value(x) + float(np.dot(lam, residual))
            + 0.5 * beta * float(np.dot(residual, residual)))


def kkt_residuals(prob: Problem, x: Array, lam: Array) -> tuple[float, float]:
    """Norms of the stationarity and feasibility equations.

    Returns ``(||grad f(x) + A* lam||, ||A x - b||)``; both vanish exactly at
    a primal-dual solution.
    """
    _check_dims(prob, x, lam)
    grad_res = prob.objective.gradient(x) + prob.a_map.adjoint(lam)
    feas_res = prob.a_map.forward(x) - prob.b
    return norm(grad_res), norm(feas_res)


def grad_check(obj: Objective, x: Array, h: float = 1e-5) -> float:
    """Worst per-coordinate error of the gradient vs central finite differences.

    Each coordinate's error is measured relative to ``max(1, |gradient_i|)``;
    used to validate user-supplied oracles before a run, never to repair them.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = obj.gradient(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        fd = (obj.value(x + e) - obj.value(x - e)) / (2.0 * h)
        worst = max(worst, abs(fd - g[i]) / max(1.0, abs(g[i])))
    return worst


def problem_to_json(prob: Problem) -> dict:
    """Serialize a dense problem to the documented JSON schema.

    Matrices are emitted as flat row-major lists. Only problems built from a
    dense operator and a quadratic or least-squares objective are
    serializable; matrix-free instances raise ``ValueError``.
    """
    if prob.a_map.matrix is None:
        raise ValueError("operator carries no dense matrix; cannot serialize")
    a = prob.a_map.matrix
    if prob.objective.data is None:
        raise ValueError("objective carries no dense data; cannot serialize")
    kind, m1, v1 = prob.objective.data
    if kind == "quadratic":
        obj_doc = {"kind": "quadratic", "Q": m1.ravel().tolist(), "c": v1.tolist()}
    elif kind == "least_squares":
        obj_doc = {"kind": "least_squares", "M": m1.ravel().tolist(), "d": v1.tolist()}
    else:
        raise ValueError(f"unknown objective kind {kind!r}")
    return {"n": prob.n, "p": prob.p, "A": a.ravel().tolist(),
            "b": prob.b.tolist(), "objective": obj_doc}


def problem_from_json(doc: dict) -> Problem:
    """Rebuild a Problem from the JSON schema produced by :func:`problem_to_json`."""
    n = int(doc["n"])
    p = int(doc["p"])
    a = np.array(doc["A"], dtype=float).reshape(p, n)
    b = np.array(doc["b"], dtype=float)
    obj_doc = doc["objective"]
    kind = obj_doc["kind"]
    if kind == "quadratic":
        q = np.array(obj_doc["Q"], dtype=float).reshape(n, n)
        objective = quadratic_objective(q, np.array(obj_doc["c"], dtype=float))
    elif kind == "least_squares":
        m_flat = np.array(obj_doc["M"], dtype=float)
        rows = m_flat.size // n
        objective = least_squares_objective(m_flat.reshape(rows, n),
                                            np.array(obj_doc["d"], dtype=float))
    else:
        raise ValueError(f"unknown objective kind {kind!r}; "
                         f"expected one of {OBJECTIVE_KINDS}")
    return Problem(objective=objective, a_map=dense_map(a), b=b)
