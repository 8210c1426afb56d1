"""Deterministic, seeded generators for the benchmark problem suite.

All randomness flows through :class:`SplitMix64`, a fully specified 64-bit
generator, so a seed pins the instance bit-for-bit and other implementations
can reproduce the draw stream. The state advance and output scrambler are:

    state   <- (state + 0x9E3779B97F4A7C15) mod 2^64
    z       <- state
    z       <- (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z       <- (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    output  <- z XOR (z >> 31)

Uniform doubles take the top 53 bits (``output >> 11`` times ``2^-53``);
normals come from the Box-Muller transform on consecutive uniform pairs, with
the spare value cached.

Constrained instances are always feasible by construction: the right-hand
side is ``A @ x_anchor`` for a drawn anchor point, never sampled directly.
Two normalizations keep desk-scale runs inside the polynomial-rate regime
that the benchmark harness measures. The objective is tilted so its
unconstrained minimizer sits near the anchor, which keeps multipliers at the
data scale instead of at the gradient scale ``L``; and constraint rows are
normalized to a fixed sub-unit length so the dual step stays an order below
the primal one. Without these, a strictly convex instance reaches its
asymptotic geometric phase within the iteration budget and log-log rate fits
measure that tail rather than the rates under study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import dense_map, zero_map
from .oracle import QpInstance
from .problem import Problem, least_squares_objective, quadratic_objective

GEN_KINDS = ("random_qp", "constrained_least_squares", "unconstrained")

# Benchmark normalization (see module docstring): constraint-row length,
# anchor/data scale, and the relative tilt of the objective minimizer away
# from the anchor. The anchor scale also keeps the rounding noise of gap
# evaluations (amplified by t_k^2 in the energy) below the 1e-9 verification
# tolerances over a 10^4-iteration horizon.
ROW_NORM = 0.4
DATA_SCALE = 0.003
TILT = 0.1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


class SplitMix64:
    """The documented 64-bit generator; see the module docstring."""

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self) -> float:
        if self._spare_normal is not None:
            out = self._spare_normal
            self._spare_normal = None
            return out
        u1 = self.uniform()
        if u1 == 0.0:
            u1 = 2.0 ** -53
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def uniforms(self, count: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(count)])

    def normals(self, count: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(count)])


@dataclass(frozen=True)
class GenSpec:
    """Recipe for one benchmark instance."""

    kind: str
    n: int
    p: int
    seed: int
    cond: float = 1.0

    def __post_init__(self):
        if self.kind not in GEN_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.n < 1 or self.p < 1:
            raise ValueError("dimensions must be positive")
        if self.kind != "unconstrained" and self.p > self.n:
            raise ValueError("constrained instances require p <= n")
        if not (np.isfinite(self.cond) and self.cond >= 1.0):
            raise ValueError(f"cond must be a finite scalar >= 1, got {self.cond}")


def spec_from_json(doc: dict) -> GenSpec:
    return GenSpec(kind=doc["kind"], n=int(doc["n"]), p=int(doc["p"]),
                   seed=int(doc["seed"]), cond=float(doc.get("cond", 1.0)))


def spec_to_json(spec: GenSpec) -> dict:
    return {"kind": spec.kind, "n": spec.n, "p": spec.p, "seed": spec.seed,
            "cond": spec.cond}


def _orthogonal_conjugate(diag: np.ndarray, rng: SplitMix64,
                          reflections: int = 3) -> np.ndarray:
    """Conjugate a diagonal matrix by a product of random Householder maps."""
    n = diag.size
    mat = np.diag(diag)
    for _ in range(reflections):
        v = rng.normals(n)
        v /= np.linalg.norm(v)
        h = np.eye(n) - 2.0 * np.outer(v, v)
        mat = h @ mat @ h.T
    return (mat + mat.T) / 2.0


def _constraints(spec: GenSpec, rng: SplitMix64) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-row-rank constraints with rows of length ROW_NORM, plus an anchor
    point that makes them feasible."""
    a = rng.normals(spec.p * spec.n).reshape(spec.p, spec.n)
    a *= ROW_NORM / np.linalg.norm(a, axis=1, keepdims=True)
    x_anchor = DATA_SCALE * rng.normals(spec.n)
    return a, a @ x_anchor, x_anchor


def lipschitz_of(kind: str, mat: np.ndarray) -> float:
    """Exact gradient Lipschitz constant by dense eigendecomposition.

    For ``"quadratic"`` this is the top eigenvalue of the (symmetrized)
    matrix; for ``"least_squares"`` the top eigenvalue of ``M'M``. This is the
    reference value, independent of the power-iteration estimate used at
    validation time.
    """
    mat = np.asarray(mat, dtype=float)
    if kind == "quadratic":
        return float(np.linalg.eigvalsh((mat + mat.T) / 2.0)[-1])
    if kind == "least_squares":
        return float(np.linalg.eigvalsh(mat.T @ mat)[-1])
    raise ValueError(f"unsupported objective kind {kind!r}")


def generate(spec: GenSpec) -> tuple[Problem, QpInstance | None]:
    """Materialize the instance described by ``spec``.

    * ``random_qp``: strictly convex quadratic with eigenvalues log-uniform in
      ``[1, cond]`` in a random orthogonal basis, full-row-rank unit-row
      constraints, and a feasible right-hand side.
    * ``constrained_least_squares``: ``f(x) = 0.5||Mx - d||^2`` where the
      singular values of ``M`` make the Gram spectrum log-uniform in
      ``[1, cond]``; same constraint construction.
    * ``unconstrained``: the quadratic objective with the zero operator and
      zero right-hand side (no companion QP oracle).

    The same seed yields the same instance bitwise.
    """
    rng = SplitMix64(spec.seed)
    if spec.kind == "random_qp":
        eigs = spec.cond ** rng.uniforms(spec.n)
        q = _orthogonal_conjugate(eigs, rng)
        tilt = rng.normals(spec.n)
        a, b, x_anchor = _constraints(spec, rng)
        c = -(q @ x_anchor) + TILT * DATA_SCALE * tilt
        lip = lipschitz_of("quadratic", q)
        prob = Problem(objective=quadratic_objective(q, c, lipschitz=lip),
                       a_map=dense_map(a), b=b)
        return prob, QpInstance(q_mat=q, c=c, a_mat=a, b=b)

    if spec.kind == "constrained_least_squares":
        # Singular values are square roots of the target Gram eigenvalues.
        gram_eigs = spec.cond ** rng.uniforms(spec.n)
        m = _orthogonal_conjugate(np.sqrt(gram_eigs), rng)
        tilt = rng.normals(spec.n)
        a, b, x_anchor = _constraints(spec, rng)
        d = m @ x_anchor + TILT * DATA_SCALE * tilt
        lip = lipschitz_of("least_squares", m)
        prob = Problem(objective=least_squares_objective(m, d, lipschitz=lip),
                       a_map=dense_map(a), b=b)
        q = m.T @ m
        return prob, QpInstance(q_mat=(q + q.T) / 2.0, c=-(m.T @ d), a_mat=a, b=b)

    eigs = spec.cond ** rng.uniforms(spec.n)
    q = _orthogonal_conjugate(eigs, rng)
    c = rng.normals(spec.n)
    lip = lipschitz_of("quadratic", q)
    prob = Problem(objective=quadratic_objective(q, c, lipschitz=lip),
                   a_map=zero_map(spec.n, spec.p), b=np.zeros(spec.p))
    return prob, None
