"""Inertial augmented Lagrangian solver for linearly constrained problems.

Each iteration extrapolates the primal and dual iterates with the momentum
ratio ``(t_k - 1)/t_{k+1}``, solves a strongly convex quadratic subproblem for
the next primal point, and takes a proximal-style dual step against an
extrapolated primal combination. The subproblem is solved exactly (to the
requested conjugate-gradient tolerance) via its normal system

    ((1/sigma) Id + (s_{k+1}/gamma) A*A) x = rhs,

because the convergence analysis this package verifies assumes the exact
argmin; an approximate proximal step would void the recorded invariants. The
system matrix changes every iteration (the coupling weight ``s_{k+1}`` grows),
so no factorization is cached; the solve is warm-started from the previous
iterate instead.

Admissibility of the parameters::

    0 < m <= gamma <= 1      and      0 < sigma <= gamma / (L + gamma*beta*||A||^2)

is enforced by :func:`validate`. Strict versions (``m < gamma < 1``, strict
sigma, ``beta > 0``) additionally guarantee convergence of the iterates and
are flagged as "convergence certified".

A run is single-threaded and owns its state; several runs may proceed
concurrently on a shared immutable problem. Observer callbacks receive copies
and must not block the iteration beyond record serialization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics
from .errors import SpdSolveError, StepError, ValidationError
from .inertial import InertialRule, phi_m, t_value
from .linalg import Array, SpdSystem, as_vector, op_norm_sq, solve_spd
from .problem import Problem, kkt_residuals

SIGMA_CONDITION = "σ ≤ γ/(L + γβ‖A‖²)"


@dataclass
class SolverParams:
    """User-facing solver knobs; ``None`` entries get the documented defaults.

    Defaults: ``gamma = (m + 1)/2`` (strictly between the rule's margin and 1
    whenever ``m < 1``; equal to 1 for the Nesterov rule, whose margin forces
    it), ``sigma = 0.99`` of its admissible bound, and ``rho = sigma`` (the
    dual step inherits the primal scale, one fewer knob to tune).
    """

    rule: InertialRule
    gamma: float | None = None
    sigma: float | None = None
    rho: float | None = None
    beta: float = 1.0
    max_iter: int = 1000
    kkt_tol: float | None = None
    cg_tol: float = 1e-12
    cg_max_iter: int | None = None
    record_every: int = 1


@dataclass(frozen=True)
class ValidatedConfig:
    """Resolved, admissibility-checked parameters plus derived constants."""

    rule: InertialRule
    m: float
    gamma: float
    sigma: float
    rho: float
    beta: float
    a_norm_sq: float
    sigma_bound: float
    phi: float
    convergence_certified: bool
    max_iter: int
    kkt_tol: float | None
    cg_tol: float
    cg_max_iter: int | None
    record_every: int


def validate(prob: Problem, params: SolverParams, a_norm_sq: float | None = None,
             require_convergence_certified: bool = False) -> ValidatedConfig:
    """Check every admissibility condition and resolve defaulted parameters.

    ``a_norm_sq`` overrides the power-iteration estimate of ``||A||^2`` when
    the caller knows it exactly. Each violated condition raises a
    :class:`ValidationError` naming the inequality. When
    ``require_convergence_certified`` is set and the configuration only meets
    the non-strict conditions, a warning lists what is missing for iterate
    convergence.
    """
    rule = params.rule
    m = rule.m
    gamma = params.gamma if params.gamma is not None else (m + 1.0) / 2.0
    if not gamma > 0:
        raise ValidationError("γ > 0", f"gamma={gamma} must be positive")
    if gamma < m:
        raise ValidationError("m ≤ γ",
                              f"m ≤ γ violated: m={m}, gamma={gamma}")
    if gamma > 1.0:
        raise ValidationError("γ ≤ 1", f"gamma={gamma} exceeds 1")
    if params.beta < 0:
        raise ValidationError("β ≥ 0", f"beta={params.beta} is negative")

    if rule.kind == "attouch_cabot":
        # The coupling weight of the first subproblem, s_2 proportional to
        # t_2*(t_2 - 1 + gamma), must be positive or the subproblem is not
        # strongly convex; this pins gamma above 1 - 1/(alpha - 1).
        t2 = t_value(rule, 2)
        if t2 - 1.0 + gamma <= 0.0:
            raise ValidationError("γ > 1 − 1/(α − 1)",
                                  f"gamma={gamma} makes the first subproblem "
                                  f"coupling weight nonpositive; need gamma > "
                                  f"{1.0 - 1.0 / (rule.alpha - 1.0)}")

    if a_norm_sq is None:
        a_norm_sq = op_norm_sq(prob.a_map).value
    lip = prob.objective.lipschitz
    sigma_bound = gamma / (lip + gamma * params.beta * a_norm_sq)
    sigma = params.sigma if params.sigma is not None else 0.99 * sigma_bound
    if not sigma > 0:
        raise ValidationError("σ > 0", f"sigma={sigma} must be positive")
    if sigma > sigma_bound:
        raise ValidationError(SIGMA_CONDITION,
                              f"{SIGMA_CONDITION} violated: sigma={sigma} exceeds "
                              f"bound {sigma_bound} (L={lip}, gamma={gamma}, "
                              f"beta={params.beta}, ‖A‖²={a_norm_sq})")
    rho = params.rho if params.rho is not None else sigma
    if not rho > 0:
        raise ValidationError("ρ > 0", f"rho={rho} must be positive")
    if params.max_iter < 0:
        raise ValidationError("max_iter ≥ 0", "negative iteration budget")
    if params.record_every < 1:
        raise ValidationError("record_every ≥ 1", "record_every must be >= 1")
    if not params.cg_tol > 0:
        raise ValidationError("cg_tol > 0", "inner solve tolerance must be positive")
    if params.kkt_tol is not None and not params.kkt_tol > 0:
        raise ValidationError("kkt_tol > 0", "stopping tolerance must be positive")

    certified = (m < gamma < 1.0) and (sigma < sigma_bound) and (params.beta > 0)
    if require_convergence_certified and not certified:
        missing = []
        if not m < gamma:
            missing.append("m < γ")
        if not gamma < 1.0:
            missing.append("γ < 1")
        if not sigma < sigma_bound:
            missing.append("σ strictly below its bound")
        if not params.beta > 0:
            missing.append("β > 0")
        warnings.warn("configuration is not convergence-certified; iterate "
                      "convergence requires " + ", ".join(missing))

    return ValidatedConfig(rule=rule, m=m, gamma=gamma, sigma=sigma, rho=rho,
                           beta=params.beta, a_norm_sq=a_norm_sq,
                           sigma_bound=sigma_bound, phi=phi_m(m),
                           convergence_certified=certified,
                           max_iter=params.max_iter, kkt_tol=params.kkt_tol,
                           cg_tol=params.cg_tol, cg_max_iter=params.cg_max_iter,
                           record_every=params.record_every)


@dataclass
class IterateState:
    """Full recurrence state at index k (two primal and two dual iterates)."""

    k: int
    x_k: Array
    x_prev: Array
    lam_k: Array
    lam_prev: Array
    t_k: float
    t_next: float
    x_warm: Array


def initial_state(rule: InertialRule, x_init: Array, lam_init: Array) -> IterateState:
    """State at k=1; the two trailing iterates coincide with the initial point."""
    x = np.array(x_init, dtype=float)
    lam = np.array(lam_init, dtype=float)
    return IterateState(k=1, x_k=x, x_prev=x.copy(), lam_k=lam,
                        lam_prev=lam.copy(), t_k=t_value(rule, 1),
                        t_next=t_value(rule, 2), x_warm=x.copy())


@dataclass
class StepTrace:
    """Auxiliary quantities of one iteration, for invariant checks and records."""

    y_k: Array
    x_next: Array
    mu_k: Array
    nu_k_gamma: Array
    lam_next: Array
    eta_k: Array
    s_next: float
    z_next_gamma: Array
    cg_iters: int


def step(prob: Problem, cfg: ValidatedConfig, st: IterateState) -> tuple[IterateState, StepTrace]:
    """Advance the recurrence from index k to k+1.

    The primal update solves the subproblem's stationarity system exactly (to
    the configured conjugate-gradient tolerance), warm-started at the previous
    solution. When the operator is zero the subproblem collapses to the plain
    accelerated gradient step ``y_k - sigma * grad f(y_k)``, which is taken
    directly. Inner-solve failures raise :class:`StepError` carrying the
    iteration index.
    """
    g = cfg.gamma
    t_k = st.t_k
    t_k1 = st.t_next
    momentum = (t_k - 1.0) / t_k1
    y = st.x_k + momentum * (st.x_k - st.x_prev)
    mu = st.lam_k + momentum * (st.lam_k - st.lam_prev)
    a = prob.a_map
    ax = a.forward(st.x_k)
    eta = ax + (g / (t_k1 - 1.0 + g)) * (prob.b - ax)
    nu = g * st.lam_k + (t_k - 1.0) * (st.lam_k - st.lam_prev)
    s_next = (cfg.rho / g) * t_k1 * (t_k1 - 1.0 + g)
    grad_y = prob.objective.gradient(y)

    if cfg.a_norm_sq == 0.0:
        # Zero operator: the constraint terms vanish and the subproblem's
        # minimizer is the accelerated gradient step itself.
        x_next = y - cfg.sigma * grad_y
        cg_iters = 0
    else:
        ay = a.forward(y)
        rhs = (y / cfg.sigma - grad_y - cfg.beta * a.adjoint(ay - prob.b)
               - a.adjoint(nu) / g + (s_next / g) * a.adjoint(eta))
        if not np.all(np.isfinite(rhs)):
            raise StepError(st.k, "subproblem right-hand side is not finite")
        system = SpdSystem(shift=1.0 / cfg.sigma, scale=s_next / g, a_map=a)
        try:
            sol = solve_spd(system, rhs, warm=st.x_warm, tol=cfg.cg_tol,
                            max_iter=cfg.cg_max_iter)
        except SpdSolveError as exc:
            raise StepError(st.k, f"primal subproblem solve failed: {exc}") from exc
        x_next = sol.x
        cg_iters = sol.iterations

    z_next = g * x_next + (t_k1 - 1.0) * (x_next - st.x_k)
    lam_next = mu + (cfg.rho / g) * (a.forward(z_next) - g * prob.b)
    if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(lam_next))):
        raise StepError(st.k, "iterate left the finite range (NaN or overflow)")

    trace = StepTrace(y_k=y, x_next=x_next, mu_k=mu, nu_k_gamma=nu,
                      lam_next=lam_next, eta_k=eta, s_next=s_next,
                      z_next_gamma=z_next, cg_iters=cg_iters)
    new_state = IterateState(k=st.k + 1, x_k=x_next, x_prev=st.x_k,
                             lam_k=lam_next, lam_prev=st.lam_k, t_k=t_k1,
                             t_next=t_value(cfg.rule, st.k + 2), x_warm=x_next)
    return new_state, trace


@dataclass
class RunResult:
    """Outcome of a solver run plus the recorded diagnostics stream."""

    x: Array
    lam: Array
    iterations: int
    reason: str
    records: list[diagnostics.RunRecord] = field(default_factory=list)
    snapshots: list[diagnostics.IterateSnapshot] = field(default_factory=list)
    error: str | None = None


def run(prob: Problem, params: SolverParams, x_init: Array | None = None,
        lam_init: Array | None = None, observer=None, saddle=None,
        keep_snapshots: bool = False, snapshot_every: int | None = None,
        cfg: ValidatedConfig | None = None) -> RunResult:
    """Iterate until the KKT tolerance is met or the budget runs out.

    Initial points default to zero vectors. When ``saddle=(x_star, lam_star)``
    is supplied, records additionally carry the primal-dual gap, the objective
    error, and the energy; without it those fields are None. Records are
    emitted at k=1, every ``record_every`` indices, and at the final index,
    each passed to ``observer`` when given. ``keep_snapshots`` retains copied
    iterates every ``snapshot_every`` (default ``record_every``) indices for
    diagnostics that need raw vectors.

    Two runs with identical configuration produce bit-identical records. An
    inner-solve failure returns a partial result with ``reason`` set to
    "inner solve failure" and the error message attached.
    """
    if cfg is None:
        cfg = validate(prob, params)
    x0 = np.zeros(prob.n) if x_init is None else as_vector(x_init, prob.n, "x_init")
    lam0 = np.zeros(prob.p) if lam_init is None else as_vector(lam_init, prob.p,
                                                               "lam_init")
    st = initial_state(cfg.rule, x0, lam0)
    metric = diagnostics.Metric(q_shift=1.0 / cfg.sigma, q_beta=cfg.beta,
                                a_map=prob.a_map)
    if saddle is not None:
        x_star = as_vector(saddle[0], prob.n, "x_star")
        lam_star = as_vector(saddle[1], prob.p, "lam_star")
        f_star = prob.objective.value(x_star)
    records: list[diagnostics.RunRecord] = []
    snapshots: list[diagnostics.IterateSnapshot] = []
    snap_every = snapshot_every if snapshot_every is not None else cfg.record_every

    def emit(state: IterateState, cg_iters: int,
             kkt: tuple[float, float] | None) -> None:
        if kkt is None:
            kkt = kkt_residuals(prob, state.x_k, state.lam_k)
        feas = kkt[1]
        if saddle is not None:
            gap_val = diagnostics.gap(prob, state.x_k, state.lam_k, x_star, lam_star)
            obj_err = abs(prob.objective.value(state.x_k) - f_star)
            energy_val = diagnostics.energy(prob, metric, cfg, state.x_k,
                                            state.x_prev, state.lam_k,
                                            state.lam_prev, state.t_k,
                                            x_star, lam_star)
        else:
            gap_val = obj_err = energy_val = None
        rec = diagnostics.RunRecord(k=state.k, t_k=state.t_k, gap=gap_val,
                                    feas=feas, obj_err=obj_err, kkt_grad=kkt[0],
                                    kkt_feas=feas, energy=energy_val,
                                    cg_iters=cg_iters)
        records.append(rec)
        if observer is not None:
            observer(rec)

    def snapshot(state: IterateState) -> None:
        snapshots.append(diagnostics.IterateSnapshot(
            k=state.k, t_k=state.t_k, x=state.x_k.copy(), lam=state.lam_k.copy()))

    emit(st, 0, None)
    if keep_snapshots:
        snapshot(st)
    reason = "iteration budget"
    error = None
    last_recorded = st.k
    last_snapped = st.k
    for i in range(cfg.max_iter):
        try:
            st, trace = step(prob, cfg, st)
        except StepError as exc:
            reason = "inner solve failure"
            error = str(exc)
            break
        k = st.k
        is_last = i == cfg.max_iter - 1
        due = (k % cfg.record_every == 0) or is_last
        kkt = None
        if cfg.kkt_tol is not None or due:
            kkt = kkt_residuals(prob, st.x_k, st.lam_k)
        stop = (cfg.kkt_tol is not None and kkt[0] <= cfg.kkt_tol
                and kkt[1] <= cfg.kkt_tol)
        if due or stop:
            emit(st, trace.cg_iters, kkt)
            last_recorded = k
        if keep_snapshots and ((k % snap_every == 0) or is_last or stop):
            snapshot(st)
            last_snapped = k
        if stop:
            reason = "kkt tolerance"
            break
    if last_recorded != st.k:
        emit(st, 0, None)
    if keep_snapshots and last_snapped != st.k:
        snapshot(st)
    return RunResult(x=st.x_k.copy(), lam=st.lam_k.copy(), iterations=st.k - 1,
                     reason=reason, records=records, snapshots=snapshots,
                     error=error)
