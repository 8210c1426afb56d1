import numpy as np
import pytest

from falm.benchgen import GenSpec, generate
from falm.errors import StepError, ValidationError
from falm.inertial import attouch_cabot, chambolle_dossal, constant, nesterov, t_value
from falm.linalg import dense_map
from falm.oracle import kkt_solve
from falm.problem import Objective, Problem, kkt_residuals, quadratic_objective
from falm.solver import (SolverParams, initial_state, run, step, validate)


def _dense_step_oracle(prob, cfg, x, x_prev, lam, lam_prev, t_k, t_k1):
    """Straight-line transcription of one update with a dense direct solve."""
    a = prob.a_map.matrix
    g = cfg.gamma
    y = x + ((t_k - 1.0) / t_k1) * (x - x_prev)
    mu = lam + ((t_k - 1.0) / t_k1) * (lam - lam_prev)
    eta = a @ x + (g / (t_k1 - 1.0 + g)) * (prob.b - a @ x)
    nu = g * lam + (t_k - 1.0) * (lam - lam_prev)
    s = (cfg.rho / g) * t_k1 * (t_k1 - 1.0 + g)
    m = np.eye(prob.n) / cfg.sigma + (s / g) * (a.T @ a)
    rhs = (y / cfg.sigma - prob.objective.gradient(y)
           - cfg.beta * a.T @ (a @ y - prob.b) - (a.T @ nu) / g
           + (s / g) * (a.T @ eta))
    x_next = np.linalg.solve(m, rhs)
    z = g * x_next + (t_k1 - 1.0) * (x_next - x)
    lam_next = mu + (cfg.rho / g) * (a @ z - g * prob.b)
    return y, mu, eta, nu, s, x_next, z, lam_next


def test_validate_boundary_sigma_accepted():
    prob = Problem(objective=quadratic_objective(2.0 * np.eye(3), np.zeros(3)),
                   a_map=dense_map(2.0 * np.eye(3)), b=np.zeros(3))
    params = SolverParams(rule=nesterov(), gamma=1.0, sigma=1.0 / 6.0, beta=1.0)
    cfg = validate(prob, params, a_norm_sq=4.0)
    assert cfg.sigma == 1.0 / 6.0
    assert cfg.sigma_bound == pytest.approx(1.0 / 6.0, rel=1e-15)


def test_validate_sigma_above_bound_rejected():
    prob = Problem(objective=quadratic_objective(2.0 * np.eye(3), np.zeros(3)),
                   a_map=dense_map(2.0 * np.eye(3)), b=np.zeros(3))
    params = SolverParams(rule=nesterov(), gamma=1.0, sigma=1.0 / 6.0 + 1e-12,
                          beta=1.0)
    with pytest.raises(ValidationError) as err:
        validate(prob, params, a_norm_sq=4.0)
    assert "σ ≤ γ/(L + γβ‖A‖²)" in err.value.condition


def test_validate_gamma_below_margin_rejected(small_instance):
    prob, _ = small_instance
    with pytest.raises(ValidationError) as err:
        validate(prob, SolverParams(rule=nesterov(), gamma=0.5))
    assert err.value.condition == "m ≤ γ"


def test_validate_gamma_above_one_rejected(small_instance):
    prob, _ = small_instance
    with pytest.raises(ValidationError) as err:
        validate(prob, SolverParams(rule=constant(), gamma=1.2))
    assert err.value.condition == "γ ≤ 1"


def test_validate_attouch_cabot_gamma_floor(small_instance):
    prob, _ = small_instance
    # alpha=4 requires gamma > 2/3 so the first coupling weight is positive
    with pytest.raises(ValidationError):
        validate(prob, SolverParams(rule=attouch_cabot(4.0), gamma=2.0 / 3.0))
    cfg = validate(prob, SolverParams(rule=attouch_cabot(4.0), gamma=0.7))
    assert cfg.gamma == 0.7


def test_validate_warns_when_certification_requested(small_instance):
    prob, _ = small_instance
    params = SolverParams(rule=chambolle_dossal(4.0), beta=0.0)
    with pytest.warns(UserWarning, match="β > 0"):
        cfg = validate(prob, params, require_convergence_certified=True)
    assert not cfg.convergence_certified


def test_validate_defaults(small_instance):
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=chambolle_dossal(4.0), beta=1.0))
    assert cfg.gamma == pytest.approx((2.0 / 3.0 + 1.0) / 2.0)
    assert cfg.sigma == pytest.approx(0.99 * cfg.sigma_bound, rel=1e-12)
    assert cfg.rho == cfg.sigma
    assert cfg.convergence_certified


def test_step_unconstrained_is_exact_gradient_step():
    prob, _ = generate(GenSpec("unconstrained", 6, 2, 1, 5.0))
    params = SolverParams(rule=nesterov(), beta=1.0, max_iter=10)
    cfg = validate(prob, params)
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal(6)
    st = initial_state(cfg.rule, x0, np.zeros(2))
    st, trace = step(prob, cfg, st)
    expected = x0 - cfg.sigma * prob.objective.gradient(x0)
    assert np.array_equal(st.x_k, expected)
    assert np.array_equal(st.lam_k, np.zeros(2))
    assert trace.cg_iters == 0


def test_step_start_has_no_momentum(small_instance):
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=chambolle_dossal(4.0)))
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal(prob.n)
    lam0 = rng.standard_normal(prob.p)
    st = initial_state(cfg.rule, x0, lam0)
    _, trace = step(prob, cfg, st)
    assert np.array_equal(trace.y_k, x0)
    assert np.array_equal(trace.mu_k, lam0)
    np.testing.assert_allclose(trace.nu_k_gamma, cfg.gamma * lam0, rtol=0, atol=0)


def test_step_matches_dense_oracle(small_instance):
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=chambolle_dossal(4.0), beta=0.7))
    rng = np.random.default_rng(14)
    rule = cfg.rule
    for _ in range(5):
        k = int(rng.integers(1, 30))
        x, x_prev = rng.standard_normal((2, prob.n))
        lam, lam_prev = rng.standard_normal((2, prob.p))
        st = initial_state(rule, x, lam)
        st.k = k
        st.x_prev = x_prev
        st.lam_prev = lam_prev
        st.t_k = t_value(rule, k)
        st.t_next = t_value(rule, k + 1)
        new_st, trace = step(prob, cfg, st)
        y, mu, eta, nu, s, x_next, z, lam_next = _dense_step_oracle(
            prob, cfg, x, x_prev, lam, lam_prev, st.t_k, st.t_next)
        np.testing.assert_allclose(trace.y_k, y, atol=1e-12)
        np.testing.assert_allclose(trace.eta_k, eta, atol=1e-12)
        np.testing.assert_allclose(trace.s_next, s, rtol=1e-12)
        np.testing.assert_allclose(new_st.x_k, x_next, atol=1e-10)
        np.testing.assert_allclose(new_st.lam_k, lam_next, atol=1e-10)
        np.testing.assert_allclose(trace.z_next_gamma, z, atol=1e-10)


def test_extrapolation_identities_along_run(small_instance):
    # x_{k+1} - y_k = (z_{k+1} - z_k)/t_{k+1} with z_k = x_k + (t_k-1)(x_k - x_{k-1}),
    # and the dual analogue lam_{k+1} - mu_k = (nu_{k+1} - nu_k)/t_{k+1}.
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=nesterov(), beta=1.0, max_iter=200))
    st = initial_state(cfg.rule, np.zeros(prob.n), np.zeros(prob.p))
    for _ in range(200):
        z_old = st.x_k + (st.t_k - 1.0) * (st.x_k - st.x_prev)
        nu_old = st.lam_k + (st.t_k - 1.0) * (st.lam_k - st.lam_prev)
        st, trace = step(prob, cfg, st)
        z_new = st.x_k + (st.t_k - 1.0) * (st.x_k - st.x_prev)
        nu_new = st.lam_k + (st.t_k - 1.0) * (st.lam_k - st.lam_prev)
        lhs = st.x_k - trace.y_k
        rhs = (z_new - z_old) / st.t_k
        tol = 1e-9 * max(1.0, float(np.linalg.norm(z_new)))
        assert np.linalg.norm(lhs - rhs) <= tol
        lhs_d = st.lam_k - trace.mu_k
        rhs_d = (nu_new - nu_old) / st.t_k
        tol_d = 1e-9 * max(1.0, float(np.linalg.norm(nu_new)))
        assert np.linalg.norm(lhs_d - rhs_d) <= tol_d


def test_stationarity_residual_along_run(small_instance):
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=chambolle_dossal(4.0), beta=1.0))
    a = prob.a_map.matrix
    st = initial_state(cfg.rule, np.zeros(prob.n), np.zeros(prob.p))
    for _ in range(200):
        prev = st
        st, trace = step(prob, cfg, st)
        g = cfg.gamma
        rhs = (trace.y_k / cfg.sigma - prob.objective.gradient(trace.y_k)
               - cfg.beta * a.T @ (a @ trace.y_k - prob.b)
               - (a.T @ trace.nu_k_gamma) / g
               + (trace.s_next / g) * (a.T @ trace.eta_k))
        lhs = st.x_k / cfg.sigma + (trace.s_next / g) * (a.T @ (a @ st.x_k))
        resid = np.linalg.norm(lhs - rhs)
        assert resid <= cfg.cg_tol * max(1.0, float(np.linalg.norm(rhs))) * 1.01
        assert prev.k + 1 == st.k


def test_run_zero_budget_returns_initial(small_instance):
    prob, _ = small_instance
    res = run(prob, SolverParams(rule=nesterov(), max_iter=0))
    assert res.iterations == 0
    assert res.reason == "iteration budget"
    assert np.array_equal(res.x, np.zeros(prob.n))
    assert len(res.records) == 1


def test_run_reaches_oracle(small_instance):
    prob, qp = small_instance
    x_star, lam_star = kkt_solve(qp)
    params = SolverParams(rule=chambolle_dossal(4.0), gamma=0.9, beta=1.0,
                          max_iter=5000, kkt_tol=1e-7, record_every=100)
    res = run(prob, params)
    assert res.reason == "kkt tolerance"
    grad_res, feas_res = kkt_residuals(prob, res.x, res.lam)
    assert grad_res <= 1e-6 and feas_res <= 1e-6
    assert np.linalg.norm(res.x - x_star) <= 1e-5 * max(1.0, np.linalg.norm(x_star))


def test_run_unconstrained_matches_reference_loop():
    prob, _ = generate(GenSpec("unconstrained", 12, 3, 9, 8.0))
    params = SolverParams(rule=nesterov(), beta=1.0, max_iter=300, record_every=50)
    cfg = validate(prob, params)
    # independently coded accelerated gradient loop
    import math
    x_prev = np.zeros(12)
    x = np.zeros(12)
    t = 1.0
    st = initial_state(cfg.rule, np.zeros(12), np.zeros(3))
    for _ in range(300):
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = x + ((t - 1.0) / t_next) * (x - x_prev)
        x_prev, x, t = x, y - cfg.sigma * prob.objective.gradient(y), t_next
        st, _ = step(prob, cfg, st)
        assert np.max(np.abs(st.x_k - x)) <= 1e-12


def test_run_determinism(small_instance):
    prob, qp = small_instance
    saddle = kkt_solve(qp)
    params = SolverParams(rule=attouch_cabot(4.0), beta=0.5, max_iter=400,
                          record_every=7)
    r1 = run(prob, params, saddle=saddle)
    r2 = run(prob, params, saddle=saddle)
    assert len(r1.records) == len(r2.records)
    for a, b in zip(r1.records, r2.records):
        assert a == b  # dataclass equality: bit-identical floats
    assert np.array_equal(r1.x, r2.x)
    assert np.array_equal(r1.lam, r2.lam)


def test_run_observer_sees_records(small_instance):
    prob, _ = small_instance
    seen = []
    res = run(prob, SolverParams(rule=nesterov(), max_iter=50, record_every=10),
              observer=seen.append)
    assert seen == res.records


def test_run_inner_solve_failure_is_partial(small_instance):
    prob, _ = small_instance
    params = SolverParams(rule=chambolle_dossal(4.0), beta=1.0, max_iter=50,
                          cg_tol=1e-14, cg_max_iter=1)
    res = run(prob, params)
    assert res.reason == "inner solve failure"
    assert res.error is not None
    assert res.records  # at least the initial record survives


def test_step_rejects_nonfinite_iterates(small_instance):
    prob, _ = small_instance
    bad = Problem(objective=Objective(value=lambda x: 0.0,
                                      gradient=lambda x: np.full(prob.n, np.inf),
                                      lipschitz=1.0),
                  a_map=prob.a_map, b=prob.b)
    cfg = validate(bad, SolverParams(rule=nesterov()), a_norm_sq=1.0)
    st = initial_state(cfg.rule, np.zeros(prob.n), np.zeros(prob.p))
    with pytest.raises(StepError):
        step(bad, cfg, st)


def test_coupling_weight_formula(small_instance):
    prob, _ = small_instance
    cfg = validate(prob, SolverParams(rule=chambolle_dossal(4.0)))
    st = initial_state(cfg.rule, np.zeros(prob.n), np.zeros(prob.p))
    for _ in range(5):
        t_next = st.t_next
        st, trace = step(prob, cfg, st)
        expected = (cfg.rho / cfg.gamma) * t_next * (t_next - 1.0 + cfg.gamma)
        assert trace.s_next == pytest.approx(expected, rel=1e-15)
