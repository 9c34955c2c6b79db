import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from luresim import (Nonlinearity, SimOptions, SystemMatrices, UsageError,
                     compare_to_reference, refine_escape_time, simulate,
                     summary_dict, write_csv, write_summary_json,
                     zero_input, zero_nonlinearity)

LN2 = math.log(2.0)
PI_2 = math.pi / 2.0


def _linear_test_system():
    A = np.array([[-0.3, 1.0], [-1.0, -0.5]])
    sys = SystemMatrices(A=A, B=np.zeros((2, 1)), B_e=np.zeros((2, 1)),
                         C=np.array([[1.0, 0.0]]), D=np.zeros((1, 1)),
                         D_e=np.zeros((1, 1)))
    return sys, A


class _LinearReference:
    def __init__(self, A, x0):
        self.A = A
        self.x0 = x0
        self.t_end = None

    def x(self, t):
        return expm(self.A * t) @ self.x0

    y = None


def test_linear_system_matches_matrix_exponential():
    sys, A = _linear_test_system()
    x0 = np.array([1.0, -2.0])
    rec = simulate(sys, zero_nonlinearity(1, 1), zero_input(1), 0.0, x0,
                   SimOptions(method="rk4_fixed", dt=1e-4, tmax=1.0))
    assert rec.termination.kind == "reached_tmax"
    assert np.all(np.diff(rec.times) > 0)
    metrics = compare_to_reference(rec, _LinearReference(A, x0))
    assert metrics["x_max_err"] < 1e-6


def test_escape_of_existence_bounded_state(entry):
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-4, tmax=1.0))
    assert rec.termination.kind == "no_output_solution"
    assert abs(rec.termination.time - LN2) < 1e-3
    # state value mid-run against the closed form
    i = int(np.searchsorted(rec.times, 0.5))
    t_i = rec.times[i]
    assert np.max(np.abs(rec.x[i] - e.reference.x(t_i))) < 1e-6
    # bounded state and bounded output integrals: no blow-up here
    assert float(np.linalg.norm(rec.x[-1])) < 2.0
    assert rec.y_integral_norm + rec.u_integral_norm < 10.0
    assert np.max(rec.residuals) <= 1e-10


def test_blowup_with_output_divergence(entry):
    e = entry("ex3d")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk45_adaptive", dt=1e-3, tmax=2.0))
    assert rec.termination.kind == "blow_up"
    assert abs(rec.termination.time - PI_2) < 1e-2
    assert rec.y_sup_norm > 1e6
    # the recorded output integral grows monotonically to its final value
    assert np.all(np.diff(rec.y_integral) >= -1e-15)


def test_adaptive_method_crosses_existence_boundary(entry):
    # the adaptive scheme must locate the same escape as the fixed one
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk45_adaptive", dt=1e-3, tmax=1.0))
    assert rec.termination.kind == "no_output_solution"
    assert abs(rec.termination.time - LN2) < 1e-6


def test_piecewise_constant_forcing():
    # scalar integrator with a step input: x tracks each level of v
    from luresim import piecewise_constant_input
    sys = SystemMatrices(A=[[-1.0]], B=[[1.0]], B_e=[[1.0]], C=[[1.0]],
                         D=[[0.0]], D_e=[[0.0]])
    v = piecewise_constant_input([1.0], [[0.0], [2.0]])
    rec = simulate(sys, zero_nonlinearity(1, 1), v, 0.0, [0.0],
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=3.0))
    assert rec.termination.kind == "reached_tmax"
    i = int(np.searchsorted(rec.times, 1.0)) - 1         # strictly before the jump
    assert abs(rec.x[i, 0]) < 1e-12                      # still at rest
    assert rec.x[-1, 0] == pytest.approx(2.0 * (1.0 - math.exp(-2.0)),
                                         abs=1e-4)


def test_forward_complete_run_keeps_residuals(entry):
    e = entry("ex4c")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, np.array([0.7, -0.4]),
                   SimOptions(method="rk45_adaptive", dt=1e-2, tmax=10.0))
    assert rec.termination.kind == "reached_tmax"
    assert np.max(rec.residuals) <= 1e-10


def test_unsolvable_at_initial_time(entry):
    e = entry("ex3a")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, np.array([1.5, 0.0]),
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=1.0))
    assert rec.termination.kind == "no_output_solution"
    assert rec.termination.time == 0.0
    assert rec.n_samples == 0


def test_output_equation_consistency(entry, rng):
    # residual re-evaluated directly from the record, not the solver
    e = entry("ex4b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, rng.standard_normal(2),
                   SimOptions(method="rk4_fixed", dt=1e-2, tmax=2.0))
    for i in range(0, rec.n_samples, 17):
        t = rec.times[i]
        r = (rec.y[i] - e.system.D @ e.nonlinearity(t, rec.y[i])
             - e.system.C @ rec.x[i] - e.system.D_e @ e.input(t))
        assert np.linalg.norm(r) <= 1e-10


# ---------------------------------------------------------------------------
# Escape-time refinement
# ---------------------------------------------------------------------------

def test_refine_escape_time_ln2(entry):
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=1.0))
    t_star, half = refine_escape_time(rec, e.system, e.nonlinearity, e.input,
                                      time_tol=1e-6)
    assert abs(t_star - LN2) < 1e-5


def test_refine_escape_time_pi_half(entry):
    e = entry("ex3d")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk45_adaptive", dt=1e-3, tmax=2.0))
    t_star, half = refine_escape_time(rec, e.system, e.nonlinearity, e.input,
                                      time_tol=1e-6)
    assert abs(t_star - PI_2) < 1e-4


def _quadratic_growth_system():
    # xdot = x^2 via feedback: A=0, B=1, C=1, D=0, f(xi) = xi^2
    sys = SystemMatrices(A=[[0.0]], B=[[1.0]], B_e=[[1.0]], C=[[1.0]],
                         D=[[0.0]], D_e=[[0.0]])
    f = Nonlinearity(m=1, p=1, fn=lambda t, xi: np.array([xi[0] ** 2]),
                     jac=lambda t, xi: np.array([[2.0 * xi[0]]]))
    return sys, f


def test_refine_escape_time_quadratic_growth():
    # closed form x(t) = 1/(1 - t): escape at t = 1
    sys, f = _quadratic_growth_system()
    rec = simulate(sys, f, zero_input(1), 0.0, [1.0],
                   SimOptions(method="rk45_adaptive", dt=1e-3, tmax=2.0,
                              rtol=1e-10))
    assert rec.termination.kind == "blow_up"
    t_star, half = refine_escape_time(rec, sys, f, zero_input(1),
                                      time_tol=1e-7)
    assert abs(t_star - 1.0) < 1e-5


def test_refine_requires_terminated_record():
    sys, A = _linear_test_system()
    rec = simulate(sys, zero_nonlinearity(1, 1), zero_input(1), 0.0,
                   [1.0, 0.0], SimOptions(method="rk4_fixed", dt=1e-2, tmax=0.5))
    with pytest.raises(UsageError):
        refine_escape_time(rec, sys, zero_nonlinearity(1, 1), zero_input(1))


# ---------------------------------------------------------------------------
# Reference comparison
# ---------------------------------------------------------------------------

def test_compare_to_reference_on_catalog(entry):
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-4, tmax=1.0))
    metrics = compare_to_reference(rec, e.reference)
    assert metrics["x_max_err"] < 1e-6
    assert metrics["y_max_err"] < 1e-6


def test_compare_constant_branch(entry):
    e = entry("ex3c")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=2.0))
    # warm-started solver follows the upper branch y = +1/2 from x0 = 1/4
    metrics = compare_to_reference(rec, e.references[0])
    assert metrics["x_max_err"] < 1e-8


def test_compare_domain_mismatch_raises(entry):
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=1.0))

    class BadRef:
        t_end = -1.0
        x = staticmethod(lambda t: np.zeros(2))
        y = None

    with pytest.raises(UsageError):
        compare_to_reference(rec, BadRef())


# ---------------------------------------------------------------------------
# Convergence order and blow-up dichotomy
# ---------------------------------------------------------------------------

def _sup_error_vs_reference(e, dt, tmax=0.5):
    opts = SimOptions(method="rk4_fixed", dt=dt, tmax=tmax)
    opts.solver.tol_resid = 1e-13
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0, opts)
    return compare_to_reference(rec, e.reference)["x_max_err"]


def test_rk4_convergence_order(entry):
    e = entry("ex3b")
    errors = [_sup_error_vs_reference(e, dt) for dt in (0.1, 0.05, 0.025, 0.0125)]
    for coarse, fine in zip(errors, errors[1:]):
        ratio = coarse / fine
        assert 8.0 <= ratio <= 32.0, errors


def test_blowup_dichotomy_integral_thresholds():
    # xdot = |x|^{3/2}: int ||y|| grows like 1/(escape - t), so the recorded
    # integral passes any fixed threshold as the blow-up threshold rises.
    sys = SystemMatrices(A=[[0.0]], B=[[1.0]], B_e=[[1.0]], C=[[1.0]],
                         D=[[0.0]], D_e=[[0.0]])
    f = Nonlinearity(m=1, p=1,
                     fn=lambda t, xi: np.array([abs(xi[0]) ** 1.5]),
                     jac=lambda t, xi: np.array([[1.5 * abs(xi[0]) ** 0.5]]))
    rec = simulate(sys, f, zero_input(1), 0.0, [1.0],
                   SimOptions(method="rk45_adaptive", dt=1e-3, tmax=5.0,
                              blowup_threshold=1e8))
    assert rec.termination.kind == "blow_up"
    assert np.all(np.diff(rec.y_integral) >= -1e-15)
    for threshold in (1e2, 1e3):
        assert rec.y_integral_norm > threshold


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def test_csv_and_summary_emission(tmp_path, entry):
    e = entry("ex3c")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-2, tmax=0.1))
    csv_path = tmp_path / "run.csv"
    json_path = tmp_path / "run.json"
    write_csv(rec, csv_path)
    write_summary_json(rec, json_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "t,x_1,y_1,u_1,residual"
    assert len(lines) == rec.n_samples + 1
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == 0.25
    summary = json.loads(json_path.read_text())
    assert summary["termination"] == "reached_tmax"
    assert summary == summary_dict(rec) | {"bracket": summary["bracket"]}


def test_summary_reports_termination_fields(entry):
    e = entry("ex3b")
    rec = simulate(e.system, e.nonlinearity, e.input, 0.0, e.x0,
                   SimOptions(method="rk4_fixed", dt=1e-3, tmax=1.0))
    s = summary_dict(rec)
    assert s["termination"] == "no_output_solution"
    assert s["t_star"] == rec.termination.time
    assert s["y_integral_norm"] == rec.y_integral_norm
