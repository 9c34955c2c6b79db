"""Time integration of the eliminated state equation.

Each Runge-Kutta stage solves the implicit output equation at the stage
point (warm-started from the previous output), then advances

    xdot = A x + B f(t, y(t, x)) + B_e v(t).

Termination follows the trichotomy: the horizon was reached; the output
equation lost solvability (existence boundary, with the state and output
staying bounded); or the trajectory blew up in finite time.  Blow-up is
detected by the state norm crossing a threshold, or by step collapse
with a divergent output or monotonically growing state.  A divergent
output is accepted as blow-up evidence because the quantity that is
unbounded on a maximal bounded interval includes the output integral,
and state growth alone can be too slow (logarithmic) to cross any
threshold in floating point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError
from .output_solver import OutputSolution, SolveOptions, solve_output
from .system import SystemMatrices

_RK45_C = (0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5)
_RK45_A = (
    (),
    (0.25,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_RK45_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0,
            -9.0 / 50.0, 2.0 / 55.0)
_RK45_E = (1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0,
           1.0 / 50.0, 2.0 / 55.0)


@dataclass
class SimOptions:
    """Integration options shared by both stepping methods."""

    method: str = "rk4_fixed"        # rk4_fixed | rk45_adaptive
    dt: float = 1e-3
    dt_min: float = 1e-12
    dt_max: float = 0.1
    rtol: float = 1e-8
    atol: float = 1e-10
    tmax: float = 10.0
    blowup_threshold: float = 1e8
    y_blowup_threshold: float = 1e6
    monotone_window: int = 10
    solver: SolveOptions = field(default_factory=SolveOptions)


@dataclass
class Termination:
    kind: str                         # reached_tmax | no_output_solution | blow_up | step_collapse
    time: float
    bracket: tuple[float, float] | None = None
    detail: str = ""


@dataclass
class TrajectoryRecord:
    """Sampled trajectory with running output/feedback integrals."""

    times: np.ndarray
    x: np.ndarray                     # N x n
    y: np.ndarray                     # N x p
    u: np.ndarray                     # N x m
    residuals: np.ndarray             # N
    termination: Termination
    y_integral: np.ndarray            # running integral of ||y||
    u_integral: np.ndarray            # running integral of ||f(t, y)||
    branches: np.ndarray | None = None
    flags: list[str] | None = None

    @property
    def n_samples(self) -> int:
        return int(self.times.size)

    @property
    def final_state(self) -> np.ndarray | None:
        return self.x[-1] if self.n_samples else None

    @property
    def y_integral_norm(self) -> float:
        return float(self.y_integral[-1]) if self.n_samples else 0.0

    @property
    def u_integral_norm(self) -> float:
        return float(self.u_integral[-1]) if self.n_samples else 0.0

    @property
    def y_sup_norm(self) -> float:
        if not self.n_samples:
            return 0.0
        return float(np.max(np.linalg.norm(self.y, axis=1)))


class _StageFailure(Exception):
    def __init__(self, t: float, solution: OutputSolution):
        super().__init__(f"output equation unsolvable at t={t}")
        self.t = t
        self.solution = solution


class _Stepper:
    """Shared stage machinery for the explicit schemes."""

    def __init__(self, sys: SystemMatrices, f, v, opts: SimOptions):
        self.sys = sys
        self.f = f
        self.v = v
        self.opts = opts

    def input_at(self, t: float) -> np.ndarray:
        return self.v(t)

    def stage(self, t: float, x: np.ndarray, y_warm: np.ndarray):
        """Solve the output equation at a stage point; return (y, u, xdot)."""
        vt = self.input_at(t)
        w = self.sys.C @ x + self.sys.D_e @ vt
        sol = solve_output(self.sys, self.f, t, w, y_warm, self.opts.solver)
        if sol.y is None:
            raise _StageFailure(t, sol)
        u = self.f(t, sol.y)
        xdot = self.sys.A @ x + self.sys.B @ u + self.sys.B_e @ vt
        return sol.y, u, xdot

    def rk4(self, t: float, x: np.ndarray, h: float, y_warm: np.ndarray):
        y1, _, k1 = self.stage(t, x, y_warm)
        y2, _, k2 = self.stage(t + 0.5 * h, x + 0.5 * h * k1, y1)
        y3, _, k3 = self.stage(t + 0.5 * h, x + 0.5 * h * k2, y2)
        y4, _, k4 = self.stage(t + h, x + h * k3, y3)
        x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return x_new, y4, None

    def rk45(self, t: float, x: np.ndarray, h: float, y_warm: np.ndarray):
        ks = []
        y_prev = y_warm
        for i in range(6):
            xi = x.copy()
            for a, k in zip(_RK45_A[i], ks):
                xi += h * a * k
            y_i, _, k_i = self.stage(t + _RK45_C[i] * h, xi, y_prev)
            ks.append(k_i)
            y_prev = y_i
        x_new = x.copy()
        err = np.zeros_like(x)
        for b, e, k in zip(_RK45_B5, _RK45_E, ks):
            x_new += h * b * k
            err += h * e * k
        return x_new, y_prev, err

    def step(self, t, x, h, y_warm):
        if self.opts.method == "rk4_fixed":
            return self.rk4(t, x, h, y_warm)
        return self.rk45(t, x, h, y_warm)


def _initial_guess(sys: SystemMatrices, f, t0: float, w0: np.ndarray) -> np.ndarray:
    """Linearised guess (I - D J)^{-1} w0 when an analytic Jacobian exists."""
    if f.jac is not None:
        try:
            J = f.jac(t0, w0)
            return np.linalg.solve(np.eye(w0.size) - sys.D @ J, w0)
        except np.linalg.LinAlgError:
            pass
    return w0.copy()


class _Recorder:
    def __init__(self):
        self.times: list[float] = []
        self.xs: list[np.ndarray] = []
        self.ys: list[np.ndarray] = []
        self.us: list[np.ndarray] = []
        self.residuals: list[float] = []
        self.y_int: list[float] = []
        self.u_int: list[float] = []
        self.flags: list[str] = []
        self.branches: list[int] = []

    def push(self, t, x, y, u, resid, flag="", branch=-1):
        ynorm = float(np.linalg.norm(y))
        unorm = float(np.linalg.norm(u))
        if self.times:
            dt = t - self.times[-1]
            ylast = float(np.linalg.norm(self.ys[-1]))
            ulast = float(np.linalg.norm(self.us[-1]))
            self.y_int.append(self.y_int[-1] + 0.5 * dt * (ylast + ynorm))
            self.u_int.append(self.u_int[-1] + 0.5 * dt * (ulast + unorm))
        else:
            self.y_int.append(0.0)
            self.u_int.append(0.0)
        self.times.append(float(t))
        self.xs.append(np.asarray(x, dtype=float).copy())
        self.ys.append(np.asarray(y, dtype=float).copy())
        self.us.append(np.asarray(u, dtype=float).copy())
        self.residuals.append(float(resid))
        self.flags.append(flag)
        self.branches.append(branch)

    def build(self, termination: Termination, n: int, p: int, m: int,
              with_branches: bool = False) -> TrajectoryRecord:
        count = len(self.times)
        return TrajectoryRecord(
            times=np.array(self.times),
            x=np.array(self.xs).reshape(count, n),
            y=np.array(self.ys).reshape(count, p),
            u=np.array(self.us).reshape(count, m),
            residuals=np.array(self.residuals),
            termination=termination,
            y_integral=np.array(self.y_int),
            u_integral=np.array(self.u_int),
            branches=np.array(self.branches, dtype=int) if with_branches else None,
            flags=self.flags,
        )


def _residual_at(sys: SystemMatrices, f, v, t: float, x: np.ndarray,
                 y: np.ndarray) -> float:
    vt = v(t)
    r = y - sys.D @ f(t, y) - sys.C @ x - sys.D_e @ vt
    return float(np.linalg.norm(r))


def _classify_collapse(rec: _Recorder, solver_failed: bool, opts: SimOptions,
                       xdot_norm: float | None = None) -> str:
    """Label a step collapse.

    Blow-up evidence is divergence of the recorded output or of the state
    derivative at the stopping point; a monotonically growing but bounded
    state (the existence-boundary case) must not count, since its norm
    also increases all the way to the stop.
    """
    window = opts.monotone_window
    ynorms = [float(np.linalg.norm(y)) for y in rec.ys[-window:]]
    y_diverged = bool(ynorms) and max(ynorms) > opts.y_blowup_threshold
    xdot_diverged = (xdot_norm is not None
                     and xdot_norm > opts.y_blowup_threshold)
    if y_diverged or xdot_diverged:
        return "blow_up"
    if solver_failed:
        return "no_output_solution"
    return "step_collapse"


def simulate(sys: SystemMatrices, f, v, t0: float, x0, opts: SimOptions | None = None
             ) -> TrajectoryRecord:
    """Integrate from x(t0) = x0 until tmax or a termination event.

    Fixed-step RK4 or adaptive RKF45; every stage re-solves the implicit
    output equation (warm-started), preserving the order of the scheme
    for the semi-explicit structure.  On stage failure the step is halved
    down to dt_min, so event times are located to roughly dt_min.

    When a stage finds several outputs the one nearest the warm start is
    taken, which keeps the output path on a continuous selection wherever
    one exists; genuinely set-valued fibres are the business of
    ``simulate_inclusion``, which exposes explicit selection policies.
    """
    opts = opts or SimOptions()
    if opts.method not in ("rk4_fixed", "rk45_adaptive"):
        raise ConfigurationError(f"unknown method {opts.method!r}")
    if opts.dt <= 0 or opts.tmax <= t0:
        raise ConfigurationError("need dt > 0 and tmax > t0")
    n, m, m_e, p = sys.dims
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (n,):
        raise ConfigurationError(f"x0 must have length n={n}")

    stepper = _Stepper(sys, f, v, opts)
    rec = _Recorder()

    t = float(t0)
    x = x0.copy()
    w0 = sys.C @ x + sys.D_e @ v(t)
    guess = _initial_guess(sys, f, t, w0)
    sol0 = solve_output(sys, f, t, w0, guess, opts.solver)
    if sol0.y is None:
        detail = dict(sol0.certificate or {})
        term = Termination(kind="no_output_solution", time=t,
                           bracket=(t, t), detail=f"unsolvable at initial time: {detail}")
        return rec.build(term, n, p, m)
    y = sol0.y
    u = f(t, y)
    rec.push(t, x, y, u, _residual_at(sys, f, v, t, x, y))

    h = opts.dt if opts.method == "rk4_fixed" else min(opts.dt, opts.dt_max)
    creep_fail_h: float | None = None
    while t < opts.tmax - 1e-15 * max(1.0, abs(opts.tmax)):
        h_eff = min(h, opts.tmax - t)
        floor = max(opts.dt_min, 8.0 * np.finfo(float).eps * max(1.0, abs(t)))
        if opts.tmax - t <= floor:
            break   # remaining horizon below resolvable step size
        if h_eff < floor:
            vt = v(t)
            xdot = sys.A @ x + sys.B @ f(t, y) + sys.B_e @ vt
            kind = _classify_collapse(rec, creep_fail_h is not None, opts,
                                      xdot_norm=float(np.linalg.norm(xdot)))
            bracket = (t, t + (creep_fail_h if creep_fail_h else floor))
            term = Termination(kind=kind, time=t, bracket=bracket,
                               detail="step size collapsed")
            return rec.build(term, n, p, m)
        try:
            x_new, y_land, err = stepper.step(t, x, h_eff, y)
        except _StageFailure:
            creep_fail_h = h_eff
            h = 0.5 * h_eff
            continue

        if opts.method == "rk45_adaptive":
            scale = opts.atol + opts.rtol * np.maximum(np.abs(x), np.abs(x_new))
            errnorm = float(np.max(np.abs(err) / scale)) if x.size else 0.0
            if errnorm > 1.0:
                h = max(0.5 * h_eff, 0.9 * h_eff * errnorm ** -0.2)
                continue

        t_new = t + h_eff
        w_new = sys.C @ x_new + sys.D_e @ v(t_new)
        sol = solve_output(sys, f, t_new, w_new, y_land, opts.solver)
        if sol.y is None:
            creep_fail_h = h_eff
            h = 0.5 * h_eff
            continue
        y_new = sol.y
        u_new = f(t_new, y_new)
        rec.push(t_new, x_new, y_new, u_new,
                 _residual_at(sys, f, v, t_new, x_new, y_new))
        t, x, y = t_new, x_new, y_new
        creep_fail_h = None

        if float(np.linalg.norm(x)) > opts.blowup_threshold:
            term = Termination(kind="blow_up", time=t,
                               detail="state norm crossed blowup_threshold")
            return rec.build(term, n, p, m)

        if opts.method == "rk45_adaptive":
            if errnorm > 0.0:
                h = min(opts.dt_max, h_eff * min(5.0, 0.9 * errnorm ** -0.2))
            else:
                h = min(opts.dt_max, 5.0 * h_eff)
        else:
            h = opts.dt

    term = Termination(kind="reached_tmax", time=float(t))
    return rec.build(term, n, p, m)


def refine_escape_time(record: TrajectoryRecord, sys: SystemMatrices, f, v,
                       time_tol: float = 1e-6,
                       opts: SimOptions | None = None) -> tuple[float, float]:
    """Bracket the termination event of a stopped trajectory within time_tol.

    Bisection on the step taken from the last recorded state: a midpoint
    step either succeeds without crossing the blow-up thresholds (advance
    the bracket) or fails (shrink it).  Returns (t_star, half_width).
    """
    if record.termination.kind not in ("no_output_solution", "blow_up"):
        raise UsageError("refine_escape_time applies to terminated records only")
    if record.n_samples == 0:
        return record.termination.time, 0.0
    opts = opts or SimOptions()
    stepper = _Stepper(sys, f, v, opts)

    if record.n_samples >= 2:
        t_lo = float(record.times[-2])
        x_lo = record.x[-2].copy()
        y_lo = record.y[-2].copy()
        t_hi = float(record.times[-1]) + (record.termination.bracket[1] -
                                          record.termination.bracket[0]
                                          if record.termination.bracket else 0.0)
    else:
        t_lo = float(record.times[-1])
        x_lo = record.x[-1].copy()
        y_lo = record.y[-1].copy()
        t_hi = t_lo + (opts.dt if record.termination.bracket is None
                       else record.termination.bracket[1] - t_lo)
    if record.termination.bracket is not None:
        t_hi = max(t_hi, record.termination.bracket[1])

    while t_hi - t_lo > 2.0 * time_tol:
        t_mid = 0.5 * (t_lo + t_hi)
        h = t_mid - t_lo
        if h < max(opts.dt_min, 8.0 * np.finfo(float).eps * max(1.0, abs(t_lo))):
            break
        try:
            x_new, y_new, _ = stepper.rk4(t_lo, x_lo, h, y_lo)
        except _StageFailure:
            t_hi = t_mid
            continue
        if (float(np.linalg.norm(x_new)) > opts.blowup_threshold
                or float(np.linalg.norm(y_new)) > opts.y_blowup_threshold):
            t_hi = t_mid
            continue
        t_lo, x_lo, y_lo = t_mid, x_new, y_new
    return 0.5 * (t_lo + t_hi), 0.5 * (t_hi - t_lo)


def compare_to_reference(record: TrajectoryRecord, reference) -> dict:
    """Sup-norm deviations of the record against closed-form references.

    ``reference`` provides callables x(t) and optionally y(t), and an
    optional right endpoint ``t_end`` restricting the comparison domain.
    """
    if record.n_samples == 0:
        raise UsageError("record has no samples to compare")
    t_end = getattr(reference, "t_end", None)
    mask = np.ones(record.n_samples, dtype=bool)
    if t_end is not None:
        mask &= record.times <= t_end + 1e-12
    if not np.any(mask):
        raise UsageError("reference domain does not overlap the record")
    times = record.times[mask]
    x_ref = np.array([np.asarray(reference.x(t), dtype=float).reshape(-1)
                      for t in times])
    metrics = {}
    err_x = np.abs(record.x[mask] - x_ref)
    metrics["x_max_err_per_component"] = err_x.max(axis=0)
    metrics["x_max_err"] = float(err_x.max())
    if getattr(reference, "y", None) is not None:
        y_ref = np.array([np.asarray(reference.y(t), dtype=float).reshape(-1)
                          for t in times])
        err_y = np.abs(record.y[mask] - y_ref)
        metrics["y_max_err_per_component"] = err_y.max(axis=0)
        metrics["y_max_err"] = float(err_y.max())
    return metrics


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(record: TrajectoryRecord, path) -> None:
    """CSV with columns t, x_1..x_n, y_1..y_p, u_1..u_m, residual[, branch]."""
    n = record.x.shape[1] if record.n_samples else 0
    p = record.y.shape[1] if record.n_samples else 0
    m = record.u.shape[1] if record.n_samples else 0
    header = (["t"] + [f"x_{i+1}" for i in range(n)]
              + [f"y_{i+1}" for i in range(p)]
              + [f"u_{i+1}" for i in range(m)] + ["residual"])
    with_branch = record.branches is not None
    if with_branch:
        header.append("branch")
    lines = [",".join(header)]
    for i in range(record.n_samples):
        row = ([_fmt(record.times[i])] + [_fmt(v) for v in record.x[i]]
               + [_fmt(v) for v in record.y[i]] + [_fmt(v) for v in record.u[i]]
               + [_fmt(record.residuals[i])])
        if with_branch:
            row.append(str(int(record.branches[i])))
        lines.append(",".join(row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_dict(record: TrajectoryRecord) -> dict:
    term = record.termination
    return {
        "termination": term.kind,
        "t_star": term.time,
        "bracket": list(term.bracket) if term.bracket else None,
        "detail": term.detail,
        "n_samples": record.n_samples,
        "y_integral_norm": record.y_integral_norm,
        "u_integral_norm": record.u_integral_norm,
        "y_sup_norm": record.y_sup_norm,
        "final_state": (list(map(float, record.final_state))
                        if record.final_state is not None else None),
        "max_residual": (float(np.max(record.residuals))
                         if record.n_samples else None),
    }


def write_summary_json(record: TrajectoryRecord, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary_dict(record), fh, sort_keys=True, indent=2)
        fh.write("\n")
