"""Set-valued output handling: selection policies over fibres.

When xi - D f(t, xi) is not injective the output equation defines a
fibre, not a point, and the state equation becomes a differential
inclusion.  The measurable-selection argument that gives existence is
non-constructive; the deterministic policies here are its constructive
stand-in, and they reproduce distinct solutions from one initial state.

Branch bookkeeping: fibre elements are sorted by (norm, entries), so
``fixed_branch`` is deterministic across runs.  Selections that move by
more than ``jump_tol`` between steps are events: where the exact scalar
structure is available the step is bisected onto the fold of the output
map and the state is landed there exactly, otherwise the jump is taken
and flagged, never silent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EmptyFibreError
from .integrator import Termination, TrajectoryRecord, _Recorder
from .nonlinearity import Nonlinearity
from .output_solver import (FibreSet, SolveOptions, enumerate_fibre_exact,
                            enumerate_fibre_multistart,
                            exact_structure_available, residual_norm)
from .system import SystemMatrices


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str               # nearest_previous | min_norm | max_norm | fixed_branch | segment_parameter
    index: int = 0
    s: float = 0.0

    def __post_init__(self):
        valid = ("nearest_previous", "min_norm", "max_norm", "fixed_branch",
                 "segment_parameter")
        if self.kind not in valid:
            raise ConfigurationError(f"unknown selection policy {self.kind!r}")
        if self.kind == "segment_parameter" and not 0.0 <= self.s <= 1.0:
            raise ConfigurationError("segment parameter must lie in [0, 1]")

    @classmethod
    def nearest_previous(cls):
        return cls(kind="nearest_previous")

    @classmethod
    def min_norm(cls):
        return cls(kind="min_norm")

    @classmethod
    def max_norm(cls):
        return cls(kind="max_norm")

    @classmethod
    def fixed_branch(cls, index: int):
        return cls(kind="fixed_branch", index=int(index))

    @classmethod
    def segment_parameter(cls, s: float):
        return cls(kind="segment_parameter", s=float(s))

    @classmethod
    def parse(cls, text: str) -> "SelectionPolicy":
        name, _, arg = text.partition(":")
        if name == "fixed_branch":
            return cls.fixed_branch(int(arg or 0))
        if name == "segment_parameter":
            return cls.segment_parameter(float(arg or 0.5))
        return cls(kind=name)


def _element_value(kind: str, payload, policy: SelectionPolicy,
                   prev_y: np.ndarray | None):
    if kind == "point":
        return payload
    a, b = payload
    if policy.kind == "nearest_previous" and prev_y is not None:
        from .output_solver import _project_onto_segment
        return _project_onto_segment(prev_y, a, b)
    if policy.kind == "min_norm":
        from .output_solver import _project_onto_segment
        return _project_onto_segment(np.zeros_like(a), a, b)
    if policy.kind == "max_norm":
        finite = [e for e in (a, b) if np.all(np.isfinite(e))]
        if not finite:
            raise ConfigurationError("max_norm undefined on unbounded segment")
        return max(finite, key=lambda e: float(np.linalg.norm(e)))
    # representative for fixed_branch and default cases
    if np.all(np.isfinite(b)) and np.all(np.isfinite(a)):
        return 0.5 * (a + b)
    return a if np.all(np.isfinite(a)) else b


def select_from_fibre(fib: FibreSet, policy: SelectionPolicy,
                      prev_y=None) -> tuple[np.ndarray, int]:
    """Deterministically pick one output from a fibre.

    Returns (value, branch index into the sorted element list).  Raises
    EmptyFibreError on an empty fibre; that signal propagates to the
    integrator as loss of existence.
    """
    if fib.empty:
        raise EmptyFibreError("fibre is empty")
    elements = fib.elements()
    prev = None if prev_y is None else np.asarray(prev_y, dtype=float).reshape(-1)

    if policy.kind == "fixed_branch":
        if not 0 <= policy.index < len(elements):
            raise ConfigurationError(
                f"fixed_branch index {policy.index} out of range "
                f"(fibre has {len(elements)} elements)"
            )
        kind, payload = elements[policy.index]
        return np.asarray(_element_value(kind, payload, policy, prev),
                          dtype=float).copy(), policy.index

    if policy.kind == "segment_parameter":
        for idx, (kind, payload) in enumerate(elements):
            if kind == "segment":
                a, b = payload
                if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                    raise ConfigurationError(
                        "segment_parameter undefined on unbounded segment"
                    )
                return (1.0 - policy.s) * a + policy.s * b, idx
        raise ConfigurationError("segment_parameter policy needs a segment fibre")

    if policy.kind == "nearest_previous":
        if prev is None:
            raise ConfigurationError("nearest_previous requires a previous output")
        best = None
        for idx, (kind, payload) in enumerate(elements):
            cand = np.asarray(_element_value(kind, payload, policy, prev), dtype=float)
            dist = float(np.linalg.norm(cand - prev))
            if best is None or dist < best[1]:
                best = (cand, dist, idx)
        return best[0].copy(), best[2]

    if policy.kind in ("min_norm", "max_norm"):
        sign = 1.0 if policy.kind == "min_norm" else -1.0
        best = None
        for idx, (kind, payload) in enumerate(elements):
            cand = np.asarray(_element_value(kind, payload, policy, prev), dtype=float)
            score = sign * float(np.linalg.norm(cand))
            if best is None or score < best[1]:
                best = (cand, score, idx)
        return best[0].copy(), best[2]

    raise ConfigurationError(f"unhandled policy {policy.kind!r}")


# ---------------------------------------------------------------------------
# Inclusion-mode simulation
# ---------------------------------------------------------------------------

@dataclass
class InclusionOptions:
    """Options for inclusion-mode stepping.

    Euler is the default: the inclusion theory guarantees only absolutely
    continuous solutions, so higher-order claims are unjustified across
    branch switches.  RK4 is opt-in for single-valued stretches.
    """

    method: str = "euler"            # euler | rk4
    dt: float = 1e-3
    dt_min: float = 1e-12
    tmax: float = 10.0
    jump_tol: float = 5e-2
    blowup_threshold: float = 1e8
    y_blowup_threshold: float = 1e6
    monotone_window: int = 10
    fibre: SolveOptions = field(default_factory=SolveOptions)
    fold_events: bool = True
    max_fold_attempts: int = 3


class _FibreSource:
    def __init__(self, sys: SystemMatrices, f: Nonlinearity, v,
                 opts: InclusionOptions):
        self.sys = sys
        self.f = f
        self.v = v
        self.opts = opts
        self.exact = exact_structure_available(f, sys.D)

    def w_at(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.sys.C @ x + self.sys.D_e @ self.v(t)

    def fibre(self, t: float, x: np.ndarray) -> FibreSet:
        w = self.w_at(t, x)
        if self.exact:
            return enumerate_fibre_exact(self.f, self.sys.D, t, w,
                                         tol_sep=self.opts.fibre.tol_sep)
        return enumerate_fibre_multistart(self.f, self.sys.D, t, w,
                                          opts=self.opts.fibre)


def _fold_candidates(f: Nonlinearity, d: float, t: float) -> list[float]:
    """Output values where a scalar fibre branch can appear or vanish.

    These are the values of x - d f(t, x) at piece breakpoints and at
    interior extrema of quadratic pieces.
    """
    candidates: list[tuple[float, float]] = []   # (xi, w_value)
    for pc in f.resolved_structure(t):
        a = -d * pc.c2
        b = 1.0 - d * pc.c1
        for end in (pc.lo, pc.hi):
            if math.isfinite(end):
                candidates.append((end, end - d * pc.value(end)))
        if abs(a) > 1e-14:
            vertex = -b / (2.0 * a)
            if pc.lo <= vertex <= pc.hi:
                candidates.append((vertex, vertex - d * pc.value(vertex)))
    return candidates


def simulate_inclusion(sys: SystemMatrices, f: Nonlinearity, v, t0: float, x0,
                       policy: SelectionPolicy,
                       opts: InclusionOptions | None = None) -> TrajectoryRecord:
    """Integrate the inclusion form, selecting one fibre element per stage.

    Records the branch index taken at every step.  Fold events (a branch
    vanishing inside a step) are located by bisection and, for exact
    scalar structure, the state is projected onto the fold exactly so
    that invariant folds are followed instead of being overshot.
    """
    opts = opts or InclusionOptions()
    if opts.method not in ("euler", "rk4"):
        raise ConfigurationError(f"unknown inclusion method {opts.method!r}")
    n, m, m_e, p = sys.dims
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (n,):
        raise ConfigurationError(f"x0 must have length n={n}")
    src = _FibreSource(sys, f, v, opts)
    rec = _Recorder()

    def field_at(t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return sys.A @ x + sys.B @ f(t, y) + sys.B_e @ v(t)

    def residual_at(t, x, y):
        return residual_norm(f, sys.D, t, y, src.w_at(t, x))

    t = float(t0)
    x = x0.copy()
    fib0 = src.fibre(t, x)
    if fib0.empty:
        term = Termination(kind="no_output_solution", time=t, bracket=(t, t),
                           detail="empty fibre at initial time")
        return rec.build(term, n, p, m, with_branches=True)
    prev_seed = src.w_at(t, x)
    y, branch = select_from_fibre(fib0, policy, prev_y=prev_seed)
    rec.push(t, x, y, f(t, y), residual_at(t, x, y), branch=branch)

    d_scalar = float(sys.D[0, 0]) if (src.exact and p == 1) else None
    h = opts.dt
    fold_attempts = 0
    classify_solver_failed = False

    while t < opts.tmax - 1e-15 * max(1.0, abs(opts.tmax)):
        h_eff = min(h, opts.tmax - t)
        floor = max(opts.dt_min, 8.0 * np.finfo(float).eps * max(1.0, abs(t)))
        if opts.tmax - t <= floor:
            break   # remaining horizon below resolvable step size
        if h_eff < floor:
            kind = _classify(rec, classify_solver_failed, opts)
            term = Termination(kind=kind, time=t, bracket=(t, t + h_eff * 2.0),
                               detail="step size collapsed")
            return rec.build(term, n, p, m, with_branches=True)

        if opts.method == "euler":
            k = field_at(t, x, y)
            x_prop = x + h_eff * k
        else:
            try:
                x_prop, k = _rk4_inclusion(src, field_at, policy, t, x, y, h_eff)
            except EmptyFibreError:
                classify_solver_failed = True
                h = 0.5 * h_eff
                continue
        t_prop = t + h_eff

        fib_prop = src.fibre(t_prop, x_prop)
        jumped = False
        if not fib_prop.empty:
            y_prop, branch = select_from_fibre(fib_prop, policy, prev_y=y)
            jumped = float(np.linalg.norm(y_prop - y)) > opts.jump_tol
        if fib_prop.empty or jumped:
            landed = False
            if (opts.fold_events and d_scalar is not None
                    and fold_attempts < opts.max_fold_attempts):
                landing = _land_on_fold(src, f, d_scalar, policy, t, x, y, k,
                                        h_eff, opts)
                if landing is not None:
                    t, x, y, branch = landing
                    rec.push(t, x, y, f(t, y), residual_at(t, x, y),
                             flag="fold", branch=branch)
                    fold_attempts += 1
                    h = opts.dt
                    landed = True
            if landed:
                continue
            if fib_prop.empty:
                classify_solver_failed = True
                h = 0.5 * h_eff
                continue
            # Take the discontinuous selection, flagged.
            rec.push(t_prop, x_prop, y_prop, f(t_prop, y_prop),
                     residual_at(t_prop, x_prop, y_prop),
                     flag="jump", branch=branch)
            fold_attempts = 0
        else:
            rec.push(t_prop, x_prop, y_prop, f(t_prop, y_prop),
                     residual_at(t_prop, x_prop, y_prop), branch=branch)
            fold_attempts = 0
        t, x, y = t_prop, x_prop, y_prop
        classify_solver_failed = False
        h = opts.dt

        if float(np.linalg.norm(x)) > opts.blowup_threshold:
            term = Termination(kind="blow_up", time=t,
                               detail="state norm crossed blowup_threshold")
            return rec.build(term, n, p, m, with_branches=True)

    term = Termination(kind="reached_tmax", time=float(t))
    return rec.build(term, n, p, m, with_branches=True)


def _classify(rec: _Recorder, solver_failed: bool, opts: InclusionOptions) -> str:
    window = opts.monotone_window
    ynorms = [float(np.linalg.norm(yy)) for yy in rec.ys[-window:]]
    if ynorms and max(ynorms) > opts.y_blowup_threshold:
        return "blow_up"
    return "no_output_solution" if solver_failed else "step_collapse"


def _rk4_inclusion(src: _FibreSource, field_at, policy: SelectionPolicy,
                   t: float, x: np.ndarray, y: np.ndarray, h: float):
    def stage(ts, xs, prev):
        fib = src.fibre(ts, xs)
        ys, _ = select_from_fibre(fib, policy, prev_y=prev)
        return ys, field_at(ts, xs, ys)

    y1, k1 = stage(t, x, y)
    y2, k2 = stage(t + 0.5 * h, x + 0.5 * h * k1, y1)
    y3, k3 = stage(t + 0.5 * h, x + 0.5 * h * k2, y2)
    _, k4 = stage(t + h, x + h * k3, y3)
    k = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return x + h * k, k


def _land_on_fold(src: _FibreSource, f: Nonlinearity, d: float,
                  policy: SelectionPolicy, t: float, x: np.ndarray,
                  y: np.ndarray, k: np.ndarray, h: float,
                  opts: InclusionOptions):
    """Bisect the step onto the output-map fold where the branch vanishes.

    Returns (t_hat, x_hat, y_hat, branch) on success, None when no fold
    explains the event.  The state is corrected along C^T so the landed
    output value is exact; an invariant fold (zero drift) is then followed
    without further events.
    """
    sys = src.sys

    def continues(s: float):
        fib = src.fibre(t + s * h, x + s * h * k)
        if fib.empty:
            return None
        cand, dist, _ = fib.nearest(y)
        return cand if dist <= opts.jump_tol else None

    s_lo, s_hi = 0.0, 1.0
    y_cont = y
    for _ in range(60):
        s_mid = 0.5 * (s_lo + s_hi)
        cand = continues(s_mid)
        if cand is not None:
            s_lo, y_cont = s_mid, cand
        else:
            s_hi = s_mid
        if s_hi - s_lo < 1e-14:
            break
    t_hat = t + s_lo * h

    candidates = _fold_candidates(f, d, t_hat)
    if not candidates:
        return None
    xi_star, w_star = min(candidates,
                          key=lambda cw: abs(cw[0] - float(y_cont[0])))
    snap_tol = max(1e-4, 0.1 * opts.jump_tol)
    if abs(xi_star - float(y_cont[0])) > snap_tol:
        return None

    # Solve C(x + s h k) + D_e v(t + s h) = w_star along the step direction.
    def gap(s: float) -> float:
        ts = t + s * h
        ws = sys.C @ (x + s * h * k) + sys.D_e @ src.v(ts)
        return float(ws[0]) - w_star

    g_lo, g_hi = gap(s_lo), gap(s_hi)
    if g_lo == 0.0:
        s_hat = s_lo
    elif g_lo * g_hi < 0.0:
        from scipy.optimize import brentq
        s_hat = float(brentq(gap, s_lo, s_hi, xtol=1e-16, rtol=8.9e-16))
    else:
        s_hat = s_lo
    t_hat = t + s_hat * h
    x_hat = x + s_hat * h * k
    # Exact projection of the remaining gap along C^T.
    r = w_star - float((sys.C @ x_hat + sys.D_e @ src.v(t_hat))[0])
    c_row = sys.C[0]
    x_hat = x_hat + c_row * (r / float(c_row @ c_row))
    y_hat = np.array([xi_star])

    if t_hat <= t + 1e-15 * max(1.0, abs(t)):
        return None
    fib = src.fibre(t_hat, x_hat)
    if fib.empty:
        return None
    y_sel, branch = select_from_fibre(fib, policy, prev_y=y_hat)
    if float(np.linalg.norm(y_sel - y_hat)) > opts.jump_tol:
        return None
    return t_hat, x_hat, y_sel, branch


# ---------------------------------------------------------------------------
# Convexity of the nonlinearity image over a fibre
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexityVerdict:
    kind: str                 # convex_exact | convex_sampled | violation
    gap: float = 0.0
    witness: dict | None = None


def _poly_range_on(pc, lo: float, hi: float) -> tuple[float, float]:
    """Range of a resolved piece formula over [lo, hi] (closed form)."""
    values = []
    for end in (lo, hi):
        if math.isfinite(end):
            values.append(pc.value(end))
        else:
            sign = 1.0 if end > 0 else -1.0
            slope = pc.c2 * sign * math.inf if pc.c2 else pc.c1 * sign
            if pc.c2 == 0.0 and pc.c1 == 0.0:
                values.append(pc.c0 + pc.atan_coeff * math.copysign(math.pi / 2, end)
                              if pc.atan_coeff else pc.c0)
            else:
                values.append(math.copysign(math.inf, slope if slope else 1.0))
    if pc.atan_coeff == 0.0 and pc.c2 != 0.0:
        vertex = -pc.c1 / (2.0 * pc.c2)
        if lo <= vertex <= hi:
            values.append(pc.value(vertex))
    elif pc.atan_coeff != 0.0 and pc.c2 == 0.0 and pc.c1 != 0.0:
        # derivative c1 + atan_coeff / (1 + x^2)
        ratio = -pc.atan_coeff / pc.c1 - 1.0
        if ratio > 0.0:
            for crit in (math.sqrt(ratio), -math.sqrt(ratio)):
                if lo <= crit <= hi:
                    values.append(pc.value(crit))
    return min(values), max(values)


def check_image_convexity(f: Nonlinearity, D, t: float, w,
                          fib: FibreSet) -> ConvexityVerdict:
    """Is the image of the nonlinearity over the fibre a convex set?

    Exact scalar path: the image is a union of closed intervals computed
    piecewise; convex iff they merge into one (gap tolerance 1e-9).
    Sampled path: midpoints of random image pairs must lie within
    tolerance of some image sample.
    """
    if fib.empty:
        return ConvexityVerdict(kind="convex_exact")

    if fib.exact and f.kind == "piecewise_scalar":
        intervals: list[tuple[float, float]] = []
        for pt in fib.points:
            val = f.eval_scalar(t, float(pt[0]))
            intervals.append((val, val))
        for a, b in fib.segments:
            lo, hi = float(a[0]), float(b[0])
            for pc in f.resolved_structure(t):
                olo, ohi = max(lo, pc.lo), min(hi, pc.hi)
                if olo <= ohi:
                    intervals.append(_poly_range_on(pc, olo, ohi))
        intervals.sort()
        merged = [list(intervals[0])]
        worst_gap = 0.0
        witness = None
        for lo, hi in intervals[1:]:
            if lo <= merged[-1][1] + 1e-9:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                gap = lo - merged[-1][1]
                worst_gap = max(worst_gap, gap)
                witness = {"gap_interval": (merged[-1][1], lo),
                           "midpoint": 0.5 * (merged[-1][1] + lo)}
                merged.append([lo, hi])
        if len(merged) == 1:
            return ConvexityVerdict(kind="convex_exact")
        return ConvexityVerdict(kind="violation", gap=worst_gap, witness=witness)

    # Sampled membership test.
    samples: list[np.ndarray] = []
    spacing = 1e-9
    for pt in fib.points:
        samples.append(np.asarray(f(t, pt), dtype=float))
    for a, b in fib.segments:
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            continue
        grid = np.linspace(0.0, 1.0, 65)
        seg_imgs = [np.asarray(f(t, (1.0 - s) * a + s * b), dtype=float)
                    for s in grid]
        for u1, u2 in zip(seg_imgs, seg_imgs[1:]):
            spacing = max(spacing, float(np.linalg.norm(u2 - u1)))
        samples.extend(seg_imgs)
    if len(samples) <= 1:
        return ConvexityVerdict(kind="convex_sampled")
    tol = 2.0 * spacing + 1e-8
    rng = np.random.default_rng(1234)
    n_pairs = min(256, 4 * len(samples) * len(samples))
    arr = np.array(samples)
    worst = 0.0
    witness = None
    for _ in range(n_pairs):
        i, j = rng.integers(0, len(samples), size=2)
        mid = 0.5 * (arr[i] + arr[j])
        dist = float(np.min(np.linalg.norm(arr - mid, axis=1)))
        if dist > worst:
            worst = dist
            witness = {"pair": (arr[i].tolist(), arr[j].tolist()),
                       "midpoint": mid.tolist(), "distance": dist}
    if worst <= tol:
        return ConvexityVerdict(kind="convex_sampled")
    return ConvexityVerdict(kind="violation", gap=worst, witness=witness)
