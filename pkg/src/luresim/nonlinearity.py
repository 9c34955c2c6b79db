"""Static output nonlinearities u = f(t, y).

Three structured kinds get exact treatment downstream:

* ``piecewise_scalar`` (m = p = 1): an ordered list of pieces tiling the
  real line.  Each piece is a polynomial of degree <= 2 plus an optional
  arctan term, with possibly time-dependent coefficients and breakpoints.
  This is what makes output fibres exactly enumerable.
* ``radial`` (m = p): f(t, xi) = a(t, ||xi||) xi / ||xi|| with a scalar
  piecewise amplitude profile, so fibres reduce to a scalar problem along
  the direction of the target.
* ``smooth`` / ``expression``: opaque evaluators, numeric treatment only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, EvaluationError

_INF = math.inf


def _resolve(value, t: float) -> float:
    return float(value(t)) if callable(value) else float(value)


@dataclass(frozen=True)
class ScalarPiece:
    """One piece of a scalar map: c0 + c1*x + c2*x^2 + atan_coeff*atan(x) on [lo, hi].

    Breakpoints and polynomial coefficients may be callables of t.
    """

    lo: float | Callable[[float], float]
    hi: float | Callable[[float], float]
    c0: float | Callable[[float], float] = 0.0
    c1: float | Callable[[float], float] = 0.0
    c2: float | Callable[[float], float] = 0.0
    atan_coeff: float = 0.0

    def at(self, t: float) -> "ResolvedPiece":
        return ResolvedPiece(
            _resolve(self.lo, t),
            _resolve(self.hi, t),
            _resolve(self.c0, t),
            _resolve(self.c1, t),
            _resolve(self.c2, t),
            self.atan_coeff,
        )

    @property
    def static(self) -> bool:
        return not any(callable(v) for v in (self.lo, self.hi, self.c0, self.c1, self.c2))


@dataclass(frozen=True)
class ResolvedPiece:
    lo: float
    hi: float
    c0: float
    c1: float
    c2: float
    atan_coeff: float

    def value(self, x: float) -> float:
        out = self.c0 + x * (self.c1 + x * self.c2)
        if self.atan_coeff:
            out += self.atan_coeff * math.atan(x)
        return out

    def value_array(self, x: np.ndarray) -> np.ndarray:
        out = self.c0 + x * (self.c1 + x * self.c2)
        if self.atan_coeff:
            out = out + self.atan_coeff * np.arctan(x)
        return out


def resolve_pieces(pieces, t: float) -> list[ResolvedPiece]:
    return [pc.at(t) for pc in pieces]


def _eval_resolved(resolved, x: float) -> float:
    for pc in resolved:
        if pc.lo <= x <= pc.hi:
            return pc.value(x)
    # Fell through only by rounding at the outermost ends.
    return resolved[0].value(x) if x < resolved[0].lo else resolved[-1].value(x)


def _eval_piecewise(pieces, t: float, x: float) -> float:
    return _eval_resolved(resolve_pieces(pieces, t), x)


@dataclass(frozen=True)
class Nonlinearity:
    """Evaluator for f(t, xi) in R^m, xi in R^p, plus optional structure."""

    m: int
    p: int
    fn: Callable[[float, np.ndarray], np.ndarray]
    kind: str = "smooth"     # smooth | piecewise_scalar | radial | expression
    pieces: tuple[ScalarPiece, ...] | None = None
    profile: tuple[ScalarPiece, ...] | None = None
    jac: Callable[[float, np.ndarray], np.ndarray] | None = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "piecewise_scalar":
            if self.m != 1 or self.p != 1:
                raise ConfigurationError("piecewise_scalar requires m = p = 1")
            _check_tiling(self.pieces, lo_start=-_INF)
        elif self.kind == "radial":
            if self.m != self.p:
                raise ConfigurationError("radial nonlinearity requires m = p")
            _check_tiling(self.profile, lo_start=0.0)
            for t in (0.0, 0.7, 3.1):
                a0 = self.profile[0].at(t).value(0.0)
                if abs(a0) > 1e-12:
                    raise ConfigurationError(
                        "radial amplitude profile must vanish at r = 0"
                    )
        # Time-independent pieces resolve once.
        structure = self.pieces if self.kind == "piecewise_scalar" else self.profile
        if structure is not None and all(pc.static for pc in structure):
            object.__setattr__(self, "_static_resolved",
                               [pc.at(0.0) for pc in structure])
        else:
            object.__setattr__(self, "_static_resolved", None)

    def resolved_structure(self, t: float) -> list["ResolvedPiece"]:
        if self._static_resolved is not None:
            return self._static_resolved
        structure = self.pieces if self.kind == "piecewise_scalar" else self.profile
        return [pc.at(t) for pc in structure]

    def __call__(self, t: float, xi) -> np.ndarray:
        return self.eval(t, xi)

    def eval(self, t: float, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        if xi.shape[0] != self.p:
            raise ConfigurationError(
                f"xi has length {xi.shape[0]}, expected p={self.p}"
            )
        if self.kind == "piecewise_scalar":
            out = np.array([_eval_resolved(self.resolved_structure(t),
                                           float(xi[0]))])
        else:
            out = np.asarray(self.fn(t, xi), dtype=float).reshape(-1)
        if out.shape[0] != self.m:
            raise ConfigurationError(
                f"nonlinearity returned length {out.shape[0]}, expected m={self.m}"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationError(
                f"nonlinearity {self.name or '<anonymous>'} returned a non-finite "
                f"value at t={t}", t=t, point=xi.copy(),
            )
        return out

    def eval_scalar(self, t: float, x: float) -> float:
        """Fast scalar path for p = m = 1."""
        if self.kind == "piecewise_scalar":
            return _eval_resolved(self.resolved_structure(t), x)
        return float(self.eval(t, np.array([x]))[0])

    def eval_scalar_array(self, t: float, x: np.ndarray) -> np.ndarray:
        """Vectorised scalar evaluation (used by the scanning oracle)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "piecewise_scalar":
            resolved = self.resolved_structure(t)
            out = np.empty_like(x)
            filled = np.zeros(x.shape, dtype=bool)
            for pc in resolved:
                mask = (~filled) & (x >= pc.lo) & (x <= pc.hi)
                out[mask] = pc.value_array(x[mask])
                filled |= mask
            if not filled.all():
                left = (~filled) & (x < resolved[0].lo)
                out[left] = resolved[0].value_array(x[left])
                right = ~(filled | left)
                out[right] = resolved[-1].value_array(x[right])
            return out
        return np.array([self.eval_scalar(t, float(v)) for v in x])

    def amplitude(self, t: float, r: float) -> float:
        """Radial amplitude a(t, r) for the radial kind."""
        if self.kind != "radial":
            raise ConfigurationError("amplitude is defined for radial kind only")
        return _eval_resolved(self.resolved_structure(t), r)


def _check_tiling(pieces, lo_start: float):
    if not pieces:
        raise ConfigurationError("piecewise structure needs at least one piece")
    for t in (0.0, 0.7, 3.1):
        resolved = resolve_pieces(pieces, t)
        if resolved[0].lo != lo_start:
            raise ConfigurationError(
                f"first piece must start at {lo_start}, got {resolved[0].lo}"
            )
        if resolved[-1].hi != _INF:
            raise ConfigurationError("last piece must extend to +inf")
        for left, right in zip(resolved, resolved[1:]):
            if left.hi > right.lo + 1e-12 or left.hi < right.lo - 1e-12:
                raise ConfigurationError(
                    f"pieces do not tile: gap or overlap between {left.hi} and {right.lo}"
                )
            b = left.hi
            if math.isfinite(b):
                scale = 1.0 + abs(left.value(b))
                if abs(left.value(b) - right.value(b)) > 1e-9 * scale:
                    raise ConfigurationError(
                        f"pieces disagree at breakpoint {b} (t={t}): "
                        f"{left.value(b)} vs {right.value(b)}"
                    )


def piecewise_scalar(pieces, name: str = "", params: dict | None = None,
                     jac=None) -> Nonlinearity:
    """Build a scalar piecewise nonlinearity from ordered pieces."""
    pieces = tuple(pieces)

    def fn(t, xi):
        return np.array([_eval_piecewise(pieces, t, float(xi[0]))])

    return Nonlinearity(m=1, p=1, fn=fn, kind="piecewise_scalar", pieces=pieces,
                        jac=jac, name=name, params=params or {})


def radial_scalar_profile(profile, p: int, name: str = "",
                          params: dict | None = None) -> Nonlinearity:
    """Build f(t, xi) = a(t, ||xi||) xi/||xi|| from a scalar amplitude profile."""
    profile = tuple(profile)

    def fn(t, xi):
        r = float(np.linalg.norm(xi))
        if r == 0.0:
            return np.zeros(p)
        return (_eval_piecewise(profile, t, r) / r) * xi

    return Nonlinearity(m=p, p=p, fn=fn, kind="radial", profile=profile,
                        name=name, params=params or {})


# ---------------------------------------------------------------------------
# Built-in nonlinearities (also addressable by name from config files)
# ---------------------------------------------------------------------------

def zero_nonlinearity(m: int, p: int) -> Nonlinearity:
    return Nonlinearity(
        m=m, p=p,
        fn=lambda t, xi: np.zeros(m),
        jac=lambda t, xi: np.zeros((m, p)),
        name="zero", params={"m": m, "p": p},
    )


def linear_nonlinearity(K) -> Nonlinearity:
    K = np.atleast_2d(np.asarray(K, dtype=float))
    m, p = K.shape
    return Nonlinearity(
        m=m, p=p,
        fn=lambda t, xi: K @ xi,
        jac=lambda t, xi: K.copy(),
        name="linear", params={"K": K.tolist()},
    )


def halfband_slopes() -> Nonlinearity:
    """Slope-1 outside [-2, 2] with unit offsets, slope 1/2 inside.

    With unit feedthrough, xi - f(xi) has range [-1, 1], so output
    solvability is lost whenever the forcing term leaves that band.
    """
    pieces = (
        ScalarPiece(lo=-_INF, hi=-2.0, c0=1.0, c1=1.0),
        ScalarPiece(lo=-2.0, hi=2.0, c1=0.5),
        ScalarPiece(lo=2.0, hi=_INF, c0=-1.0, c1=1.0),
    )
    return piecewise_scalar(pieces, name="halfband_slopes")


def parabolic_band() -> Nonlinearity:
    """Constant tails with the quadratic xi(1 - xi) on [-1/2, 1/2].

    xi - f(xi) equals xi^2 on the central band, so output fibres there
    are two-valued: the canonical non-uniqueness example.
    """
    pieces = (
        ScalarPiece(lo=-_INF, hi=-0.5, c0=-0.75),
        ScalarPiece(lo=-0.5, hi=0.5, c1=1.0, c2=-1.0),
        ScalarPiece(lo=0.5, hi=_INF, c0=0.25),
    )
    return piecewise_scalar(pieces, name="parabolic_band")


def identity_minus_atan() -> Nonlinearity:
    """f(xi) = xi - atan(xi); with unit feedthrough F(xi) = atan(xi)."""
    pieces = (ScalarPiece(lo=-_INF, hi=_INF, c1=1.0, atan_coeff=-1.0),)

    def jac(t, xi):
        x = float(xi[0])
        return np.array([[x * x / (1.0 + x * x)]])

    return piecewise_scalar(pieces, name="identity_minus_atan", jac=jac)


def deadzone_saturation(width=0.3) -> Nonlinearity:
    """Saturation with a deadzone of (possibly time-varying) half-width d(t).

    Zero on [-d, d], slope 1 on the transition bands, constant +-1 outside.
    """
    d = width if callable(width) else (lambda _t, _w=float(width): _w)
    pieces = (
        ScalarPiece(lo=-_INF, hi=lambda t: -(1.0 + d(t)), c0=-1.0),
        ScalarPiece(lo=lambda t: -(1.0 + d(t)), hi=lambda t: -d(t),
                    c0=lambda t: d(t), c1=1.0),
        ScalarPiece(lo=lambda t: -d(t), hi=lambda t: d(t)),
        ScalarPiece(lo=lambda t: d(t), hi=lambda t: 1.0 + d(t),
                    c0=lambda t: -d(t), c1=1.0),
        ScalarPiece(lo=lambda t: 1.0 + d(t), hi=_INF, c0=1.0),
    )
    params = {} if callable(width) else {"width": float(width)}
    return piecewise_scalar(pieces, name="deadzone_saturation", params=params)


def saturation_scaled(gain=1.0, gain_expr: str | None = None) -> Nonlinearity:
    """Scalar saturation scaled by a (possibly time-varying) gain h(t) in [0, 1]."""
    h = gain if callable(gain) else (lambda _t, _h=float(gain): _h)
    pieces = (
        ScalarPiece(lo=-_INF, hi=-1.0, c0=lambda t: -h(t)),
        ScalarPiece(lo=-1.0, hi=1.0, c1=lambda t: h(t)),
        ScalarPiece(lo=1.0, hi=_INF, c0=lambda t: h(t)),
    )
    params = {}
    if gain_expr is not None:
        params["gain"] = gain_expr
    elif not callable(gain):
        params["gain"] = float(gain)
    return piecewise_scalar(pieces, name="saturation_scaled", params=params)


def normalized_gain(gain=0.5, p: int = 2, gain_expr: str | None = None) -> Nonlinearity:
    """f(t, xi) = h(t) xi / (1 + ||xi||): linearly bounded, radially flattening."""
    h = gain if callable(gain) else (lambda _t, _h=float(gain): _h)

    def fn(t, xi):
        return (h(t) / (1.0 + np.linalg.norm(xi))) * xi

    def jac(t, xi):
        r = float(np.linalg.norm(xi))
        ht = h(t)
        if r == 0.0:
            return ht * np.eye(p)
        return ht * (np.eye(p) / (1.0 + r) - np.outer(xi, xi) / (r * (1.0 + r) ** 2))

    params = {"p": p}
    if gain_expr is not None:
        params["gain"] = gain_expr
    elif not callable(gain):
        params["gain"] = float(gain)
    return Nonlinearity(m=p, p=p, fn=fn, jac=jac, name="normalized_gain",
                        params=params)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotated_radial(radial_gain=None, angle=None, angle_expr: str | None = None
                   ) -> Nonlinearity:
    """Planar f(t, xi) = xi - g(||xi||) R(theta(t)) xi.

    Defaults g(s) = s and theta(t) = t, for which s*g(s) is injective and
    radially unbounded, so xi - f is a homeomorphism for every t although
    the growth of f itself is superlinear.
    """
    g = radial_gain if radial_gain is not None else (lambda s: s)
    theta = angle if angle is not None else (lambda t: t)

    def fn(t, xi):
        r = float(np.linalg.norm(xi))
        return xi - g(r) * (rotation_matrix(theta(t)) @ xi)

    params = {}
    if angle_expr is not None:
        params["angle"] = angle_expr
    return Nonlinearity(m=2, p=2, fn=fn, name="rotated_radial", params=params)


def normalized_rotation(omega: float = 1.0, p: int = 2, frame=None) -> Nonlinearity:
    """f(t, xi) = g(||xi||) J(t) xi with g(s) = 1/sqrt(1+s^2), J(t) orthogonal.

    The default frame is the planar rotation J(t) = R(omega t).
    """
    if frame is None:
        if p != 2:
            raise ConfigurationError("default rotation frame requires p = 2")
        J = lambda t: rotation_matrix(omega * t)
    else:
        J = frame

    def fn(t, xi):
        s = float(np.linalg.norm(xi))
        return (1.0 / math.sqrt(1.0 + s * s)) * (J(t) @ xi)

    def jac(t, xi):
        s2 = float(xi @ xi)
        P = np.outer(xi, xi) / (1.0 + s2)
        return (1.0 / math.sqrt(1.0 + s2)) * (J(t) @ (np.eye(p) - P))

    return Nonlinearity(m=p, p=p, fn=fn, jac=jac, name="normalized_rotation",
                        params={"omega": float(omega), "p": p})


def radial_three_zone(p: int = 2) -> Nonlinearity:
    """Radial amplitude r | 2r-1 | r+1 on [0,1] | [1,2] | [2,inf).

    With feedthrough D = I/2 the middle zone of xi - D f is flat in radius,
    producing genuinely set-valued segment fibres.
    """
    profile = (
        ScalarPiece(lo=0.0, hi=1.0, c1=1.0),
        ScalarPiece(lo=1.0, hi=2.0, c0=-1.0, c1=2.0),
        ScalarPiece(lo=2.0, hi=_INF, c0=1.0, c1=1.0),
    )
    return radial_scalar_profile(profile, p=p, name="radial_three_zone",
                                 params={"p": p})
