"""System-definition files: strict parsing, validation, serialization.

One format only: a JSON document with the four top-level sections
``matrices``, ``nonlinearity``, ``input`` and ``defaults``.  Unknown
fields are rejected and every error carries the offending field path.
Nonlinearities are either built-ins (by name, with parameters),
piecewise-scalar descriptions, or arithmetic expressions over
``t, xi_1 .. xi_p`` with a small whitelisted function set.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass

import numpy as np

from . import nonlinearity as nl
from .errors import ConfigurationError
from .nonlinearity import Nonlinearity, ScalarPiece
from .signals import (InputSignal, constant_input, piecewise_constant_input,
                      polynomial_input, zero_input)
from .system import SystemMatrices

_MATRIX_NAMES = ("A", "B", "B_e", "C", "D", "D_e")
_ALLOWED_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "atan": math.atan,
    "sqrt": math.sqrt,
    "abs": abs,
    "min": min,
    "max": max,
    "exp": math.exp,
}


def _err(path: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {message}")


# ---------------------------------------------------------------------------
# Safe arithmetic expressions
# ---------------------------------------------------------------------------

class _ExprChecker(ast.NodeVisitor):
    def __init__(self, names: set[str], path: str):
        self.names = names
        self.path = path

    def generic_visit(self, node):
        allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant,
                   ast.Name, ast.Call, ast.Add, ast.Sub, ast.Mult, ast.Div,
                   ast.Pow, ast.USub, ast.UAdd, ast.Load)
        if not isinstance(node, allowed):
            raise _err(self.path, f"disallowed syntax {type(node).__name__}")
        super().generic_visit(node)

    def visit_Constant(self, node):
        if not isinstance(node.value, (int, float)):
            raise _err(self.path, f"non-numeric constant {node.value!r}")

    def visit_Name(self, node):
        if node.id not in self.names:
            raise _err(self.path, f"unknown name {node.id!r}")

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in (
                set(_ALLOWED_FUNCS) | {"norm"}):
            raise _err(self.path, "only sin, cos, atan, sqrt, abs, min, max, "
                                  "exp, norm may be called")
        if node.keywords:
            raise _err(self.path, "keyword arguments are not allowed")
        for arg in node.args:
            self.visit(arg)


def _compile_expression(expr: str, names: list[str], path: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise _err(path, f"syntax error: {exc.msg}") from None
    _ExprChecker(set(names), path).visit(tree)
    code = compile(tree, filename=f"<{path}>", mode="eval")

    def norm(*args):
        return math.sqrt(sum(float(a) ** 2 for a in args))

    env = dict(_ALLOWED_FUNCS)
    env["norm"] = norm

    def evaluate(**values) -> float:
        return float(eval(code, {"__builtins__": {}}, {**env, **values}))

    return evaluate


def compile_scalar_expression(expr: str, path: str = "expression"):
    """Compile an expression of t into a callable t -> float."""
    evaluate = _compile_expression(expr, ["t"], path)
    return lambda t: evaluate(t=t)


def compile_vector_expression(exprs: list[str], p: int,
                              path: str = "nonlinearity.expression") -> Nonlinearity:
    """Compile m expressions of (t, xi_1..xi_p) into a nonlinearity."""
    names = ["t"] + [f"xi_{i+1}" for i in range(p)]
    fns = [_compile_expression(e, names, f"{path}[{i}]")
           for i, e in enumerate(exprs)]

    def fn(t, xi):
        values = {"t": float(t)}
        for i in range(p):
            values[f"xi_{i+1}"] = float(xi[i])
        return np.array([g(**values) for g in fns])

    return Nonlinearity(m=len(exprs), p=p, fn=fn, kind="expression",
                        name="expression", params={"exprs": list(exprs)})


# ---------------------------------------------------------------------------
# Builtin nonlinearity registry
# ---------------------------------------------------------------------------

def _scalar_or_expr(value, path: str):
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return compile_scalar_expression(value, path)
    raise _err(path, "expected a number or an expression of t")


def _build_builtin(name: str, params: dict, path: str) -> Nonlinearity:
    known = {"zero", "linear", "halfband_slopes", "parabolic_band",
             "identity_minus_atan", "deadzone_saturation", "saturation_scaled",
             "normalized_gain", "rotated_radial", "normalized_rotation",
             "radial_three_zone"}
    if name not in known:
        raise _err(path, f"unknown builtin {name!r}; valid: {sorted(known)}")
    params = dict(params)

    def take(key, default=None, required=False):
        if key in params:
            return params.pop(key)
        if required:
            raise _err(f"{path}.params.{key}", "required parameter missing")
        return default

    if name == "zero":
        out = nl.zero_nonlinearity(int(take("m", required=True)),
                                   int(take("p", required=True)))
    elif name == "linear":
        out = nl.linear_nonlinearity(take("K", required=True))
    elif name == "halfband_slopes":
        out = nl.halfband_slopes()
    elif name == "parabolic_band":
        out = nl.parabolic_band()
    elif name == "identity_minus_atan":
        out = nl.identity_minus_atan()
    elif name == "deadzone_saturation":
        width = take("width", 0.3)
        out = nl.deadzone_saturation(_scalar_or_expr(width, f"{path}.params.width"))
        if isinstance(width, (int, float)):
            out.params["width"] = float(width)
        else:
            out.params["width"] = width
    elif name == "saturation_scaled":
        gain = take("gain", 1.0)
        compiled = _scalar_or_expr(gain, f"{path}.params.gain")
        out = nl.saturation_scaled(gain=compiled,
                                   gain_expr=gain if isinstance(gain, str) else None)
        if isinstance(gain, (int, float)):
            out.params["gain"] = float(gain)
    elif name == "normalized_gain":
        gain = take("gain", 0.5)
        p = int(take("p", 2))
        compiled = _scalar_or_expr(gain, f"{path}.params.gain")
        out = nl.normalized_gain(gain=compiled, p=p,
                                 gain_expr=gain if isinstance(gain, str) else None)
        if isinstance(gain, (int, float)):
            out.params["gain"] = float(gain)
    elif name == "rotated_radial":
        angle = take("angle", "t")
        out = nl.rotated_radial(angle=compile_scalar_expression(
            angle, f"{path}.params.angle"), angle_expr=angle)
    elif name == "normalized_rotation":
        out = nl.normalized_rotation(omega=float(take("omega", 1.0)),
                                     p=int(take("p", 2)))
    else:   # radial_three_zone
        out = nl.radial_three_zone(p=int(take("p", 2)))
    if params:
        raise _err(f"{path}.params", f"unknown parameters {sorted(params)}")
    return out


def _build_piecewise(spec: dict, path: str) -> Nonlinearity:
    spec = dict(spec)
    pieces_raw = spec.pop("pieces", None)
    if spec:
        raise _err(path, f"unknown fields {sorted(spec)}")
    if not isinstance(pieces_raw, list) or not pieces_raw:
        raise _err(f"{path}.pieces", "expected a non-empty list of pieces")
    pieces = []
    for i, raw in enumerate(pieces_raw):
        ppath = f"{path}.pieces[{i}]"
        if not isinstance(raw, dict):
            raise _err(ppath, "expected an object")
        raw = dict(raw)
        lo = raw.pop("lo", None)
        hi = raw.pop("hi", None)

        def edge(value, which):
            if value == "-inf":
                return -math.inf
            if value == "inf":
                return math.inf
            if isinstance(value, (int, float)):
                return float(value)
            raise _err(f"{ppath}.{which}", "expected a number, 'inf' or '-inf'")

        lo_v, hi_v = edge(lo, "lo"), edge(hi, "hi")
        if "poly" in raw:
            coeffs = raw.pop("poly")
            if (not isinstance(coeffs, list) or not 1 <= len(coeffs) <= 3
                    or not all(isinstance(c, (int, float)) for c in coeffs)):
                raise _err(f"{ppath}.poly", "expected 1 to 3 numeric coefficients")
            coeffs = list(coeffs) + [0.0] * (3 - len(coeffs))
            pieces.append(ScalarPiece(lo=lo_v, hi=hi_v, c0=coeffs[0],
                                      c1=coeffs[1], c2=coeffs[2]))
        elif raw.pop("id_minus_atan", False):
            pieces.append(ScalarPiece(lo=lo_v, hi=hi_v, c1=1.0, atan_coeff=-1.0))
        else:
            raise _err(ppath, "piece needs 'poly' or 'id_minus_atan'")
        if raw:
            raise _err(ppath, f"unknown fields {sorted(raw)}")
    return nl.piecewise_scalar(tuple(pieces), name="piecewise_scalar",
                               params={"pieces": pieces_raw})


# ---------------------------------------------------------------------------
# Top-level config
# ---------------------------------------------------------------------------

@dataclass
class SystemConfig:
    system: SystemMatrices
    nonlinearity: Nonlinearity
    input: InputSignal
    defaults: dict
    raw: dict


def parse_config(text: str) -> SystemConfig:
    """Parse and strictly validate a system-definition document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"config is not valid JSON: line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be an object")
    doc = dict(doc)
    matrices_raw = doc.pop("matrices", None)
    nonlin_raw = doc.pop("nonlinearity", None)
    input_raw = doc.pop("input", None)
    defaults_raw = doc.pop("defaults", {})
    if doc:
        raise ConfigurationError(f"unknown top-level fields {sorted(doc)}")

    if not isinstance(matrices_raw, dict):
        raise _err("matrices", "expected an object with A, B, B_e, C, D, D_e")
    matrices_raw = dict(matrices_raw)
    mats = {}
    for key in _MATRIX_NAMES:
        if key not in matrices_raw:
            raise _err(f"matrices.{key}", "required matrix missing")
        value = matrices_raw.pop(key)
        arr = np.atleast_2d(np.asarray(value, dtype=float))
        if arr.ndim != 2:
            raise _err(f"matrices.{key}", "expected a nested numeric array")
        mats[key] = arr
    if matrices_raw:
        raise _err("matrices", f"unknown fields {sorted(matrices_raw)}")

    n = mats["A"].shape[0]
    if mats["A"].shape != (n, n):
        raise _err("matrices.A", f"must be square, got {mats['A'].shape}")
    p, m = mats["D"].shape
    checks = {
        "B": (n, m), "B_e": (n, mats["D_e"].shape[1]),
        "C": (p, n), "D_e": (p, mats["D_e"].shape[1]),
    }
    for key, shape in checks.items():
        if mats[key].shape != shape:
            raise _err(f"matrices.{key}",
                       f"has shape {mats[key].shape}, expected {shape}")
    system = SystemMatrices(A=mats["A"], B=mats["B"], B_e=mats["B_e"],
                            C=mats["C"], D=mats["D"], D_e=mats["D_e"])

    if not isinstance(nonlin_raw, dict) or len(nonlin_raw) != 1:
        raise _err("nonlinearity",
                   "expected exactly one of: builtin, piecewise_scalar, expression")
    (tag, payload), = nonlin_raw.items()
    if tag == "builtin":
        if not isinstance(payload, dict):
            raise _err("nonlinearity.builtin", "expected an object")
        payload = dict(payload)
        name = payload.pop("name", None)
        params = payload.pop("params", {})
        if payload:
            raise _err("nonlinearity.builtin", f"unknown fields {sorted(payload)}")
        if not isinstance(name, str):
            raise _err("nonlinearity.builtin.name", "expected a builtin name")
        f = _build_builtin(name, params, "nonlinearity.builtin")
    elif tag == "piecewise_scalar":
        f = _build_piecewise(payload, "nonlinearity.piecewise_scalar")
    elif tag == "expression":
        if (not isinstance(payload, list) or not payload
                or not all(isinstance(e, str) for e in payload)):
            raise _err("nonlinearity.expression", "expected a list of expressions")
        f = compile_vector_expression(payload, p)
    else:
        raise _err("nonlinearity", f"unknown kind {tag!r}")

    if f.p != p or f.m != m:
        raise _err("nonlinearity",
                   f"evaluates R^{f.p} -> R^{f.m}, but D is {p} x {m}")

    m_e = system.dims[2]
    if not isinstance(input_raw, dict) or len(input_raw) != 1:
        raise _err("input", "expected exactly one of: zero, constant, "
                            "piecewise_constant, polynomial")
    (itag, ipayload), = input_raw.items()
    if itag == "zero":
        if ipayload is not True and not (isinstance(ipayload, dict)
                                         and set(ipayload) <= {"m_e"}):
            raise _err("input.zero", "expected true or an object {\"m_e\": int}")
        if isinstance(ipayload, dict) and "m_e" in ipayload \
                and int(ipayload["m_e"]) != m_e:
            raise _err("input.zero.m_e", f"got {ipayload['m_e']}, expected {m_e}")
        signal = zero_input(m_e)
    elif itag == "constant":
        signal = constant_input(ipayload)
    elif itag == "piecewise_constant":
        if not isinstance(ipayload, dict) or set(ipayload) != {"times", "values"}:
            raise _err("input.piecewise_constant", "expected times and values")
        signal = piecewise_constant_input(ipayload["times"], ipayload["values"])
    elif itag == "polynomial":
        signal = polynomial_input(ipayload)
    else:
        raise _err("input", f"unknown kind {itag!r}")
    if signal.m_e != m_e:
        raise _err("input", f"signal has m_e={signal.m_e}, system needs {m_e}")

    if not isinstance(defaults_raw, dict):
        raise _err("defaults", "expected an object")
    defaults_raw = dict(defaults_raw)
    defaults = {}
    for key, cast in (("t0", float), ("tmax", float), ("dt", float)):
        if key in defaults_raw:
            defaults[key] = cast(defaults_raw.pop(key))
    if "x0" in defaults_raw:
        x0 = np.asarray(defaults_raw.pop("x0"), dtype=float).reshape(-1)
        if x0.size != n:
            raise _err("defaults.x0", f"has length {x0.size}, expected n={n}")
        defaults["x0"] = x0
    if defaults_raw:
        raise _err("defaults", f"unknown fields {sorted(defaults_raw)}")

    raw = json.loads(text)
    return SystemConfig(system=system, nonlinearity=f, input=signal,
                        defaults=defaults, raw=raw)


def load_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Serialization of catalog entries
# ---------------------------------------------------------------------------

def _signal_to_dict(signal: InputSignal) -> dict:
    if signal.kind == "zero":
        return {"zero": {"m_e": signal.m_e}}
    if signal.kind == "constant":
        return {"constant": [float(v) for v in signal.constant]}
    if signal.kind == "piecewise_constant":
        return {"piecewise_constant": {
            "times": [float(v) for v in signal.table_times],
            "values": [[float(v) for v in row] for row in signal.table_values],
        }}
    return {"polynomial": [[float(v) for v in row]
                           for row in signal.coefficients]}


def entry_to_config(entry) -> dict:
    """Serialize a catalog entry into the config schema."""
    mats = {key: [[float(v) for v in row] for row in getattr(entry.system, key)]
            for key in _MATRIX_NAMES}
    f = entry.nonlinearity
    if not f.name:
        raise ConfigurationError("nonlinearity is not serializable (no name)")
    return {
        "matrices": mats,
        "nonlinearity": {"builtin": {"name": f.name, "params": dict(f.params)}},
        "input": _signal_to_dict(entry.input),
        "defaults": {
            "t0": float(entry.t0),
            "x0": [float(v) for v in entry.x0],
            "tmax": float(entry.tmax),
            "dt": float(entry.dt),
        },
    }


def config_text(entry) -> str:
    return json.dumps(entry_to_config(entry), indent=2, sort_keys=True) + "\n"
