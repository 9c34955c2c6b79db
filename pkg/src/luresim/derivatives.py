"""Finite-difference Jacobians and sampled Clarke generalized Jacobians.

The Clarke generalized Jacobian of a locally Lipschitz map at a point is
the convex hull of limits of classical Jacobians at nearby points of
differentiability.  We approximate its generators statistically: draw
points in a small ball, take central-difference Jacobians there.  Kinks
show up as clusters of distinct slopes.  This cannot honor the avoidance
of arbitrary null sets that the exact definition permits; for the maps
handled here (finitely many smooth pieces) the sampled set is the right
one with probability one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EvaluationError

DEFAULT_FD_SCALE = 1e-6
DEFAULT_CLARKE_RADIUS = 1e-4
DEFAULT_CLARKE_SAMPLES = 32


def finite_diff_jacobian(f, t: float, xi, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of f(t, .) at xi, column by column.

    The default step is 1e-6 * max(1, ||xi||).
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if h is None:
        h = DEFAULT_FD_SCALE * max(1.0, float(np.linalg.norm(xi)))
    if h <= 0:
        raise ConfigurationError("finite-difference step must be positive")
    cols = []
    for j in range(xi.size):
        step = np.zeros_like(xi)
        step[j] = h
        fp = np.asarray(f(t, xi + step), dtype=float).reshape(-1)
        fm = np.asarray(f(t, xi - step), dtype=float).reshape(-1)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise EvaluationError(
                "non-finite evaluation while differencing", t=t, point=xi + step
            )
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class JacobianSample:
    """Finite list of Jacobians sampled near a base point."""

    matrices: tuple[np.ndarray, ...]
    base_point: tuple[float, np.ndarray]
    radius: float
    seed: int

    def max_norm(self) -> float:
        return max(float(np.linalg.norm(M, 2)) for M in self.matrices)


def ball_points(center: np.ndarray, radius: float, n: int, seed: int) -> np.ndarray:
    """n points uniform in the closed ball around center (seeded)."""
    rng = np.random.default_rng(seed)
    p = center.size
    dirs = rng.standard_normal((n, p))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.random(n) ** (1.0 / p)
    return center + (dirs / norms) * radii[:, None]


def sample_clarke_jacobian(f, t: float, xi, radius: float = DEFAULT_CLARKE_RADIUS,
                           n_samples: int = DEFAULT_CLARKE_SAMPLES,
                           seed: int = 0) -> JacobianSample:
    """Approximate generators of the Clarke set of f(t, .) at xi.

    Draws n_samples points uniformly in the ball of the given radius
    around xi and takes central-difference Jacobians with step radius/100.
    Reproducible for a fixed seed.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if radius <= 0:
        raise ConfigurationError("sampling radius must be positive")
    if n_samples < 1:
        raise ConfigurationError("need at least one sample")
    step = radius / 100.0
    points = ball_points(xi, radius, n_samples, seed)
    matrices = tuple(finite_diff_jacobian(f, t, pt, h=step) for pt in points)
    return JacobianSample(matrices=matrices, base_point=(t, xi.copy()),
                          radius=radius, seed=seed)
