"""Scalar cost family with certified smoothness and strong-convexity moduli.

The family is f(x) = (mu/2)(x-t)^2 + (L-mu) log cosh(x-t).  Its second derivative
is mu + (L-mu) sech^2(x-t), which lies in [mu, L] exactly, so the pair (mu, L) is
a true (strong-convexity, Lipschitz-smoothness) certificate rather than an
assumption.  The minimum value is 0, attained at x = t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ReportedViolation

_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class CostSpec:
    """Target overlap t (the minimizer), strong-convexity mu, smoothness L >= mu."""

    t: float
    mu: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError(f"target t must be finite, got {self.t}")
        if not (0.0 < self.mu <= self.L):
            raise ValueError(f"need 0 < mu <= L, got mu={self.mu}, L={self.L}")

    @property
    def f_star(self) -> float:
        return 0.0

    def evaluate(self, x):
        return cost_eval(self, x)


def _log_cosh(z):
    # log cosh(z) = |z| + log((1 + exp(-2|z|)) / 2); safe for |z| > 700
    az = np.abs(z)
    return az + np.log1p(np.exp(-2.0 * az)) - _LOG2


def _sech_sq(z):
    # sech^2(z) = 4 e^{-2|z|} / (1 + e^{-2|z|})^2, overflow-safe
    s = np.exp(-2.0 * np.abs(z))
    return 4.0 * s / (1.0 + s) ** 2


def cost_eval(spec: CostSpec, x):
    """Evaluate (f, f', f'') at x (scalar or array).

    With L == mu this is exactly the quadratic (mu/2)(x - t)^2.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    z = np.asarray(x, dtype=float) - spec.t
    gap = spec.L - spec.mu
    f = 0.5 * spec.mu * z * z
    fp = spec.mu * z
    fpp = np.full_like(z, spec.mu)
    if gap > 0.0:
        f = f + gap * _log_cosh(z)
        fp = fp + gap * np.tanh(z)
        fpp = fpp + gap * _sech_sq(z)
    if scalar:
        return float(f), float(fp), float(fpp)
    return f, fp, fpp


def verify_convexity_envelope(spec: CostSpec, grid, eval_fn=cost_eval, tol: float = 1e-12):
    """Check the curvature window, the PL inequality, and the descent-lemma bounds on a grid.

    Per point: mu <= f'' <= L, 2*mu*(f - f*) <= f'^2 + tol, and
    f'^2 <= (2 L^2 / mu)(f - f*) + tol.  Per consecutive pair (both orders):
    f(x) <= f(y) + f'(y)(x - y) + (L/2)(x - y)^2 + tol.

    ``eval_fn`` exists so tests can inject a corrupted evaluator as a negative
    control.  Raises ReportedViolation listing every failing point; returns a
    summary dict when all checks pass.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    f, fp, fpp = eval_fn(spec, grid)
    f = np.atleast_1d(np.asarray(f, dtype=float))
    fp = np.atleast_1d(np.asarray(fp, dtype=float))
    fpp = np.atleast_1d(np.asarray(fpp, dtype=float))

    violations = []
    lo = fpp < spec.mu - tol
    hi = fpp > spec.L + tol
    for i in np.flatnonzero(lo | hi):
        violations.append(("curvature", float(grid[i]), float(fpp[i])))

    gap = f - spec.f_star
    pl = 2.0 * spec.mu * gap - (fp * fp + tol)
    for i in np.flatnonzero(pl > 0.0):
        violations.append(("pl", float(grid[i]), float(pl[i])))

    rev = fp * fp - ((2.0 * spec.L**2 / spec.mu) * gap + tol)
    for i in np.flatnonzero(rev > 0.0):
        violations.append(("gradient_dominance", float(grid[i]), float(rev[i])))

    if grid.size >= 2:
        for xi, yi in ((slice(1, None), slice(None, -1)), (slice(None, -1), slice(1, None))):
            x, y = grid[xi], grid[yi]
            lhs = f[xi]
            rhs = f[yi] + fp[yi] * (x - y) + 0.5 * spec.L * (x - y) ** 2 + tol
            for i in np.flatnonzero(lhs > rhs):
                violations.append(("descent_lemma", float(x[i]), float(lhs[i] - rhs[i])))

    if violations:
        raise ReportedViolation(
            f"{len(violations)} envelope violation(s), first at x={violations[0][1]}",
            violations=violations,
        )
    return {
        "points": int(grid.size),
        "curvature_range": (float(fpp.min()), float(fpp.max())),
        "max_pl_slack": float(np.max(pl)),
    }
