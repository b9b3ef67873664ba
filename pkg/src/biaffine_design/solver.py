"""Gradient descent on bi-affine design problems.

One update step is theta <- theta - eta * g with the adjoint-method gradient g.
A step that leaves the domain (shifted matrix numerically singular) marks the
run as failed at that step; no state or adjoint values are recorded for an
out-of-domain theta.  Each visited in-domain theta contributes one trajectory
row of monitors (cost, gradient norm, sup-norms of state/adjoint/parameters),
and optionally the three descent-certificate terms for the transition it
initiates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DOMAIN_TOLERANCE, DesignProblem, assemble_system
from .errors import NotInDomain

STATUS_CONVERGED = "converged"
STATUS_MAX_STEPS = "max_steps"
STATUS_FAILED = "failed"

TRACE_COLUMNS = (
    "step",
    "cost",
    "cost_gap",
    "grad_norm",
    "x_inf",
    "a_inf",
    "theta_inf",
    "Bv_normsq",
    "eps1",
    "eps2",
)


@dataclass(frozen=True)
class GDConfig:
    """Step size, step budget, optional early stop on the cost gap, certificate toggle."""

    eta: float
    max_steps: int
    eps_stop: float = 0.0
    record_certificate: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError(f"eta must be finite and positive, got {self.eta}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.eps_stop < 0.0:
            raise ValueError(f"eps_stop must be >= 0, got {self.eps_stop}")


@dataclass
class Trajectory:
    """Per-step record of a gradient-descent run.

    Row t corresponds to the t-th visited in-domain iterate; certificate entry t
    (when recorded) describes the transition from row t to row t+1, so there is
    one fewer certificate entry than rows.
    """

    cost: np.ndarray
    grad_norm: np.ndarray
    x_inf: np.ndarray
    a_inf: np.ndarray
    theta_inf: np.ndarray
    bv_normsq: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    status: str
    failed_step: int | None
    steps_taken: int
    f_star: float
    theta_final: np.ndarray | None
    thinned_thetas: list = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.cost)

    @property
    def cost_gap(self) -> np.ndarray:
        return self.cost - self.f_star


def default_step_size(n: int, alpha: float, gamma: float, c0: float = 0.5) -> float:
    """Step size c0 * n^(alpha - 3*gamma - 1), the rate the convergence analysis admits."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if c0 <= 0.0:
        raise ValueError(f"c0 must be positive, got {c0}")
    return c0 * float(n) ** (alpha - 3.0 * gamma - 1.0)


def run_gd(problem: DesignProblem, cfg: GDConfig, theta0=None) -> Trajectory:
    """Run gradient descent; a FAIL is embedded in the trajectory, never raised.

    theta0 defaults to the zero vector.  Full theta vectors are stored only every
    ceil(max_steps/100) steps (plus first and last); scalar monitors every step.
    """
    sys = problem.system
    theta = np.zeros(sys.m) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    thin_every = max(1, math.ceil(cfg.max_steps / 100))

    cost_l, gnorm_l, xinf_l, ainf_l, thinf_l = [], [], [], [], []
    bv_l, e1_l, e2_l = [], [], []
    thinned = []

    def finish(status, failed_step=None):
        return Trajectory(
            cost=np.array(cost_l),
            grad_norm=np.array(gnorm_l),
            x_inf=np.array(xinf_l),
            a_inf=np.array(ainf_l),
            theta_inf=np.array(thinf_l),
            bv_normsq=np.array(bv_l),
            eps1=np.array(e1_l),
            eps2=np.array(e2_l),
            status=status,
            failed_step=failed_step,
            steps_taken=len(cost_l) - 1 if cost_l else 0,
            f_star=problem.cost.f_star,
            theta_final=theta.copy() if cost_l else None,
            thinned_thetas=thinned,
        )

    sysmat = assemble_system(sys, theta)
    if not (sysmat.rcond_estimate > DOMAIN_TOLERANCE):
        return finish(STATUS_FAILED, failed_step=0)
    x = sysmat.solve(sys.b)
    a = sysmat.solve_transposed(problem.c)

    for t in range(cfg.max_steps + 1):
        overlap = float(problem.c @ x)
        f, fp, _ = problem.cost.evaluate(overlap)
        g = -fp * sys.apply_BT(x * a)

        cost_l.append(f)
        gnorm_l.append(float(np.linalg.norm(g)))
        xinf_l.append(float(np.max(np.abs(x))))
        ainf_l.append(float(np.max(np.abs(a))))
        thinf_l.append(float(np.max(np.abs(theta))) if theta.size else 0.0)
        if t % thin_every == 0 or t == cfg.max_steps:
            thinned.append((t, theta.copy()))

        gap = f - problem.cost.f_star
        if cfg.eps_stop > 0.0 and gap <= cfg.eps_stop:
            return finish(STATUS_CONVERGED)
        if t == cfg.max_steps:
            return finish(STATUS_MAX_STEPS)

        theta_next = theta - cfg.eta * g
        sysmat_next = assemble_system(sys, theta_next)
        if not (sysmat_next.rcond_estimate > DOMAIN_TOLERANCE):
            return finish(STATUS_FAILED, failed_step=t + 1)
        x_next = sysmat_next.solve(sys.b)
        a_next = sysmat_next.solve_transposed(problem.c)

        if cfg.record_certificate:
            v = x * a
            btv = sys.apply_BT(v)
            w = sys.apply_B(btv)
            bv_l.append(float(btv @ btv))
            e1_l.append(float(np.sum(a * w * (x_next - x))))
            e2_l.append(-0.5 * problem.cost.L * float(np.sum(a * w * x_next)) ** 2)

        theta, sysmat, x, a = theta_next, sysmat_next, x_next, a_next

    raise AssertionError("unreachable")


def descent_certificate(problem: DesignProblem, theta, theta_next, eta: float):
    """Certificate terms for one gradient step theta -> theta_next of size eta.

    Returns (Bv_normsq, eps1, eps2, predicted_decrease) where predicted_decrease
    = eta * f'(c.x)^2 * (Bv_normsq + eps1 + eta * eps2) lower-bounds the actual
    cost decrease when theta_next is the exact eta-step from theta.
    """
    sys = problem.system
    sm = assemble_system(sys, theta)
    if not (sm.rcond_estimate > DOMAIN_TOLERANCE):
        raise NotInDomain("theta outside dom(phi)", rcond=sm.rcond_estimate)
    sm_next = assemble_system(sys, theta_next)
    if not (sm_next.rcond_estimate > DOMAIN_TOLERANCE):
        raise NotInDomain("theta_next outside dom(phi)", rcond=sm_next.rcond_estimate)

    x = sm.solve(sys.b)
    a = sm.solve_transposed(problem.c)
    x_next = sm_next.solve(sys.b)
    _, fp, _ = problem.cost.evaluate(float(problem.c @ x))

    v = x * a
    btv = sys.apply_BT(v)
    w = sys.apply_B(btv)
    bv_normsq = float(btv @ btv)
    eps1 = float(np.sum(a * w * (x_next - x)))
    eps2 = -0.5 * problem.cost.L * float(np.sum(a * w * x_next)) ** 2
    predicted = eta * fp * fp * (bv_normsq + eps1 + eta * eps2)
    return bv_normsq, eps1, eps2, predicted


@dataclass(frozen=True)
class ResonanceSummary:
    max_x_inf: float
    max_a_inf: float
    max_theta_inf: float
    empty: bool = False


def resonance_summary(traj: Trajectory) -> ResonanceSummary:
    """Maxima of the resonance monitors over all recorded steps.

    A trajectory that failed at initialization has no recorded steps; the maxima
    are reported as 0 with the ``empty`` flag set.
    """
    if traj.n_rows == 0:
        return ResonanceSummary(0.0, 0.0, 0.0, empty=True)
    return ResonanceSummary(
        max_x_inf=float(traj.x_inf.max()),
        max_a_inf=float(traj.a_inf.max()),
        max_theta_inf=float(traj.theta_inf.max()),
    )


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_trace_csv(traj: Trajectory, path) -> None:
    """Trace CSV with the fixed column order; missing certificate fields are empty."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        n_cert = len(traj.bv_normsq)
        for t in range(traj.n_rows):
            row = [
                str(t),
                _fmt(traj.cost[t]),
                _fmt(traj.cost[t] - traj.f_star),
                _fmt(traj.grad_norm[t]),
                _fmt(traj.x_inf[t]),
                _fmt(traj.a_inf[t]),
                _fmt(traj.theta_inf[t]),
            ]
            if t < n_cert:
                row += [_fmt(traj.bv_normsq[t]), _fmt(traj.eps1[t]), _fmt(traj.eps2[t])]
            else:
                row += ["", "", ""]
            fh.write(",".join(row) + "\n")
