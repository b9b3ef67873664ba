"""Finite-n measurement of the convergence-condition quantities and power-law fits.

Asymptotic O/Omega/Theta statements cannot be tested at finite n; the contract
here is fitted log-log exponents over a grid of sizes, aggregated across seeds
by geometric mean (log-domain averaging matches the regression model).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import PhysicalSystem
from .errors import ConvergenceFailure, InsufficientData, NotInDomain
from .ensembles import EnsembleSpec, generate_problem, mix_seed

SVD_EXACT_MAX_DIM = 1024

REPORT_QUANTITIES = ("inv_norm2", "grad_core_sq", "overlap0", "inv_max", "adj0_inf")


def spectral_norm(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value: exact SVD up to 1024, power iteration on M^T M above."""
    M = np.asarray(M, dtype=float)
    if min(M.shape) <= SVD_EXACT_MAX_DIM:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return power_iteration_norm(M, tol=tol, max_iter=max_iter)


def power_iteration_norm(M: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Power iteration on M^T M with a fixed starting vector."""
    M = np.asarray(M, dtype=float)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        sigma_new = float(np.sqrt(norm))
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1.0):
            return sigma_new
        v, sigma = v_new, sigma_new
    raise ConvergenceFailure(
        f"power iteration did not converge in {max_iter} iterations", last_estimate=sigma
    )


@dataclass(frozen=True)
class ConditionReport:
    """Every norm/moment quantity the convergence conditions constrain, at one draw."""

    n: int
    inv_norm2: float
    B_norm_inf: float
    B_norm_1: float
    B_norm_2: float
    b_inf: float
    b_1: float
    c_inf: float
    c_1: float
    grad_core_sq: float
    overlap0: float
    inv_max: float
    adj0_inf: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"report field {name} must be finite and >= 0, got {value}")


def check_conditions(problem, handle=None) -> ConditionReport:
    """Fill a ConditionReport using the handle's exact A^{-1} action.

    ``problem`` is anything with ``.system`` and ``.c`` (a GeneratedProblem or a
    DesignProblem).  Without an explicit handle, a GeneratedProblem supplies its
    generator-side exact handle and anything else falls back to a dense inverse.
    """
    system: PhysicalSystem = problem.system
    c = problem.c
    if handle is None:
        if hasattr(problem, "inverse_handle"):
            handle = problem.inverse_handle()
        else:
            from .ensembles import DenseInverseHandle

            handle = DenseInverseHandle(system.A)
    x0 = handle.inv_apply(system.b)
    adj0 = handle.inv_T_apply(np.asarray(c, dtype=float))
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(adj0))):
        raise NotInDomain("A^{-1} action returned non-finite values (singular A)")
    grad_core = system.apply_BT(x0 * adj0)
    if system.identity_B:
        b_inf = b_1 = b_2 = 1.0
    else:
        B = system.B
        b_inf = float(np.max(np.abs(B).sum(axis=1)))
        b_1 = float(np.max(np.abs(B).sum(axis=0)))
        b_2 = spectral_norm(B)
    return ConditionReport(
        n=system.n,
        inv_norm2=handle.inv_norm2(),
        B_norm_inf=b_inf,
        B_norm_1=b_1,
        B_norm_2=b_2,
        b_inf=float(np.max(np.abs(system.b))),
        b_1=float(np.sum(np.abs(system.b))),
        c_inf=float(np.max(np.abs(c))),
        c_1=float(np.sum(np.abs(c))),
        grad_core_sq=float(grad_core @ grad_core),
        overlap0=float(abs(c @ x0)),
        inv_max=handle.inv_max(),
        adj0_inf=float(np.max(np.abs(adj0))),
    )


@dataclass
class ScalingFit:
    """OLS fit of log(value) on log(n); points are (n, geometric mean, stderr of log)."""

    quantity: str
    points: list
    slope: float
    intercept: float
    r_squared: float
    n_excluded: int = 0


def fit_scaling(points) -> ScalingFit:
    """Fit a single power law through (n, value) pairs; nonpositive values are
    excluded and counted.  A zero-variance response fits slope 0 with the
    documented R^2 = 1 convention.
    """
    pts = list(points)
    kept = [(n, v) for n, v in pts if v > 0 and np.isfinite(v)]
    excluded = len(pts) - len(kept)
    if len({n for n, _ in kept}) < 3:
        raise InsufficientData(
            f"need >= 3 distinct n with positive values, got {len({n for n, _ in kept})}"
        )
    log_n = np.log([n for n, _ in kept])
    log_v = np.log([v for _, v in kept])
    slope, intercept = np.polyfit(log_n, log_v, 1)
    pred = slope * log_n + intercept
    ss_res = float(np.sum((log_v - pred) ** 2))
    ss_tot = float(np.sum((log_v - log_v.mean()) ** 2))
    r_squared = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return ScalingFit(
        quantity="",
        points=[(int(n), float(v), 0.0) for n, v in kept],
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        n_excluded=excluded,
    )


def aggregate_and_fit(quantity: str, per_seed_points) -> ScalingFit:
    """Geometric-mean aggregation per n over seeds, then the power-law fit.

    ``per_seed_points`` is an iterable of (n, value); values <= 0 are excluded
    before averaging and counted in the fit.
    """
    by_n: dict[int, list[float]] = {}
    excluded = 0
    for n, v in per_seed_points:
        if v > 0 and np.isfinite(v):
            by_n.setdefault(int(n), []).append(float(v))
        else:
            excluded += 1
    agg = []
    for n in sorted(by_n):
        logs = np.log(by_n[n])
        stderr = float(logs.std(ddof=1) / np.sqrt(len(logs))) if len(logs) > 1 else 0.0
        agg.append((n, float(np.exp(logs.mean())), stderr))
    fit = fit_scaling([(n, v) for n, v, _ in agg])
    fit.quantity = quantity
    fit.points = agg
    fit.n_excluded += excluded
    return fit


def condition_study(template: EnsembleSpec, ns, seeds: int):
    """ConditionReports over an (n, seed) grid plus the fitted exponents.

    Returns (rows, fits): rows are (n, seed, ConditionReport) sorted by key; fits
    cover inv_norm2, grad_core_sq, overlap0, inv_max, adj0_inf.
    """
    rows = []
    for n in ns:
        for seed_idx in range(seeds):
            spec = EnsembleSpec(
                kind=template.kind,
                n=int(n),
                seed=mix_seed(template.seed, n, seed_idx),
                gamma=template.gamma,
                k=template.k,
            )
            prob = generate_problem(spec)
            report = check_conditions(prob)
            rows.append((int(n), seed_idx, report))
    rows.sort(key=lambda r: (r[0], r[1]))
    fits = [
        aggregate_and_fit(q, [(n, getattr(rep, q)) for n, _, rep in rows])
        for q in REPORT_QUANTITIES
    ]
    return rows, fits


def write_condition_csv(rows, path) -> None:
    fields = [f.name for f in ConditionReport.__dataclass_fields__.values() if f.name != "n"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "seed"] + fields)
        for n, seed_idx, rep in rows:
            d = asdict(rep)
            writer.writerow([n, seed_idx] + [format(d[f], ".17g") for f in fields])


def fits_to_json(fits, path) -> None:
    payload = {
        fit.quantity: {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "n_excluded": fit.n_excluded,
            "points": [
                {"n": n, "value": v, "log_stderr": se} for n, v, se in fit.points
            ],
        }
        for fit in fits
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
