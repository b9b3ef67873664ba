"""Experiment orchestration: convergence scaling studies and resonance audits.

A study runs gradient descent over an (n, seed) grid of ensemble draws with the
rate-rule step size eta = c0 * n^(alpha - 3 gamma - 1), measures steps to reach
a target cost gap, and fits the log-log exponent of the median step count
against n.  Per-run failures are recorded, never raised; a study is marked
failed only when more than half of its runs fail.

The cost target is t = c . A^{-1} b + offset (offset 1 by default): a concrete,
seed-independent shift that makes the initial gap order-one by construction.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conditions import ScalingFit, aggregate_and_fit, check_conditions, fit_scaling
from .core import DesignProblem
from .costs import CostSpec
from .ensembles import EnsembleSpec, generate_problem, mix_seed
from .errors import InvalidConfig
from .solver import (
    STATUS_CONVERGED,
    STATUS_FAILED,
    STATUS_MAX_STEPS,
    GDConfig,
    default_step_size,
    run_gd,
)

DEFAULT_MASTER_SEED = 1234567
MAX_HALVINGS = 6
MONOTONE_WINDOW = 50

RESONANCE_FLAG_EXPONENT = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid, cost moduli, step-size rule, stopping target, and output location."""

    ensemble: str = "gaussian"
    ns: tuple = (32, 64, 128, 256)
    seeds: int = 8
    mu: float = 1.0
    L: float = 1.0
    alpha: float = 0.5
    gamma: float = 0.5
    c0: float = 0.5
    eps: float = 1e-6
    max_steps_cap: int | None = None
    k: int = 2
    master_seed: int = DEFAULT_MASTER_SEED
    out_dir: str | None = None
    threads: int = 1
    target_offset: float = 1.0

    def __post_init__(self):
        ns = tuple(int(n) for n in self.ns)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidConfig(f"ns must be nonempty and strictly increasing, got {self.ns}")
        object.__setattr__(self, "ns", ns)
        if self.eps <= 0.0:
            raise InvalidConfig(f"eps must be > 0, got {self.eps}")
        if self.seeds < 1:
            raise InvalidConfig(f"seeds must be >= 1, got {self.seeds}")
        if self.max_steps_cap is not None and self.max_steps_cap < 1:
            raise InvalidConfig(f"max_steps_cap must be >= 1, got {self.max_steps_cap}")
        if self.ensemble not in ("gaussian", "svd"):
            raise InvalidConfig(f"ensemble must be 'gaussian' or 'svd', got {self.ensemble!r}")

    def step_cap(self, n: int) -> int:
        if self.max_steps_cap is not None:
            return self.max_steps_cap
        return max(1, math.ceil(200.0 * n * math.log(1.0 / self.eps)))


@dataclass
class RunRecord:
    """One (n, seed) gradient-descent run inside a study."""

    n: int
    seed: int
    steps: int
    failed: bool
    capped: bool
    final_gap: float
    eta: float
    halvings: int
    max_x_inf: float
    max_a_inf: float
    max_theta_inf: float
    inv_max: float
    mean_contraction: float
    gap_trace: np.ndarray = field(repr=False, default=None)


@dataclass
class ScalingStudyResult:
    records: list
    median_steps: list  # (n, median over completed runs)
    steps_fit: ScalingFit | None
    condition_fits: list
    failed_fraction: float
    study_failed: bool


def _monotone_violation(traj) -> bool:
    gaps = traj.cost_gap[: MONOTONE_WINDOW + 1]
    if traj.status == STATUS_FAILED and (traj.failed_step or 0) <= MONOTONE_WINDOW:
        return True
    if len(gaps) < 2:
        return False
    slack = 1e-12 * (1.0 + np.abs(gaps[:-1]))
    return bool(np.any(gaps[1:] > gaps[:-1] + slack))


def run_single(cfg: ExperimentConfig, n: int, seed_idx: int) -> RunRecord:
    """Generate the (n, seed) problem, tune c0 by halving if needed, run GD."""
    spec = EnsembleSpec(
        kind=cfg.ensemble,
        n=n,
        seed=mix_seed(cfg.master_seed, n, seed_idx),
        gamma=cfg.gamma if cfg.ensemble == "svd" else None,
        k=min(cfg.k, n),
    )
    prob = generate_problem(spec)
    handle = prob.inverse_handle()
    overlap0 = float(prob.c @ handle.inv_apply(prob.system.b))
    cost = CostSpec(t=overlap0 + cfg.target_offset, mu=cfg.mu, L=cfg.L)
    problem = DesignProblem(system=prob.system, c=prob.c, cost=cost)
    cap = cfg.step_cap(n)

    c0 = cfg.c0
    halvings = 0
    while True:
        eta = default_step_size(n, cfg.alpha, cfg.gamma, c0)
        traj = run_gd(problem, GDConfig(eta=eta, max_steps=cap, eps_stop=cfg.eps))
        if _monotone_violation(traj) and halvings < MAX_HALVINGS:
            c0 *= 0.5
            halvings += 1
            continue
        break

    gaps = traj.cost_gap
    if len(gaps) > 1:
        prev, curr = gaps[:-1], gaps[1:]
        valid = prev > 0
        mean_contraction = float(np.mean(curr[valid] / prev[valid])) if valid.any() else 0.0
    else:
        mean_contraction = 0.0
    return RunRecord(
        n=n,
        seed=seed_idx,
        steps=traj.steps_taken,
        failed=traj.status == STATUS_FAILED,
        capped=traj.status == STATUS_MAX_STEPS,
        final_gap=float(gaps[-1]) if len(gaps) else float("nan"),
        eta=eta,
        halvings=halvings,
        max_x_inf=float(traj.x_inf.max()) if traj.n_rows else 0.0,
        max_a_inf=float(traj.a_inf.max()) if traj.n_rows else 0.0,
        max_theta_inf=float(traj.theta_inf.max()) if traj.n_rows else 0.0,
        inv_max=handle.inv_max(),
        mean_contraction=mean_contraction,
        gap_trace=gaps,
    )


def _run_grid(cfg: ExperimentConfig):
    keys = [(n, s) for n in cfg.ns for s in range(cfg.seeds)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda key: run_single(cfg, *key), keys))
        records = {(r.n, r.seed): r for r in results}
        return [records[key] for key in keys]
    return [run_single(cfg, n, s) for n, s in keys]


def run_convergence_study(cfg: ExperimentConfig) -> ScalingStudyResult:
    """Steps-to-eps over the grid, the fitted exponent of median steps vs n,
    and the condition-module exponents on the same draws."""
    records = _run_grid(cfg)

    median_steps = []
    for n in cfg.ns:
        good = [r.steps for r in records if r.n == n and not r.failed and not r.capped]
        if good:
            median_steps.append((n, float(np.median(good))))
    steps_fit = None
    if len(median_steps) >= 3:
        steps_fit = fit_scaling(median_steps)
        steps_fit.quantity = "median_steps"
        steps_fit.points = [(n, v, 0.0) for n, v in median_steps]

    condition_fits = _condition_fits(cfg)
    n_failed = sum(r.failed for r in records)
    failed_fraction = n_failed / len(records)
    return ScalingStudyResult(
        records=records,
        median_steps=median_steps,
        steps_fit=steps_fit,
        condition_fits=condition_fits,
        failed_fraction=failed_fraction,
        study_failed=failed_fraction > 0.5,
    )


def _condition_fits(cfg: ExperimentConfig):
    from .conditions import REPORT_QUANTITIES

    rows = []
    for n in cfg.ns:
        for seed_idx in range(cfg.seeds):
            spec = EnsembleSpec(
                kind=cfg.ensemble,
                n=n,
                seed=mix_seed(cfg.master_seed, n, seed_idx),
                gamma=cfg.gamma if cfg.ensemble == "svd" else None,
                k=min(cfg.k, n),
            )
            prob = generate_problem(spec)
            rows.append((n, check_conditions(prob)))
    return [
        aggregate_and_fit(q, [(n, getattr(rep, q)) for n, rep in rows])
        for q in REPORT_QUANTITIES
    ]


@dataclass
class ResonanceAudit:
    records: list
    fits: list
    flagged: dict  # quantity -> bool, exponent above the heuristic threshold


def run_resonance_audit(cfg: ExperimentConfig) -> ResonanceAudit:
    """Trajectory sup-norm maxima and ||A^{-1}||_max over the grid, with exponent fits."""
    records = _run_grid(cfg)
    quantities = {
        "max_x_inf": lambda r: r.max_x_inf,
        "max_a_inf": lambda r: r.max_a_inf,
        "max_theta_inf": lambda r: r.max_theta_inf,
        "inv_max": lambda r: r.inv_max,
    }
    fits = []
    flagged = {}
    for name, getter in quantities.items():
        fit = aggregate_and_fit(
            name, [(r.n, getter(r)) for r in records if not r.failed]
        )
        fits.append(fit)
        flagged[name] = fit.slope > RESONANCE_FLAG_EXPONENT
    return ResonanceAudit(records=records, fits=fits, flagged=flagged)


# ---------------------------------------------------------------------------
# Derived measurements


def steps_to_gap(gap_trace: np.ndarray, eps: float):
    """First step index at which the cost gap is <= eps, or None."""
    hits = np.flatnonzero(gap_trace <= eps)
    return int(hits[0]) if hits.size else None


def log_affine_fit(x, y):
    """OLS fit y ~ a + b x; returns (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_squared


def contraction_fit(gap_trace: np.ndarray, window_fraction: float = 0.5):
    """Geometric decay fit of the gap over the leading window.

    Regresses log(gap_t) on t over the first ``window_fraction`` of positive-gap
    steps; returns (ratio, r_squared) with ratio = exp(slope), the fitted
    per-step contraction factor.
    """
    gaps = np.asarray(gap_trace, dtype=float)
    pos = gaps > 0
    upto = max(int(len(gaps) * window_fraction), 3)
    idx = np.flatnonzero(pos[:upto])
    if idx.size < 3:
        raise InvalidConfig("not enough positive-gap steps for a contraction fit")
    slope, _, r2 = log_affine_fit(idx, np.log(gaps[idx]))
    return float(np.exp(slope)), r2


# ---------------------------------------------------------------------------
# Persistence


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_plot_data(result: ScalingStudyResult, out_dir) -> list:
    """Write convergence.csv, fits.json, and plotdata_steps.csv; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    conv = os.path.join(out_dir, "convergence.csv")
    with open(conv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "seed", "steps", "failed", "gap"])
        for r in result.records:
            writer.writerow([r.n, r.seed, r.steps, int(r.failed), _fmt(r.final_gap)])
    paths.append(conv)

    fits = {}
    if result.steps_fit is not None:
        fits["median_steps"] = _fit_payload(result.steps_fit)
    for fit in result.condition_fits:
        fits[fit.quantity] = _fit_payload(fit)
    fits_path = os.path.join(out_dir, "fits.json")
    with open(fits_path, "w") as fh:
        json.dump(fits, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(fits_path)

    plot = os.path.join(out_dir, "plotdata_steps.csv")
    with open(plot, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["log_n", "log_median_steps"])
        for n, med in result.median_steps:
            writer.writerow([_fmt(math.log(n)), _fmt(math.log(med))])
    paths.append(plot)
    return paths


def emit_resonance_data(audit: ResonanceAudit, out_dir) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    res = os.path.join(out_dir, "resonance.csv")
    with open(res, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["n", "seed", "max_x_inf", "max_a_inf", "max_theta_inf", "inv_max", "failed"]
        )
        for r in audit.records:
            writer.writerow(
                [
                    r.n,
                    r.seed,
                    _fmt(r.max_x_inf),
                    _fmt(r.max_a_inf),
                    _fmt(r.max_theta_inf),
                    _fmt(r.inv_max),
                    int(r.failed),
                ]
            )
    paths.append(res)
    fits_path = os.path.join(out_dir, "resonance_fits.json")
    payload = {fit.quantity: _fit_payload(fit) for fit in audit.fits}
    payload["flagged"] = audit.flagged
    with open(fits_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(fits_path)
    return paths


def _fit_payload(fit: ScalingFit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_excluded": fit.n_excluded,
        "points": [{"n": n, "value": v, "log_stderr": se} for n, v, se in fit.points],
    }
