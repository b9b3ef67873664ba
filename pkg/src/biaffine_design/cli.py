"""Command-line front end.

Subcommands: gen, solve, check, scaling, converge, resonance, weingarten.
Exit codes: 0 success, 2 invalid configuration/arguments, 3 study-level failure
(more than half the runs failed), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import weingarten as wgm
from .conditions import check_conditions, condition_study, fits_to_json, write_condition_csv
from .core import DesignProblem
from .costs import CostSpec
from .ensembles import EnsembleSpec, generate_problem
from .errors import BiaffineError, InvalidConfig
from .experiments import (
    ExperimentConfig,
    emit_plot_data,
    emit_resonance_data,
    run_convergence_study,
    run_resonance_audit,
)
from .problem_io import load_problem, write_problem
from .solver import GDConfig, default_step_size, resonance_summary, run_gd, write_trace_csv

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_STUDY_FAILED = 3
EXIT_IO_ERROR = 4


def _parse_ns(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part)


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(part) for part in text.split(",") if part])


def _parse_cost(text: str) -> CostSpec:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise InvalidConfig(f"--cost expects t,mu,L, got {text!r}")
    return CostSpec(t=parts[0], mu=parts[1], L=parts[2])


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (uint64)")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", default=None, help="JSON config file; overrides flags")

    parser = argparse.ArgumentParser(prog="biaffine-design", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a problem file")
    p.add_argument("--ensemble", choices=["gaussian", "svd"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--k", type=int, default=2)

    p = sub.add_parser("solve", parents=[common], help="run gradient descent on a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--cost", required=True, help="t,mu,L")
    p.add_argument("--eta", type=float, default=None, help="explicit step size")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--c0", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--certificate", action="store_true")
    p.add_argument("--trace", default=None, help="trajectory CSV path")

    p = sub.add_parser("check", parents=[common], help="condition report for a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--handle", choices=["auto", "dense"], default="auto")

    p = sub.add_parser("scaling", parents=[common], help="condition scaling study")
    p.add_argument("--ensemble", choices=["gaussian", "svd"], default="gaussian")
    p.add_argument("--ns", type=_parse_ns, default=(32, 64, 128, 256, 512))
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--k", type=int, default=2)

    for name, help_text in (
        ("converge", "convergence scaling study"),
        ("resonance", "resonance audit"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--ensemble", choices=["gaussian", "svd"], default="gaussian")
        p.add_argument("--ns", type=_parse_ns, default=(32, 64, 128, 256))
        p.add_argument("--seeds", type=int, default=8)
        p.add_argument("--alpha", type=float, default=0.5)
        p.add_argument("--gamma", type=float, default=0.5)
        p.add_argument("--c0", type=float, default=0.5)
        p.add_argument("--eps", type=float, default=1e-6)
        p.add_argument("--mu", type=float, default=1.0)
        p.add_argument("--L", type=float, default=1.0)
        p.add_argument("--cap", type=int, default=None)
        p.add_argument("--k", type=int, default=2)

    p = sub.add_parser("weingarten", parents=[common], help="moment engine reports")
    p.add_argument("--mode", choices=["table", "closed2", "closed4", "mc", "compare"], required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--order", type=int, choices=[2, 4], default=4)
    p.add_argument("--v", type=_parse_vector, default=None)
    p.add_argument("--b", type=_parse_vector, default=None)
    p.add_argument("--c", type=_parse_vector, default=None)
    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        if key == "ns":
            value = tuple(int(x) for x in value)
        setattr(args, key, value)


def _experiment_config(args) -> ExperimentConfig:
    return ExperimentConfig(
        ensemble=args.ensemble,
        ns=args.ns,
        seeds=args.seeds,
        mu=args.mu,
        L=args.L,
        alpha=args.alpha,
        gamma=args.gamma,
        c0=args.c0,
        eps=args.eps,
        max_steps_cap=args.cap,
        k=args.k,
        master_seed=args.seed if args.seed is not None else ExperimentConfig.master_seed,
        out_dir=args.out,
        threads=args.threads,
    )


def _emit_json(payload, out) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = EnsembleSpec(
        kind=args.ensemble,
        n=args.n,
        seed=seed,
        gamma=args.gamma if args.ensemble == "svd" else None,
        k=args.k,
    )
    problem = generate_problem(spec)
    if not args.out:
        raise InvalidConfig("gen requires --out FILE.json")
    write_problem(problem, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    problem_file = load_problem(args.problem)
    cost = _parse_cost(args.cost)
    design = DesignProblem(system=problem_file.system, c=problem_file.c, cost=cost)
    eta = args.eta
    if eta is None:
        eta = default_step_size(design.system.n, args.alpha, args.gamma, args.c0)
    cfg = GDConfig(
        eta=eta, max_steps=args.steps, eps_stop=args.eps, record_certificate=args.certificate
    )
    traj = run_gd(design, cfg)
    if args.trace:
        write_trace_csv(traj, args.trace)
    summary = resonance_summary(traj)
    _emit_json(
        {
            "status": traj.status,
            "failed_step": traj.failed_step,
            "steps": traj.steps_taken,
            "eta": eta,
            "final_cost": float(traj.cost[-1]) if traj.n_rows else None,
            "final_gap": float(traj.cost_gap[-1]) if traj.n_rows else None,
            "max_x_inf": summary.max_x_inf,
            "max_a_inf": summary.max_a_inf,
            "max_theta_inf": summary.max_theta_inf,
            "trace": args.trace,
        },
        args.out,
    )
    return EXIT_OK


def _cmd_check(args) -> int:
    problem = load_problem(args.problem)
    handle = None
    if args.handle == "dense":
        from .ensembles import DenseInverseHandle

        handle = DenseInverseHandle(problem.system.A)
    report = check_conditions(problem, handle)
    _emit_json(asdict(report), args.out)
    return EXIT_OK


def _cmd_scaling(args) -> int:
    template = EnsembleSpec(
        kind=args.ensemble,
        n=max(args.ns),
        seed=args.seed if args.seed is not None else ExperimentConfig.master_seed,
        gamma=args.gamma if args.ensemble == "svd" else None,
        k=args.k,
    )
    rows, fits = condition_study(template, args.ns, args.seeds)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    write_condition_csv(rows, os.path.join(out_dir, "conditions.csv"))
    fits_to_json(fits, os.path.join(out_dir, "fits.json"))
    print(f"wrote {out_dir}/conditions.csv and {out_dir}/fits.json")
    return EXIT_OK


def _cmd_converge(args) -> int:
    cfg = _experiment_config(args)
    result = run_convergence_study(cfg)
    out_dir = cfg.out_dir or "."
    emit_plot_data(result, out_dir)
    payload = {
        "failed_fraction": result.failed_fraction,
        "median_steps": result.median_steps,
        "steps_exponent": result.steps_fit.slope if result.steps_fit else None,
        "out_dir": out_dir,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_STUDY_FAILED if result.study_failed else EXIT_OK


def _cmd_resonance(args) -> int:
    cfg = _experiment_config(args)
    audit = run_resonance_audit(cfg)
    out_dir = cfg.out_dir or "."
    emit_resonance_data(audit, out_dir)
    payload = {
        "exponents": {fit.quantity: fit.slope for fit in audit.fits},
        "flagged": audit.flagged,
        "out_dir": out_dir,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    failed_fraction = sum(r.failed for r in audit.records) / len(audit.records)
    return EXIT_STUDY_FAILED if failed_fraction > 0.5 else EXIT_OK


def _cmd_weingarten(args) -> int:
    d = args.d
    v = args.v if args.v is not None else np.ones(d)
    b = args.b if args.b is not None else np.eye(d)[0]
    c = args.c if args.c is not None else np.eye(d)[0]
    if not (len(v) == len(b) == len(c) == d):
        raise InvalidConfig("--v/--b/--c lengths must equal --d")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)

    if args.mode == "table":
        table = wgm.weingarten_table(args.k, d)
        payload = {
            "k": args.k,
            "d": d,
            "pairings": [list(map(list, p.pairs)) for p in table.pairings],
            "gram": table.gram,
            "wg": table.wg,
        }
        if args.k == 2:
            diag, off = wgm.k2_closed_form_candidate(d)
            payload["printed_candidate"] = {"diagonal": diag, "off_diagonal": off}
            payload["printed_candidate_matches"] = bool(
                abs(table.wg[0, 0] - diag) <= 1e-12 and abs(table.wg[0, 1] - off) <= 1e-12
            )
    elif args.mode == "closed2":
        payload = {"value": wgm.second_moment_closed(v, b, c)}
    elif args.mode == "closed4":
        payload = {
            "pairing_sum": wgm.fourth_moment_pairing_sum(v, b, c),
            "printed": wgm.fourth_moment_printed(v, b, c),
        }
        payload["difference"] = payload["pairing_sum"] - payload["printed"]
    elif args.mode == "mc":
        estimate, stderr = wgm.mc_orthogonal_moment(v, b, c, args.order, args.samples, rng)
        payload = {"order": args.order, "samples": args.samples, "estimate": estimate, "stderr": stderr}
    else:  # compare
        est2, se2 = wgm.mc_orthogonal_moment(v, b, c, 2, args.samples, rng)
        est4, se4 = wgm.mc_orthogonal_moment(v, b, c, 4, args.samples, rng)
        pairing = wgm.fourth_moment_pairing_sum(v, b, c)
        printed = wgm.fourth_moment_printed(v, b, c)
        closed2 = wgm.second_moment_closed(v, b, c)
        payload = {
            "second_moment": {
                "closed": closed2,
                "mc": est2,
                "stderr": se2,
                "within_4se": bool(abs(closed2 - est2) <= 4 * se2),
            },
            "fourth_moment": {
                "pairing_sum": pairing,
                "printed": printed,
                "mc": est4,
                "stderr": se4,
                "pairing_within_4se": bool(abs(pairing - est4) <= 4 * se4),
                "printed_within_4se": bool(abs(printed - est4) <= 4 * se4),
            },
        }
        payload["verdict"] = (
            "pairing_sum" if payload["fourth_moment"]["pairing_within_4se"] else "unresolved"
        )
    _emit_json(payload, args.out)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "check": _cmd_check,
    "scaling": _cmd_scaling,
    "converge": _cmd_converge,
    "resonance": _cmd_resonance,
    "weingarten": _cmd_weingarten,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (ValueError, BiaffineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
