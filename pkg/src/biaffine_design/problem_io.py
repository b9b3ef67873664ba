"""Problem-file serialization.

Schema: a JSON object {n, m, A, B, b, c, meta} where A is a row-major array (or
absent when the meta block lets the loader rebuild it from the generator seed),
B is "identity" or a row-major array, and meta carries {ensemble, seed, gamma,
...}.  Floats are written in decimal with 17 significant digits, which
round-trips IEEE-754 doubles exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .core import PhysicalSystem
from .ensembles import EnsembleSpec, GeneratedProblem, generate_problem


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _emit(obj, out: list) -> None:
    # tiny JSON writer so float formatting stays at 17 significant digits
    if isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(key) + ":")
            _emit(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(",")
            _emit(value, out)
        out.append("]")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt(obj))
    elif obj is None:
        out.append("null")
    else:
        out.append(json.dumps(obj))


def dumps_problem(problem: GeneratedProblem) -> str:
    """Serialize a generated problem; A is omitted when meta can rebuild it."""
    system = problem.system
    meta = dict(problem.meta)
    payload = {
        "n": system.n,
        "m": system.m,
        "B": "identity" if system.identity_B else [list(row) for row in system.B],
        "b": list(system.b),
        "c": list(problem.c),
        "meta": meta,
    }
    if meta.get("ensemble") != "svd":
        payload["A"] = [list(row) for row in system.A]
    out: list = []
    _emit(payload, out)
    return "".join(out)


def write_problem(problem: GeneratedProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_problem(problem))
        fh.write("\n")


def load_problem(path) -> GeneratedProblem:
    """Load a problem file; regenerates generator-side structure when meta allows.

    For ensemble-generated files the (kind, n, gamma, k, seed) tuple in meta
    deterministically rebuilds the draw, restoring the exact A^{-1} handle; the
    stored b and c are checked against the regenerated ones.
    """
    with open(path) as fh:
        payload = json.load(fh)
    n = int(payload["n"])
    m = int(payload["m"])
    b = np.asarray(payload["b"], dtype=float)
    c = np.asarray(payload["c"], dtype=float)
    meta = payload.get("meta") or {}

    kind = meta.get("ensemble")
    if kind in ("gaussian", "svd") and "seed" in meta:
        spec = EnsembleSpec(
            kind=kind,
            n=n,
            seed=int(meta["seed"]),
            gamma=meta.get("gamma"),
            k=int(meta.get("k", 1 if n == 1 else 2)),
        )
        regenerated = generate_problem(spec)
        if not (
            np.array_equal(regenerated.system.b, b) and np.array_equal(regenerated.c, c)
        ):
            raise ValueError(f"{path}: stored vectors do not match the regenerated draw")
        if "A" in payload and not np.array_equal(
            regenerated.system.A, np.asarray(payload["A"], dtype=float)
        ):
            raise ValueError(f"{path}: stored A does not match the regenerated draw")
        regenerated.meta = meta
        return regenerated

    if "A" not in payload:
        raise ValueError(f"{path}: A is absent but meta cannot rebuild it")
    A = np.asarray(payload["A"], dtype=float)
    B_field = payload.get("B", "identity")
    B = None if B_field == "identity" else np.asarray(B_field, dtype=float)
    system = PhysicalSystem(A=A, b=b, B=B, m=m)
    return GeneratedProblem(system=system, c=c, meta=meta)
