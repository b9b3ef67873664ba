"""Bi-affine physical systems: forward/adjoint solves and the adjoint-method gradient.

A physical system is the map ``theta -> (A + diag(B theta))^{-1} b`` on the set of
parameters where the shifted matrix is invertible.  All solves go through one dense
LU factorization with partial pivoting plus a 1-norm reciprocal-condition estimate;
"invertible" means that estimate exceeds ``DOMAIN_TOLERANCE``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_solve

from .costs import CostSpec
from .errors import DimensionMismatch, NotInDomain

# Reciprocal-condition threshold below which a shifted matrix counts as singular.
# Distinguishes genuine singularity from roundoff at the dense sizes we target.
DOMAIN_TOLERANCE = 1e-12

# Dense solver path is only meant for systems up to this size.
MAX_STATE_SIZE = 2048


def _as_vector(v, length, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != length:
        raise DimensionMismatch(f"{name} must be a vector of length {length}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class PhysicalSystem:
    """The tuple (A, B, b): physics matrix, selection matrix, source vector.

    ``B=None`` is the compact representation of the identity selection matrix
    (requires m == n); the diag(B theta) product then skips the multiply.
    """

    A: np.ndarray
    b: np.ndarray
    B: np.ndarray | None = None
    m: int | None = None

    def __post_init__(self):
        A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if n < 1 or n > MAX_STATE_SIZE:
            raise DimensionMismatch(f"state size must be in [1, {MAX_STATE_SIZE}], got {n}")
        b = _as_vector(self.b, n, "b")
        if self.B is None:
            m = n if self.m is None else int(self.m)
            if m != n:
                raise DimensionMismatch("identity selection matrix requires m == n")
            B = None
        else:
            B = np.ascontiguousarray(np.asarray(self.B, dtype=float))
            if B.ndim != 2 or B.shape[0] != n:
                raise DimensionMismatch(f"B must be {n}xm, got shape {B.shape}")
            m = B.shape[1]
            if self.m is not None and int(self.m) != m:
                raise DimensionMismatch(f"declared m={self.m} but B has {m} columns")
            if not np.all(np.isfinite(B)):
                raise DimensionMismatch("B has non-finite entries")
        if not np.all(np.isfinite(A)):
            raise DimensionMismatch("A has non-finite entries")
        if not np.all(np.isfinite(b)):
            raise DimensionMismatch("b has non-finite entries")
        for name, arr in (("A", A), ("b", b), ("B", B)):
            if arr is not None:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def identity_B(self) -> bool:
        return self.B is None

    def apply_B(self, theta: np.ndarray) -> np.ndarray:
        """B @ theta, skipping the multiply for the identity tag."""
        return theta if self.B is None else self.B @ theta

    def apply_BT(self, v: np.ndarray) -> np.ndarray:
        """B.T @ v, skipping the multiply for the identity tag."""
        return v if self.B is None else self.B.T @ v

    def B_matrix(self) -> np.ndarray:
        return np.eye(self.n) if self.B is None else self.B


@dataclass(frozen=True)
class SystemMatrix:
    """K = A + diag(B theta) together with its LU factorization and rcond estimate."""

    K: np.ndarray
    lu: np.ndarray
    piv: np.ndarray
    rcond_estimate: float

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve K x = rhs reusing the cached factorization."""
        return lu_solve((self.lu, self.piv), rhs, check_finite=False)

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        """Solve K^T a = rhs reusing the cached factorization."""
        return lu_solve((self.lu, self.piv), rhs, trans=1, check_finite=False)


@dataclass
class StateVectors:
    """State x = phi(theta), adjoint a, and the overlap c . x (unset fields are None)."""

    x: np.ndarray | None = None
    a: np.ndarray | None = None
    overlap: float | None = None


@dataclass(frozen=True)
class DesignProblem:
    """A physical system plus the overlap vector and scalar cost it is optimized against."""

    system: PhysicalSystem
    c: np.ndarray
    cost: CostSpec

    def __post_init__(self):
        c = _as_vector(self.c, self.system.n, "c")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)


def assemble_system(sys: PhysicalSystem, theta) -> SystemMatrix:
    """Form K = A + diag(B theta), factorize it, and estimate its reciprocal condition.

    Never raises on singular K; the rcond estimate is simply 0 there so that
    callers (domain_check, the solver's FAIL path) can decide.
    """
    theta = _as_vector(theta, sys.m, "theta")
    if not np.all(np.isfinite(theta)):
        raise DimensionMismatch("theta has non-finite entries")
    K = sys.A.copy()
    shift = sys.apply_B(theta)
    K[np.diag_indices_from(K)] += shift
    getrf, gecon = get_lapack_funcs(("getrf", "gecon"), (K,))
    lu, piv, info = getrf(K)
    if info > 0:
        rcond = 0.0
    else:
        anorm = np.linalg.norm(K, 1)
        if anorm == 0.0:
            rcond = 0.0
        else:
            rcond, _ = gecon(lu, anorm, norm="1")
    return SystemMatrix(K=K, lu=lu, piv=np.asarray(piv), rcond_estimate=float(rcond))


def domain_check(sys: PhysicalSystem, theta, tolerance: float = DOMAIN_TOLERANCE):
    """Return (in_domain, rcond) for theta; never raises on singularity."""
    sysmat = assemble_system(sys, theta)
    return sysmat.rcond_estimate > tolerance, sysmat.rcond_estimate


def _require_in_domain(sysmat: SystemMatrix, tolerance: float) -> None:
    if not (sysmat.rcond_estimate > tolerance):
        raise NotInDomain(
            f"A + diag(B theta) is numerically singular (rcond={sysmat.rcond_estimate:.3e})",
            rcond=sysmat.rcond_estimate,
        )


def forward_solve(
    sys: PhysicalSystem,
    theta,
    sysmat: SystemMatrix | None = None,
    tolerance: float = DOMAIN_TOLERANCE,
) -> StateVectors:
    """Solve (A + diag(B theta)) x = b.  Raises NotInDomain outside dom(phi)."""
    if sysmat is None:
        sysmat = assemble_system(sys, theta)
    _require_in_domain(sysmat, tolerance)
    return StateVectors(x=sysmat.solve(sys.b))


def adjoint_solve(
    sys: PhysicalSystem,
    theta,
    c,
    sysmat: SystemMatrix | None = None,
    tolerance: float = DOMAIN_TOLERANCE,
) -> np.ndarray:
    """Solve (A + diag(B theta))^T a = c.  Raises NotInDomain outside dom(phi)."""
    if sysmat is None:
        sysmat = assemble_system(sys, theta)
    _require_in_domain(sysmat, tolerance)
    c = _as_vector(c, sys.n, "c")
    return sysmat.solve_transposed(c)


def solve_state(
    problem: DesignProblem,
    theta,
    sysmat: SystemMatrix | None = None,
    tolerance: float = DOMAIN_TOLERANCE,
) -> StateVectors:
    """Both solves off one factorization; fills x, a and the overlap c . x."""
    sys = problem.system
    if sysmat is None:
        sysmat = assemble_system(sys, theta)
    _require_in_domain(sysmat, tolerance)
    x = sysmat.solve(sys.b)
    a = sysmat.solve_transposed(problem.c)
    return StateVectors(x=x, a=a, overlap=float(problem.c @ x))


def cost_gradient(
    problem: DesignProblem,
    theta,
    sysmat: SystemMatrix | None = None,
    tolerance: float = DOMAIN_TOLERANCE,
):
    """Adjoint-method gradient of theta -> f(c . phi(theta)).

    Returns (g, cost) with g = -f'(c.x) * B^T (x * a); the forward and adjoint
    solves share the factorization in ``sysmat``.
    """
    state = solve_state(problem, theta, sysmat=sysmat, tolerance=tolerance)
    f, fp, _ = problem.cost.evaluate(state.overlap)
    g = -fp * problem.system.apply_BT(state.x * state.a)
    return g, f


def finite_difference_gradient(problem: DesignProblem, theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of theta -> f(c . phi(theta)); oracle for cost_gradient.

    Raises NotInDomain if any perturbed point leaves the domain.
    """
    sys = problem.system
    theta = _as_vector(theta, sys.m, "theta")
    g = np.empty(sys.m)
    for j in range(sys.m):
        step = np.zeros(sys.m)
        step[j] = h
        f_plus = _cost_at(problem, theta + step)
        f_minus = _cost_at(problem, theta - step)
        g[j] = (f_plus - f_minus) / (2.0 * h)
    return g


def _cost_at(problem: DesignProblem, theta) -> float:
    state = forward_solve(problem.system, theta)
    overlap = float(problem.c @ state.x)
    f, _, _ = problem.cost.evaluate(overlap)
    return f
