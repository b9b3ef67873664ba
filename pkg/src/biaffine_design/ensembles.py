"""Random problem families: Gaussian-inverse physics and Haar singular vectors.

Family 1 draws G with iid standard-normal entries and uses A = G^{-1}; G itself
stays attached to the generated problem so every A^{-1}-dependent quantity
(spectral norm, A^{-1} b, A^{-T} c) is computed from G directly instead of
re-inverting A.  Family 2 builds A = R diag(s) Q^T from independent Haar
orthogonal factors and a prescribed singular spectrum, so A^{-1} is applied
exactly as Q diag(1/s) R^T.

Determinism contract: a (kind, n, gamma, k, seed) tuple fully determines the
problem within this implementation.  Substreams are derived by feeding the
integer tuple (master_seed, *indices) to numpy's SeedSequence, whose entropy
mixing is the documented mixing function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PhysicalSystem, assemble_system
from .errors import DimensionMismatch, InfeasibleSpectrum, InvalidSparsity, SingularDraw

DEFAULT_SPARSITY = 2


def substream(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for (master_seed, *indices); the replica mixing function."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, indices)]))


def mix_seed(master_seed: int, *indices: int) -> int:
    """64-bit substream label for (master_seed, *indices), via SeedSequence mixing."""
    seq = np.random.SeedSequence([int(master_seed), *map(int, indices)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class EnsembleSpec:
    """Which family to draw from and at what size/sparsity/seed."""

    kind: str
    n: int
    seed: int
    gamma: float | None = None
    k: int = DEFAULT_SPARSITY

    def __post_init__(self):
        if self.kind not in ("gaussian", "svd"):
            raise ValueError(f"kind must be 'gaussian' or 'svd', got {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise InvalidSparsity(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.kind == "svd":
            if self.gamma is None or self.gamma < 0.5:
                raise ValueError(f"svd ensemble needs gamma >= 1/2, got {self.gamma}")


def sample_sparse_vector(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly k entries equal to +-1 (fair coin), positions uniform without replacement.

    By construction the sup norm is 1 and the 1-norm is k at every n.
    """
    if not 1 <= k <= n:
        raise InvalidSparsity(f"need 1 <= k <= n, got k={k}, n={n}")
    positions = rng.choice(n, size=k, replace=False)
    signs = 2.0 * rng.integers(0, 2, size=k) - 1.0
    v = np.zeros(n)
    v[positions] = signs
    return v


# ---------------------------------------------------------------------------
# Exact A^{-1} handles


class GaussianInverseHandle:
    """A = G^{-1}; the action of A^{-1} is multiplication by G."""

    def __init__(self, G: np.ndarray):
        self.G = G

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        return self.G @ v

    def inv_T_apply(self, v: np.ndarray) -> np.ndarray:
        return self.G.T @ v

    def inv_norm2(self) -> float:
        from .conditions import spectral_norm

        return spectral_norm(self.G)

    def inv_max(self) -> float:
        return float(np.max(np.abs(self.G)))


class SvdInverseHandle:
    """A = R diag(s) Q^T; A^{-1} = Q diag(1/s) R^T applied without inversion."""

    def __init__(self, R: np.ndarray, s: np.ndarray, Q: np.ndarray):
        self.R = R
        self.s = s
        self.Q = Q

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        return self.Q @ ((self.R.T @ v) / self.s)

    def inv_T_apply(self, v: np.ndarray) -> np.ndarray:
        return self.R @ ((self.Q.T @ v) / self.s)

    def inv_norm2(self) -> float:
        return float(np.max(1.0 / self.s))

    def inv_max(self) -> float:
        return float(np.max(np.abs(self.Q @ ((1.0 / self.s)[:, None] * self.R.T))))


class DenseInverseHandle:
    """Fallback for problems without generator-side structure: materialized A^{-1}."""

    def __init__(self, A: np.ndarray):
        self.A_inv = np.linalg.inv(A)

    def inv_apply(self, v: np.ndarray) -> np.ndarray:
        return self.A_inv @ v

    def inv_T_apply(self, v: np.ndarray) -> np.ndarray:
        return self.A_inv.T @ v

    def inv_norm2(self) -> float:
        from .conditions import spectral_norm

        return spectral_norm(self.A_inv)

    def inv_max(self) -> float:
        return float(np.max(np.abs(self.A_inv)))


@dataclass
class GeneratedProblem:
    """System + overlap vector from an ensemble draw, with the exact-inverse handle."""

    system: PhysicalSystem
    c: np.ndarray
    meta: dict
    G: np.ndarray | None = None
    svd_parts: tuple | None = None  # (R, s, Q)

    def inverse_handle(self):
        if self.G is not None:
            return GaussianInverseHandle(self.G)
        if self.svd_parts is not None:
            return SvdInverseHandle(*self.svd_parts)
        return DenseInverseHandle(self.system.A)


def sample_gaussian_problem(spec: EnsembleSpec, rng: np.random.Generator) -> GeneratedProblem:
    """Draw G iid standard normal, set A = G^{-1}, B = identity, sparse b and c.

    Raises SingularDraw when G is numerically singular or the inversion does not
    verify; the caller retries with the next substream (probability negligible).
    """
    if spec.kind != "gaussian":
        raise ValueError(f"spec.kind must be 'gaussian', got {spec.kind!r}")
    n = spec.n
    G = rng.standard_normal((n, n))
    probe = assemble_system(PhysicalSystem(A=G, b=np.zeros(n)), np.zeros(n))
    if not (probe.rcond_estimate > 1e-12):
        raise SingularDraw(f"gaussian draw with rcond={probe.rcond_estimate:.3e}")
    A = probe.solve(np.eye(n))
    if np.max(np.abs(A @ G - np.eye(n))) > 1e-8 * n:
        raise SingularDraw("inverse verification ||A G - I||_max exceeded 1e-8 * n")
    b = sample_sparse_vector(n, spec.k, rng)
    c = sample_sparse_vector(n, spec.k, rng)
    system = PhysicalSystem(A=A, b=b, B=None)
    meta = {"ensemble": "gaussian", "seed": int(spec.seed), "n": n, "k": spec.k}
    return GeneratedProblem(system=system, c=c, meta=meta, G=G)


@dataclass(frozen=True)
class SpectrumProfile:
    """Singular values s > 0 realizing sup-norm ~ n^gamma and 2-norm ~ n for 1/s."""

    s: np.ndarray
    gamma: float

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        n = s.shape[0]
        inv = 1.0 / s
        if np.max(inv) > 1.000001 * n**self.gamma:
            raise InfeasibleSpectrum("||1/s||_inf exceeds n^gamma")
        nrm = float(np.linalg.norm(inv))
        if not 0.5 * n <= nrm <= 2.0 * n:
            raise InfeasibleSpectrum(f"||1/s||_2 = {nrm} outside [{0.5 * n}, {2.0 * n}]")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)


def make_spectrum(n: int, gamma: float, rng: np.random.Generator) -> SpectrumProfile:
    """Two-level inverse-spectrum profile: k entries at n^gamma, the rest filled
    so that ||1/s||_2 = n exactly (small entries clamped to >= 1/n).

    At gamma = 1/2 every entry of 1/s is sqrt(n).
    """
    if gamma < 0.5:
        raise ValueError(f"gamma must be >= 1/2, got {gamma}")
    big = float(n) ** gamma
    k = min(n, math.ceil(n ** (2.0 - 2.0 * gamma)))
    if k >= n:
        inv = np.full(n, math.sqrt(n))
    else:
        residual = float(n) ** 2 - k * big**2
        if residual < 0.0:
            raise InfeasibleSpectrum(
                f"k * n^(2 gamma) = {k * big ** 2} exceeds n^2 = {n ** 2} at n={n}, gamma={gamma}"
            )
        u = max(math.sqrt(residual / (n - k)), 1.0 / n)
        inv = np.full(n, u)
        inv[:k] = big
        rng.shuffle(inv)
    return SpectrumProfile(s=1.0 / inv, gamma=gamma)


def sample_haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """One Haar-distributed orthogonal matrix via sign-fixed QR of a Gaussian."""
    return sample_haar_orthogonal_batch(d, 1, rng)[0]


def sample_haar_orthogonal_batch(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, d, d) stack of independent Haar orthogonal matrices.

    QR of iid standard normals with columns rescaled so the R diagonal is
    positive; that sign fix makes the distribution exactly Haar.
    """
    if d < 1:
        raise DimensionMismatch(f"d must be >= 1, got {d}")
    z = rng.standard_normal((count, d, d))
    q, r = np.linalg.qr(z)
    diag = np.einsum("...ii->...i", r)
    signs = np.sign(diag)
    signs[signs == 0.0] = 1.0  # probability-zero guard
    return q * signs[:, None, :]


def sample_svd_problem(spec: EnsembleSpec, rng: np.random.Generator) -> GeneratedProblem:
    """A = R diag(s) Q^T with independent Haar factors and a prescribed spectrum.

    Draw order (spectrum, R, Q, b, c) is fixed for reproducibility.
    """
    if spec.kind != "svd":
        raise ValueError(f"spec.kind must be 'svd', got {spec.kind!r}")
    n = spec.n
    profile = make_spectrum(n, spec.gamma, rng)
    R = sample_haar_orthogonal(n, rng)
    Q = sample_haar_orthogonal(n, rng)
    A = (R * profile.s) @ Q.T
    b = sample_sparse_vector(n, spec.k, rng)
    c = sample_sparse_vector(n, spec.k, rng)
    system = PhysicalSystem(A=A, b=b, B=None)
    meta = {
        "ensemble": "svd",
        "seed": int(spec.seed),
        "n": n,
        "k": spec.k,
        "gamma": float(spec.gamma),
        "s": profile.s.tolist(),
        "factors_from_seed": True,
    }
    return GeneratedProblem(system=system, c=c, meta=meta, svd_parts=(R, profile.s, Q))


def generate_problem(spec: EnsembleSpec, max_retries: int = 8) -> GeneratedProblem:
    """Draw from spec.seed's substream, retrying singular draws on fresh substreams."""
    for attempt in range(max_retries):
        rng = substream(spec.seed, attempt)
        try:
            if spec.kind == "gaussian":
                return sample_gaussian_problem(spec, rng)
            return sample_svd_problem(spec, rng)
        except SingularDraw:
            continue
    raise SingularDraw(f"{max_retries} singular draws in a row for seed {spec.seed}")
