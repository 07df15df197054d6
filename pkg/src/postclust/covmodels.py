"""Structured covariance models, matrix-normal sampling, and Kronecker helpers.

The row scale U and column scale Sigma of the matrix normal MN(mu, U, Sigma)
are described by small CovModel value objects. ``materialize`` turns a model
into a dense SpdMatrix (validated SPD), ``inverse`` returns the closed-form
inverse where one exists and a Cholesky-based inverse otherwise.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite

# Relative eigenvalue floor for the SPD check.
EIG_RATIO_FLOOR = 1e-10

_MASK64 = (1 << 64) - 1


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator (Philox) for a (seed, stream) pair.

    Distinct streams of the same seed are statistically independent, and a
    given pair always yields the same sequence regardless of how many other
    streams are in flight. The harness gives each replicate its own stream.
    """
    key = ((seed & _MASK64) << 64) | (stream & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


class SpdMatrix:
    """Dense symmetric positive definite matrix with a cached Cholesky factor.

    Immutable after construction; the lower factor is computed lazily exactly
    once (lock-protected) and shared between threads.
    """

    __slots__ = ("entries", "dim", "_chol", "_lock")

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise NotPositiveDefinite(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefinite("matrix has non-finite entries")
        if np.max(np.abs(a - a.T)) > 1e-12 * max(1.0, np.max(np.abs(a))):
            raise NotPositiveDefinite("matrix is not symmetric")
        a = (a + a.T) / 2.0
        w = np.linalg.eigvalsh(a)
        if w[-1] <= 0 or w[0] <= EIG_RATIO_FLOOR * w[-1]:
            raise NotPositiveDefinite(
                f"matrix is not positive definite (eigenvalue range [{w[0]:.3e}, {w[-1]:.3e}])"
            )
        a.setflags(write=False)
        self.entries = a
        self.dim = a.shape[0]
        self._chol = None
        self._lock = threading.Lock()

    @property
    def chol(self) -> np.ndarray:
        """Lower-triangular factor L with L L^T = entries."""
        L = self._chol
        if L is None:
            with self._lock:
                if self._chol is None:
                    L = np.linalg.cholesky(self.entries)
                    L.setflags(write=False)
                    self._chol = L
                else:
                    L = self._chol
        return L

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve entries @ x = b through the cached factor."""
        return scipy.linalg.cho_solve((np.asarray(self.chol), True), b)

    def inv_quad_form(self, v: np.ndarray) -> float:
        """v^T entries^{-1} v without forming the inverse."""
        y = scipy.linalg.solve_triangular(np.asarray(self.chol), v, lower=True)
        return float(y @ y)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


@dataclass(frozen=True)
class Identity:
    scale: float = 1.0


@dataclass(frozen=True)
class Diagonal:
    entries: tuple

    def __init__(self, entries: Sequence[float]):
        object.__setattr__(self, "entries", tuple(float(e) for e in entries))


@dataclass(frozen=True)
class CompoundSymmetry:
    a: float
    b: float


@dataclass(frozen=True)
class AR1:
    sigma: float
    rho: float


@dataclass(frozen=True)
class ARP:
    """Stationary AR(P) row process; sigma is the marginal standard deviation."""

    sigma: float
    coeffs: tuple

    def __init__(self, sigma: float, coeffs: Sequence[float]):
        object.__setattr__(self, "sigma", float(sigma))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in coeffs))


@dataclass(frozen=True)
class Toeplitz:
    first_row: tuple

    def __init__(self, first_row: Sequence[float]):
        object.__setattr__(self, "first_row", tuple(float(e) for e in first_row))


@dataclass(frozen=True)
class Dense:
    matrix: SpdMatrix


CovModel = Union[Identity, Diagonal, CompoundSymmetry, AR1, ARP, Toeplitz, Dense]


def _arp_autocorr(coeffs: np.ndarray, nlags: int) -> np.ndarray:
    """Autocorrelations r(0..nlags-1) of a stationary AR(P) via Yule-Walker."""
    P = len(coeffs)
    # Solve the P x P linear system for r(1..P): r(s) = sum_k b_k r(|s-k|).
    A = np.zeros((P, P))
    rhs = np.zeros(P)
    for s in range(1, P + 1):
        for k in range(1, P + 1):
            lag = abs(s - k)
            if lag == 0:
                rhs[s - 1] += coeffs[k - 1]
            else:
                A[s - 1, lag - 1] += coeffs[k - 1]
    r = np.linalg.solve(np.eye(P) - A, rhs)
    out = np.empty(max(nlags, P + 1))
    out[0] = 1.0
    out[1 : P + 1] = r
    for s in range(P + 1, len(out)):
        out[s] = coeffs @ out[s - P : s][::-1]
    return out[:nlags]


def materialize(model: CovModel, dim: int) -> SpdMatrix:
    """Dense SPD matrix of the requested structure and dimension.

    Raises NotPositiveDefinite when the parameters violate the model's
    positive-definiteness constraints (for instance compound symmetry with
    b >= a, or |rho| >= 1 for AR processes).
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if isinstance(model, Identity):
        if model.scale <= 0:
            raise NotPositiveDefinite("identity scale must be positive")
        return SpdMatrix(model.scale * np.eye(dim))
    if isinstance(model, Diagonal):
        d = np.asarray(model.entries, dtype=float)
        if len(d) != dim:
            raise ValueError(f"diagonal has {len(d)} entries, expected {dim}")
        return SpdMatrix(np.diag(d))
    if isinstance(model, CompoundSymmetry):
        if not (model.a > model.b >= 0):
            raise NotPositiveDefinite(
                f"compound symmetry needs a > b >= 0, got a={model.a}, b={model.b}"
            )
        return SpdMatrix(model.b * np.ones((dim, dim)) + (model.a - model.b) * np.eye(dim))
    if isinstance(model, AR1):
        if not abs(model.rho) < 1:
            raise NotPositiveDefinite(f"AR(1) needs |rho| < 1, got {model.rho}")
        if model.sigma <= 0:
            raise NotPositiveDefinite("AR(1) sigma must be positive")
        col = model.sigma**2 * model.rho ** np.arange(dim)
        return SpdMatrix(scipy.linalg.toeplitz(col))
    if isinstance(model, ARP):
        if len(model.coeffs) >= dim:
            raise ValueError("ARP needs coeffs length < dim")
        if model.sigma <= 0:
            raise NotPositiveDefinite("ARP sigma must be positive")
        r = _arp_autocorr(np.asarray(model.coeffs), dim)
        return SpdMatrix(scipy.linalg.toeplitz(model.sigma**2 * r))
    if isinstance(model, Toeplitz):
        row = np.asarray(model.first_row, dtype=float)
        if len(row) != dim:
            raise ValueError(f"first_row has {len(row)} entries, expected {dim}")
        return SpdMatrix(scipy.linalg.toeplitz(row))
    if isinstance(model, Dense):
        if model.matrix.dim != dim:
            raise ValueError(f"dense matrix has dim {model.matrix.dim}, expected {dim}")
        return model.matrix
    raise TypeError(f"not a CovModel: {model!r}")


def inverse(model: CovModel, dim: int) -> SpdMatrix:
    """Inverse of the materialized model; closed form where available.

    Identity/Diagonal invert entrywise, compound symmetry uses the
    Sherman-Morrison rank-one update, AR(1) uses its tridiagonal form.
    ARP/Toeplitz/Dense fall back to a Cholesky solve against the identity.
    """
    if isinstance(model, Identity):
        if model.scale <= 0:
            raise NotPositiveDefinite("identity scale must be positive")
        return SpdMatrix(np.eye(dim) / model.scale)
    if isinstance(model, Diagonal):
        d = np.asarray(model.entries, dtype=float)
        if len(d) != dim:
            raise ValueError(f"diagonal has {len(d)} entries, expected {dim}")
        if np.any(d <= 0):
            raise NotPositiveDefinite("diagonal entries must be positive")
        return SpdMatrix(np.diag(1.0 / d))
    if isinstance(model, CompoundSymmetry):
        a, b = model.a, model.b
        if not (a > b >= 0):
            raise NotPositiveDefinite(
                f"compound symmetry needs a > b >= 0, got a={a}, b={b}"
            )
        diag_part = np.eye(dim) / (a - b)
        ones_part = -b / ((a - b) * (dim * b + a - b)) * np.ones((dim, dim))
        return SpdMatrix(diag_part + ones_part)
    if isinstance(model, AR1):
        if not abs(model.rho) < 1 or model.sigma <= 0:
            raise NotPositiveDefinite("AR(1) needs |rho| < 1 and sigma > 0")
        rho = model.rho
        if dim == 1:
            return SpdMatrix([[1.0 / model.sigma**2]])
        t = np.eye(dim) * (1 + rho**2)
        t[0, 0] = t[-1, -1] = 1.0
        off = -rho * np.ones(dim - 1)
        t += np.diag(off, 1) + np.diag(off, -1)
        return SpdMatrix(t / (model.sigma**2 * (1 - rho**2)))
    # No usable closed form: factor the materialized matrix.
    m = materialize(model, dim)
    inv = m.solve(np.eye(dim))
    return SpdMatrix((inv + inv.T) / 2.0)


@dataclass(frozen=True)
class MatrixNormalSpec:
    """Mean and scale models for X ~ MN(mean, row_cov, col_cov).

    Scale matrices are materialized eagerly so invalid parameters fail at
    construction rather than at sampling time.
    """

    mean: np.ndarray
    row_cov: CovModel
    col_cov: CovModel
    row_spd: SpdMatrix = None
    col_spd: SpdMatrix = None

    def __init__(self, mean, row_cov: CovModel, col_cov: CovModel):
        mu = np.array(mean, dtype=float)
        if mu.ndim != 2:
            raise ValueError("mean must be an n x p matrix")
        mu.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "row_cov", row_cov)
        object.__setattr__(self, "col_cov", col_cov)
        object.__setattr__(self, "row_spd", materialize(row_cov, mu.shape[0]))
        object.__setattr__(self, "col_spd", materialize(col_cov, mu.shape[1]))

    @property
    def shape(self):
        return self.mean.shape

    def transposed(self) -> "MatrixNormalSpec":
        """The law of X^T: MN(mean^T, col_cov, row_cov)."""
        return MatrixNormalSpec(self.mean.T, self.col_cov, self.row_cov)


def sample(spec: MatrixNormalSpec, seed: int, stream: int = 0) -> np.ndarray:
    """One draw X = mean + L_U Z L_Sigma^T with Z iid standard normal.

    Deterministic in (seed, stream): equal arguments give bit-identical
    matrices.
    """
    return sample_with(spec, rng_for(seed, stream))


def sample_with(spec: MatrixNormalSpec, rng: np.random.Generator) -> np.ndarray:
    """Like sample, but drawing from a caller-managed generator.

    Lets a simulation replicate consume data draws, copy draws, and auxiliary
    randomness from one substream.
    """
    n, p = spec.shape
    z = rng.standard_normal((n, p))
    return spec.mean + spec.row_spd.chol @ z @ spec.col_spd.chol.T


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product (thin wrapper so callers stay numpy-agnostic)."""
    return np.kron(np.asarray(a), np.asarray(b))
