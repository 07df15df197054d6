"""Selective tests for equality of two cluster means.

The statistic is the Mahalanobis distance between the two selected cluster
means, weighted by V = (nu' U nu) Sigma. Conditional on the clustering event
(and on the nuisance projections), the statistic follows a chi_p law
truncated to the set produced by the truncation module, which gives an exact
p-value for the linear-update HAC linkages and k-means, and an importance
sampled one for complete linkage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg, stats

from . import _replay
from ._chi import log_chi_mass_union
from .clustering import ClusterAssignment, KMeansTrace, cut, hac_fit, kmeans_fit
from .covmodels import CovModel, SpdMatrix, materialize, rng_for
from .errors import (
    ClusteringMismatch,
    DegenerateDirection,
    EmptyGroup,
    EmptyTruncationMass,
    NotPositiveDefinite,
    OverlappingGroups,
    RankDeficient,
    ZeroDenominator,
)
from .truncation import (
    IntervalUnion,
    hac_truncation_set,
    kmeans_truncation_set,
    scale_set,
)

LOG_MASS_FLOOR = math.log(1e-300)


@dataclass(frozen=True)
class HacSpec:
    """Cluster with hierarchical agglomeration, then cut at k."""

    linkage: str
    k: int


@dataclass(frozen=True)
class KMeansSpec:
    """Cluster with seeded Lloyd iterations."""

    k: int
    seed: int
    max_iter: int = 100


MethodSpec = Union[HacSpec, KMeansSpec]


@dataclass(frozen=True)
class Contrast:
    g1: tuple
    g2: tuple
    nu: np.ndarray
    sq_norm: float


@dataclass(frozen=True)
class PValueResult:
    g1: int
    g2: int
    statistic: float
    df: int
    p: float
    method: str  # "exact" or "monte_carlo"
    trunc_set: IntervalUnion
    mc_stderr: Optional[float] = None
    mc_preserved: Optional[int] = None


@dataclass(frozen=True)
class SigmaEstimate:
    matrix: SpdMatrix
    source_n: int
    min_eig: float  # smallest eigenvalue, the near-degeneracy diagnostic


def contrast(g1, g2, n: int) -> Contrast:
    """Signed indicator vector whose product with X' gives the mean difference.

    g1, g2 are 0-based row index collections.
    """
    s1 = tuple(sorted(int(i) for i in g1))
    s2 = tuple(sorted(int(i) for i in g2))
    if not s1 or not s2:
        raise EmptyGroup("both groups must be nonempty")
    if set(s1) & set(s2):
        raise OverlappingGroups(f"groups share rows {sorted(set(s1) & set(s2))}")
    for i in s1 + s2:
        if not 0 <= i < n:
            raise ValueError(f"row index {i} outside 0..{n - 1}")
    nu = np.zeros(n)
    nu[list(s1)] = 1.0 / len(s1)
    nu[list(s2)] = -1.0 / len(s2)
    return Contrast(s1, s2, nu, 1.0 / len(s1) + 1.0 / len(s2))


def _as_spd(obj, dim: int) -> SpdMatrix:
    if isinstance(obj, SigmaEstimate):
        obj = obj.matrix
    if isinstance(obj, SpdMatrix):
        if obj.dim != dim:
            raise ValueError(f"expected a {dim}x{dim} matrix, got {obj.dim}")
        return obj
    if isinstance(obj, np.ndarray):
        return SpdMatrix(obj)
    return materialize(obj, dim)


def v_matrix(u, sigma, c: Contrast) -> SpdMatrix:
    """Covariance of the observed mean difference, V = (nu' U nu) * Sigma.

    Equal to the stacked-Kronecker form D (U_sub x Sigma) D' because the
    contrast acts only on rows.
    """
    n = len(c.nu)
    u_spd = _as_spd(u, n)
    if isinstance(sigma, SpdMatrix):
        sigma_spd = sigma
    else:
        sigma_spd = SpdMatrix(np.asarray(sigma, dtype=float))
    nu_u_nu = float(c.nu @ (u_spd.entries @ c.nu))
    if nu_u_nu <= 0:
        raise NotPositiveDefinite("nu' U nu <= 0; U is not positive definite")
    return SpdMatrix(nu_u_nu * sigma_spd.entries)


def maha_norm(v: np.ndarray, V: SpdMatrix) -> float:
    """sqrt(v' V^-1 v) through the cached Cholesky factor."""
    q = V.inv_quad_form(np.asarray(v, dtype=float))
    return math.sqrt(max(q, 0.0))


def trunc_chi_survival(t: float, df: int, s: IntervalUnion) -> float:
    """P(W >= t | W in s) for W ~ chi_df, in log space throughout."""
    log_den = log_chi_mass_union(df, s.to_pairs())
    if log_den < LOG_MASS_FLOOR:
        raise EmptyTruncationMass(
            f"truncation set carries chi_{df} mass below 1e-300 (log mass {log_den:.1f})"
        )
    upper = s.intersect(IntervalUnion([(t, np.inf)]))
    log_num = log_chi_mass_union(df, upper.to_pairs())
    if log_num == -math.inf:
        return 0.0
    return min(1.0, math.exp(log_num - log_den))


def trunc_chi_cdf(t: float, df: int, s: IntervalUnion, scale: float = 1.0) -> float:
    """P(cW <= t | cW in s) for W ~ chi_df and c = scale."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    base = s.scale(1.0 / scale)
    log_den = log_chi_mass_union(df, base.to_pairs())
    if log_den < LOG_MASS_FLOOR:
        raise EmptyTruncationMass("truncation set carries no chi mass")
    lower = base.intersect(IntervalUnion([(0.0, t / scale)]))
    log_num = log_chi_mass_union(df, lower.to_pairs())
    if log_num == -math.inf:
        return 0.0
    return min(1.0, math.exp(log_num - log_den))


def _run_clustering(x: np.ndarray, method: MethodSpec):
    if isinstance(method, HacSpec):
        dend = hac_fit(x, method.linkage)
        return cut(dend, method.k), None
    if isinstance(method, KMeansSpec):
        assignment, trace = kmeans_fit(x, method.k, method.seed, method.max_iter)
        return assignment, trace
    raise TypeError(f"method must be HacSpec or KMeansSpec, got {type(method)!r}")


@dataclass(frozen=True)
class _Prepared:
    assignment: ClusterAssignment
    trace: Optional[KMeansTrace]
    c: Contrast
    dvec: np.ndarray
    phi_obs: float
    statistic: float
    ratio: float
    df: int


def _prepare(x, method: MethodSpec, g1: int, g2: int, u, sigma) -> _Prepared:
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    assignment, trace = _run_clustering(x, method)
    if g1 == g2 or not (1 <= g1 <= assignment.k) or not (1 <= g2 <= assignment.k):
        raise ClusteringMismatch(
            f"cluster labels must be distinct values in 1..{assignment.k}, got {g1}, {g2}"
        )
    c = contrast(assignment.members(g1), assignment.members(g2), n)
    dvec = x.T @ c.nu
    phi_obs = float(np.linalg.norm(dvec))
    if phi_obs == 0.0:
        raise DegenerateDirection("observed cluster means coincide")
    V = v_matrix(u, _as_spd(sigma, p), c)
    statistic = maha_norm(dvec, V)
    return _Prepared(assignment, trace, c, dvec, phi_obs, statistic,
                     statistic / phi_obs, p)


def p_value(
    x,
    method: MethodSpec,
    g1: int,
    g2: int,
    u,
    sigma,
    *,
    mc_draws: int = 2000,
    mc_seed: int = 0,
) -> PValueResult:
    """Selective p-value for H0: the means of clusters g1 and g2 are equal.

    Exact for k-means and the HAC linkages with linear Lance-Williams
    updates; complete linkage falls back to importance sampling with
    mc_draws draws (override the defaults through mc_draws / mc_seed).
    """
    if isinstance(method, HacSpec) and method.linkage == "complete":
        return p_value_mc(x, method, g1, g2, u, sigma, n_draws=mc_draws, seed=mc_seed)
    x = np.asarray(x, dtype=float)
    prep = _prepare(x, method, g1, g2, u, sigma)
    if isinstance(method, HacSpec):
        s_eucl = hac_truncation_set(
            x, prep.assignment, g1, g2, method.linkage, method.k
        )
    else:
        s_eucl = kmeans_truncation_set(x, prep.trace, g1, g2)
    s_v = scale_set(s_eucl, prep.ratio)
    p = trunc_chi_survival(prep.statistic, prep.df, s_v)
    return PValueResult(
        g1=g1,
        g2=g2,
        statistic=prep.statistic,
        df=prep.df,
        p=p,
        method="exact",
        trunc_set=s_v,
    )


def _mc_chunk_size(n: int) -> int:
    # keep the (chunk, n, n) replay arrays around ~30 MB
    return max(16, int(4.0e6 / (n * n)))


def p_value_mc(
    x,
    method: MethodSpec,
    g1: int,
    g2: int,
    u,
    sigma,
    n_draws: int = 2000,
    seed: int = 0,
) -> PValueResult:
    """Importance-sampled selective p-value, usable with any method.

    Draws omega_i ~ Normal(statistic, 1) on the Mahalanobis scale, replays
    the clustering on the perturbed dataset at each draw, and forms the
    self-normalized ratio estimator with chi_p / Normal weights. Draws are
    generated in fixed-size seeded substreams, so the result does not depend
    on how the replay work is scheduled.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    prep = _prepare(x, method, g1, g2, u, sigma)
    stat = prep.statistic

    chunk = _mc_chunk_size(n)
    p1 = np.outer(prep.c.nu / prep.c.sq_norm, prep.dvec / prep.phi_obs)

    omegas = np.empty(n_draws)
    preserved = np.zeros(n_draws, dtype=bool)
    members1 = prep.assignment.members(g1)
    members2 = prep.assignment.members(g2)
    for start in range(0, n_draws, chunk):
        stop = min(start + chunk, n_draws)
        rng = rng_for(seed, stream=start // chunk)
        w = rng.normal(loc=stat, scale=1.0, size=stop - start)
        omegas[start:stop] = w
        pos = w > 0
        if not np.any(pos):
            continue
        phi_eucl = w[pos] / prep.ratio
        xb = x[None, :, :] + (phi_eucl - prep.phi_obs)[:, None, None] * p1[None, :, :]
        if isinstance(method, HacSpec):
            ok = _replay.batch_hac_pair_preserved(
                xb, method.linkage, method.k, members1, members2
            )
        else:
            ok = _replay.batch_kmeans_trace_match(xb, prep.trace)
        idx = np.nonzero(pos)[0] + start
        preserved[idx] = ok

    logw = np.full(n_draws, -np.inf)
    pos = omegas > 0
    logw[pos] = stats.chi.logpdf(omegas[pos], prep.df) - stats.norm.logpdf(
        omegas[pos], loc=stat, scale=1.0
    )
    finite = logw > -np.inf
    if not np.any(finite & preserved):
        raise ZeroDenominator(
            f"none of the {n_draws} draws preserved the clustering; increase n_draws"
        )
    w = np.zeros(n_draws)
    w[finite] = np.exp(logw[finite] - logw[finite].max())
    den = w * preserved
    num = den * (omegas >= stat)
    den_sum = float(den.sum())
    if den_sum <= 0.0:
        raise ZeroDenominator("importance weights vanished on every preserved draw")
    ratio_hat = float(num.sum()) / den_sum
    resid = num - ratio_hat * den
    stderr = float(np.sqrt(np.sum(resid * resid))) / den_sum
    return PValueResult(
        g1=g1,
        g2=g2,
        statistic=stat,
        df=prep.df,
        p=min(1.0, ratio_hat),
        method="monte_carlo",
        trunc_set=IntervalUnion.full(),
        mc_stderr=stderr,
        mc_preserved=int(preserved.sum()),
    )


def estimate_sigma(y, u) -> SigmaEstimate:
    """Plug-in feature covariance (1/(n-1)) (Y - Ybar)' U^-1 (Y - Ybar).

    y must be an independent copy of the clustered data: estimating from the
    same matrix that produced the clusters voids the selective guarantee.
    That independence is a modeling obligation of the caller; this function
    only sees one matrix. To estimate the row scale U with known Sigma,
    transpose: estimate_sigma(y.T, sigma).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError("y must be a 2-D data matrix")
    n, p = y.shape
    if n <= p:
        raise RankDeficient(f"need n > p rows for a full-rank estimate, got n={n}, p={p}")
    u_spd = _as_spd(u, n)
    centered = y - y.mean(axis=0)
    half = linalg.solve_triangular(u_spd.chol, centered, lower=True)
    s = (half.T @ half) / (n - 1)
    s = 0.5 * (s + s.T)
    eigs = np.linalg.eigvalsh(s)
    if eigs[0] <= 1e-10 * max(eigs[-1], 1e-300):
        raise RankDeficient("centered data is numerically rank deficient")
    return SigmaEstimate(SpdMatrix(s), n, float(eigs[0]))


def holm_adjust(pvalues: Sequence[float]) -> np.ndarray:
    """Step-down Holm adjustment, order-preserving."""
    p = np.asarray(pvalues, dtype=float)
    m = len(p)
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    mult = m - np.arange(m)
    adj = np.minimum(1.0, np.maximum.accumulate(mult * p[order]))
    out = np.empty(m)
    out[order] = adj
    return out
