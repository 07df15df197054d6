"""Agglomerative clustering with Lance-Williams linkages and traced k-means.

Dissimilarity is squared Euclidean throughout; no other metric is exposed,
because the downstream truncation algebra depends on it. Merge ties break
toward the lexicographically smallest cluster-id pair so results are
deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .covmodels import rng_for
from .errors import EmptyClusterCollapse, InvalidK, TooFewObservations

LINKAGES = ("single", "complete", "average", "weighted", "ward", "centroid", "median")

# Linkages whose merge heights are nondecreasing (reducible updates).
REDUCIBLE = frozenset({"single", "complete", "average", "weighted", "ward"})


@dataclass(frozen=True)
class Dendrogram:
    """Merge sequence of an agglomerative fit.

    Cluster ids follow the usual convention: observations are 0..n-1 and the
    cluster created by merge t (0-based) gets id n+t. Each merge is
    (left_id, right_id, height) with left_id < right_id.
    """

    merges: Tuple[Tuple[int, int, float], ...]
    n: int

    def heights(self) -> np.ndarray:
        return np.array([h for _, _, h in self.merges])


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # length n, values 1..k, every label present
    k: int

    def __init__(self, labels, k: int):
        lab = np.asarray(labels, dtype=int)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "k", int(k))
        lab.setflags(write=False)

    def members(self, label: int) -> np.ndarray:
        """Row indices belonging to a cluster label."""
        return np.nonzero(self.labels == label)[0]

    def __eq__(self, other):
        return (
            isinstance(other, ClusterAssignment)
            and self.k == other.k
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.k, self.labels.tobytes()))


@dataclass(frozen=True)
class KMeansTrace:
    """Everything the k-means conditioning event needs.

    The event conditions on the initial centroid rows and on every
    intermediate assignment, including the repeated final one.
    """

    initial_centroid_rows: Tuple[int, ...]
    iterations: Tuple[ClusterAssignment, ...]
    seed: int
    converged: bool

    @property
    def k(self) -> int:
        return len(self.initial_centroid_rows)

    @property
    def final(self) -> ClusterAssignment:
        return self.iterations[-1]


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """Full n x n matrix of squared Euclidean distances."""
    sq = np.einsum("ij,ij->i", x, x)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def lw_coeffs(linkage: str, ni, nj, nk):
    """Lance-Williams (alpha_i, alpha_j, beta) for the linear linkages.

    ni, nj are the sizes of the merging clusters, nk the size of the third
    cluster; nk may be an array. gamma is zero for every linkage here.
    """
    if linkage == "average":
        s = ni + nj
        return ni / s, nj / s, 0.0 * nk
    if linkage == "weighted":
        return 0.5, 0.5, 0.0 * nk
    if linkage == "ward":
        s = ni + nj + nk
        return (ni + nk) / s, (nj + nk) / s, -nk / s
    if linkage == "centroid":
        s = ni + nj
        return ni / s, nj / s, -(ni * nj) / s**2 + 0.0 * nk
    if linkage == "median":
        return 0.5, 0.5, -0.25 + 0.0 * nk
    raise ValueError(f"no linear Lance-Williams coefficients for {linkage!r}")


def _lw_update(linkage, d_ar, d_br, d_ab, ni, nj, nk):
    if linkage == "single":
        return np.minimum(d_ar, d_br)
    if linkage == "complete":
        return np.maximum(d_ar, d_br)
    ai, aj, beta = lw_coeffs(linkage, ni, nj, nk)
    return ai * d_ar + aj * d_br + beta * d_ab


def hac_fit(data, linkage: str) -> Dendrogram:
    """Agglomerative fit under squared Euclidean dissimilarity.

    Stored-matrix algorithm with slot reuse: O(n^2) memory, O(n^3) time,
    which is plenty for the sample sizes this package targets.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise TooFewObservations(f"need at least 2 observations, got {n}")

    m = pairwise_sq_dists(x)
    np.fill_diagonal(m, np.inf)
    cid = np.arange(n)  # cluster id currently held by each slot
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []

    for t in range(n - 1):
        flat = int(np.argmin(m))
        si, sj = divmod(flat, n)
        best = m[si, sj]
        # Ties: pick the lexicographically smallest (id, id) pair. The cheap
        # count-only scan keeps the untied path (almost every step on
        # continuous data) free of index materialization.
        if np.count_nonzero(m == best) > 2:
            ties = np.argwhere(m == best)
            pairs = np.sort(cid[ties], axis=1)
            order = np.lexsort((pairs[:, 1], pairs[:, 0]))
            si, sj = ties[order[0]]
        a, b = sorted((int(cid[si]), int(cid[sj])))
        merges.append((a, b, float(best)))

        rest = active.copy()
        rest[si] = rest[sj] = False
        upd = _lw_update(
            linkage, m[si, rest], m[sj, rest], best, size[si], size[sj], size[rest]
        )
        m[si, rest] = upd
        m[rest, si] = upd
        size[si] += size[sj]
        cid[si] = n + t
        active[sj] = False
        m[sj, :] = np.inf
        m[:, sj] = np.inf

    return Dendrogram(merges=tuple(merges), n=n)


def _partition_after(dendrogram: Dendrogram, n_merges: int):
    """Member lists of the clusters present after the first n_merges merges."""
    n = dendrogram.n
    members = {i: [i] for i in range(n)}
    for t in range(n_merges):
        a, b, _ = dendrogram.merges[t]
        members[n + t] = members.pop(a) + members.pop(b)
    return list(members.values())


def cut(dendrogram: Dendrogram, k: int) -> ClusterAssignment:
    """Assignment induced by stopping k-1 merges before the root.

    Labels are 1..k in order of each cluster's smallest member index.
    """
    n = dendrogram.n
    if not 1 <= k <= n:
        raise InvalidK(f"k must be in 1..{n}, got {k}")
    groups = _partition_after(dendrogram, n - k)
    groups.sort(key=min)
    labels = np.empty(n, dtype=int)
    for lbl, g in enumerate(groups, start=1):
        labels[g] = lbl
    return ClusterAssignment(labels, k)


def kmeans_fit(data, k: int, seed: int, max_iter: int = 100):
    """Lloyd's algorithm from k seeded random rows.

    Initial centroids are k distinct rows sampled with the package RNG; the
    trace records those rows and every per-iteration assignment so the exact
    conditioning event can be replayed. Returns (assignment, trace).

    Raises EmptyClusterCollapse if an iteration empties a cluster; callers
    running batches should catch it and discard the replicate.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k must be in 1..{n}, got {k}")

    rows = rng_for(seed).choice(n, size=k, replace=False)
    centroids = x[rows].copy()
    iterations = []
    prev = None
    converged = False
    for _ in range(max_iter):
        d = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d, axis=1)
        counts = np.bincount(assign, minlength=k)
        if np.any(counts == 0):
            raise EmptyClusterCollapse(
                f"cluster emptied at iteration {len(iterations) + 1}"
            )
        iterations.append(ClusterAssignment(assign + 1, k))
        if prev is not None and np.array_equal(assign, prev):
            converged = True
            break
        for c in range(k):
            centroids[c] = x[assign == c].mean(axis=0)
        prev = assign

    trace = KMeansTrace(
        initial_centroid_rows=tuple(int(r) for r in rows),
        iterations=tuple(iterations),
        seed=int(seed),
        converged=converged,
    )
    return iterations[-1], trace
