"""Batched clustering replays for importance-sampled p-values.

Monte Carlo needs one bit per draw: does clustering the perturbed dataset
reproduce the selection event? Re-running the scalar fits thousands of times
dominates everything else, so these replays run all draws at once on stacked
(G, n, n) dissimilarity arrays. They deliberately share no merge-order logic
with clustering.hac_fit beyond the Lance-Williams coefficients.
"""
from __future__ import annotations

import numpy as np

from .clustering import KMeansTrace, _lw_update


def _batch_sq_dists(xb: np.ndarray) -> np.ndarray:
    sq = np.einsum("gij,gij->gi", xb, xb)
    d = sq[:, :, None] + sq[:, None, :] - 2.0 * np.einsum(
        "gik,gjk->gij", xb, xb
    )
    np.maximum(d, 0.0, out=d)
    return d


def batch_hac_labels(xb: np.ndarray, linkage: str, k: int) -> np.ndarray:
    """Cluster membership after cutting each stacked fit at k groups.

    Returns (G, n) slot labels; label values are arbitrary but consistent
    within each dataset. Ties are broken by the flat argmin, which is enough
    for preservation checks because ties have probability zero under the
    continuous perturbations fed in here.
    """
    g, n, _ = xb.shape
    m = _batch_sq_dists(xb)
    rng_idx = np.arange(n)
    m[:, rng_idx, rng_idx] = np.inf
    size = np.ones((g, n))
    lab = np.tile(rng_idx, (g, 1))
    gi = np.arange(g)
    for _ in range(n - k):
        flat = m.reshape(g, -1).argmin(axis=1)
        si, sj = np.divmod(flat, n)
        h = m[gi, si, sj]
        d_ar = m[gi, si, :]
        d_br = m[gi, sj, :]
        upd = _lw_update(
            linkage,
            d_ar,
            d_br,
            h[:, None],
            size[gi, si][:, None],
            size[gi, sj][:, None],
            size,
        )
        m[gi, si, :] = upd
        m[gi, :, si] = upd
        m[gi, sj, :] = np.inf
        m[gi, :, sj] = np.inf
        m[gi, si, si] = np.inf
        size[gi, si] += size[gi, sj]
        lab = np.where(lab == sj[:, None], si[:, None], lab)
    return lab


def batch_hac_pair_preserved(
    xb: np.ndarray, linkage: str, k: int, members1, members2
) -> np.ndarray:
    """True where cutting the fit of xb[g] at k yields both member sets exactly."""
    lab = batch_hac_labels(xb, linkage, k)
    out = np.ones(len(xb), dtype=bool)
    for members in (members1, members2):
        members = np.asarray(members)
        ref = lab[:, members[0]]
        out &= (lab[:, members] == ref[:, None]).all(axis=1)
        out &= (lab == ref[:, None]).sum(axis=1) == len(members)
    return out


def batch_kmeans_trace_match(xb: np.ndarray, trace: KMeansTrace) -> np.ndarray:
    """True where Lloyd's algorithm on xb[g] retraces every recorded assignment.

    Centroids are seeded from the recorded initial rows, and each pass is
    compared against the recorded assignment; later passes reuse the recorded
    labels for centroid updates, which is exact for every dataset still
    matching and irrelevant for the rest.
    """
    g, n, _ = xb.shape
    k = trace.k
    cent = xb[:, list(trace.initial_centroid_rows), :]
    match = np.ones(g, dtype=bool)
    sq_x = np.einsum("gnp,gnp->gn", xb, xb)
    for assign in trace.iterations:
        sq_c = np.einsum("gkp,gkp->gk", cent, cent)
        d = sq_x[:, :, None] + sq_c[:, None, :] - 2.0 * np.einsum(
            "gnp,gkp->gnk", xb, cent
        )
        target = assign.labels - 1
        match &= (d.argmin(axis=2) == target).all(axis=1)
        cent = np.stack(
            [xb[:, target == c, :].mean(axis=1) for c in range(k)], axis=1
        )
    return match
