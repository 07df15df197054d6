"""Exact one-dimensional truncation sets for HAC and k-means conditioning.

Everything here works in Euclidean coordinates: the perturbed dataset

    x'(phi) = x + (nu / ||nu||^2) (phi - phi_obs) dir^T,   phi >= 0,

moves the two selected cluster means apart or together along the observed
direction while fixing everything orthogonal to it. Squared distances between
perturbed rows are quadratics in phi, linear Lance-Williams updates keep them
quadratic, and the conditioning event becomes a finite intersection of
quadratic inequalities. The single scalar of covariance dependence enters
afterwards through scale_set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .clustering import (
    ClusterAssignment,
    Dendrogram,
    KMeansTrace,
    cut,
    hac_fit,
    lw_coeffs,
    pairwise_sq_dists,
)
from .errors import (
    ClusteringMismatch,
    DegenerateDirection,
    UnsupportedLinkage,
)

COEFF_SNAP = 1e-12
DISC_SNAP = 1e-12
GAP_TOL = 1e-12

QUADRATIC_LINKAGES = ("single", "average", "weighted", "ward", "centroid", "median")


def _snap(v: float) -> float:
    return 0.0 if abs(v) < COEFF_SNAP else float(v)


@dataclass(frozen=True)
class QuadraticFn:
    """phi -> a phi^2 + b phi + c, with near-zero coefficients snapped to 0."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        object.__setattr__(self, "a", _snap(self.a))
        object.__setattr__(self, "b", _snap(self.b))
        object.__setattr__(self, "c", _snap(self.c))

    def __call__(self, phi):
        return self.a * phi * phi + self.b * phi + self.c


class IntervalUnion:
    """Sorted union of disjoint closed intervals on [0, +inf].

    Endpoints closer than 1e-12 are merged so tangency noise cannot fragment
    a set. Instances are immutable.
    """

    __slots__ = ("_iv",)

    def __init__(self, pairs: Iterable[Sequence[float]] = ()):
        arr = np.asarray([(float(lo), float(hi)) for lo, hi in pairs], dtype=float)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if np.any(np.isnan(arr)):
            raise ValueError("interval endpoints cannot be NaN")
        # Clip to the nonnegative half-line, drop what falls off it.
        arr[:, 0] = np.maximum(arr[:, 0], 0.0)
        arr = arr[arr[:, 1] >= arr[:, 0]]
        if len(arr) > 1:
            arr = arr[np.argsort(arr[:, 0], kind="stable")]
            merged = [arr[0]]
            for lo, hi in arr[1:]:
                if lo <= merged[-1][1] + GAP_TOL:
                    if hi > merged[-1][1]:
                        merged[-1] = np.array([merged[-1][0], hi])
                else:
                    merged.append(np.array([lo, hi]))
            arr = np.asarray(merged)
        arr.setflags(write=False)
        self._iv = arr

    @classmethod
    def empty(cls) -> "IntervalUnion":
        return cls(())

    @classmethod
    def full(cls) -> "IntervalUnion":
        return cls([(0.0, np.inf)])

    @property
    def n_intervals(self) -> int:
        return len(self._iv)

    @property
    def is_empty(self) -> bool:
        return len(self._iv) == 0

    def to_pairs(self) -> List[Tuple[float, float]]:
        return [(float(lo), float(hi)) for lo, hi in self._iv]

    def bounds(self) -> np.ndarray:
        """(m, 2) read-only endpoint array."""
        return self._iv

    def contains(self, t: float, tol: float = 0.0) -> bool:
        if self.is_empty:
            return False
        lo, hi = self._iv[:, 0], self._iv[:, 1]
        return bool(np.any((t >= lo - tol) & (t <= hi + tol)))

    def intersect(self, other: "IntervalUnion") -> "IntervalUnion":
        if self.is_empty or other.is_empty:
            return IntervalUnion.empty()
        out = []
        for lo1, hi1 in self._iv:
            for lo2, hi2 in other._iv:
                lo, hi = max(lo1, lo2), min(hi1, hi2)
                if lo <= hi:
                    out.append((lo, hi))
        return IntervalUnion(out)

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        return IntervalUnion(self.to_pairs() + other.to_pairs())

    def complement(self) -> "IntervalUnion":
        """Closure of [0, inf) minus this set."""
        if self.is_empty:
            return IntervalUnion.full()
        out = []
        prev_hi = 0.0
        for lo, hi in self._iv:
            if lo > prev_hi:
                out.append((prev_hi, lo))
            prev_hi = max(prev_hi, hi)
        if prev_hi < np.inf:
            out.append((prev_hi, np.inf))
        return IntervalUnion(out)

    def scale(self, ratio: float) -> "IntervalUnion":
        if ratio <= 0:
            raise ValueError("scale ratio must be positive")
        return IntervalUnion([(lo * ratio, hi * ratio) for lo, hi in self._iv])

    def measure(self) -> float:
        if self.is_empty:
            return 0.0
        return float(np.sum(self._iv[:, 1] - self._iv[:, 0]))

    def approx_eq(self, other: "IntervalUnion", tol: float = 1e-9) -> bool:
        if self.n_intervals != other.n_intervals:
            return False
        if self.is_empty:
            return True
        a, b = self._iv, other._iv
        both_inf = np.isinf(a) & np.isinf(b)
        return bool(np.all(both_inf | (np.abs(a - b) <= tol)))

    def __eq__(self, other):
        return isinstance(other, IntervalUnion) and np.array_equal(self._iv, other._iv)

    def __hash__(self):
        return hash(self._iv.tobytes())

    def __repr__(self):
        inside = " u ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in self._iv)
        return f"IntervalUnion({inside or 'empty'})"


def _neg_intervals(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Open regions where a phi^2 + b phi + c < 0, batched.

    Returns an (m, 2, 2) array of intervals on the whole real line with NaN
    rows for absent pieces; callers clip to [0, inf). Coefficients within
    1e-12 of zero are snapped, discriminants in [-1e-12, 0] count as tangent
    (no sign change).
    """
    a = np.where(np.abs(a) < COEFF_SNAP, 0.0, a).astype(float)
    b = np.where(np.abs(b) < COEFF_SNAP, 0.0, b).astype(float)
    c = np.where(np.abs(c) < COEFF_SNAP, 0.0, c).astype(float)
    m = len(a)
    out = np.full((m, 2, 2), np.nan)

    quad = a != 0
    lin = (~quad) & (b != 0)
    const = (~quad) & (b == 0)

    # Constant case: negative everywhere or nowhere.
    neg_const = const & (c < 0)
    out[neg_const, 0, 0] = -np.inf
    out[neg_const, 0, 1] = np.inf

    # Linear case: one ray.
    if np.any(lin):
        r = np.empty(m)
        r[lin] = -c[lin] / b[lin]
        up = lin & (b > 0)  # increasing: negative before the root
        dn = lin & (b < 0)
        out[up, 0, 0] = -np.inf
        out[up, 0, 1] = r[up]
        out[dn, 0, 0] = r[dn]
        out[dn, 0, 1] = np.inf

    if np.any(quad):
        disc = np.where(quad, b * b - 4.0 * a * c, 0.0)
        disc = np.where((disc >= -DISC_SNAP) & (disc <= 0.0), 0.0, disc)
        two_roots = quad & (disc > 0.0)
        if np.any(two_roots):
            with np.errstate(invalid="ignore", divide="ignore"):
                sq = np.sqrt(np.where(two_roots, disc, 0.0))
                sgn = np.where(b >= 0, 1.0, -1.0)
                qq = -0.5 * (b + sgn * sq)
                r1 = np.where(two_roots, qq / np.where(a != 0, a, 1.0), 0.0)
                r2 = np.where(two_roots & (qq != 0), c / np.where(qq != 0, qq, 1.0), 0.0)
            lo = np.minimum(r1, r2)
            hi = np.maximum(r1, r2)
            opens_up = two_roots & (a > 0)
            out[opens_up, 0, 0] = lo[opens_up]
            out[opens_up, 0, 1] = hi[opens_up]
            opens_dn = two_roots & (a < 0)
            out[opens_dn, 0, 0] = -np.inf
            out[opens_dn, 0, 1] = lo[opens_dn]
            out[opens_dn, 1, 0] = hi[opens_dn]
            out[opens_dn, 1, 1] = np.inf
        # No real roots: sign of a decides everything.
        all_neg = quad & (disc <= 0.0) & (a < 0)
        out[all_neg, 0, 0] = -np.inf
        out[all_neg, 0, 1] = np.inf

    return out


def _good_set_from_violations(bad: np.ndarray) -> IntervalUnion:
    """[0, inf) minus the union of open violation intervals.

    bad is the (m, 2, 2) output of _neg_intervals; NaN rows are skipped.
    """
    flat = bad.reshape(-1, 2)
    flat = flat[~np.isnan(flat[:, 0])]
    if len(flat) == 0:
        return IntervalUnion.full()
    # Clip to the half-line; drop pieces entirely below 0.
    flat[:, 0] = np.maximum(flat[:, 0], 0.0)
    flat = flat[flat[:, 1] > 0.0]
    flat = flat[flat[:, 1] > flat[:, 0]]
    if len(flat) == 0:
        return IntervalUnion.full()
    order = np.argsort(flat[:, 0], kind="stable")
    lo = flat[order, 0]
    hi = np.maximum.accumulate(flat[order, 1])
    # Merge overlapping or near-touching violations, then complement.
    brk = np.nonzero(lo[1:] > hi[:-1] + GAP_TOL)[0]
    starts = np.concatenate(([0], brk + 1))
    ends = np.concatenate((brk, [len(lo) - 1]))
    merged_lo = lo[starts]
    merged_hi = hi[ends]
    good = []
    prev = 0.0
    for mlo, mhi in zip(merged_lo, merged_hi):
        if mlo > prev:
            good.append((prev, mlo))
        prev = max(prev, mhi)
        if prev == np.inf:
            break
    if prev < np.inf:
        good.append((prev, np.inf))
    return IntervalUnion(good)


def quad_leq_zero(q: QuadraticFn) -> IntervalUnion:
    """{phi >= 0 : q(phi) <= 0} as a closed interval union."""
    bad = _neg_intervals(
        np.array([-q.a]), np.array([-q.b]), np.array([-q.c])
    )  # where -q < 0, i.e. q > 0
    return _good_set_from_violations(bad)


def scale_set(s: IntervalUnion, ratio: float) -> IntervalUnion:
    """Multiply every endpoint by a positive ratio.

    This is the one-scalar bridge between the Euclidean-coordinate set and
    the Mahalanobis-coordinate set: ratio = ||d||_V / ||d||_2.
    """
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    return s.scale(ratio)


def _contrast_pieces(x: np.ndarray, members1, members2):
    """nu vector, its squared norm, observed direction and magnitude."""
    n = x.shape[0]
    nu = np.zeros(n)
    nu[members1] = 1.0 / len(members1)
    nu[members2] = -1.0 / len(members2)
    sq_norm = 1.0 / len(members1) + 1.0 / len(members2)
    dvec = x.T @ nu
    phi_obs = float(np.linalg.norm(dvec))
    if phi_obs == 0.0:
        raise DegenerateDirection("the two cluster means coincide")
    return nu, sq_norm, dvec / phi_obs, phi_obs


def pair_quadratic(x, nu: np.ndarray, dirv: np.ndarray, i: int, j: int) -> QuadraticFn:
    """Squared distance between perturbed rows i and j as a quadratic in phi.

    nu is the contrast vector (not necessarily normalized), dirv the unit
    perturbation direction; phi_obs is recovered from x and nu. Rows with
    nu_i == nu_j give a constant quadratic: the perturbation cancels.
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    sq_norm = float(nu @ nu)
    dvec = x.T @ nu
    phi_obs = float(np.linalg.norm(dvec))
    cij = (nu[i] - nu[j]) / sq_norm
    delta = x[i] - x[j]
    gij = float(np.asarray(dirv) @ delta)
    a = cij * cij
    b = 2.0 * cij * (gij - cij * phi_obs)
    c = float(delta @ delta) - 2.0 * cij * gij * phi_obs + cij * cij * phi_obs * phi_obs
    return QuadraticFn(a, b, c)


def lw_combine(
    linkage: str,
    q_ik: QuadraticFn,
    q_jk: QuadraticFn,
    q_ij: QuadraticFn,
    sizes: Tuple[int, int, int],
) -> QuadraticFn:
    """Lance-Williams update applied coefficientwise to quadratics.

    Valid exactly because the linear linkages combine dissimilarities with
    scalar weights; min/max linkages are excluded.
    """
    if linkage not in ("average", "weighted", "ward", "centroid", "median"):
        raise UnsupportedLinkage(
            f"{linkage!r} has no linear Lance-Williams form; "
            "single/complete use dedicated paths"
        )
    ni, nj, nk = sizes
    ai, aj, beta = lw_coeffs(linkage, ni, nj, nk)
    return QuadraticFn(
        ai * q_ik.a + aj * q_jk.a + beta * q_ij.a,
        ai * q_ik.b + aj * q_jk.b + beta * q_ij.b,
        ai * q_ik.c + aj * q_jk.c + beta * q_ij.c,
    )


def _pair_coeff_matrices(x, nu, sq_norm, dirv, phi_obs):
    """(n, n) coefficient matrices of all pairwise perturbed distances."""
    cd = (nu[:, None] - nu[None, :]) / sq_norm
    g = x @ dirv
    gd = g[:, None] - g[None, :]
    d2 = pairwise_sq_dists(x)
    A = cd * cd
    B = 2.0 * cd * (gd - cd * phi_obs)
    C = d2 - 2.0 * cd * gd * phi_obs + cd * cd * phi_obs * phi_obs
    return A, B, C


def _check_pair_in_cut(dend: Dendrogram, k: int, assignment: ClusterAssignment, g1, g2):
    """The stated clusters must be blocks of cut(dend, k); returns their rows."""
    members1 = set(assignment.members(g1).tolist())
    members2 = set(assignment.members(g2).tolist())
    if not members1 or not members2:
        raise ClusteringMismatch(f"labels {g1}, {g2} not present in the assignment")
    fit_cut = cut(dend, k)
    fit_groups = [set(fit_cut.members(lbl).tolist()) for lbl in range(1, k + 1)]
    if members1 not in fit_groups or members2 not in fit_groups:
        raise ClusteringMismatch(
            "requested clusters are not produced by this clustering of x"
        )
    return np.array(sorted(members1)), np.array(sorted(members2))


def hac_truncation_set(
    x,
    assignment: ClusterAssignment,
    g1: int,
    g2: int,
    linkage: str,
    k: int,
    dendrogram: Dendrogram | None = None,
) -> IntervalUnion:
    """Exact {phi >= 0 : g1 and g2 survive cutting the HAC of x'(phi) at k}.

    Only distances between rows on different sides of the contrast (inside
    g1, inside g2, or outside both) vary with phi, so the event holds iff
    every one of the observed first n-k merges stays the winning merge, which
    reduces to per-step lower bounds on the cross-side cluster
    dissimilarities. Each cross-side dissimilarity is a quadratic in phi
    under a linear Lance-Williams linkage, and its constraint over its whole
    lifetime collapses to a single threshold (the largest merge height it
    ever competed against), so the set is a finite intersection of
    single-quadratic inequalities.

    dendrogram, if given, must be hac_fit(x, linkage); passing it skips the
    internal refit.
    """
    if linkage not in QUADRATIC_LINKAGES:
        raise UnsupportedLinkage(
            f"exact truncation sets exist for {QUADRATIC_LINKAGES}, not {linkage!r}"
        )
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    dend = dendrogram if dendrogram is not None else hac_fit(x, linkage)
    members1, members2 = _check_pair_in_cut(dend, k, assignment, g1, g2)
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, members1, members2)

    side = np.zeros(n, dtype=int)
    side[members1] = 1
    side[members2] = 2

    n_steps = n - k
    heights = dend.heights()[:n_steps]

    if linkage == "single":
        # Cluster dissimilarity is the min over cross point pairs, so every
        # cross-side point pair must clear the largest height in the prefix.
        if n_steps == 0:
            return IntervalUnion.full()
        vmax = float(np.max(heights))
        A, B, C = _pair_coeff_matrices(x, nu, sq_norm, dirv, phi_obs)
        iu, ju = np.triu_indices(n, 1)
        crossed = side[iu] != side[ju]
        bad = _neg_intervals(A[iu, ju][crossed], B[iu, ju][crossed],
                             C[iu, ju][crossed] - vmax)
        return _good_set_from_violations(bad)

    A, B, C = _pair_coeff_matrices(x, nu, sq_norm, dirv, phi_obs)
    Qa, Qb, Qc = A.copy(), B.copy(), C.copy()
    cross = side[:, None] != side[None, :]
    np.fill_diagonal(cross, False)
    vreq = np.full((n, n), -np.inf)
    active = np.ones(n, dtype=bool)
    sizes = np.ones(n)
    sside = side.copy()
    id2slot = {i: i for i in range(n)}

    got_a: list = []
    got_b: list = []
    got_c: list = []
    got_v: list = []

    def harvest(rows_mask, s):
        idx = np.nonzero(rows_mask)[0]
        if len(idx):
            got_a.append(Qa[s, idx])
            got_b.append(Qb[s, idx])
            got_c.append(Qc[s, idx])
            got_v.append(vreq[s, idx])

    for t in range(n_steps):
        a_id, b_id, h = dend.merges[t]
        sa = id2slot.pop(a_id)
        sb = id2slot.pop(b_id)
        assert sside[sa] == sside[sb], "validated cut cannot merge across sides"

        # Every active cross pair competed against this merge.
        np.maximum(vreq, h, out=vreq, where=cross)

        harvest(cross[sa], sa)
        harvest(cross[sb], sb)

        rest = active.copy()
        rest[sa] = rest[sb] = False
        new_cross = rest & (sside != sside[sa])
        if np.any(new_cross):
            ai, aj, beta = lw_coeffs(linkage, sizes[sa], sizes[sb], sizes[new_cross])
            for Q in (Qa, Qb, Qc):
                upd = ai * Q[sa, new_cross] + aj * Q[sb, new_cross]
                if Q is Qc:
                    upd = upd + beta * h
                Q[sa, new_cross] = upd
                Q[new_cross, sa] = upd
        vreq[sa, rest] = -np.inf
        vreq[rest, sa] = -np.inf
        cross[sa, :] = False
        cross[:, sa] = False
        cross[sa, new_cross] = True
        cross[new_cross, sa] = True

        sizes[sa] += sizes[sb]
        active[sb] = False
        cross[sb, :] = False
        cross[:, sb] = False
        id2slot[n + t] = sa

    # Pairs still alive at the cut carry their accumulated thresholds.
    iu, ju = np.triu_indices(n, 1)
    alive = cross[iu, ju] & (vreq[iu, ju] > -np.inf)
    if np.any(alive):
        got_a.append(Qa[iu, ju][alive])
        got_b.append(Qb[iu, ju][alive])
        got_c.append(Qc[iu, ju][alive])
        got_v.append(vreq[iu, ju][alive])

    if not got_a:
        return IntervalUnion.full()
    av = np.concatenate(got_a)
    bv = np.concatenate(got_b)
    cv = np.concatenate(got_c) - np.concatenate(got_v)
    return _good_set_from_violations(_neg_intervals(av, bv, cv))


def kmeans_truncation_set(x, trace: KMeansTrace, g1: int, g2: int) -> IntervalUnion:
    """{phi >= 0 : Lloyd replay of x'(phi) reproduces the recorded trace}.

    Conditions on the initial centroid rows and on every intermediate
    assignment, so each (observation, competing centroid, iteration) triple
    contributes one quadratic nearest-centroid inequality. Centroids are
    affine in phi because they are means of affinely perturbed rows.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    k = trace.k
    final = trace.final
    members1 = final.members(g1)
    members2 = final.members(g2)
    if len(members1) == 0 or len(members2) == 0:
        raise ClusteringMismatch(f"labels {g1}, {g2} not present in the final assignment")
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, members1, members2)

    p1 = np.outer(nu / sq_norm, dirv)
    p0 = x - phi_obs * p1

    coeff_a: list = []
    coeff_b: list = []
    coeff_c: list = []
    m0 = p0[list(trace.initial_centroid_rows)]
    m1 = p1[list(trace.initial_centroid_rows)]
    for step, assign in enumerate(trace.iterations):
        e0 = p0[:, None, :] - m0[None, :, :]
        e1 = p1[:, None, :] - m1[None, :, :]
        qa = np.einsum("ncp,ncp->nc", e1, e1)
        qb = 2.0 * np.einsum("ncp,ncp->nc", e0, e1)
        qc = np.einsum("ncp,ncp->nc", e0, e0)
        own = assign.labels - 1
        rows = np.arange(n)
        # own cluster must win: q_other - q_own >= 0 for every other centroid
        ga = qa - qa[rows, own][:, None]
        gb = qb - qb[rows, own][:, None]
        gc = qc - qc[rows, own][:, None]
        keep = np.ones((n, k), dtype=bool)
        keep[rows, own] = False
        coeff_a.append(ga[keep])
        coeff_b.append(gb[keep])
        coeff_c.append(gc[keep])
        # Centroids for the next pass come from this recorded assignment.
        m0 = np.stack([p0[own == c].mean(axis=0) for c in range(k)])
        m1 = np.stack([p1[own == c].mean(axis=0) for c in range(k)])

    bad = _neg_intervals(
        np.concatenate(coeff_a), np.concatenate(coeff_b), np.concatenate(coeff_c)
    )
    return _good_set_from_violations(bad)
