"""Independent reference implementations used to freeze expected values.

Nothing here imports the package's truncation or replay internals: cluster
dissimilarities come from direct member-set formulas instead of
Lance-Williams recursions, interval masses from mpmath's arbitrary-precision
incomplete gamma or adaptive quadrature, and inverses from dense LAPACK.
"""
from __future__ import annotations

import numpy as np
import mpmath
from scipy import integrate
from scipy import stats


def dense_inverse(mat: np.ndarray) -> np.ndarray:
    return np.linalg.inv(np.asarray(mat, dtype=float))


def kron_4index(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na, ma = a.shape
    nb, mb = b.shape
    out = np.zeros((na * nb, ma * mb))
    for i in range(na):
        for j in range(ma):
            for r in range(nb):
                for s in range(mb):
                    out[i * nb + r, j * mb + s] = a[i, j] * b[r, s]
    return out


def arp_marginal_cov(coeffs, sigma, dim, burn=4000):
    """AR(p) covariance with marginal variance sigma**2, via psi weights.

    Expands X_t = sum_k psi_k e_{t-k}, takes autocorrelations
    gamma_lag / gamma_0 (innovation scale cancels), then multiplies by
    sigma**2.  Independent of the linear-system Yule-Walker route.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    order = len(coeffs)
    psi = np.zeros(burn)
    psi[0] = 1.0
    for k in range(1, burn):
        acc = 0.0
        for j in range(min(order, k)):
            acc += coeffs[j] * psi[k - 1 - j]
        psi[k] = acc
    gamma = np.array(
        [np.sum(psi[: burn - lag] * psi[lag:burn]) for lag in range(dim)]
    )
    gamma = sigma**2 * gamma / gamma[0]
    out = np.empty((dim, dim))
    for i in range(dim):
        for j in range(dim):
            out[i, j] = gamma[abs(i - j)]
    return out


# ---------------------------------------------------------------------------
# truncated chi reference values


def chi_mass_mp(df, lo, hi, dps=60):
    with mpmath.workdps(dps):
        s = mpmath.mpf(df) / 2
        zlo = mpmath.mpf(lo) ** 2 / 2
        if hi == float("inf"):
            zhi = mpmath.inf
        else:
            zhi = mpmath.mpf(hi) ** 2 / 2
        return mpmath.gammainc(s, zlo, zhi, regularized=True)


def trunc_chi_survival_mp(t, df, pairs, dps=60):
    with mpmath.workdps(dps):
        den = mpmath.fsum(chi_mass_mp(df, lo, hi, dps) for lo, hi in pairs)
        num = mpmath.fsum(
            chi_mass_mp(df, max(lo, t), hi, dps) for lo, hi in pairs if hi >= t
        )
        if den == 0:
            raise ZeroDivisionError("no mass")
        return float(num / den)


def trunc_chi_survival_quad(t, df, pairs):
    """Same quantity through scipy adaptive quadrature of the chi density."""
    pdf = stats.chi(df).pdf

    def mass(lo, hi):
        val, _ = integrate.quad(pdf, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=400)
        return val

    den = sum(mass(lo, hi) for lo, hi in pairs)
    num = sum(mass(max(lo, t), hi) for lo, hi in pairs if hi >= t)
    return num / den


def spherical_p_value(x, members1, members2, sigma, eucl_pairs, dps=60):
    """Spherical-model p-value: scaled chi survival over the Euclidean
    truncation set, computed with mpmath only."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    nu = np.zeros(n)
    nu[list(members1)] = 1.0 / len(members1)
    nu[list(members2)] = -1.0 / len(members2)
    sq_norm = 1.0 / len(members1) + 1.0 / len(members2)
    phi_obs = float(np.linalg.norm(x.T @ nu))
    scale = sigma * np.sqrt(sq_norm)
    scaled = [(lo / scale, hi / scale) for lo, hi in eucl_pairs]
    return trunc_chi_survival_mp(phi_obs / scale, p, scaled, dps=dps)


# ---------------------------------------------------------------------------
# scratch agglomerative clustering (no Lance-Williams recursion)


def _member_dissim(x, d2, members_a, members_b, linkage):
    sub = d2[np.ix_(members_a, members_b)]
    if linkage == "average":
        return float(sub.mean())
    if linkage == "single":
        return float(sub.min())
    if linkage == "complete":
        return float(sub.max())
    ca = x[members_a].mean(axis=0)
    cb = x[members_b].mean(axis=0)
    gap = float(((ca - cb) ** 2).sum())
    if linkage == "centroid":
        return gap
    if linkage == "ward":
        na, nb = len(members_a), len(members_b)
        return 2.0 * na * nb / (na + nb) * gap
    raise ValueError(linkage)


def scratch_hac_merges(x, linkage):
    """Merge list [(id_a, id_b, height)] computed from member sets each step.

    weighted and median have no member-set closed form; they use their
    defining recursions on an explicit dict keyed by cluster id, which still
    shares no code with the package's slot-matrix implementation.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    members = {i: [i] for i in range(n)}
    rep = {i: x[i].copy() for i in range(n)}  # median representatives
    dis = {}
    if linkage in ("weighted", "median"):
        for i in range(n):
            for j in range(i + 1, n):
                dis[(i, j)] = float(d2[i, j])

    merges = []
    for t in range(n - 1):
        ids = sorted(members)
        best = None
        for ai, a in enumerate(ids):
            for b in ids[ai + 1 :]:
                if linkage == "weighted":
                    val = dis[(min(a, b), max(a, b))]
                elif linkage == "median":
                    val = float(((rep[a] - rep[b]) ** 2).sum())
                else:
                    val = _member_dissim(x, d2, members[a], members[b], linkage)
                if best is None or val < best[0] - 1e-15 or (
                    abs(val - best[0]) <= 1e-15 and (a, b) < best[1:]
                ):
                    best = (val, a, b)
        val, a, b = best
        new = n + t
        members[new] = members.pop(a) + members.pop(b)
        if linkage == "median":
            rep[new] = 0.5 * (rep.pop(a) + rep.pop(b))
        if linkage == "weighted":
            for c in list(members):
                if c == new:
                    continue
                da = dis.pop((min(a, c), max(a, c)))
                db = dis.pop((min(b, c), max(b, c)))
                dis[(min(new, c), max(new, c))] = 0.5 * (da + db)
            dis.pop((min(a, b), max(a, b)), None)
        merges.append((a, b, val))
    return merges


def scratch_cut_partition(x, linkage, k):
    """Frozen-set partition after cutting the scratch fit at k clusters."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    merges = scratch_hac_merges(x, linkage)
    members = {i: [i] for i in range(n)}
    for t in range(n - k):
        a, b, _ = merges[t]
        members[n + t] = members.pop(a) + members.pop(b)
    return {frozenset(v) for v in members.values()}


# ---------------------------------------------------------------------------
# batched free re-clustering over a perturbation grid: the analytic
# truncation sets must match what actually happens when you re-cluster
# the perturbed data

GRID_LINKAGES = ("average", "single", "ward", "centroid")


def grid_hac_membership(xb, linkage, k, members1, members2):
    """For each dataset in the stack: does free HAC + cut yield both clusters?

    Direct member-set dissimilarities per step; merged clusters keep the
    smaller label, so no merge bookkeeping is shared with the package.
    """
    g, n, _ = xb.shape
    sq = np.einsum("gij,gij->gi", xb, xb)
    d = sq[:, :, None] + sq[:, None, :] - 2.0 * np.einsum("gik,gjk->gij", xb, xb)
    np.maximum(d, 0.0, out=d)
    lab = np.tile(np.arange(n), (g, 1))
    gi = np.arange(g)
    eye = np.eye(n, dtype=bool)

    for _ in range(n - k):
        if linkage == "single":
            dd = np.where(lab[:, :, None] == lab[:, None, :], np.inf, d)
            flat = dd.reshape(g, -1).argmin(axis=1)
            i, j = np.divmod(flat, n)
            la = lab[gi, i]
            lb = lab[gi, j]
        else:
            h = (lab[:, :, None] == np.arange(n)).astype(float)  # (g, pts, slots)
            cnt = h.sum(axis=1)  # (g, slots)
            if linkage == "average":
                cross = h.transpose(0, 2, 1) @ (d @ h)
                denom = cnt[:, :, None] * cnt[:, None, :]
                with np.errstate(invalid="ignore", divide="ignore"):
                    cand = cross / np.where(denom > 0, denom, 1)
            else:
                sums = h.transpose(0, 2, 1) @ xb  # (g, slots, p)
                with np.errstate(invalid="ignore", divide="ignore"):
                    cent = sums / np.where(cnt[:, :, None] > 0, cnt[:, :, None], 1)
                diff = cent[:, :, None, :] - cent[:, None, :, :]
                gap = (diff * diff).sum(-1)
                if linkage == "centroid":
                    cand = gap
                else:  # ward
                    pairn = cnt[:, :, None] * cnt[:, None, :]
                    tot = cnt[:, :, None] + cnt[:, None, :]
                    with np.errstate(invalid="ignore", divide="ignore"):
                        cand = 2.0 * pairn / np.where(tot > 0, tot, 1) * gap
            empty = (cnt[:, :, None] == 0) | (cnt[:, None, :] == 0)
            cand = np.where(empty, np.inf, cand)
            cand[:, eye] = np.inf
            flat = cand.reshape(g, -1).argmin(axis=1)
            la, lb = np.divmod(flat, n)
        lo = np.minimum(la, lb)
        hi = np.maximum(la, lb)
        lab = np.where(lab == hi[:, None], lo[:, None], lab)

    ok = np.ones(g, dtype=bool)
    for members in (members1, members2):
        members = np.asarray(members)
        ref = lab[:, members[0]]
        ok &= (lab[:, members] == ref[:, None]).all(axis=1)
        ok &= (lab == ref[:, None]).sum(axis=1) == len(members)
    return ok


def grid_kmeans_trace_match(xb, initial_rows, assignments):
    """Plain-broadcasting Lloyd replay against recorded assignments."""
    g, n, p = xb.shape
    k = len(initial_rows)
    cent = xb[:, list(initial_rows), :].copy()
    ok = np.ones(g, dtype=bool)
    for labels in assignments:
        target = np.asarray(getattr(labels, "labels", labels)) - 1
        dist = ((xb[:, :, None, :] - cent[:, None, :, :]) ** 2).sum(-1)
        ok &= (dist.argmin(axis=2) == target).all(axis=1)
        for c in range(k):
            cent[:, c, :] = xb[:, target == c, :].mean(axis=1)
    return ok
