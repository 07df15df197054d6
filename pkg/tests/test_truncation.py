import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postclust import (
    IntervalUnion,
    QuadraticFn,
    cut,
    hac_fit,
    hac_truncation_set,
    kmeans_fit,
    kmeans_truncation_set,
    lw_combine,
    pair_quadratic,
    quad_leq_zero,
    scale_set,
)
from postclust.clustering import lw_coeffs
from postclust.errors import (
    ClusteringMismatch,
    DegenerateDirection,
    UnsupportedLinkage,
)
from postclust.truncation import _contrast_pieces

from _oracles import grid_hac_membership, grid_kmeans_trace_match

coef = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


# ---------------------------------------------------------------------------
# IntervalUnion


def test_interval_union_basic():
    s = IntervalUnion([(1.0, 2.0), (4.0, 5.0)])
    assert s.n_intervals == 2
    assert s.to_pairs() == [(1.0, 2.0), (4.0, 5.0)]
    assert s.contains(1.5)
    assert s.contains(2.0)
    assert not s.contains(3.0)
    assert s.contains(3.0, tol=1.0)
    np.testing.assert_allclose(s.measure(), 2.0)


def test_interval_union_normalizes():
    # unsorted input, negative lows clipped, overlapping runs merged
    s = IntervalUnion([(4.0, 6.0), (-2.0, 1.0), (0.5, 2.0), (5.0, 5.5)])
    assert s.to_pairs() == [(0.0, 2.0), (4.0, 6.0)]
    # gap below tolerance merges
    t = IntervalUnion([(0.0, 1.0), (1.0 + 1e-13, 2.0)])
    assert t.n_intervals == 1


def test_interval_union_empty_and_full():
    assert IntervalUnion.empty().is_empty
    assert IntervalUnion([(3.0, 2.0)]).is_empty
    full = IntervalUnion.full()
    assert full.to_pairs() == [(0.0, np.inf)]
    assert full.contains(1e308)
    assert IntervalUnion.empty().complement() == full


def test_interval_union_algebra():
    a = IntervalUnion([(0.0, 2.0), (5.0, np.inf)])
    b = IntervalUnion([(1.0, 6.0)])
    assert a.intersect(b).to_pairs() == [(1.0, 2.0), (5.0, 6.0)]
    assert a.union(b).to_pairs() == [(0.0, np.inf)]
    assert a.complement().to_pairs() == [(2.0, 5.0)]
    assert a.complement().complement() == a


def test_interval_union_scale():
    s = IntervalUnion([(1.0, 2.0), (4.0, np.inf)])
    assert s.scale(2.0).to_pairs() == [(2.0, 4.0), (8.0, np.inf)]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=10), st.floats(min_value=0, max_value=10)
        ),
        max_size=5,
    ),
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=10), st.floats(min_value=0, max_value=10)
        ),
        max_size=5,
    ),
)
def test_interval_algebra_against_pointwise(pa, pb):
    a = IntervalUnion([(lo, hi) for lo, hi in pa])
    b = IntervalUnion([(lo, hi) for lo, hi in pb])
    probes = np.linspace(0.05, 10.5, 97)
    for t in probes:
        ina, inb = a.contains(t), b.contains(t)
        assert a.intersect(b).contains(t) == (ina and inb)
        assert a.union(b).contains(t) == (ina or inb)
    # complement checked away from boundary points (closed vs open edges)
    edges = {e for lo, hi in a.to_pairs() for e in (lo, hi)}
    for t in probes:
        if min((abs(t - e) for e in edges), default=1.0) > 1e-6:
            assert a.complement().contains(t) == (not a.contains(t))


# ---------------------------------------------------------------------------
# quadratics


def test_quadratic_snaps_tiny_coefficients():
    q = QuadraticFn(1e-13, 1.0, -1e-14)
    assert q.a == 0.0 and q.c == 0.0 and q.b == 1.0


def test_quad_leq_zero_cases():
    # upward parabola with roots 1, 3
    assert quad_leq_zero(QuadraticFn(1.0, -4.0, 3.0)).to_pairs() == [(1.0, 3.0)]
    # downward parabola, roots 1, 3: complement within [0, inf)
    s = quad_leq_zero(QuadraticFn(-1.0, 4.0, -3.0))
    assert s.to_pairs() == [(0.0, 1.0), (3.0, np.inf)]
    # no real roots, positive: empty; negative: everything
    assert quad_leq_zero(QuadraticFn(1.0, 0.0, 1.0)).is_empty
    assert quad_leq_zero(QuadraticFn(-1.0, 0.0, -1.0)) == IntervalUnion.full()
    # linear
    assert quad_leq_zero(QuadraticFn(0.0, 1.0, -2.0)).to_pairs() == [(0.0, 2.0)]
    assert quad_leq_zero(QuadraticFn(0.0, -1.0, 2.0)).to_pairs() == [(2.0, np.inf)]
    # constant
    assert quad_leq_zero(QuadraticFn(0.0, 0.0, -1.0)) == IntervalUnion.full()
    assert quad_leq_zero(QuadraticFn(0.0, 0.0, 1.0)).is_empty


def test_quad_leq_zero_tangency():
    # (phi - 2)^2 <= 0 only at the tangent point; the isolated point carries
    # no measure and is dropped rather than kept as a degenerate interval
    s = quad_leq_zero(QuadraticFn(1.0, -4.0, 4.0))
    assert s.is_empty
    # nudging the parabola down gives a genuine short interval around 2
    s2 = quad_leq_zero(QuadraticFn(1.0, -4.0, 4.0 - 1e-6))
    assert s2.n_intervals == 1
    assert s2.contains(2.0)


@settings(max_examples=200, deadline=None)
@given(a=coef, b=coef, c=coef)
def test_quad_leq_zero_membership_property(a, b, c):
    q = QuadraticFn(a, b, c)
    s = quad_leq_zero(q)
    for t in np.linspace(0.0, 8.0, 41):
        val = q.a * t * t + q.b * t + q.c
        if val < -1e-7:
            assert s.contains(t, tol=1e-9)
        elif val > 1e-7:
            assert not s.contains(t, tol=0.0)


def test_scale_set():
    s = IntervalUnion([(1.0, 4.0)])
    assert scale_set(s, 0.5).to_pairs() == [(0.5, 2.0)]
    with pytest.raises(ValueError):
        scale_set(s, -1.0)
    with pytest.raises(ValueError):
        scale_set(s, 0.0)


# ---------------------------------------------------------------------------
# perturbation-line quadratics


def test_contrast_pieces_two_singletons():
    x = np.array([[0.0], [2.0]])
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, [0], [1])
    np.testing.assert_allclose(nu, [1.0, -1.0])
    assert sq_norm == 2.0
    np.testing.assert_allclose(phi_obs, 2.0)
    np.testing.assert_allclose(dirv, [-1.0])


def test_contrast_pieces_degenerate():
    x = np.array([[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(DegenerateDirection):
        _contrast_pieces(x, [0], [1])


def test_pair_quadratic_hand_case():
    x = np.array([[0.0], [2.0]])
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, [0], [1])
    q = pair_quadratic(x, nu, dirv, 0, 1)
    # perturbed points are +-phi/2, so the gap is phi^2
    np.testing.assert_allclose([q.a, q.b, q.c], [1.0, 0.0, 0.0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**6))
def test_pair_quadratic_matches_observed_at_phi_obs(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((6, 3))
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, [0, 2], [4, 5])
    for i, j in ((0, 1), (2, 4), (3, 5), (0, 5)):
        q = pair_quadratic(x, nu, dirv, i, j)
        val = q.a * phi_obs**2 + q.b * phi_obs + q.c
        np.testing.assert_allclose(val, ((x[i] - x[j]) ** 2).sum(), atol=1e-9)


def test_pair_quadratic_perturbed_line_identity():
    rng = np.random.default_rng(33)
    x = rng.standard_normal((5, 2))
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, [0, 1], [3])
    p1 = np.outer(nu / sq_norm, dirv)
    for phi in (0.0, 0.7, phi_obs, 3.1):
        xp = x + (phi - phi_obs) * p1
        for i, j in ((0, 3), (1, 4), (2, 3)):
            q = pair_quadratic(x, nu, dirv, i, j)
            np.testing.assert_allclose(
                q.a * phi * phi + q.b * phi + q.c,
                ((xp[i] - xp[j]) ** 2).sum(),
                atol=1e-9,
            )


def test_lw_combine_coefficientwise():
    qik = QuadraticFn(1.0, 2.0, 3.0)
    qjk = QuadraticFn(0.5, -1.0, 2.0)
    qij = QuadraticFn(0.25, 0.0, 1.0)
    for linkage in ("average", "weighted", "ward", "centroid", "median"):
        ai, aj, beta = lw_coeffs(linkage, 2, 3, 4)
        got = lw_combine(linkage, qik, qjk, qij, (2, 3, 4))
        np.testing.assert_allclose(
            [got.a, got.b, got.c],
            [
                ai * qik.a + aj * qjk.a + beta * qij.a,
                ai * qik.b + aj * qjk.b + beta * qij.b,
                ai * qik.c + aj * qjk.c + beta * qij.c,
            ],
        )


def test_lw_combine_singleton_examples():
    qik = QuadraticFn(1.0, 0.0, 1.0)
    qjk = QuadraticFn(0.0, 1.0, 3.0)
    qij = QuadraticFn(1.0, 1.0, 1.0)
    avg = lw_combine("average", qik, qjk, qij, (1, 1, 1))
    np.testing.assert_allclose([avg.a, avg.b, avg.c], [0.5, 0.5, 2.0])
    cen = lw_combine("centroid", qik, qjk, qij, (1, 1, 1))
    np.testing.assert_allclose([cen.a, cen.b, cen.c], [0.25, 0.25, 1.75])


def test_lw_combine_rejects_min_max_linkages():
    q = QuadraticFn(1.0, 0.0, 0.0)
    for linkage in ("single", "complete"):
        with pytest.raises(UnsupportedLinkage):
            lw_combine(linkage, q, q, q, (1, 1, 1))


# ---------------------------------------------------------------------------
# truncation sets


def _three_point_setup(linkage):
    x = np.array([[0.0], [2.0], [10.0]])
    dend = hac_fit(x, linkage)
    return x, cut(dend, 2), dend


@pytest.mark.parametrize("linkage", ["average", "single", "ward", "centroid"])
def test_hac_three_point_set(linkage):
    # hand derivation: perturbed gaps are (phi+1)^2 and (phi-1)^2 against the
    # fixed first-merge height 4, giving phi >= 3 for every linkage here
    x, assignment, dend = _three_point_setup(linkage)
    s = hac_truncation_set(x, assignment, 1, 2, linkage, 2, dendrogram=dend)
    assert s.n_intervals == 1
    lo, hi = s.to_pairs()[0]
    np.testing.assert_allclose(lo, 3.0, atol=1e-9)
    assert hi == np.inf


def test_hac_set_accepts_precomputed_dendrogram():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((10, 2))
    dend = hac_fit(x, "average")
    assignment = cut(dend, 3)
    a = hac_truncation_set(x, assignment, 1, 2, "average", 3)
    b = hac_truncation_set(x, assignment, 1, 2, "average", 3, dendrogram=dend)
    assert a == b


def test_hac_set_mismatched_assignment_raises():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((8, 2))
    dend = hac_fit(x, "average")
    assignment = cut(dend, 3)
    # permute labels so g1/g2 no longer match clusters of the fitted tree
    from postclust import ClusterAssignment

    fake = ClusterAssignment(labels=np.roll(assignment.labels, 1), k=3)
    with pytest.raises(ClusteringMismatch):
        hac_truncation_set(x, fake, 1, 2, "average", 3)


@pytest.mark.parametrize(
    "linkage", ["average", "single", "ward", "centroid", "median", "weighted"]
)
def test_hac_set_contains_phi_obs(linkage):
    for seed in range(6):
        rng = np.random.default_rng(100 + seed)
        x = rng.standard_normal((12, 3))
        dend = hac_fit(x, linkage)
        assignment = cut(dend, 3)
        _, _, _, phi_obs = _contrast_pieces(
            x, assignment.members(1), assignment.members(2)
        )
        s = hac_truncation_set(x, assignment, 1, 2, linkage, 3, dendrogram=dend)
        assert s.contains(phi_obs, tol=1e-8), (linkage, seed)


@pytest.mark.parametrize("linkage", ["average", "ward", "single"])
def test_hac_set_matches_grid_replay(linkage):
    # probe the perturbation line: clustering preserved exactly on the set
    rng = np.random.default_rng(77)
    x = rng.standard_normal((7, 2))
    dend = hac_fit(x, linkage)
    assignment = cut(dend, 2)
    m1, m2 = assignment.members(1), assignment.members(2)
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, m1, m2)
    s = hac_truncation_set(x, assignment, 1, 2, linkage, 2, dendrogram=dend)
    phis = np.linspace(0.0, 4.0 * phi_obs, 801)
    p1 = np.outer(nu / sq_norm, dirv)
    xb = x[None, :, :] + (phis - phi_obs)[:, None, None] * p1[None, :, :]
    ok = grid_hac_membership(xb, linkage, 2, m1, m2)
    inside = np.array([s.contains(t) for t in phis])
    edge = np.array(
        [min((abs(t - e) for p_ in s.to_pairs() for e in p_), default=np.inf) for t in phis]
    )
    disagree = (ok != inside) & (edge > 1e-6)
    assert not disagree.any(), phis[disagree][:5]


def test_kmeans_three_point_set():
    # same geometry as the HAC case; seed 0 starts from rows 0 and 2
    x = np.array([[0.0], [2.0], [10.0]])
    assignment, trace = kmeans_fit(x, 2, seed=0)
    np.testing.assert_array_equal(assignment.labels, [1, 1, 2])
    s = kmeans_truncation_set(x, trace, 1, 2)
    assert s.n_intervals == 1
    lo, hi = s.to_pairs()[0]
    np.testing.assert_allclose(lo, 3.0, atol=1e-9)
    assert hi == np.inf


def test_kmeans_set_contains_phi_obs():
    for seed in range(8):
        rng = np.random.default_rng(200 + seed)
        x = rng.standard_normal((15, 3))
        try:
            assignment, trace = kmeans_fit(x, 3, seed=seed)
        except Exception:
            continue
        _, _, _, phi_obs = _contrast_pieces(
            x, assignment.members(1), assignment.members(2)
        )
        s = kmeans_truncation_set(x, trace, 1, 2)
        assert s.contains(phi_obs, tol=1e-8), seed


def test_kmeans_set_matches_grid_replay():
    rng = np.random.default_rng(55)
    x = rng.standard_normal((8, 2)) + np.array([[0.0, 0.0]] * 4 + [[4.0, 0.0]] * 4)
    assignment, trace = kmeans_fit(x, 2, seed=1)
    g1, g2 = 1, 2
    m1, m2 = assignment.members(g1), assignment.members(g2)
    nu, sq_norm, dirv, phi_obs = _contrast_pieces(x, m1, m2)
    s = kmeans_truncation_set(x, trace, g1, g2)
    phis = np.linspace(0.0, 4.0 * phi_obs, 801)
    p1 = np.outer(nu / sq_norm, dirv)
    xb = x[None, :, :] + (phis - phi_obs)[:, None, None] * p1[None, :, :]
    ok = grid_kmeans_trace_match(xb, trace.initial_centroid_rows, trace.iterations)
    inside = np.array([s.contains(t) for t in phis])
    edge = np.array(
        [min((abs(t - e) for p_ in s.to_pairs() for e in p_), default=np.inf) for t in phis]
    )
    disagree = (ok != inside) & (edge > 1e-6)
    assert not disagree.any(), phis[disagree][:5]
