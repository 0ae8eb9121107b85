import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from vep import geometry as geo

from _oracles import grid_min_distance, sampled_min_norm

ORTHANT2 = geo.Box([0.0, 0.0], [np.inf, np.inf])


# ---------------------------------------------------------------------------
# projections and distances
# ---------------------------------------------------------------------------

def test_project_orthant_clamps():
    assert np.allclose(geo.project([2.0, -1.0], geo.orthant(2)), [2.0, 0.0])


def test_project_box_interior_identity():
    assert geo.project([0.5], geo.Box([-2.0], [2.0]))[0] == 0.5


def test_project_orthant_against_grid_oracle():
    # oracle value frozen from grid minimization of the norm over the orthant
    q = geo.project([-0.3, 0.4], geo.orthant(2))
    assert np.allclose(q, [0.0, 0.4], atol=1e-12)
    assert geo.dist([-0.3, 0.4], geo.orthant(2)) == pytest.approx(0.3, abs=1e-12)
    oracle = grid_min_distance(
        [-0.3, 0.4], lambda p: bool(np.all(p >= 0)), [-1, -1], [2, 2], res=301
    )
    assert abs(oracle - 0.3) <= 2 * (3.0 / 300)


def test_project_polytope_variational_inequality():
    rng = np.random.default_rng(3)
    V = rng.uniform(-1, 1, size=(6, 2))
    S = geo.Polytope(V)
    for _ in range(20):
        x = rng.uniform(-2, 2, 2)
        s = geo.project(x, S)
        assert all((x - s) @ (v - s) <= 1e-8 for v in V)


def test_project_halfspaces_matches_polytope():
    # unit square in both representations
    H = geo.Halfspaces([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1])
    V = geo.Polytope([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    rng = np.random.default_rng(5)
    for _ in range(25):
        x = rng.uniform(-3, 3, 2)
        assert np.allclose(geo.project(x, H), geo.project(x, V), atol=1e-7)


def test_infeasible_halfspaces():
    H = geo.Halfspaces([[1.0], [-1.0]], [-2.0, -2.0])  # y <= -2 and y >= 2
    with pytest.raises(geo.GeometryError, match="infeasible"):
        geo.project([0.0], H)
    assert geo.dist([0.0], H) == np.inf


def test_dist_examples():
    assert geo.dist([1.0, 0.0], geo.orthant(2)) == 0.0
    assert geo.dist([-2.0, 1.0], geo.orthant(2)) == pytest.approx(2.0, abs=1e-12)
    assert geo.dist([0.0], geo.empty_set(1)) == np.inf


def test_excess_examples():
    assert geo.excess([[-1.0, 0.0], [0.0, -3.0]], geo.orthant(2)) == pytest.approx(3.0)
    assert geo.excess(np.zeros((0, 2)), geo.orthant(2)) == 0.0


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
@settings(max_examples=80, deadline=None)
def test_projection_firmness(a, b):
    S = geo.Box([-1.0, 0.5], [2.0, 3.0])
    pa, pb = geo.project(a, S), geo.project(b, S)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(np.subtract(a, b)) + 1e-9


def test_dist_matches_grid_oracle_on_random_sets():
    rng = np.random.default_rng(11)
    for _ in range(5):
        lo = rng.uniform(-2, 0, 2)
        hi = lo + rng.uniform(0.5, 2, 2)
        S = geo.Box(lo, hi)
        x = rng.uniform(-3, 3, 2)
        oracle = grid_min_distance(x, lambda p: S.contains(p), lo, hi, res=201)
        step = float(np.max((hi - lo) / 200))
        assert abs(geo.dist(x, S) - oracle) <= 2 * step
    for _ in range(3):
        V = rng.uniform(-1.5, 1.5, size=(5, 2))
        S = geo.Polytope(V)
        x = rng.uniform(-3, 3, 2)
        bl, bh = V.min(axis=0), V.max(axis=0)
        oracle = grid_min_distance(
            x, lambda p: geo.dist(p, S) <= 2e-2, bl - 0.1, bh + 0.1, res=161
        )
        step = float(np.max((bh - bl + 0.2) / 160))
        assert abs(geo.dist(x, S) - oracle) <= 2 * step + 2e-2


# ---------------------------------------------------------------------------
# normal cones
# ---------------------------------------------------------------------------

def test_normal_cone_halfline_at_origin():
    rn = geo.normal_cone(geo.Box([0.0], [np.inf]), [0.0])
    assert np.allclose(rn.branches[0], [[-1.0]])


def test_normal_cone_interior_is_zero():
    rn = geo.normal_cone(geo.Box([-2.0], [2.0]), [0.5])
    assert len(rn.branches[0]) == 0


def test_normal_cone_orthant_face():
    rn = geo.normal_cone(ORTHANT2, [0.0, 1.0])
    assert np.allclose(rn.branches[0], [[-1.0, 0.0]])


def test_normal_cone_requires_point_on_set():
    with pytest.raises(geo.GeometryError, match="not on the set"):
        geo.normal_cone(geo.Box([0.0], [1.0]), [2.0])


def test_normal_cone_product_rule():
    # N(S1 x S2) = N(S1) x N(S2) as generated cones
    s1 = geo.Box([0.0], [1.0])
    s2 = geo.Box([-1.0], [1.0])
    prod = geo.Box([0.0, -1.0], [1.0, 1.0])
    for x1, x2 in [(0.0, 1.0), (1.0, -1.0), (0.5, 1.0), (0.0, 0.0)]:
        g1 = geo.normal_cone(s1, [x1]).branches[0]
        g2 = geo.normal_cone(s2, [x2]).branches[0]
        gp = geo.normal_cone(prod, [x1, x2]).branches[0]
        expect = [np.concatenate([g, [0.0]]) for g in g1]
        expect += [np.concatenate([[0.0], g]) for g in g2]
        cone_a = geo.generated_cone(np.asarray(expect) if expect else np.zeros((0, 2)))
        cone_b = geo.generated_cone(gp if len(gp) else np.zeros((0, 2)))
        for g in expect:
            assert geo.cone_contains(cone_b, g, 1e-9)
        for g in gp:
            assert geo.cone_contains(cone_a, g, 1e-9)


# ---------------------------------------------------------------------------
# truncated normal map
# ---------------------------------------------------------------------------

def test_truncated_normal_table_on_interval():
    S = geo.Box([-1.0], [1.0])
    lowends = geo.truncated_normal([-1.0], S).effective_points().ravel()
    assert sorted(lowends.tolist()) == [-1.0, 0.0]
    assert np.allclose(geo.truncated_normal([0.2], S).effective_points(), [[0.0]])
    assert np.allclose(geo.truncated_normal([-3.0], S).points, [[-1.0]])
    assert np.allclose(geo.truncated_normal([4.0], S).points, [[1.0]])


def test_truncated_normal_stays_in_unit_ball():
    rng = np.random.default_rng(2)
    S = geo.Box([-1.0, 0.0], [1.0, 2.0])
    for _ in range(40):
        x = rng.uniform(-3, 3, 2)
        body = geo.truncated_normal(x, S)
        pts = body.effective_points()
        assert np.all(np.linalg.norm(pts, axis=1) <= 1 + 1e-9)


# ---------------------------------------------------------------------------
# support and min-norm
# ---------------------------------------------------------------------------

def test_support_examples():
    box = geo.body_from_points([[0, -1], [0, 1], [1, -1], [1, 1]])
    assert geo.support(box, [-1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    ball = geo.unit_ball_body(2)
    assert geo.support(ball, [0.6, -0.8]) == pytest.approx(1.0)
    seg = geo.ConvexBody(2, [[1, 1], [1, -1]], ball=0.5)
    assert geo.support(seg, [1.0, 0.0]) == pytest.approx(1.5)


def test_support_uncapped_cone_is_zero_or_infinite():
    ray = geo.generated_cone([[1.0, 1.0]])
    assert geo.support(ray, [-1.0, 0.5]) == 0.0
    assert geo.support(ray, [1.0, 0.0]) == np.inf
    union = geo.RayUnion((np.zeros((0, 2)),))
    assert geo.support(union, [1.0, 0.0]) == 0.0


def test_min_norm_examples():
    assert geo.min_norm_point(geo.body_from_points([[3.0, 4.0]]))[1] == pytest.approx(5.0)
    assert geo.min_norm_point(geo.body_from_points([[1, 0], [-1, 0]]))[1] == 0.0
    q, d = geo.min_norm_point(geo.body_from_points([[1, -1], [1, 1]]))
    assert d == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(q, [1.0, 0.0], atol=1e-8)


def test_min_norm_against_dense_sampling():
    rng = np.random.default_rng(9)
    for _ in range(6):
        pts = rng.uniform(-2, 2, size=(7, 2)) + rng.uniform(-1, 1, 2)
        body = geo.body_from_points(pts, ball=float(rng.uniform(0, 0.3)))
        _, d = geo.min_norm_point(body)
        oracle = sampled_min_norm(body.effective_points(), body.ball)
        assert d <= oracle + 1e-9
        assert oracle - d <= 0.02


def test_min_norm_support_duality():
    # the dual value -h(-d) is piecewise linear in the direction, so the
    # sampled maximum needs a fine direction grid to meet the 0.02 contract
    rng = np.random.default_rng(4)
    dirs = geo._sphere_dirs(2, 512)
    for _ in range(5):
        pts = rng.uniform(-2, 2, size=(6, 2)) + np.array([1.5, 0.5])
        body = geo.ConvexBody(2, pts, ball=0.2,
                              caps=(geo.generated_cone([[1.0, 0.2]]),))
        _, d = geo.min_norm_point(body)
        dual = max(-geo.support(body, -u) for u in dirs)
        assert dual <= d + 1e-9  # weak duality
        assert abs(d - max(dual, 0.0)) <= 0.02


# ---------------------------------------------------------------------------
# dual cones
# ---------------------------------------------------------------------------

def test_dual_orthant_is_negative_orthant():
    dual = geo.dual_cone(geo.orthant(2))
    assert geo.cone_contains(dual, [-1.0, -2.0])
    assert not geo.cone_contains(dual, [0.5, -1.0])


def test_dual_of_ray_is_halfplane():
    # FD membership-grid oracle: {x : x + y <= 0}
    dual = geo.dual_cone(geo.generated_cone([[1.0, 1.0]]))
    rng = np.random.default_rng(6)
    for _ in range(60):
        v = rng.uniform(-2, 2, 2)
        assert geo.cone_contains(dual, v, 1e-9) == (v[0] + v[1] <= 1e-9)


def test_dual_of_trivial_cone_is_full_space():
    dual = geo.dual_cone(geo.generated_cone(np.zeros((0, 2))))
    assert geo.cone_contains(dual, [5.0, -7.0])


def test_dual_dual_recovers_cone_on_generators():
    C = geo.generated_cone([[1.0, 0.0], [1.0, 1.0]])
    dd = geo.dual_cone(geo.dual_cone(C))
    for g in C.mat:
        assert geo.cone_contains(dd, g, 1e-9)
    assert not geo.cone_contains(dd, [-1.0, 0.0], 1e-9)


def test_cone_pointedness():
    assert geo.cone_pointed(geo.orthant(3))
    assert not geo.cone_pointed(geo.generated_cone([[1.0, 0], [-1.0, 0]]))


# ---------------------------------------------------------------------------
# sampled limiting normals
# ---------------------------------------------------------------------------

def _tent_branches(width=0.6, n=601):
    t = np.linspace(-width, width, n)
    upper = np.c_[t, np.abs(t) + 1.0]
    lower = np.c_[t, -np.abs(t) - 1.0]
    return upper, lower


def test_limiting_normals_tent_corner():
    upper, lower = _tent_branches()

    def inside(w):
        return -abs(w[0]) - 1.0 <= w[1] <= abs(w[0]) + 1.0

    rn = geo.limiting_normal_graph([upper, lower], [0.0, 1.0], inside=inside,
                                   radii=(0.02, 0.01, 0.005))
    assert not rn.exact
    dirs = sorted(
        np.degrees(np.arctan2(b[0][1], b[0][0])) % 360 for b in rn.branches
    )
    assert len(rn.branches) == 2
    assert dirs == pytest.approx([45.0, 135.0], abs=2.0)


def test_limiting_normals_smooth_boundary_point():
    upper, lower = _tent_branches()

    def inside(w):
        return -abs(w[0]) - 1.0 <= w[1] <= abs(w[0]) + 1.0

    rn = geo.limiting_normal_graph([upper, lower], [0.3, 1.3], inside=inside,
                                   radii=(0.02, 0.01, 0.005))
    assert len(rn.branches) == 1
    g = rn.branches[0][0]
    assert np.degrees(np.arctan2(g[1], g[0])) == pytest.approx(135.0, abs=2.0)


def test_limiting_normals_full_space_graph():
    # constant full-space map: every probe is inside, normal cone {0}
    t = np.linspace(-1, 1, 101)
    branch = np.c_[t, np.full_like(t, 2.0)]  # dummy boundary far away
    rn = geo.limiting_normal_graph([np.c_[t, t * 0.0]], [0.0, 0.0],
                                   inside=lambda w: True,
                                   radii=(0.02, 0.01, 0.005))
    assert len(rn.branches) == 1 and len(rn.branches[0]) == 0


def test_limiting_normals_thin_curve_has_fan_below():
    upper, _ = _tent_branches()
    rn = geo.limiting_normal_graph([upper], [0.0, 1.0],
                                   radii=(0.02, 0.01, 0.005))
    # expected: rays at 45 and 135 degrees plus the downward fan [225, 315]
    widths = []
    for b in rn.branches:
        angs = sorted(np.degrees(np.arctan2(b[:, 1], b[:, 0])) % 360)
        widths.append((angs[0], angs[-1]))
    fans = [w for w in widths if w[1] - w[0] > 10]
    rays = sorted(w[0] for w in widths if w[1] - w[0] <= 10)
    assert len(fans) == 1
    assert fans[0][0] == pytest.approx(225.0, abs=3.0)
    assert fans[0][1] == pytest.approx(315.0, abs=3.0)
    assert rays == pytest.approx([45.0, 135.0], abs=2.0)


# ---------------------------------------------------------------------------
# bodies
# ---------------------------------------------------------------------------

def test_minkowski_sum_and_scale():
    a = geo.body_from_points([[0.0, 2.0]])
    b = geo.body_from_points([[-1, -1], [-1, 1], [1, -1], [1, 1]])
    s = geo.minkowski(a, b)
    assert geo.support(s, [1.0, 0.0]) == pytest.approx(1.0)
    assert geo.support(s, [0.0, 1.0]) == pytest.approx(3.0)
    half = geo.scale_body(b, 0.5)
    assert geo.support(half, [1.0, 0.0]) == pytest.approx(0.5)


def test_product_body_of_segments_is_square():
    seg = geo.body_from_points([[0.0], [1.0]])
    ball1 = geo.unit_ball_body(1)
    sq = geo.product_body(seg, ball1)
    assert geo.support(sq, [1.0, 0.0]) == pytest.approx(1.0)
    assert geo.support(sq, [-1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert geo.support(sq, [0.0, -1.0]) == pytest.approx(1.0)
    assert geo.body_contains(sq, [0.5, -0.7])
    assert not geo.body_contains(sq, [-0.2, 0.0], tol=1e-6)


def test_halfspace_vertices_unit_square():
    H = geo.Halfspaces([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1])
    V = geo.halfspace_vertices(H)
    expect = {(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)}
    assert {tuple(np.round(v, 9)) for v in V} == expect
