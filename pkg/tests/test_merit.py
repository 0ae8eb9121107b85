import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from vep import merit as mr
from vep import problem as pb


# ---------------------------------------------------------------------------
# golden values on the worked instance
# ---------------------------------------------------------------------------

def test_nu_golden_values(tent):
    ne = mr.eval_nu(tent, [0.0], [0.0])
    assert ne.value == pytest.approx(1.0, abs=1e-12)
    assert ne.method == "vertex-exact"
    # the farthest comparison point is the upper slice endpoint
    assert [round(float(z[0]), 9) for z in ne.argmax] == [1.0]
    assert mr.eval_nu(tent, [0.0], [2.0]).value == 0.0
    ne = mr.eval_nu(tent, [1.0], [0.0])
    assert ne.value == pytest.approx(2.0, abs=1e-12)
    assert [round(float(z[0]), 9) for z in ne.argmax] == [2.0]


def test_mu_golden_values(tent):
    assert mr.eval_mu(tent, [0.0], [3.0]) == pytest.approx(2.0)
    assert mr.eval_mu(tent, [0.0], [0.5]) == 0.0
    assert mr.eval_mu(tent, [1.0], [-5.0]) == pytest.approx(3.0)


def test_merit_golden_values(tent):
    assert mr.eval_merit(tent, [0.0], [1.0]).merit == 0.0
    me = mr.eval_merit(tent, [0.0], [0.0])
    assert (me.nu, me.mu, me.merit) == (1.0, 0.0, 1.0)
    me = mr.eval_merit(tent, [0.0], [3.0])
    assert me.nu == 0.0 and me.mu == pytest.approx(2.0) and me.merit == pytest.approx(2.0)


def test_merit_is_nu_plus_mu_and_levels_intersect(tent):
    rng = np.random.default_rng(1)
    for _ in range(50):
        t, xv = rng.uniform(-2, 2), rng.uniform(-4, 4)
        me = mr.eval_merit(tent, [t], [xv])
        assert me.merit == me.nu + me.mu
        assert (me.merit <= 1e-9) == (me.nu <= 1e-9 and me.mu <= 1e-9)


def test_closed_form_on_random_points(tent):
    rng = np.random.default_rng(2)
    for _ in range(200):
        t, xv = rng.uniform(-3, 3), rng.uniform(-3, 3)
        expect = max(abs(t) + 1 - xv, 0.0)
        assert mr.eval_nu(tent, [t], [xv]).value == pytest.approx(expect, abs=1e-9)


# ---------------------------------------------------------------------------
# enlargements
# ---------------------------------------------------------------------------

def test_enlarged_sup_at_solution_point(tent):
    ne = mr.eval_nu(tent, [0.0], [1.0], eps=0.1)
    assert ne.value == pytest.approx(0.1, abs=1e-12)
    assert [round(float(z[0]), 9) for z in ne.argmax] == [1.1]


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
@settings(max_examples=40, deadline=None)
def test_nu_monotone_in_enlargement(tent, e1, e2):
    lo, hi = sorted((e1, e2))
    a = mr.eval_nu(tent, [0.3], [0.4], eps=lo).value
    b = mr.eval_nu(tent, [0.3], [0.4], eps=hi).value
    assert b >= a - 1e-12


# ---------------------------------------------------------------------------
# grid fallback path
# ---------------------------------------------------------------------------

def test_grid_path_for_nonaffine_f():
    import vep.expr as ex
    import vep.geometry as geo
    dims = (1, 1, 1)
    # f quadratic in z: sup of dist over the slice needs the grid path
    f = ex.VectorFunc((ex.parse("x1 - z1^2", dims),), dims)
    K = pb.ParamBox((ex.parse("0 - 1", (1, 0, 0)),), (ex.parse("1", (1, 0, 0)),))
    prob = pb.VepProblem("toy:quad", 1, 1, 1, f, geo.orthant(1), K,
                         ex.parse("0", (1, 1, 0)), geo.full_space(1))
    ne = mr.eval_nu(prob, [0.0], [0.5])
    # sup_z dist(0.5 - z^2, R+) = max(z^2 - 0.5) = 0.5 at z = +-1
    assert ne.method in ("grid", "multistart")
    assert ne.value == pytest.approx(0.5, abs=1e-6)
    assert sorted(round(abs(float(z[0])), 4) for z in ne.argmax) == pytest.approx(
        [1.0] * len(ne.argmax), abs=1e-3
    )


# ---------------------------------------------------------------------------
# hypothesis probes
# ---------------------------------------------------------------------------

def test_lower_semicontinuity_probe(tent):
    ok, worst = mr.probe_lower_semicontinuity(tent, n_sequences=100, seed=0)
    assert ok, f"lsc probe failed with gap {worst}"


def test_midpoint_convexity_of_nu(tent):
    ok, worst = mr.probe_midpoint_convexity(tent, "nu", n_segments=1000, seed=0)
    assert ok, f"nu convexity probe failed with gap {worst}"


def test_midpoint_convexity_of_mu_for_constant_map(const_box):
    ok, worst = mr.probe_midpoint_convexity(const_box, "mu", n_segments=500, seed=0)
    assert ok, f"mu convexity probe failed with gap {worst}"


def test_mu_not_convex_on_tent_is_detected(tent):
    # the tent feasible map is concave, not convex, and mu shows it
    ok, worst = mr.probe_midpoint_convexity(tent, "mu", n_segments=500, seed=3)
    assert not ok and worst > 0.1
