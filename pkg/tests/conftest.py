import numpy as np
import pytest

from vep import expr as ex
from vep import geometry as geo
from vep import problem as pb


@pytest.fixture(scope="session")
def tent():
    """Built-in worked instance: K(xi) = [-|xi|-1, |xi|+1], f = (x-z, |xi|)."""
    return pb.load("example:paper")


def make_const_box(phi="xi1", f_comp="x1 - z1", omega=None, asserts=()):
    """K constant [-1, 1], scalar cone order; solutions are x = 1."""
    dims = (1, 1, 1)
    f = ex.VectorFunc((ex.parse(f_comp, dims),), dims)
    K = pb.ParamBox((ex.parse("0 - 1", (1, 0, 0)),), (ex.parse("1", (1, 0, 0)),))
    return pb.VepProblem(
        name="toy:const-box",
        p=1, n=1, m=1,
        f=f, cone=geo.orthant(1), K=K,
        objective=ex.parse(phi, (1, 1, 0)),
        omega=omega if omega is not None else geo.full_space(1),
        window={"xi": (np.array([-2.0]), np.array([2.0])),
                "x": (np.array([-2.0]), np.array([2.0]))},
        asserts=frozenset(asserts),
    )


@pytest.fixture(scope="session")
def const_box():
    return make_const_box(asserts=("K-concave", "nu-convex", "K-convex"))


@pytest.fixture(scope="session")
def zero_f():
    """f identically zero: every feasible point solves."""
    dims = (1, 1, 1)
    f = ex.VectorFunc((ex.parse("0", dims),), dims)
    K = pb.ParamBox((ex.parse("0 - 1", (1, 0, 0)),), (ex.parse("1", (1, 0, 0)),))
    return pb.VepProblem(
        name="toy:zero-f",
        p=1, n=1, m=1,
        f=f, cone=geo.orthant(1), K=K,
        objective=ex.parse("0", (1, 1, 0)),
        omega=geo.full_space(1),
        window={"xi": (np.array([-1.0]), np.array([1.0])),
                "x": (np.array([-2.0]), np.array([2.0]))},
    )
