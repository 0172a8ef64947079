import numpy as np
import pytest

from affinefdr.curves import (Grid, PointCombo, ShortEnd, Weight, apply_functional,
                              derivative, hw_norm, primitive)
from affinefdr.errors import GridMismatch


def test_grid_properties():
    grid = Grid(10.0, 0.005)
    assert grid.n == 2001
    assert grid.x[0] == 0.0 and grid.x[-1] == pytest.approx(10.0)
    with pytest.raises(GridMismatch):
        Grid(1.0, 0.3)


def test_derivative_orders():
    grid = Grid(2.0, 0.01)
    f = np.exp(grid.x)
    err = np.abs(derivative(f, grid) - f)
    # fourth order in the interior, second order at the ends
    assert err[2:-2].max() < 1e-7
    assert err.max() < 1e-3
    # exact for cubics everywhere central stencils apply
    g = grid.x ** 2
    assert np.abs(derivative(g, grid) - 2 * grid.x).max() < 1e-10


def test_primitive_matches_analytic():
    grid = Grid(5.0, 0.005)
    p = primitive(np.exp(-grid.x), grid)
    assert np.abs(p - (1.0 - np.exp(-grid.x))).max() < 1e-5
    assert p[0] == 0.0


def test_hw_norm_constant_curve():
    grid = Grid(10.0, 0.005)
    assert hw_norm(np.full(grid.n, -3.0), grid) == pytest.approx(3.0)


def test_hw_norm_analytic_oracle():
    # h(x) = x on [0,1] with weight (1+x)^4: norm^2 = (2^5 - 1)/5 = 6.2
    grid = Grid(1.0, 0.0025)
    value = hw_norm(grid.x.copy(), grid, Weight(4.0))
    # trapezoid quadrature limits the accuracy to O(dx^2)
    assert value == pytest.approx(np.sqrt(6.2), abs=1e-5)


def test_hw_norm_triangle_inequality():
    grid = Grid(10.0, 0.01)
    rng = np.random.default_rng(11)
    for _ in range(200):
        c = rng.standard_normal(4)
        h1 = c[0] * np.exp(-grid.x) + c[1] * np.sin(grid.x) * np.exp(-grid.x)
        h2 = c[2] * grid.x * np.exp(-grid.x) + c[3]
        lhs = hw_norm(h1 + h2, grid)
        assert lhs <= hw_norm(h1, grid) + hw_norm(h2, grid) + 1e-9


def test_functionals():
    grid = Grid(10.0, 0.005)
    h = np.cos(grid.x)
    assert apply_functional(ShortEnd(), h, grid) == pytest.approx(1.0)
    ell = PointCombo((0.0, 1.0), (-1.0, 4.0))
    assert apply_functional(ell, h, grid) == pytest.approx(-1.0 + 4.0 * np.cos(1.0))
    dual = ell.dual_vector(grid)
    assert dual @ h == pytest.approx(apply_functional(ell, h, grid))


def test_grid_mismatch_raised():
    grid = Grid(10.0, 0.005)
    with pytest.raises(GridMismatch):
        derivative(np.zeros(100), grid)
    with pytest.raises(GridMismatch):
        grid.index_of(0.0033)
