import numpy as np
import numpy.testing as npt
import pytest

from lpnet.boundary import (
    boundary_conic_residual,
    conic_rms_distance,
    decision_threshold,
    extract_level_crossings,
    fit_conic,
    grid_eval,
    load_boundary_csv,
    save_boundary_csv,
)
from lpnet.core import Rng, ShapeError
from lpnet.lp import inverse_reparam
from lpnet.network import Network, linear, lp_layer


def _single_unit_net(p=2.0, centers=(0.2, -0.3), w_out=(1.0, -1.0), b_out=(0.0, 0.8)):
    """1 pooling unit on identity filters + 2-class readout.

    The activation is u = (((x0-c0)^p + (x1-c1)^p)/2)^(1/p); prediction
    flips where u crosses -(b1-b0)/(w1-w0).
    """
    net = Network(2, [lp_layer(1, 2), linear(2)], params=[
        {"weights": np.eye(2), "centers": np.array(centers, dtype=np.float64),
         "rho": np.array([inverse_reparam(p)])},
        {"weights": np.array([[w_out[0], w_out[1]]]),
         "bias": np.array(b_out, dtype=np.float64)},
    ], mode="eval")
    return net


def test_grid_shape_and_order():
    net = _single_unit_net()
    grid = grid_eval(net, nx=5, ny=4, x_range=(-1.0, 1.0), y_range=(0.0, 3.0))
    assert grid["points"].shape == (20, 2)
    # y-outer, x-inner: first row of points shares the lowest y
    npt.assert_allclose(grid["points"][:5, 1], 0.0)
    npt.assert_allclose(grid["points"][:5, 0], np.linspace(-1, 1, 5))
    npt.assert_allclose(grid["xs"], np.linspace(-1, 1, 5))
    npt.assert_allclose(grid["ys"], np.linspace(0, 3, 4))
    assert grid["units"].shape == (20, 1)


def test_grid_requires_2d_input():
    net = Network.build(3, [linear(2)], Rng(0))
    with pytest.raises(ShapeError):
        grid_eval(net)


def test_grid_counting():
    net = _single_unit_net()
    grid = grid_eval(net, nx=100, ny=100)
    assert grid["points"].shape[0] == 10000


def test_constant_classifier_single_label():
    net = _single_unit_net(w_out=(0.0, 0.0), b_out=(1.0, 0.0))
    grid = grid_eval(net, nx=20, ny=20)
    assert np.all(grid["labels"] == 0)


def test_boundary_csv_round_trip(tmp_path):
    net = _single_unit_net()
    grid = grid_eval(net, nx=12, ny=9)
    path = tmp_path / "grid.csv"
    save_boundary_csv(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,predicted_label,u_0"
    assert len(lines) == 1 + 12 * 9
    back = load_boundary_csv(path)
    npt.assert_array_equal(back["points"], grid["points"])
    npt.assert_array_equal(back["labels"], grid["labels"])
    npt.assert_array_equal(back["units"], grid["units"])


def test_decision_threshold_formula():
    net = _single_unit_net(w_out=(2.0, -1.0), b_out=(0.5, 2.0))
    # w0 u + b0 = w1 u + b1 at u = (b1 - b0)/(w0 - w1)
    npt.assert_allclose(decision_threshold(net), 1.5 / 3.0, rtol=1e-12)


def test_decision_threshold_requires_single_unit_shape():
    net = Network.build(2, [lp_layer(2, 2), linear(2)], Rng(1))
    with pytest.raises(ValueError):
        decision_threshold(net)


def test_level_crossings_on_circle():
    # p=2, zero centers: u = ||x||/sqrt(2); level r/sqrt(2) is a radius-r circle
    net = _single_unit_net(p=2.0, centers=(0.0, 0.0))
    grid = grid_eval(net, nx=80, ny=80, x_range=(-2, 2), y_range=(-2, 2))
    r = 1.3
    pts = extract_level_crossings(grid, 0, r / np.sqrt(2.0))
    assert pts.shape[0] > 50
    radii = np.hypot(pts[:, 0], pts[:, 1])
    npt.assert_allclose(radii, r, atol=0.01)


def test_level_crossings_empty_outside_window():
    net = _single_unit_net(p=2.0, centers=(0.0, 0.0))
    grid = grid_eval(net, nx=10, ny=10, x_range=(-1, 1), y_range=(-1, 1))
    pts = extract_level_crossings(grid, 0, 50.0)  # level never reached
    assert pts.shape == (0, 2)


def test_fit_conic_exact_ellipse():
    t = np.linspace(0.0, 2 * np.pi, 40, endpoint=False)
    pts = np.column_stack([1.5 * np.cos(t) + 0.3, 0.8 * np.sin(t) - 0.1])
    coeffs, residual = fit_conic(pts)
    assert residual < 1e-9
    # normalized coefficient vector has unit norm
    npt.assert_allclose(np.linalg.norm(coeffs), 1.0, rtol=1e-12)
    assert conic_rms_distance(coeffs, pts) < 1e-9


def test_fit_conic_rejects_degenerate_input():
    with pytest.raises(ValueError):
        fit_conic(np.zeros((5, 2)))
    with pytest.raises(ValueError):
        fit_conic(np.zeros((10, 2)))  # coincident points


def test_fit_conic_rejects_superellipse():
    # a p=6 curve is visibly flatter than any conic at unit scale
    t = np.linspace(0.0, 2 * np.pi, 200, endpoint=False)
    cx, sx = np.cos(t), np.sin(t)
    x = np.sign(cx) * np.abs(cx) ** (1.0 / 3.0)
    y = np.sign(sx) * np.abs(sx) ** (1.0 / 3.0)
    _, residual = fit_conic(np.column_stack([x, y]))
    assert residual > 1e-2


def test_fit_conic_separates_shapes_from_pooling_levels():
    # level sets of the unit itself: ellipse at p=2 passes, p=6 box fails
    for p, should_pass in ((2.0, True), (6.0, False)):
        net = _single_unit_net(p=p, centers=(0.0, 0.0), w_out=(1.0, -1.0),
                               b_out=(0.0, 0.9))
        pts, _, residual = boundary_conic_residual(
            net, nx=120, ny=120, x_range=(-2, 2), y_range=(-2, 2))
        assert pts.shape[0] > 80
        assert (residual < 1e-2) == should_pass, (p, residual)


def test_end_to_end_threshold_crossings_lie_on_superellipse():
    p = 4.0
    c = (0.3, -0.2)
    net = _single_unit_net(p=p, centers=c, w_out=(1.0, -1.0), b_out=(0.0, 1.0))
    u_star = decision_threshold(net)
    grid = grid_eval(net, nx=100, ny=100, x_range=(-2, 2), y_range=(-2, 2))
    pts = extract_level_crossings(grid, 0, u_star)
    # each crossing satisfies the level equation of the pooling unit
    lhs = ((np.abs(pts[:, 0] - c[0]) ** p + np.abs(pts[:, 1] - c[1]) ** p)
           / 2.0) ** (1.0 / p)
    npt.assert_allclose(lhs, u_star, atol=0.01)
