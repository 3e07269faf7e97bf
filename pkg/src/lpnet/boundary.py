"""Decision-boundary grids, level-set extraction, and conic fitting.

A trained 2-input classifier is rendered as a regular grid of predicted
labels plus the activation of every pooling unit. Offline analysis then
reconstructs each unit's level set: points where the activation crosses
its decision threshold. For a fixed order of 2 that curve is an exact
ellipse, which the conic fitter certifies with a residual measured as
an RMS first-order (Sampson) point-to-curve distance.
"""

from __future__ import annotations

import numpy as np

from .core import FormatError, ShapeError
from .network import Network, lp_activations


def grid_eval(net: Network, nx: int = 100, ny: int = 100,
              x_range=(-3.0, 3.0), y_range=(-3.0, 3.0)) -> dict:
    """Evaluate a 2-input network on a regular grid.

    Rows run y-outer, x-inner. Returns points (n, 2), predicted labels
    (n,), unit activations (n, U), and the grid shape/axes.
    """
    if net.input_dim != 2:
        raise ShapeError(f"boundary grids need a 2-input network, "
                         f"got input_dim {net.input_dim}")
    if nx < 2 or ny < 2:
        raise ValueError(f"grid must be at least 2x2, got {nx}x{ny}")
    xs = np.linspace(x_range[0], x_range[1], nx)
    ys = np.linspace(y_range[0], y_range[1], ny)
    gx, gy = np.meshgrid(xs, ys)          # (ny, nx)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    labels = net.predict(points)
    units = lp_activations(net, points)
    return {"points": points, "labels": labels, "units": units,
            "nx": nx, "ny": ny, "xs": xs, "ys": ys}


def save_boundary_csv(grid: dict, path) -> None:
    n_units = grid["units"].shape[1]
    header = ",".join(["x", "y", "predicted_label"] +
                      [f"u_{j}" for j in range(n_units)])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, lab, us in zip(grid["points"], grid["labels"], grid["units"]):
            cells = [f"{p[0]:.17g}", f"{p[1]:.17g}", str(int(lab))]
            cells += [f"{u:.17g}" for u in us]
            fh.write(",".join(cells) + "\n")


def load_boundary_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header[:3] != ["x", "y", "predicted_label"]:
            raise FormatError(f"{path}: bad header {header!r}")
        n_units = len(header) - 3
        if header[3:] != [f"u_{j}" for j in range(n_units)]:
            raise FormatError(f"{path}: bad unit columns {header[3:]!r}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} "
                                  f"fields, got {len(cells)}")
            rows.append([float(c) for c in cells])
    arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(header))
    return {"points": arr[:, :2], "labels": arr[:, 2].astype(np.int64),
            "units": arr[:, 3:]}


def decision_threshold(net: Network, unit: int = 0) -> float:
    """Activation level at which a single-pooling-unit two-class network
    flips its prediction.

    With logits w0 u + b0 and w1 u + b1 the flip happens at
    u* = -(b1 - b0)/(w1 - w0).
    """
    if len(net.specs) != 2 or net.specs[0].kind != "lp" or \
            net.specs[0].units != 1 or net.specs[1].kind != "linear" or \
            net.specs[1].out_dim != 2:
        raise ValueError("decision threshold is defined for a single-unit "
                         "pooling network with a 2-class linear readout")
    if unit != 0:
        raise ValueError(f"network has one pooling unit, asked for {unit}")
    w = net.params[1]["weights"]
    b = net.params[1]["bias"]
    dw = w[0, 1] - w[0, 0]
    if dw == 0.0:
        raise ValueError("readout weights give no decision threshold")
    return float(-(b[1] - b[0]) / dw)


def extract_level_crossings(grid: dict, unit: int, level: float) -> np.ndarray:
    """Points where a unit's activation crosses a level, found by scanning
    grid rows and columns for sign changes and interpolating linearly.

    Returns an (m, 2) array; m depends on how much of the curve lies
    inside the grid window.
    """
    nx, ny = grid["nx"], grid["ny"]
    u = grid["units"][:, unit].reshape(ny, nx)
    xs, ys = grid["xs"], grid["ys"]
    f = u - level
    points = []
    # along x (within each row)
    s = f[:, :-1] * f[:, 1:]
    for iy, ix in zip(*np.nonzero(s < 0)):
        t = f[iy, ix] / (f[iy, ix] - f[iy, ix + 1])
        points.append((xs[ix] + t * (xs[ix + 1] - xs[ix]), ys[iy]))
    # along y (within each column)
    s = f[:-1, :] * f[1:, :]
    for iy, ix in zip(*np.nonzero(s < 0)):
        t = f[iy, ix] / (f[iy, ix] - f[iy + 1, ix])
        points.append((xs[ix], ys[iy] + t * (ys[iy + 1] - ys[iy])))
    if not points:
        return np.zeros((0, 2))
    return np.asarray(points, dtype=np.float64)


def fit_conic(points: np.ndarray):
    """Least-squares conic through 2-D points.

    Points are centered and scaled before the SVD solve (the design
    matrix [x^2, xy, y^2, x, y, 1] is badly conditioned otherwise), and
    the coefficients are mapped back to the original frame. Returns
    (coeffs a..f with a x^2 + b xy + c y^2 + d x + e y + f = 0, RMS
    Sampson distance in original units).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 6:
        raise ValueError(f"conic fit needs at least 6 points of shape (m, 2), "
                         f"got {points.shape}")
    center = points.mean(axis=0)
    spread = np.sqrt(np.mean(np.sum((points - center) ** 2, axis=1)))
    if spread == 0.0:
        raise ValueError("conic fit needs non-coincident points")
    q = (points - center) / spread
    x, y = q[:, 0], q[:, 1]
    design = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, _, vt = np.linalg.svd(design, full_matrices=False)
    A, B, C, D, E, F = vt[-1]
    mx, my = center
    s = spread
    coeffs = np.array([
        A, B, C,
        -2.0 * A * mx - B * my + D * s,
        -2.0 * C * my - B * mx + E * s,
        A * mx * mx + B * mx * my + C * my * my - D * mx * s - E * my * s
        + F * s * s,
    ])
    norm = np.linalg.norm(coeffs)
    if norm > 0:
        coeffs = coeffs / norm
    return coeffs, float(conic_rms_distance(coeffs, points))


def conic_rms_distance(coeffs, points) -> float:
    """RMS Sampson distance: |C(x,y)| / ||grad C(x,y)|| per point."""
    a, b, c, d, e, f = coeffs
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x, y = points[:, 0], points[:, 1]
    val = a * x * x + b * x * y + c * y * y + d * x + e * y + f
    gx = 2.0 * a * x + b * y + d
    gy = b * x + 2.0 * c * y + e
    gnorm = np.sqrt(gx * gx + gy * gy)
    gnorm = np.maximum(gnorm, 1e-12)
    return float(np.sqrt(np.mean((val / gnorm) ** 2)))


def boundary_conic_residual(net: Network, nx: int = 100, ny: int = 100,
                            x_range=(-3.0, 3.0), y_range=(-3.0, 3.0),
                            unit: int = 0):
    """Convenience wrapper: dump a grid, extract the unit's decision-level
    crossings, and fit a conic. Returns (points, coeffs, residual)."""
    grid = grid_eval(net, nx=nx, ny=ny, x_range=x_range, y_range=y_range)
    level = decision_threshold(net, unit=unit)
    pts = extract_level_crossings(grid, unit, level)
    coeffs, residual = fit_conic(pts)
    return pts, coeffs, residual
