"""Level sets of a single pooling unit at several orders.

With identity filters and zero centers the unit is positively
homogeneous, so the u=1 level set is just direction / u(direction).
Sweeping a circle of directions traces the superellipse directly: a
diamond-ish curve near order 1, an ellipse at 2, and a shape that
flattens toward a rectangle as the order grows.

Writes superellipse_levels.csv (columns: order,x,y) next to this file.
"""

import csv
import os

import numpy as np

from lpnet.lp import inverse_reparam, lp_forward

ORDERS = (1.3, 2.0, 4.0, 12.0)
N_ANGLES = 256
# anisotropic filter gains so the p=2 curve is an ellipse, not a circle
GAINS = np.array([1.0, 0.5])


def level_curve(order: float) -> np.ndarray:
    rho = inverse_reparam(order)
    theta = np.linspace(0.0, 2.0 * np.pi, N_ANGLES, endpoint=False)
    pts = np.empty((N_ANGLES, 2))
    for k, t in enumerate(theta):
        v = np.array([np.cos(t), np.sin(t)])
        u = lp_forward(GAINS * v, np.zeros(2), rho)
        pts[k] = v / u
    return pts


def main() -> None:
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                       "superellipse_levels.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["order", "x", "y"])
        for order in ORDERS:
            pts = level_curve(order)
            for x, y in pts:
                writer.writerow([f"{order:g}", f"{x:.6f}", f"{y:.6f}"])
            width = pts[:, 0].max() - pts[:, 0].min()
            height = pts[:, 1].max() - pts[:, 1].min()
            area = 0.5 * abs(np.sum(pts[:, 0] * np.roll(pts[:, 1], -1)
                                    - pts[:, 1] * np.roll(pts[:, 0], -1)))
            # box-fill ratio tends to 1 as the curve squares off
            print(f"order {order:5.1f}: bbox {width:.3f} x {height:.3f}, "
                  f"fill {area / (width * height):.3f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
