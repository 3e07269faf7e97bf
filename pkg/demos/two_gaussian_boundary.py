"""One pooling unit separating two Gaussian blobs.

Trains the unit twice on the same data: once with the order frozen at
2 and once with it learned. Both reach a low error rate; the frozen
run's decision curve must fit a conic almost exactly (it is an
ellipse), which the fit residual confirms. Dumps both decision grids
as CSV for plotting.
"""

import os

from lpnet.boundary import boundary_conic_residual, grid_eval, save_boundary_csv
from lpnet.train import two_gaussian_experiment

HERE = os.path.dirname(os.path.abspath(__file__))


def main() -> None:
    for tag, fixed in (("fixed-p2", 2.0), ("learned-p", None)):
        result, net = two_gaussian_experiment(0, fixed_p=fixed)
        grid = grid_eval(net, nx=120, ny=120,
                         x_range=(-6.0, 6.0), y_range=(-6.0, 6.0))
        out = os.path.join(HERE, f"two_gaussian_{tag}.csv")
        save_boundary_csv(grid, out)
        line = (f"{tag:10s} error rate {result['error_rate']:.3f}  "
                f"orders {[round(p, 2) for p in result['orders']]}")
        if fixed is not None:
            pts, _, residual = boundary_conic_residual(
                net, nx=160, ny=160, x_range=(-6.0, 6.0), y_range=(-6.0, 6.0))
            line += f"  conic residual {residual:.2e} ({pts.shape[0]} pts)"
        print(line)
        print(f"wrote {out}")


if __name__ == "__main__":
    main()
