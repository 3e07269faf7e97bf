"""Three pooling units on a three-blob mixture.

Each unit's activation is a distance-like score, so after training on
three Gaussian blobs the per-unit activation grids show which region
each unit claims. Writes the grid CSV (one u_i column per unit) plus
the learned orders.
"""

import os

import numpy as np

from lpnet.boundary import grid_eval, save_boundary_csv
from lpnet.core import Rng
from lpnet.data import gauss3_components, gen_gaussian_mixture
from lpnet.network import Network, linear, lp_layer
from lpnet.train import TrainConfig, evaluate, train

HERE = os.path.dirname(os.path.abspath(__file__))


def main() -> None:
    dataset = gen_gaussian_mixture(gauss3_components(400), seed=0)
    net = Network.build(2, [lp_layer(3, 2), linear(3)], Rng(0).substream("init"))
    config = TrainConfig(learning_rate=0.2, momentum=0.9, batch_size=32,
                         epochs=60, seed=0, holdout_frac=0.0)
    train(net, dataset, config)
    loss, err = evaluate(net, dataset)
    print(f"train loss {loss:.4f}  train error {err:.3f}")
    print(f"learned orders {np.round(net.lp_orders(), 2).tolist()}")

    grid = grid_eval(net, nx=120, ny=120,
                     x_range=(-6.0, 6.0), y_range=(-6.0, 6.0))
    out = os.path.join(HERE, "three_gaussian_units.csv")
    save_boundary_csv(grid, out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
