"""Initial vs learned order histograms on the curved-region task.

The orders start in a tight band around 3 and spread out during
training; the text histograms make the movement visible without any
plotting dependency. The reference block lists published full-corpus
statistics for context only. Runtime: under a minute.
"""

import json
import os

from lpnet.cli import render_orders_text
from lpnet.train import REFERENCE_ORDER_STATS, order_experiment

HERE = os.path.dirname(os.path.abspath(__file__))


def main() -> None:
    run = order_experiment(0)
    block = {"initial": run["initial"], "learned": run["learned"],
             "reference": REFERENCE_ORDER_STATS}
    print(f"training errors: {run['errors']}")
    print(render_orders_text(block))
    out = os.path.join(HERE, "order_histograms.json")
    with open(out, "w") as fh:
        json.dump(block, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
