"""Unit-budget comparison on the curved-region task.

Runs one seed of each configuration and prints the training-error
counts side by side: three learned-order units (six filters) normally
solve the task outright, two fixed-order-2 units cannot, two
learned-order units sometimes can, and four rectifier units leave a
residue of boundary mistakes. Expect a minute or two of wall time;
each run is a multi-start full-batch quasi-Newton descent.
"""

from lpnet.train import curvature_experiment

ARMS = (
    ("lp", 3, "3 learned-order units (6 filters)"),
    ("lp", 2, "2 learned-order units (4 filters)"),
    ("lp-fixed2", 2, "2 fixed-order-2 units (4 filters)"),
    ("rectifier", 4, "4 rectifier units (4 filters)"),
)


def main() -> None:
    seed = 0
    for kind, units, label in ARMS:
        out = curvature_experiment(seed, kind=kind, units=units)
        note = "solved" if out["success"] else "unsolved"
        print(f"{label:36s} errors {out['errors']:3d} / 5000  {note}")


if __name__ == "__main__":
    main()
