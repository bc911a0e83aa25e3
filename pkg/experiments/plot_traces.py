"""Plot the mean traces a `proxsgd run` left in an output directory.

Example documentation script, not part of the library contract.

    python3 experiments/plot_traces.py experiments/out/ridge_methods
    python3 experiments/plot_traces.py out/dir --column dist_sq -o fig.png
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load_mean(path):
    iters, values = [], {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            iters.append(int(row["iter"]))
            for key, cell in row.items():
                if key != "iter":
                    values.setdefault(key, []).append(
                        float(cell) if cell else float("nan"))
    return iters, values


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", help="directory holding <label>_mean.csv")
    ap.add_argument("--column", default="rel_subopt",
                    choices=["dist_sq", "f_gap", "rel_subopt", "sigma_sq",
                             "lyapunov"])
    ap.add_argument("-o", "--output", default=None,
                    help="PNG path (default <out_dir>/<column>.png)")
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    files = sorted(out_dir.glob("*_mean.csv"))
    if not files:
        raise SystemExit(f"no *_mean.csv under {out_dir}")

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path in files:
        iters, values = load_mean(path)
        ax.semilogy(iters, values[args.column],
                    label=path.name[:-len("_mean.csv")])
    ax.set_xlabel("iteration")
    ax.set_ylabel(args.column)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    target = args.output or out_dir / f"{args.column}.png"
    fig.savefig(target, dpi=150)
    print(f"wrote {target}")


if __name__ == "__main__":
    main()
