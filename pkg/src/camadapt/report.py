"""Figure rendering for CLI reports.

Plots are written next to the delimited output they illustrate: a loss-curve
PNG for training runs and a grouped accuracy bar chart for scenario studies.
"""

import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


class ReportError(Exception):
    pass


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_loss_curves(loss_csv, out_png):
    """Per-epoch loss components from a training losses.csv."""
    rows = read_csv_rows(loss_csv)
    if not rows:
        raise ReportError(f"no rows in {loss_csv}")
    epochs = [int(r["epoch"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key, label in (("L_GAN_G", "adv G"), ("L_GAN_F", "adv F"),
                       ("L_c", "cycle"), ("L_i", "identity")):
        ax1.plot(epochs, [float(r[key]) for r in rows], label=label)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("generator loss component")
    ax1.legend()
    ax2.plot(epochs, [float(r["d_x"]) for r in rows], label="loss D_X")
    ax2.plot(epochs, [float(r["d_y"]) for r in rows], label="loss D_Y")
    ax2.plot(epochs, [float(r["total"]) for r in rows], label="G total")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("loss")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def plot_scenario_results(results_csv, out_png):
    """Grouped bar chart of scenario accuracies (one group per seed)."""
    rows = read_csv_rows(results_csv)
    if not rows:
        raise ReportError(f"no rows in {results_csv}")
    seeds = sorted({r["seed"] for r in rows}, key=str)
    kinds = []
    for r in rows:
        if r["scenario"] not in kinds:
            kinds.append(r["scenario"])
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(len(kinds), 1)
    for j, kind in enumerate(kinds):
        xs, ys = [], []
        for i, seed in enumerate(seeds):
            for r in rows:
                if r["seed"] == seed and r["scenario"] == kind:
                    xs.append(i + j * width)
                    ys.append(float(r["accuracy"]))
        ax.bar(xs, ys, width=width, label=kind)
    ax.set_xticks([i + width * (len(kinds) - 1) / 2 for i in range(len(seeds))])
    ax.set_xticklabels([f"seed {s}" for s in seeds])
    ax.set_ylabel("accuracy on true-distorted test split")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def plot_psnr_bars(names, values, out_png, ylabel="mean PSNR [dB]"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(names)), values)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
