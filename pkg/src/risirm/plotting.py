"""Static SVG figures rendered from the CSV tables.

Every figure is a pure function of one CSV file.  SVG output carries no
date stamp and a fixed id salt so identical tables give identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "risirm",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "figure.figsize": (5.0, 3.4),
}
COLORS = {"BEST": "#222222", "IRM": "#c0392b", "ERM": "#2c6fbb", "RAND": "#8c8c8c"}


def _read(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig, out) -> Path:
    out = Path(out)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def plot_training(rows: list[dict], out) -> Path:
    """Loss, penalty and tracked accuracies against epoch."""
    with plt.rc_context(STYLE):
        fig, (ax_l, ax_a) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        epoch = [int(r["epoch"]) for r in rows]
        ax_l.plot(epoch, [float(r["loss"]) for r in rows], label="loss")
        ax_l.plot(epoch, [float(r["penalty"]) for r in rows], label="penalty")
        ax_l.set_yscale("log")
        ax_l.set_xlabel("epoch")
        ax_l.legend()
        for key in rows[0]:
            if key.startswith("acc_"):
                ax_a.plot(epoch, [float(r[key]) for r in rows], label=key[4:])
        ax_a.set_xlabel("epoch")
        ax_a.set_ylabel("accuracy")
        ax_a.set_ylim(0, 1.02)
        ax_a.legend()
        fig.tight_layout()
        return _save(fig, out)


def plot_metrics(rows: list[dict], out) -> Path:
    """Bar chart of accuracy and mean spectral efficiency per method."""
    with plt.rc_context(STYLE):
        fig, (ax_acc, ax_se) = plt.subplots(1, 2, figsize=(7.0, 3.0))
        names = [r["method"] for r in rows]
        colors = [COLORS.get(m, "#555555") for m in names]
        ax_acc.bar(names, [float(r["accuracy"]) for r in rows], color=colors)
        ax_acc.set_ylabel("accuracy")
        ax_acc.set_ylim(0, 1.02)
        ax_se.bar(names, [float(r["se_mean"]) for r in rows], color=colors)
        ax_se.set_ylabel("spectral efficiency (bit/s/Hz)")
        fig.tight_layout()
        return _save(fig, out)


def plot_ood(rows: list[dict], out) -> Path:
    """Accuracy versus colour correlation, one line per method and env mix."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        mixes = sorted({float(r["alpha_e"]) for r in rows})
        styles = ["-", "--", ":", "-.", (0, (1, 3))]
        for method in ("IRM", "ERM"):
            for k, ae in enumerate(mixes):
                pts = sorted((float(r["alpha_c"]), float(r["accuracy"]))
                             for r in rows if r["method"] == method and float(r["alpha_e"]) == ae)
                if pts:
                    ax.plot(*zip(*pts), linestyle=styles[k % len(styles)], color=COLORS[method],
                            marker="o", ms=3, label=f"{method} env mix {ae:g}")
        ax.set_xlabel("class-source correlation")
        ax.set_ylabel("accuracy")
        ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        return _save(fig, out)


def plot_samples(rows: list[dict], out) -> Path:
    """Spectral efficiency against training-set size."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for method in ("BEST", "IRM", "ERM", "RAND"):
            pts = sorted((int(r["train_size"]), float(r["se_mean"])) for r in rows if r["method"] == method)
            if pts:
                ax.plot(*zip(*pts), marker="o", color=COLORS[method], label=method)
        ax.set_xlabel("training samples")
        ax.set_ylabel("spectral efficiency (bit/s/Hz)")
        ax.legend()
        fig.tight_layout()
        return _save(fig, out)


def plot_interventions(rows: list[dict], out) -> Path:
    """Predicted versus simulated CLASS#1 probability per scenario."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        names = [r["scenario"] for r in rows]
        pos = range(len(names))
        ax.bar([p - 0.2 for p in pos], [float(r["predicted"]) for r in rows], 0.4, color=COLORS["IRM"],
               label="do-estimate")
        ax.bar([p + 0.2 for p in pos], [float(r["simulated"]) for r in rows], 0.4, color=COLORS["BEST"],
               label="simulated BEST")
        ax.set_xticks(list(pos), names, rotation=20, ha="right")
        ax.set_ylabel("Pr(CLASS#1)")
        ax.set_ylim(0, 1.02)
        ax.legend()
        fig.tight_layout()
        return _save(fig, out)


def render_csv(path, out=None) -> Path:
    """Pick a figure from the table's header and write it next to the CSV."""
    path = Path(path)
    rows = _read(path)
    if not rows:
        raise ValueError(f"{path}: no rows to plot")
    out = out or path.with_suffix(".svg")
    head = rows[0].keys()
    if "epoch" in head:
        return plot_training(rows, out)
    if "scenario" in head:
        return plot_interventions(rows, out)
    if "method" in head:
        if any(r.get("train_size") for r in rows):
            return plot_samples(rows, out)
        if len({(r["alpha_e"], r["alpha_c"]) for r in rows}) > 1:
            return plot_ood(rows, out)
        return plot_metrics(rows, out)
    raise ValueError(f"{path}: unrecognised table header {list(head)}")
