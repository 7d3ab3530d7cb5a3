"""Static report figures and delimited tables emitted by the pipeline."""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_intensity_histogram(path, source, target, mapped=None, bins=64):
    """Overlaid intensity histograms before/after the residual mapping."""
    fig, ax = plt.subplots(figsize=(7, 4))
    edges = np.linspace(0.0, 1.0, bins + 1)
    ax.hist(source, bins=edges, histtype="step", density=True, label="source")
    ax.hist(target, bins=edges, histtype="step", density=True, label="target")
    if mapped is not None:
        ax.hist(mapped, bins=edges, histtype="step", density=True,
                label="target mapped")
    ax.set_xlabel("intensity")
    ax.set_ylabel("density")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_plan_heatmap(path, plan, title="transport plan"):
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(plan, aspect="auto", interpolation="nearest", cmap="viridis")
    fig.colorbar(im, ax=ax, label="mass")
    ax.set_xlabel("target sample")
    ax.set_ylabel("source sample")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_range_image(path, image):
    fig, ax = plt.subplots(figsize=(9, 3))
    shown = np.where(image.valid_mask, image.channels[0], np.nan)
    im = ax.imshow(shown, aspect="auto", interpolation="nearest", cmap="magma")
    fig.colorbar(im, ax=ax, label="range [m]")
    ax.set_xlabel("azimuth bin")
    ax.set_ylabel("scan line")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_metrics_csv(path, pq_result, iou_result=None):
    """Per-class PQ/SQ/RQ rows plus aggregate rows, mirroring the report table."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "kind", "pq", "sq", "rq", "tp", "fp", "fn",
                         "iou"])
        for cls in sorted(pq_result.per_class):
            stats = pq_result.per_class[cls]
            kind = "thing" if cls in pq_result.things else "stuff"
            iou = ""
            if iou_result is not None and cls in iou_result.per_class:
                iou = f"{iou_result.per_class[cls]:.6f}"
            writer.writerow([cls, kind, f"{stats.pq:.6f}", f"{stats.sq:.6f}",
                             f"{stats.rq:.6f}", stats.tp, stats.fp, stats.fn,
                             iou])
        summary = pq_result.summary()
        for split in ("all", "things", "stuff"):
            agg = summary[split]
            writer.writerow([split, "aggregate", f"{agg['pq']:.6f}",
                             f"{agg['sq']:.6f}", f"{agg['rq']:.6f}",
                             "", "", "", ""])
        if iou_result is not None:
            writer.writerow(["miou", "aggregate", "", "", "", "", "", "",
                             f"{iou_result.miou:.6f}"])


def write_plan_csv(path, plan):
    np.savetxt(path, plan, delimiter=",", fmt="%.12g")
