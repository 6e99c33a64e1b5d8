"""Figure rendering for the report paths.

Each report command writes its delimited output first and then, alongside
it, a PNG rendering of the same data: loss curves and validation accuracy
from the training log, a 2-D projection of the exported embeddings, and a
per-spec summary of the ablation table.  The CSV/JSONL files stay the
canonical outputs; the figures are a convenience view of them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_EMOTION_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:purple")
_DOMAIN_MARKERS = {"source": "o", "target": "^"}


def save_training_curves(records: list[dict], path: str) -> None:
    """Loss components per step and validation accuracy per epoch pair."""
    steps = [r for r in records if "total" in r]
    vals = [r for r in records if "val_accuracy" in r]
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=False)

    ax = axes[0]
    xs = [r["step"] for r in steps]
    for key, label in (
        ("total", "total"),
        ("l_emo", "emotion CE"),
        ("l_aug", "augmentation CE"),
        ("l_cont", "contrastive"),
        ("l_im", "info-max"),
    ):
        series = [(x, r[key]) for x, r in zip(xs, steps) if key in r]
        if series:
            ax.plot([s[0] for s in series], [s[1] for s in series], label=label, linewidth=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.set_title("training losses")

    ax = axes[1]
    if vals:
        pairs = [r["epoch_pair"] for r in vals]
        ax.plot(pairs, [r["val_accuracy"] for r in vals], marker="o", label="val accuracy")
        ax2 = ax.twinx()
        ax2.plot(pairs, [r["current_lr"] for r in vals], color="gray", linestyle="--", label="lr")
        ax2.set_ylabel("learning rate")
        ax2.set_yscale("log")
    ax.set_xlabel("epoch pair")
    ax.set_ylabel("source val accuracy")
    ax.set_title("validation")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _project_2d(vectors: np.ndarray) -> np.ndarray:
    """Project onto the top two principal axes (plain SVD, no extra deps)."""
    centered = vectors - vectors.mean(axis=0, keepdims=True)
    if centered.shape[1] <= 2:
        out = np.zeros((centered.shape[0], 2))
        out[:, : centered.shape[1]] = centered
        return out
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def save_latent_scatter(rows: list[tuple[np.ndarray, int, str]], path: str) -> None:
    """2-D scatter of embeddings, colored by emotion, marker per domain."""
    vectors = np.stack([r[0] for r in rows])
    proj = _project_2d(vectors)
    fig, ax = plt.subplots(figsize=(6, 5))
    seen = set()
    for (_, emotion, domain), (x, y) in zip(rows, proj):
        key = (emotion, domain)
        label = f"emotion {emotion} / {domain}" if key not in seen else None
        seen.add(key)
        ax.scatter(
            x,
            y,
            c=_EMOTION_COLORS[emotion % len(_EMOTION_COLORS)],
            marker=_DOMAIN_MARKERS.get(domain, "s"),
            s=18,
            alpha=0.75,
            label=label,
        )
    ax.set_xlabel("principal axis 1")
    ax.set_ylabel("principal axis 2")
    ax.set_title("pooled embeddings")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_chart(rows: list[dict], path: str) -> None:
    """Mean UAR per ablation spec with the per-seed points overlaid."""
    order: list[str] = []
    by_spec: dict[str, list[float]] = {}
    for r in rows:
        if r["spec"] not in by_spec:
            order.append(r["spec"])
            by_spec[r["spec"]] = []
        by_spec[r["spec"]].append(r["uar"])
    means = [float(np.mean(by_spec[name])) for name in order]
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(order), 4.5))
    xs = np.arange(len(order))
    ax.bar(xs, means, width=0.6, color="tab:blue", alpha=0.7)
    for i, name in enumerate(order):
        vals = by_spec[name]
        ax.scatter(np.full(len(vals), xs[i]), vals, color="black", s=12, zorder=3)
    ax.set_xticks(xs)
    ax.set_xticklabels(order, rotation=20, ha="right")
    ax.set_ylabel("target-test UAR")
    ax.set_ylim(0.0, 1.0)
    ax.axhline(0.5, color="gray", linestyle=":", linewidth=0.8)
    ax.set_title("loss ablations")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
