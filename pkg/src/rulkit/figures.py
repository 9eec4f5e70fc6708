"""Render report figures to files next to the CSV outputs."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_loss_curves(train_losses, val_losses, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(train_losses) + 1)
    ax.plot(epochs, train_losses, label="train")
    ax.plot(epochs, val_losses, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (scaled target)")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_predictions(report, path):
    """Predicted vs true RUL per test unit, sorted by true RUL."""
    fig, ax = plt.subplots(figsize=(7, 4))
    order = report.truths.argsort()
    ax.plot(report.truths[order], label="true RUL", lw=1.5)
    ax.plot(report.predictions[order], label="predicted RUL", lw=1.0, alpha=0.8)
    ax.set_xlabel("test unit (sorted by true RUL)")
    ax.set_ylabel("RUL (cycles)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_error_distribution(report, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report.errors, bins=30, edgecolor="black", alpha=0.8)
    ax.axvline(0.0, color="red", ls="--", lw=1)
    ax.set_xlabel("prediction error (cycles)")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_comparison(rows, path, metric="mean_score"):
    fig, ax = plt.subplots(figsize=(6, 4))
    names = [r["variant"] for r in rows]
    values = [r[metric] for r in rows]
    ax.bar(names, values)
    ax.set_ylabel(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_eval_figures(report, out_dir):
    paths = [
        plot_predictions(report, os.path.join(out_dir, "predictions.png")),
        plot_error_distribution(report, os.path.join(out_dir, "error_distribution.png")),
    ]
    return paths
