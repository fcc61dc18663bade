"""Report figures. Uses the non-interactive Agg backend; every function writes a file."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# PNG metadata otherwise embeds the matplotlib version
_METADATA = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)
    return path


def parity_plot(report, path, title=""):
    """Held-out prediction against observed value, with the identity line."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    y, yhat = report.y, report.yhat
    lo = min(y.min(), yhat.min())
    hi = max(y.max(), yhat.max())
    pad = 0.05 * (hi - lo or 1.0)
    ax.plot([lo - pad, hi + pad], [lo - pad, hi + pad], color="0.6", lw=1, zorder=1)
    ax.scatter(y, yhat, s=18, color="tab:blue", edgecolor="none", zorder=2)
    ax.set_xlim(lo - pad, hi + pad)
    ax.set_ylim(lo - pad, hi + pad)
    ax.set_aspect("equal")
    ax.set_xlabel("observed (kg)")
    ax.set_ylabel("LOOCV predicted (kg)")
    ax.set_title(title)
    ax.text(0.04, 0.96,
            f"$R^2$ = {report.r2:.3f}\nRMSE = {report.rmse:.3f}\nCVe = {report.cve_percent:.2f}%",
            transform=ax.transAxes, va="top", fontsize=9)
    return _save(fig, path)


def residual_plot(report, path, title=""):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    resid = report.yhat - report.y
    ax.axhline(0.0, color="0.6", lw=1)
    ax.scatter(report.y, resid, s=16, color="tab:red", edgecolor="none")
    ax.set_xlabel("observed (kg)")
    ax.set_ylabel("residual (kg)")
    ax.set_title(title)
    return _save(fig, path)


def signature_plot(signature, path, labels=None):
    """Signature rows as an image (rows x vertices), vertices sorted by the first row."""
    data = np.asarray(signature)
    order = np.argsort(data[0], kind="stable")
    fig, ax = plt.subplots(figsize=(6, 0.5 * len(data) + 1.2))
    im = ax.imshow(np.log10(data[:, order] + 1e-300), aspect="auto", interpolation="nearest", cmap="viridis")
    ax.set_yticks(range(len(data)))
    if labels is not None:
        ax.set_yticklabels(labels, fontsize=7)
    ax.set_xlabel("vertex (sorted)")
    fig.colorbar(im, ax=ax, label="log10 value")
    return _save(fig, path)
