"""Figure rendering for the report path.

Every figure is written straight to a file with fixed size, dpi, and
stripped PNG metadata, so reruns of the same scenario produce byte-identical
images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def _step_xy(hist):
    edges = hist.edges
    density = hist.density()
    return np.repeat(edges, 2), np.concatenate([[0.0], np.repeat(density, 2), [0.0]])


def spot_figure(path, histograms: dict, overlay=None, title: str = "") -> None:
    """Spot-shape panel: step histograms per conditioning, optional analytic
    overlay curve (xs, density)."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    colors = {"all": "0.25", "+1": "tab:blue", "-1": "tab:red"}
    for name, hist in histograms.items():
        xs, ys = _step_xy(hist)
        ax.plot(xs, ys, label=f"outcome {name}" if name != "all" else "all outcomes",
                color=colors.get(name, None), lw=1.2)
    if overlay is not None:
        xs, ys = overlay
        ax.plot(xs, ys, "k--", lw=1.0, label="predicted")
    ax.set_xlabel("plate position x")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper center", fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def bell_curve_figure(path, dots, estimates, errors, exact=None) -> None:
    """Correlator sweep against the setting dot product, with error bars."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(dots, estimates, yerr=3.0 * np.asarray(errors), fmt="o", ms=3,
                lw=0.8, capsize=2, label="Monte Carlo (3 SE bars)")
    if exact is not None:
        ax.plot(dots, exact, "k-", lw=1.0, label="closed form")
    ax.set_xlabel("a . b")
    ax.set_ylabel("correlator")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def signal_figure(path, labels, rate_divs, rate_ses, shape_divs, shape_ses) -> None:
    """Per-probe divergences of the two wing-1 observables, with 3 SE bars."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    ax.errorbar(x - 0.08, rate_divs, yerr=3.0 * np.asarray(rate_ses), fmt="s",
                ms=4, lw=0, elinewidth=1, capsize=3, label="outcome rate")
    ax.errorbar(x + 0.08, shape_divs, yerr=3.0 * np.asarray(shape_ses), fmt="o",
                ms=4, lw=0, elinewidth=1, capsize=3, label="spot shape")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_xlabel("probe remote setting")
    ax.set_ylabel("TV divergence from baseline")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
