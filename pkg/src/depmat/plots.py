"""Figure rendering for the report path.

Each report writer has a matching figure so a run leaves a picture next to
its delimited output.  Rendering is headless (Agg backend); every function
takes the report object and a target path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def coverage_figure(report, path) -> Path:
    """Per-trial deviations against the certified bound."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    deviations = np.asarray(report.per_trial_deviation)
    bounds = np.asarray(report.per_trial_bound)
    trials = np.arange(len(deviations))

    fig, (ax_scatter, ax_hist) = plt.subplots(1, 2, figsize=(10, 4), dpi=120)
    ax_scatter.scatter(trials, deviations, s=12, alpha=0.7, label="deviation")
    if np.allclose(bounds, bounds[0]):
        ax_scatter.axhline(bounds[0], color="crimson", lw=1.5, label="bound")
    else:
        ax_scatter.plot(trials, bounds, color="crimson", lw=1.0, label="bound (per trial)")
    ax_scatter.set_xlabel("trial")
    ax_scatter.set_ylabel("operator-norm deviation")
    ax_scatter.set_title(
        f"coverage {report.empirical_coverage:.3f} "
        f"(nominal {report.nominal_coverage:.3f}), n={report.n}, p={report.p}"
    )
    ax_scatter.legend(fontsize=8)
    ax_scatter.grid(True, alpha=0.3)

    ax_hist.hist(deviations, bins=min(30, max(5, len(deviations) // 5)), alpha=0.8)
    ax_hist.axvline(float(np.median(bounds)), color="crimson", lw=1.5, label="bound")
    ax_hist.set_xlabel("deviation")
    ax_hist.set_ylabel("trials")
    ax_hist.legend(fontsize=8)
    ax_hist.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def rate_figure(result, path) -> Path:
    """Log-log medians against n with the fitted slope."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ns = np.asarray([n for n, _ in result.rows], dtype=np.float64)
    medians = np.asarray([m for _, m in result.rows])

    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    ax.loglog(ns, medians, "o-", label="median deviation")
    anchor = medians[0] * (ns / ns[0]) ** result.slope
    ax.loglog(ns, anchor, "--", color="gray",
              label=f"slope {result.slope:.3f} ± {result.slope_stderr:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("median operator-norm deviation")
    ax.set_title(f"convergence rate, p={result.p}, {result.trials} trials per n")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def dimension_figure(result, path) -> Path:
    """Median deviation across the dimension grid with the (constant) bound."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ps = [p for p, _ in result.rows]
    medians = [m for _, m in result.rows]

    fig, ax = plt.subplots(figsize=(6, 4), dpi=120)
    ax.plot(ps, medians, "o-", label="median deviation")
    ax.axhline(result.bound_value, color="crimson", lw=1.5,
               label=f"bound {result.bound_value:.4g} (constant in p)")
    ax.set_xlabel("p")
    ax.set_ylabel("median operator-norm deviation")
    ax.set_title(
        f"dimension sweep, n={result.n}, max/min ratio {result.ratio:.3f}"
    )
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
