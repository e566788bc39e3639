"""Figure rendering for attack reports (CLI `--plot`)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .attacks import AttackReport

__all__ = ["save_outcome_figure"]


def save_outcome_figure(
    report: AttackReport, path: str | os.PathLike[str], *, title: str
) -> None:
    """Render outcome counts and the per-attempt timeline side by side."""
    fig, (ax_bar, ax_seq) = plt.subplots(1, 2, figsize=(9, 3.2), width_ratios=[1, 2])

    counts = [report.accepted_count, report.rejected_count]
    bars = ax_bar.bar(["accepted", "rejected"], counts, color=["#c0392b", "#27ae60"])
    ax_bar.bar_label(bars)
    ax_bar.set_ylabel("attempts")
    ax_bar.set_title("outcomes")

    if report.attempts:
        xs = [a.index for a in report.attempts]
        ys = [1 if a.accepted else 0 for a in report.attempts]
        colors = ["#c0392b" if a.accepted else "#27ae60" for a in report.attempts]
        ax_seq.scatter(xs, ys, c=colors, s=12)
    ax_seq.set_yticks([0, 1], ["rejected", "accepted"])
    ax_seq.set_ylim(-0.5, 1.5)
    ax_seq.set_xlabel("attempt")
    ax_seq.set_title("per-attempt timeline")

    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
