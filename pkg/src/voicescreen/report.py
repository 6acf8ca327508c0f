"""Report rendering for the CLI: CSV tables plus matplotlib figures.

Every report directory gets the delimited data and a figure rendered from
it, so results are both machine-joinable and eyeballable.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first


def write_training_report(
    report_dir: Union[str, Path],
    losses: list[tuple[int, float]],
    holdout_accuracy: float,
) -> list[Path]:
    """metrics.csv + loss_curve.png for one training run."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    metrics_csv = report_dir / "metrics.csv"
    with open(metrics_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows(losses)
        writer.writerow(["holdout_accuracy", holdout_accuracy])

    figure_path = report_dir / "loss_curve.png"
    fig, ax = plt.subplots(figsize=(7, 4))
    if losses:
        steps, values = zip(*losses)
        ax.plot(steps, values, lw=1.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("training loss")
    ax.set_title(f"training loss (held-out accuracy {holdout_accuracy:.3f})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)
    return [metrics_csv, figure_path]


def write_load_report(
    report_dir: Union[str, Path],
    rows: list[dict],
    summary: dict,
) -> list[Path]:
    """requests.csv + summary.csv + latency.png for one load run."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    requests_csv = report_dir / "requests.csv"
    with open(requests_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["request_id", "status", "latency_ms"])
        writer.writeheader()
        writer.writerows(rows)

    summary_csv = report_dir / "summary.csv"
    with open(summary_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(summary))
        writer.writerow([summary[k] for k in summary])

    figure_path = report_dir / "latency.png"
    latencies = [r["latency_ms"] for r in rows if r["latency_ms"] is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    if latencies:
        ax.hist(latencies, bins=min(40, max(5, len(latencies) // 3)), alpha=0.8)
        for key, style in (("p50_ms", "--"), ("p95_ms", ":")):
            value = summary.get(key)
            if value is not None:
                ax.axvline(value, linestyle=style, color="k", label=f"{key}={value:.0f}")
        ax.legend()
    ax.set_xlabel("completion latency (ms)")
    ax.set_ylabel("requests")
    ax.set_title(
        f"{summary.get('completed', 0)}/{summary.get('requested', 0)} completed"
    )
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)
    return [requests_csv, summary_csv, figure_path]
