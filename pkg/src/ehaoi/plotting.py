"""Static figures rendered from sweep CSV files.

Plots read nothing but the CSV, so re-rendering the same file gives the same
bytes.
"""
from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import read_csv  # noqa: E402

METRICS = {
    "peak_aoi_s": "average peak AoI (s)",
    "per_packet_aoi_s": "per-packet AoI (s)",
    "avg_power_w": "average power (W)",
}
AXIS_COLUMN = {"packet_len_bits": "L", "lambda_max": "lambda_max", "n_devices": "N"}
AXIS_LABEL = {"packet_len_bits": "packet length L (bits)",
              "lambda_max": "max update rate (packets/s)",
              "n_devices": "number of devices N"}


def _label(row: dict[str, str]) -> str:
    proto = row["protocol"].upper()
    name = f"{proto} no-sleep" if row["policy"] == "none" else f"{proto}-{row['policy'].upper()}"
    return f"{name} [{row['solver']}]"


def series_from_csv(path: Path, axis: str, metric: str) -> dict[str, tuple[list, list]]:
    """Group one metric by series label; infeasible points come back as NaN."""
    col = AXIS_COLUMN[axis]
    out: dict[str, tuple[list, list]] = defaultdict(lambda: ([], []))
    for row in read_csv(path):
        xs, ys = out[_label(row)]
        xs.append(float(row[col]))
        ys.append(float(row[metric]))
    return dict(sorted(out.items()))


def plot_metric(csv_path: Path, axis: str, metric: str, out_path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=100)
    for label, (xs, ys) in series_from_csv(csv_path, axis, metric).items():
        ls = "--" if "no-sleep" in label else "-"
        ax.plot(xs, ys, ls, marker="o", markersize=3, label=label)
    ax.set_xlabel(AXIS_LABEL[axis])
    ax.set_ylabel(METRICS[metric])
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # no Software/date chunks so identical data gives identical files
    fig.savefig(out_path, format="png", metadata={"Software": None})
    plt.close(fig)
    return out_path


def plot_sweep(csv_path: str | Path, axis: str, out_dir: str | Path) -> list[Path]:
    """One PNG per metric, sweep value on x, one series per combo and solver."""
    if axis not in AXIS_COLUMN:
        raise ValueError(f"nothing to plot for sweep axis {axis!r}")
    csv_path, out_dir = Path(csv_path), Path(out_dir)
    return [plot_metric(csv_path, axis, m, out_dir / f"{axis}_{m}.png") for m in METRICS]


def finite(values) -> list[float]:
    return [v for v in values if not math.isnan(v)]
