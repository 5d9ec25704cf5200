"""SVG line plots of a run's metrics series."""

import logging
from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt and no date stamp keep SVG output identical across renders.
SVG_RC = {"svg.hashsalt": "skyfog", "svg.fonttype": "none"}


def per_second(frame: pd.DataFrame, column: str) -> pd.Series:
    """A per-TTI count as a rate over a trailing one-second window."""
    if len(frame) < 2:
        return pd.Series([0.0] * len(frame), index=frame.index)
    tti = float(frame["time"].iloc[1] - frame["time"].iloc[0])
    window = max(1, int(round(1.0 / tti)))
    return frame[column].rolling(window, min_periods=1).sum() / (window * tti)


def _line_plot(x: pd.Series, series: dict, ylabel: str, title: str, path: Path) -> Path:
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for label, values in series.items():
            ax.plot(x, values, label=label, linewidth=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def render_plots(metrics_csv: Union[str, Path], out_dir: Union[str, Path]) -> List[Path]:
    """Render latency, success-ratio, and transaction-rate plots from `metrics.csv`.

    Args:
        metrics_csv: Per-TTI metrics written by a run.
        out_dir: Directory for the SVG files.

    Returns:
        Paths of the written files.
    """
    frame = pd.read_csv(metrics_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    time = frame["time"]
    written = [
        _line_plot(time, {"mean latency": frame["mean_latency"]}, "seconds", "Mean latency of completed tasks", out / "latency.svg"),
        _line_plot(time, {"success ratio": frame["success_ratio"]}, "completed / finished", "Success ratio", out / "success_ratio.svg"),
        _line_plot(
            time,
            {
                "certified tx/s": per_second(frame, "tx_count"),
                "completions/s": per_second(frame, "completions"),
            },
            "per second",
            "Ledger throughput",
            out / "tx_rate.svg",
        ),
    ]
    logger.debug("Wrote %d plot(s) to %s", len(written), out)
    return written
