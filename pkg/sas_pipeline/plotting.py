"""Optional PDF of accuracy against the number of aggregation steps."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd
from matplotlib.ticker import MaxNLocator


def make_k_curve_pdf(curve: pd.DataFrame, out_pdf: Path, title: str = "") -> Path:
    """Mean accuracy over seeds per split; k = 0 is the base classifier."""
    out_pdf = Path(out_pdf)
    out_pdf.parent.mkdir(parents=True, exist_ok=True)
    means = curve.groupby("k", sort=True).mean(numeric_only=True)

    fig, ax = plt.subplots(figsize=(8.5, 5))
    for split in ("train", "val", "test"):
        col = f"{split}_accuracy"
        if col in means and means[col].notna().any():
            ax.plot(means.index, means[col], marker="o", ms=3, label=split)
    ax.set_title(title)
    ax.set_xlabel("aggregation steps k")
    ax.set_ylabel("accuracy")
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.grid(True, linestyle="--", alpha=.5)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_pdf)
    plt.close(fig)
    return out_pdf
