import logging
from pathlib import Path
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from app.importance.schemas import ImportanceReport

# Identical inputs must give identical SVG bytes.
plt.rcParams["svg.hashsalt"] = "salescast"
plt.rcParams["svg.fonttype"] = "none"
plt.rcParams["path.simplify"] = False

SVG_METADATA = {"Date": None}


class Reports:
    @classmethod
    def save(cls, fig, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        logging.debug(f"Wrote figure {path}")
        return path

    @classmethod
    def heatmap(cls, corr: pd.DataFrame, path: Path, title: str) -> Path:
        size = max(4.0, 0.35 * len(corr))
        fig, ax = plt.subplots(figsize=(size + 1.5, size))
        image = ax.imshow(corr.to_numpy(), vmin=0, vmax=1, cmap="viridis")
        ax.set_xticks(range(len(corr)), corr.columns, rotation=90, fontsize=7)
        ax.set_yticks(range(len(corr)), corr.index, fontsize=7)
        ax.set_title(title)
        fig.colorbar(image, ax=ax, label="|r|")
        fig.tight_layout()
        return cls.save(fig, path)

    @classmethod
    def mape_curve(cls, mapes, M: int, path: Path, title: str = "") -> Path:
        mapes = np.asarray(mapes, dtype=float)
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(np.arange(1, mapes.size + 1), mapes, marker=".", linewidth=1)
        ax.axvline(M + 0.5, color="tab:red", linestyle="--", label=f"M = {M}")
        ax.set_xlabel("model rank")
        ax.set_ylabel("validation MAPE (%)")
        ax.set_title(title or "Sorted validation MAPE")
        ax.legend()
        fig.tight_layout()
        return cls.save(fig, path)

    @classmethod
    def mape_by_lead(cls, curves: pd.DataFrame, lob: str, path: Path) -> Path:
        fig, ax = plt.subplots(figsize=(7, 4))
        for method, rows in curves[curves["lob"] == lob].groupby("method", sort=True):
            ax.plot(rows["lead_time"], rows["mape"], marker="o", label=method)
        ax.set_xlabel("lead time (weeks)")
        ax.set_ylabel("average test MAPE (%)")
        ax.set_title(f"{lob}: MAPE by lead time")
        ax.legend()
        fig.tight_layout()
        return cls.save(fig, path)

    @classmethod
    def importance_bars(cls, report: ImportanceReport, k: int, path: Path) -> Path:
        top = report.variables[:k][::-1]
        fig, ax = plt.subplots(figsize=(7, 0.5 * len(top) + 1.5))
        ax.barh(
            [v.variable for v in top],
            [v.mean_delta for v in top],
            xerr=[v.std for v in top],
            color="tab:blue",
        )
        ax.set_xlabel(f"{report.loss} increase (percentage points)")
        ax.set_title(f"Top {len(top)} variables, ensemble {report.ensemble_id}")
        fig.tight_layout()
        return cls.save(fig, path)

    @classmethod
    def yoy_comparison(cls, frame: pd.DataFrame, path: Path, title: str) -> Path:
        """
        Line chart of z-scored quarterly series sharing a quarter_seq index,
        one line per column.
        """
        fig, ax = plt.subplots(figsize=(8, 4))
        for column in frame.columns:
            ax.plot(frame.index, frame[column], marker="o", label=column)
        ax.axhline(0.0, color="grey", linewidth=0.5)
        ax.set_xlabel("quarter")
        ax.set_ylabel("z-score")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        return cls.save(fig, path)

    @classmethod
    def rank_table(cls, counts: pd.DataFrame) -> pd.DataFrame:
        """Rank counts as "all (short, long)" cells, one row per lob and method."""
        cells = counts.assign(
            cell=counts["all"].astype(str)
            + " ("
            + counts["short"].astype(str)
            + ", "
            + counts["long"].astype(str)
            + ")"
        )
        table = cells.pivot(index=["lob", "method"], columns="rank", values="cell")
        table.columns = [f"rank {r}" for r in table.columns]
        return table.reset_index()

    @classmethod
    def rank_table_text(cls, counts: pd.DataFrame) -> str:
        table = cls.rank_table(counts)
        return table.to_string(index=False) + "\n"
