from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["system", "utterance_id", "metric", "value"]
MEAN_ROW = "__mean__"


@dataclass
class MetricReport:
    """
    Per-utterance metric values for one or more systems.

    `rows` never contains aggregate rows; aggregates are always derived from it,
    so the CSV form (rows + one `__mean__` row per system x metric) can be
    re-checked by recomputation.
    """

    rows: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=REPORT_COLUMNS))
    skipped: list[dict[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        missing = [c for c in REPORT_COLUMNS if c not in self.rows.columns]
        if missing:
            raise ValueError(f"report rows missing columns: {missing}")
        self.rows = self.rows[REPORT_COLUMNS].reset_index(drop=True)
        self.rows["value"] = self.rows["value"].astype(np.float64)

    @property
    def systems(self) -> list[str]:
        return list(dict.fromkeys(self.rows["system"]))

    @property
    def metrics(self) -> list[str]:
        return list(dict.fromkeys(self.rows["metric"]))

    @property
    def aggregates(self) -> pd.DataFrame:
        """mean / population std / count per (system, metric), in first-seen order."""
        grouped = self.rows.groupby(["system", "metric"], sort=False)["value"]
        agg = grouped.agg(mean="mean", std=lambda v: float(np.std(v.to_numpy())), n="count")
        return agg.reset_index()

    def values(self, system: str, metric: str) -> pd.Series:
        sel = self.rows[(self.rows["system"] == system) & (self.rows["metric"] == metric)]
        return sel.set_index("utterance_id")["value"]

    def mean(self, system: str, metric: str) -> float:
        return float(self.values(system, metric).mean())

    def to_frame(self) -> pd.DataFrame:
        agg = self.aggregates
        means = pd.DataFrame(
            {
                "system": agg["system"],
                "utterance_id": MEAN_ROW,
                "metric": agg["metric"],
                "value": agg["mean"],
            }
        )
        return pd.concat([self.rows, means], ignore_index=True)[REPORT_COLUMNS]

    def write_csv(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(p, index=False)
        return p

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetricReport":
        df = pd.read_csv(path, dtype={"system": str, "utterance_id": str, "metric": str})
        return cls(rows=df[df["utterance_id"] != MEAN_ROW])

    def verify(self) -> None:
        """Recompute aggregates from the CSV form and compare with the stored `__mean__` rows."""
        frame = self.to_frame()
        per_row = frame[frame["utterance_id"] != MEAN_ROW]
        stored = frame[frame["utterance_id"] == MEAN_ROW].set_index(["system", "metric"])["value"]
        recomputed = per_row.groupby(["system", "metric"], sort=False)["value"].mean()
        stored = stored.reindex(recomputed.index)
        if not np.allclose(stored.to_numpy(), recomputed.to_numpy(), rtol=0.0, atol=1e-12, equal_nan=True):
            raise RuntimeError("report aggregates disagree with per-utterance values")

    def render_table(self, precision: int = 3) -> str:
        """Aligned text table: one row per system, one `mean ± std` column per metric."""
        if self.rows.empty:
            return "(no results)"
        agg = self.aggregates
        agg["cell"] = [f"{m:.{precision}f} ± {s:.{precision}f}" for m, s in zip(agg["mean"], agg["std"])]
        table = agg.pivot(index="system", columns="metric", values="cell")
        table = table.reindex(index=self.systems, columns=self.metrics).fillna("-")
        table.columns.name = None
        return table.to_string()

    def merged(self, other: "MetricReport") -> "MetricReport":
        rows = pd.concat([self.rows, other.rows], ignore_index=True)
        return MetricReport(rows=rows, skipped=[*self.skipped, *other.skipped])
