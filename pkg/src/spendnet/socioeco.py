"""Average monthly purchase (AMP) and equal-sum socioeconomic classes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .model import require


@dataclass(frozen=True, eq=False)
class AmpTable:
    """Per-ego AMP in currency units and the number of active months.

    Rows are sorted by ego id.
    """

    egos: np.ndarray
    amp: np.ndarray
    months: np.ndarray
    excluded: int = 0

    def __len__(self):
        return len(self.egos)

    def as_series(self) -> pd.Series:
        return pd.Series(self.amp, index=pd.Index(self.egos, name="ego_id"), name="amp")

    def scaled(self, factor: float) -> "AmpTable":
        return AmpTable(self.egos, self.amp * factor, self.months, self.excluded)

    @classmethod
    def from_values(cls, values, egos=None) -> "AmpTable":
        values = np.asarray(values, dtype=float)
        if egos is None:
            width = len(str(max(len(values) - 1, 0)))
            egos = [f"e{i:0{width}d}" for i in range(len(values))]
        egos = np.asarray(egos, dtype=object)
        order = np.argsort(egos, kind="stable")
        return cls(egos[order], values[order], np.ones(len(values), dtype=np.int64))


def compute_amp(ledger: pd.DataFrame) -> AmpTable:
    """P_u = total spending / number of months with at least one purchase."""
    if ledger.empty:
        raise ValueError("empty ledger")
    grouped = ledger.groupby("ego_id", sort=True)
    total = grouped["cents"].sum()
    months = grouped["month"].nunique()
    positive = total > 0
    amp = total[positive].to_numpy(dtype=float) / 100.0 / months[positive].to_numpy()
    return AmpTable(
        egos=total.index[positive].to_numpy(dtype=object),
        amp=amp,
        months=months[positive].to_numpy(dtype=np.int64),
        excluded=int((~positive).sum()),
    )


def _ascending_order(amp: AmpTable) -> np.ndarray:
    # egos are id-sorted, so a stable sort on AMP breaks ties by ascending id
    return np.argsort(amp.amp, kind="stable")


def cumulative_curve(amp: AmpTable) -> tuple[np.ndarray, np.ndarray]:
    """Normalized cumulative AMP ``C(f)`` against the population fraction ``f``.

    Both arrays start at (0, 0) and end at (1, 1).
    """
    if len(amp) == 0:
        raise ValueError("no egos")
    sorted_amp = amp.amp[_ascending_order(amp)]
    n = len(sorted_amp)
    f = np.arange(n + 1) / n
    c = np.concatenate([[0.0], np.cumsum(sorted_amp)])
    c /= c[-1]
    c[-1] = 1.0
    return f, c


def gini_from_curve(f: np.ndarray, c: np.ndarray) -> float:
    """Gini index as one minus twice the (trapezoidal) area under the curve."""
    return float(1.0 - np.sum(np.diff(f) * (c[1:] + c[:-1])))


@dataclass(frozen=True, eq=False)
class ClassPartition:
    n: int
    egos: np.ndarray          # AMP-ascending order
    amp: np.ndarray           # aligned with ``egos``
    labels: np.ndarray        # class index 1..n aligned with ``egos``

    @property
    def assignment(self) -> dict[str, int]:
        return dict(zip(self.egos.tolist(), self.labels.tolist()))

    def as_series(self) -> pd.Series:
        return pd.Series(self.labels, index=pd.Index(self.egos, name="ego_id"), name="class")

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n + 1)[1:]

    @property
    def sums(self) -> np.ndarray:
        return np.bincount(self.labels, weights=self.amp, minlength=self.n + 1)[1:]

    @property
    def means(self) -> np.ndarray:
        sizes = self.sizes
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sizes > 0, self.sums / np.maximum(sizes, 1), np.nan)

    @property
    def boundaries(self) -> list[tuple[float, float] | None]:
        """(min AMP, max AMP) per class, ``None`` for an empty class."""
        out = []
        for j in range(1, self.n + 1):
            vals = self.amp[self.labels == j]
            out.append((float(vals.min()), float(vals.max())) if len(vals) else None)
        return out

    def classify(self, values) -> np.ndarray:
        """Map AMP values (of egos outside the partition) onto class indices."""
        uppers, classes = [], []
        for j, b in enumerate(self.boundaries, start=1):
            if b is not None:
                uppers.append(b[1])
                classes.append(j)
        pos = np.searchsorted(np.asarray(uppers), np.asarray(values, dtype=float), side="left")
        pos = np.minimum(pos, len(classes) - 1)
        return np.asarray(classes)[pos]

    def check(self) -> None:
        require(len(set(self.egos.tolist())) == len(self.egos), "every ego assigned exactly once")
        require(np.all(np.diff(self.labels) >= 0), "classes are contiguous in AMP order")
        m = self.means
        m = m[~np.isnan(m)]
        require(np.all(np.diff(m) >= 0), "class mean AMP non-decreasing")


def partition_classes(amp: AmpTable, n: int = 9) -> ClassPartition:
    """Split the AMP-sorted population into ``n`` classes of equal total AMP.

    Class ``j`` ends at the first ego whose running AMP sum reaches
    ``j * total / n``; that ego belongs to class ``j``. Ties in AMP are ordered
    by ascending ego id.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > len(amp):
        raise ValueError(f"cannot split {len(amp)} egos into {n} classes")
    order = _ascending_order(amp)
    values = amp.amp[order]
    running = np.cumsum(values)
    total = running[-1]
    targets = np.arange(1, n) * total
    # first index k with n * running[k] >= j * total
    ends = np.searchsorted(running * n, targets, side="left")
    labels = np.ones(len(values), dtype=np.int64)
    for end in ends:
        labels[end + 1 :] += 1
    return ClassPartition(n=n, egos=amp.egos[order], amp=values, labels=labels)
