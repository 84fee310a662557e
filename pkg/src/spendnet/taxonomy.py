"""Merchant category taxonomy and the mcc -> purchase category group mapping."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

COLUMNS = ("mcc", "name", "pcg_id", "pcg_name", "is_cash")


class TaxonomyError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class MerchantCategory:
    mcc: int
    name: str
    pcg: str | None = None

    def __post_init__(self):
        if not self.name:
            raise TaxonomyError(f"mcc {self.mcc}: empty name")


@dataclass(frozen=True)
class CategoryTaxonomy:
    """Immutable set of merchant categories grouped into purchase category groups.

    ``cash_group`` is the group holding cash retrievals and money transfers;
    it is analysed separately from every other group downstream.
    """

    categories: tuple[MerchantCategory, ...]
    pcg_names: Mapping[str, str]
    cash_group: str
    _by_mcc: dict[int, MerchantCategory] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.categories:
            raise TaxonomyError("empty taxonomy")
        by_mcc: dict[int, MerchantCategory] = {}
        for cat in self.categories:
            if cat.mcc in by_mcc:
                raise TaxonomyError(f"duplicate mcc {cat.mcc}")
            if cat.pcg is not None and cat.pcg not in self.pcg_names:
                raise TaxonomyError(f"mcc {cat.mcc}: unknown pcg id {cat.pcg!r}")
            by_mcc[cat.mcc] = cat
        if self.cash_group not in self.pcg_names:
            raise TaxonomyError(f"unknown cash group {self.cash_group!r}")
        object.__setattr__(self, "categories", tuple(sorted(self.categories)))
        object.__setattr__(self, "pcg_names", dict(sorted(self.pcg_names.items())))
        object.__setattr__(self, "_by_mcc", by_mcc)

    def __contains__(self, mcc: int) -> bool:
        return mcc in self._by_mcc

    def __len__(self) -> int:
        return len(self.categories)

    def category(self, mcc: int) -> MerchantCategory | None:
        return self._by_mcc.get(mcc)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(self.pcg_names)

    @property
    def non_cash(self) -> tuple[MerchantCategory, ...]:
        return tuple(c for c in self.categories if c.pcg != self.cash_group)

    @property
    def cash_mccs(self) -> frozenset[int]:
        return frozenset(c.mcc for c in self.categories if c.pcg == self.cash_group)

    def mccs_in(self, pcg: str) -> tuple[int, ...]:
        return tuple(c.mcc for c in self.categories if c.pcg == pcg)

    def group_map(self) -> dict[int, str]:
        """mcc -> pcg for every category that has a group."""
        return {c.mcc: c.pcg for c in self.categories if c.pcg is not None}


def pcg_of(taxonomy: CategoryTaxonomy, mcc: int) -> str | None:
    cat = taxonomy.category(mcc)
    return None if cat is None else cat.pcg


def _parse_bool(text: str, line: int) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y"):
        return True
    if t in ("0", "false", "no", "n", ""):
        return False
    raise TaxonomyError(f"line {line}: bad is_cash value {text!r}")


def parse_taxonomy(rows: Iterable[Mapping[str, str]]) -> CategoryTaxonomy:
    categories: list[MerchantCategory] = []
    names: dict[str, str] = {}
    cash_groups: set[str] = set()
    seen: set[int] = set()
    non_cash_groups: set[str] = set()
    for line, row in enumerate(rows, start=2):
        try:
            mcc = int(row["mcc"])
        except (KeyError, TypeError, ValueError):
            raise TaxonomyError(f"line {line}: bad mcc {row.get('mcc')!r}") from None
        if mcc in seen:
            raise TaxonomyError(f"duplicate mcc {mcc}")
        seen.add(mcc)
        pcg = (row.get("pcg_id") or "").strip() or None
        pcg_name = (row.get("pcg_name") or "").strip()
        if pcg is not None and pcg_name:
            if names.setdefault(pcg, pcg_name) != pcg_name:
                raise TaxonomyError(f"pcg {pcg!r} has conflicting names")
        if _parse_bool(row.get("is_cash") or "", line):
            if pcg is None:
                raise TaxonomyError(f"mcc {mcc}: cash category without a group")
            cash_groups.add(pcg)
        elif pcg is not None:
            non_cash_groups.add(pcg)
        categories.append(MerchantCategory(mcc, (row.get("name") or "").strip(), pcg))
    if not categories:
        raise TaxonomyError("empty taxonomy")
    for cat in categories:
        if cat.pcg is not None and cat.pcg not in names:
            raise TaxonomyError(f"mcc {cat.mcc}: unknown pcg id {cat.pcg!r}")
    if len(cash_groups) != 1:
        raise TaxonomyError(f"expected exactly one cash group, found {sorted(cash_groups)}")
    (cash,) = cash_groups
    if cash in non_cash_groups:
        raise TaxonomyError(f"group {cash!r} mixes cash and non-cash categories")
    return CategoryTaxonomy(tuple(categories), names, cash)


def load_taxonomy(path: str | Path | None = None) -> CategoryTaxonomy:
    """Read a taxonomy CSV; ``None`` loads the bundled default."""
    if path is None:
        ref = resources.files("spendnet") / "data" / "taxonomy.csv"
        with ref.open("r", encoding="utf-8", newline="") as fh:
            return parse_taxonomy(csv.DictReader(fh))
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise TaxonomyError(f"{path}: missing columns {sorted(missing)}")
        return parse_taxonomy(reader)


def save_taxonomy(taxonomy: CategoryTaxonomy, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        w.writerow(COLUMNS)
        for cat in taxonomy.categories:
            w.writerow([
                cat.mcc,
                cat.name,
                cat.pcg or "",
                taxonomy.pcg_names.get(cat.pcg, "") if cat.pcg else "",
                int(cat.pcg == taxonomy.cash_group),
            ])
