import csv

import pytest
from hypothesis import given, strategies as st

from spendnet.taxonomy import (
    CategoryTaxonomy,
    MerchantCategory,
    TaxonomyError,
    load_taxonomy,
    parse_taxonomy,
    pcg_of,
    save_taxonomy,
)


def test_bundled_taxonomy_has_271_non_cash_categories(taxonomy):
    assert len(taxonomy.non_cash) == 271


def test_cash_code_maps_to_cash_group(taxonomy):
    assert pcg_of(taxonomy, 24) == taxonomy.cash_group
    assert 24 in taxonomy.cash_mccs


def test_unknown_code_is_absent(taxonomy):
    assert pcg_of(taxonomy, 99999) is None


def test_supermarkets_read_back_from_bundled_file(taxonomy):
    # frozen from the bundled mapping file
    assert pcg_of(taxonomy, 5411) == "retail"
    assert taxonomy.category(5411).name == "Supermarkets"


def test_seventeen_groups_with_exactly_one_cash_group(taxonomy):
    non_empty = [g for g in taxonomy.groups if taxonomy.mccs_in(g)]
    assert len(non_empty) >= 17
    assert taxonomy.cash_group == "cash"


def test_empty_taxonomy_rejected():
    with pytest.raises(TaxonomyError, match="empty taxonomy"):
        parse_taxonomy([])


def test_duplicate_code_rejected_with_offending_code():
    rows = [
        {"mcc": "24", "name": "Cash", "pcg_id": "cash", "pcg_name": "Cash", "is_cash": "1"},
        {"mcc": "742", "name": "Veterinary Serv.", "pcg_id": "professional", "pcg_name": "Prof", "is_cash": "0"},
        {"mcc": "742", "name": "Veterinary Serv.", "pcg_id": "professional", "pcg_name": "Prof", "is_cash": "0"},
    ]
    with pytest.raises(TaxonomyError, match="742"):
        parse_taxonomy(rows)


def test_unknown_group_rejected():
    with pytest.raises(TaxonomyError, match="unknown pcg"):
        CategoryTaxonomy((MerchantCategory(1, "x", "nope"),), {"cash": "Cash"}, "cash")


def test_missing_columns_rejected(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("mcc,name\n1,x\n")
    with pytest.raises(TaxonomyError, match="missing columns"):
        load_taxonomy(p)


def test_bundled_round_trip(tmp_path, taxonomy):
    p = tmp_path / "t.csv"
    save_taxonomy(taxonomy, p)
    assert load_taxonomy(p) == taxonomy


names = st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), min_size=1, max_size=12).map(str.strip).filter(bool)


@given(
    codes=st.lists(st.integers(1, 99_999), min_size=1, max_size=30, unique=True),
    groups=st.lists(st.sampled_from(["a", "b", "c", None]), min_size=30, max_size=30),
    label=names,
)
def test_round_trip_property(tmp_path_factory, codes, groups, label):
    cats = [MerchantCategory(0, "cash", "cash")]
    cats += [MerchantCategory(c, f"{label} {c}", groups[i]) for i, c in enumerate(codes)]
    labels = {"cash": "Cash", "a": "A", "b": "B, with comma", "c": 'C "q"'}
    # the file holds one row per category, so only referenced groups survive
    used = {c.pcg for c in cats if c.pcg is not None}
    tax = CategoryTaxonomy(tuple(cats), {g: n for g, n in labels.items() if g in used}, "cash")
    p = tmp_path_factory.mktemp("tax") / "t.csv"
    save_taxonomy(tax, p)
    assert load_taxonomy(p) == tax


def test_bundled_file_columns(taxonomy):
    from importlib import resources

    with (resources.files("spendnet") / "data" / "taxonomy.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header == ["mcc", "name", "pcg_id", "pcg_name", "is_cash"]
