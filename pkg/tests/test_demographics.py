import math

import mpmath
import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, strategies as st
from scipy import sparse

from spendnet.categories import PurchaseDistributions, purchase_distributions
from spendnet.demographics import afs, community_afs, feature_correlations, pearson
from spendnet.model import InvariantViolation
from spendnet.socioeco import compute_amp, partition_classes

from .conftest import profiles


def make_dist(r, egos=None, mccs=None):
    r = np.asarray(r, dtype=float)
    egos = np.array(egos or [f"e{i:04d}" for i in range(len(r))], dtype=object)
    mccs = np.asarray(mccs if mccs is not None else np.arange(1, r.shape[1] + 1))
    return PurchaseDistributions(egos, mccs, sparse.csr_matrix(r))


def direct_afs(r, feats):
    """Per category: value-group mean r as weight, weighted mean over distinct values."""
    out = {}
    for c in range(r.shape[1]):
        buyers = [u for u in range(r.shape[0]) if r[u, c] > 0]
        if not buyers:
            continue
        row = {"n_purchasers": len(buyers)}
        for f in ("age", "gender", "seg"):
            groups = {}
            for u in buyers:
                v = feats[f][u]
                if not (isinstance(v, float) and math.isnan(v)):
                    groups.setdefault(v, []).append(r[u, c])
            alpha = {v: sum(rs) / len(rs) for v, rs in groups.items()}
            row[f] = sum(a * v for v, a in alpha.items()) / sum(alpha.values())
        out[c + 1] = row
    return out


# AFS

def test_single_purchaser_age():
    t = afs(make_dist([[1.0]]), profiles([("e0000", 30, 1)]), pd.Series({"e0000": 4})).table
    assert t.loc[1, "age"] == 30 and t.loc[1, "gender"] == 1 and t.loc[1, "seg"] == 4


def test_equal_weight_ages_average():
    d = make_dist([[0.5, 0.5], [0.5, 0.5]])
    t = afs(d, profiles([("e0000", 20, 0), ("e0001", 40, 0)]), pd.Series({"e0000": 1, "e0001": 1})).table
    assert t.loc[1, "age"] == 30


def test_weighted_ages_worked_example():
    d = make_dist([[0.1, 0.9], [0.3, 0.7]])
    t = afs(d, profiles([("e0000", 20, 0), ("e0001", 40, 1)]), pd.Series({"e0000": 1, "e0001": 2})).table
    assert t.loc[1, "age"] == pytest.approx((0.1 * 20 + 0.3 * 40) / 0.4, abs=1e-12)
    assert t.loc[1, "age"] == pytest.approx(35, abs=1e-12)


def test_value_groups_are_averaged_before_weighting():
    # two 20-year-olds (r 0.2, 0.4) form one group with alpha 0.3
    d = make_dist([[0.2, 0.8], [0.4, 0.6], [0.3, 0.7]])
    prof = profiles([("e0000", 20, 0), ("e0001", 20, 0), ("e0002", 50, 0)])
    t = afs(d, prof, pd.Series({"e0000": 1, "e0001": 1, "e0002": 1})).table
    assert t.loc[1, "age"] == pytest.approx((0.3 * 20 + 0.3 * 50) / 0.6, abs=1e-12)


def test_all_female_and_all_male():
    d = make_dist([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    prof = profiles([("e0000", 20, 0), ("e0001", 30, 0), ("e0002", 40, 1), ("e0003", 50, 1)])
    t = afs(d, prof, pd.Series(dict.fromkeys(d.egos, 1))).table
    assert t.loc[1, "gender"] == 0 and t.loc[2, "gender"] == 1


def test_category_without_valid_purchasers_flagged():
    d = make_dist([[1.0, 0.0], [0.5, 0.5]])
    # e0001 has no class, so category 2 has no valid purchaser
    res = afs(d, profiles([("e0000", 20, 0), ("e0001", 30, 1)]), pd.Series({"e0000": 1}))
    assert res.flagged == (2,) and list(res.table.index) == [1]


def test_check_rejects_out_of_range_seg():
    res = afs(make_dist([[1.0]]), profiles([("e0000", 30, 1)]), pd.Series({"e0000": 4}))
    with pytest.raises(InvariantViolation, match="SEG"):
        res.check(3)


def test_afs_matches_direct_oracle_on_thousand_egos():
    rng = np.random.default_rng(12)
    n, c = 1000, 25
    spend = rng.random((n, c)) * (rng.random((n, c)) < 0.15)
    spend[spend.sum(axis=1) == 0, 3] = 1.0
    r = spend / spend.sum(axis=1, keepdims=True)
    egos = [f"e{i:04d}" for i in range(n)]
    ages = rng.integers(18, 80, size=n)
    genders = rng.integers(0, 2, size=n)
    seg = rng.integers(1, 10, size=n)
    res = afs(make_dist(r, egos), profiles(list(zip(egos, ages, genders))), pd.Series(seg, index=egos))
    res.check(9)
    oracle = direct_afs(r, {"age": ages.astype(float), "gender": genders.astype(float), "seg": seg.astype(float)})
    assert set(res.table.index) == set(oracle)
    for mcc, row in oracle.items():
        for f in ("age", "gender", "seg"):
            assert abs(res.table.loc[mcc, f] - row[f]) < 1e-12
        assert res.table.loc[mcc, "n_purchasers"] == row["n_purchasers"]


@given(st.integers(0, 10_000))
def test_uniform_r_reduces_to_value_group_mean(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    buys = rng.random(n) < 0.6
    assume(buys.any())
    r = np.column_stack([np.where(buys, 0.5, 0.0), np.where(buys, 0.5, 1.0)])
    egos = [f"e{i:04d}" for i in range(n)]
    ages = rng.integers(18, 30, size=n)
    t = afs(make_dist(r, egos), profiles([(e, a, 0) for e, a in zip(egos, ages)]),
            pd.Series(1, index=egos)).table
    distinct = np.unique(ages[buys])
    assert t.loc[1, "age"] == pytest.approx(distinct.mean(), abs=1e-12)


def test_community_afs_pools_member_categories():
    r = np.array([[0.2, 0.3, 0.5], [0.0, 0.6, 0.4], [0.7, 0.0, 0.3]])
    egos = ["e0000", "e0001", "e0002"]
    prof = profiles([("e0000", 20, 0), ("e0001", 40, 1), ("e0002", 60, 1)])
    classes = pd.Series({"e0000": 1, "e0001": 2, "e0002": 3})
    d = make_dist(r, egos, [10, 20, 30])
    t = community_afs(d, {10: 1, 20: 1, 30: 2}, prof, classes).table
    pooled = np.column_stack([r[:, 0] + r[:, 1], r[:, 2]])
    oracle = direct_afs(pooled, {"age": [20.0, 40.0, 60.0], "gender": [0.0, 1.0, 1.0], "seg": [1.0, 2.0, 3.0]})
    for comm in (1, 2):
        for f in ("age", "gender", "seg"):
            assert t.loc[comm, f] == pytest.approx(oracle[comm][f], abs=1e-12)
    assert t.index.name == "community"


def test_generated_age_wealth_coupling_shows_in_afs(population, taxonomy):
    tx = population.ledger
    classes = partition_classes(compute_amp(tx), 9).as_series()
    table = afs(purchase_distributions(tx, taxonomy, 20), population.profiles, classes).table
    res = pearson(table["age"], table["seg"])
    assert res.r > 0 and res.p < 0.01


# Pearson

def mp_pearson(x, y):
    mpmath.mp.dps = 50
    x = [mpmath.mpf(v) for v in x]
    y = [mpmath.mpf(v) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    r = sxy / mpmath.sqrt(sxx * syy)
    df = n - 2
    if abs(r) >= 1:
        return float(r), 0.0
    t = abs(r) * mpmath.sqrt(df / (1 - r * r))
    # two-sided tail of Student t via the regularised incomplete beta
    p = mpmath.betainc(df / mpmath.mpf(2), mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    return float(r), float(p)


def test_ten_point_fixture_matches_high_precision():
    x = [1.2, 2.3, 2.9, 4.1, 5.5, 6.0, 7.4, 8.8, 9.1, 10.6]
    y = [2.0, 1.7, 3.9, 3.2, 6.1, 5.0, 7.7, 7.1, 9.9, 9.4]
    res = pearson(x, y)
    r, p = mp_pearson(x, y)
    assert abs(res.r - r) < 1e-12
    assert abs(res.p - p) < 1e-12


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=40))
def test_pearson_matches_high_precision_oracle(pairs):
    x, y = map(list, zip(*pairs))
    assume(np.ptp(x) > 1e-6 and np.ptp(y) > 1e-6)
    res = pearson(x, y)
    r, p = mp_pearson(x, y)
    assert res.r == pytest.approx(r, abs=1e-9)
    if abs(r) < 1 - 1e-9:
        assert res.p == pytest.approx(p, abs=1e-9)


def test_perfect_lines():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1).r == 1.0
    assert pearson(x, -x).r == -1.0


def test_zero_variance_is_undefined():
    res = pearson([1, 1, 1, 1], [1, 2, 3, 4])
    assert not res.defined and math.isnan(res.r)


def test_too_short_or_mismatched():
    with pytest.raises(ValueError):
        pearson([1, 2], [1, 2])
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])


@given(
    st.lists(st.floats(-50, 50), min_size=5, max_size=30),
    st.floats(0.01, 100), st.floats(-100, 100), st.floats(0.01, 100), st.floats(-100, 100),
)
def test_pearson_affine_invariance(x, a, b, c, d):
    rng = np.random.default_rng(len(x))
    x = np.array(x)
    y = x * 0.3 + rng.standard_normal(len(x))
    assume(np.std(x) > 1e-3)
    base = pearson(x, y).r
    assert abs(pearson(a * x + b, c * y + d).r - base) < 1e-12


def test_feature_correlations_table():
    t = pd.DataFrame({"age": [20, 30, 40, 50.0], "gender": [0, 1, 0, 1.0], "seg": [1, 2, 3, 5.0]})
    fc = feature_correlations(t)
    assert list(zip(fc["x"], fc["y"])) == [("age", "gender"), ("age", "seg"), ("gender", "seg")]
    assert fc.loc[1, "r"] == pytest.approx(pearson(t["age"], t["seg"]).r)
