import random

import networkx as nx
import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from spendnet.ingestion import (
    DirectedEventGraph,
    IngestError,
    InteractionEvent,
    ParseStats,
    filter_active,
    join_datasets,
    largest_connected_component,
    parse_interactions,
    prune_inactive,
    read_profiles,
    read_transactions,
    undirect,
)
from spendnet.model import InvariantViolation, SocialGraph

from .conftest import ledger, profiles

HEADER = "caller_id,callee_id,timestamp,kind,duration\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def digraph(pairs, nodes=()):
    return DirectedEventGraph.from_pair_counts({p: 1 for p in pairs}, nodes=nodes)


def naive_prune(nodes, pairs):
    """Repeated full scans until no node lacks an in- or out-edge."""
    alive, edges = set(nodes), set(pairs)
    while True:
        outs = {a for a, b in edges}
        ins = {b for a, b in edges}
        dead = {v for v in alive if v not in outs or v not in ins}
        if not dead:
            return alive
        alive -= dead
        edges = {(a, b) for a, b in edges if a in alive and b in alive}


# parsing

def test_three_valid_rows(tmp_path):
    p = write(tmp_path, "i.csv", HEADER + "a,b,1,call,5\nb,a,2,sms,0\na,c,3,call,0\n")
    assert len(list(parse_interactions(p))) == 3


def test_self_interaction_skipped_and_counted(tmp_path):
    p = write(tmp_path, "i.csv", HEADER + "a,a,1,call,5\na,b,2,call,1\n")
    stats = ParseStats()
    events = list(parse_interactions(p, stats))
    assert [(e.caller, e.callee) for e in events] == [("a", "b")]
    assert stats.self_interactions == 1


def test_thousand_rows_five_malformed(tmp_path):
    rng = random.Random(7)
    bad_rows = {17, 230, 499, 640, 999}
    bad_kinds = ["a,b,notatime,call,1", "a,b,1,fax,1", "a,,1,call,1", "a,b,1,call,-4", "a,b"]
    lines = []
    for i in range(1000):
        if i in bad_rows:
            lines.append(bad_kinds[len(lines) % 5])
        else:
            lines.append(f"u{rng.randrange(50)},v{rng.randrange(50)},{i},call,{rng.randrange(100)}")
    p = write(tmp_path, "i.csv", HEADER + "\n".join(lines) + "\n")
    stats = ParseStats()
    events = list(parse_interactions(p, stats))
    assert len(events) == 995
    assert stats.malformed == 5


def test_mostly_malformed_file_is_fatal(tmp_path):
    p = write(tmp_path, "i.csv", HEADER + "a,b,x,call,1\n" * 5 + "a,b,1,call,1\n" * 5)
    with pytest.raises(IngestError, match="5 of 10"):
        list(parse_interactions(p))


def test_wrong_header_is_fatal(tmp_path):
    p = write(tmp_path, "i.csv", "from,to\n")
    with pytest.raises(IngestError, match="expected header"):
        list(parse_interactions(p))


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(IngestError):
        list(parse_interactions(tmp_path / "missing.csv"))


def test_transactions_parse_to_cents(tmp_path):
    filler = "z,2015-03,1,1\n" * 10
    p = write(tmp_path, "t.csv", "ego_id,month,amount,mcc\nb,2015-02,1.5,5411\na,2015-01,12.34,24\nc,2015-13,1,1\n" + filler)
    stats = ParseStats()
    tx = read_transactions(p, stats)
    tx = tx[tx["ego_id"] != "z"]
    assert tx.to_dict("list") == {
        "ego_id": ["a", "b"], "month": ["2015-01", "2015-02"], "cents": [1234, 150], "mcc": [24, 5411]
    }
    assert stats.malformed == 1


def test_profiles_gender_encoding(tmp_path):
    p = write(tmp_path, "p.csv", "ego_id,age,gender,zip\na,30,F,1000\nb,40,M,\nc,50,,2000\n")
    df = read_profiles(p)
    assert df["gender"].tolist()[:2] == [0.0, 1.0]
    assert np.isnan(df.loc["c", "gender"])


# pruning

def test_chain_prunes_to_empty():
    g = prune_inactive(digraph([("A", "B"), ("B", "C")]))
    assert g.nodes == ()


def test_two_cycle_unchanged():
    g = prune_inactive(digraph([("A", "B"), ("B", "A")]))
    assert g.nodes == ("A", "B")


def random_digraph(seed, n=50, p=0.05):
    rng = random.Random(seed)
    nodes = [f"n{i:02d}" for i in range(n)]
    pairs = [(a, b) for a in nodes for b in nodes if a != b and rng.random() < p]
    return nodes, pairs


@pytest.mark.parametrize("seed", range(10))
def test_prune_matches_repeated_scan_oracle(seed):
    nodes, pairs = random_digraph(seed)
    got = prune_inactive(digraph(pairs, nodes))
    assert set(got.nodes) == naive_prune(nodes, pairs)
    assert (got.in_degree() > 0).all() and (got.out_degree() > 0).all()


edges_strategy = st.lists(
    st.tuples(st.integers(0, 14), st.integers(0, 14)).filter(lambda e: e[0] != e[1]).map(lambda e: (f"v{e[0]:02d}", f"v{e[1]:02d}")),
    max_size=60,
    unique=True,
)


@given(edges_strategy)
def test_prune_property_oracle_and_idempotent(pairs):
    nodes = sorted({v for e in pairs for v in e})
    once = prune_inactive(digraph(pairs, nodes))
    assert set(once.nodes) == naive_prune(nodes, pairs)
    twice = prune_inactive(once)
    assert twice.nodes == once.nodes
    assert np.array_equal(twice.src, once.src) and np.array_equal(twice.dst, once.dst)


@given(edges_strategy, st.randoms(use_true_random=False))
def test_prune_order_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    events = [InteractionEvent(a, b, 0, "sms", 0) for a, b in shuffled]
    a = prune_inactive(DirectedEventGraph.from_events(events))
    b = prune_inactive(digraph(pairs))
    assert a.nodes == b.nodes


# undirect and components

def test_reciprocal_pair_is_one_edge():
    assert undirect(digraph([("A", "B"), ("B", "A")])).edge_ids() == [("A", "B")]


def test_one_way_pair_is_one_edge():
    assert undirect(digraph([("A", "B")])).edge_ids() == [("A", "B")]


def test_seven_events_over_three_pairs():
    events = [("a", "b"), ("b", "a"), ("a", "b"), ("b", "c"), ("c", "b"), ("c", "a"), ("a", "c")]
    g = DirectedEventGraph.from_events(InteractionEvent(x, y, i, "call", 1) for i, (x, y) in enumerate(events))
    assert g.n_events == 7
    assert undirect(g).n_edges == 3


@given(edges_strategy)
def test_undirect_never_adds_neighbours(pairs):
    d = digraph(pairs)
    u = undirect(d)
    assert u.n_edges <= len(d.src)
    for a, b in u.edge_ids():
        assert (a, b) in pairs or (b, a) in pairs


def test_largest_component_picked():
    g = SocialGraph.from_pairs("abcdefgh", [("a", "b"), ("b", "c"), ("c", "d"), ("d", "e"), ("f", "g"), ("g", "h")])
    assert largest_connected_component(g).nodes == tuple("abcde")


def test_connected_graph_is_its_own_component():
    g = SocialGraph.from_pairs("abc", [("a", "b"), ("b", "c")])
    assert largest_connected_component(g).edge_ids() == g.edge_ids()


def test_equal_components_tie_goes_to_smallest_id():
    ids = [f"{i}" for i in range(1, 9)]
    g = SocialGraph.from_pairs(ids, [("5", "6"), ("6", "7"), ("7", "8"), ("1", "2"), ("2", "3"), ("3", "4")])
    assert largest_connected_component(g).nodes == ("1", "2", "3", "4")


def test_empty_graph_component():
    g = SocialGraph((), np.zeros((0, 2)))
    assert largest_connected_component(g).n_nodes == 0


# activity filter

def test_filter_active_examples():
    tx = ledger([("one", "2015-01", 100, 5411), ("one", "2015-01", 100, 5411)]
                + [("eight", f"2015-0{m}", 100, 5411) for m in range(1, 9)])
    assert set(filter_active(tx, 2)["ego_id"]) == {"eight"}


def test_filter_active_matches_recount():
    rng = np.random.default_rng(5)
    rows, expected = [], set()
    for i in range(100):
        months = rng.choice(12, size=rng.integers(1, 6), replace=False)
        if len(months) >= 3:
            expected.add(f"e{i}")
        for m in months:
            for _ in range(rng.integers(1, 4)):
                rows.append((f"e{i}", f"2015-{m + 1:02d}", int(rng.integers(1, 1000)), 5411))
    assert set(filter_active(ledger(rows), 3)["ego_id"]) == expected


# join

def test_disjoint_ids_fail():
    g = SocialGraph.from_pairs("ab", [("a", "b")])
    with pytest.raises(IngestError, match="no ids shared"):
        join_datasets(g, profiles([("x", 30, 0)]), ledger([("x", "2015-01", 1, 5411)]))


def test_identical_ids_unchanged():
    g = SocialGraph.from_pairs("abc", [("a", "b"), ("b", "c")])
    tx = ledger([(v, "2015-01", 10, 5411) for v in "abc"])
    j = join_datasets(g, profiles([(v, 30, 1) for v in "abc"]), tx)
    assert j.graph.edge_ids() == g.edge_ids()
    j.check()


def test_join_matches_intersection_lcc_oracle():
    rng = np.random.default_rng(11)
    ids = [f"u{i:04d}" for i in range(1000)]
    gx = nx.gnm_random_graph(1000, 1500, seed=11)
    graph = SocialGraph.from_pairs(ids, [(ids[a], ids[b]) for a, b in gx.edges])
    unmatched = set(rng.choice(ids, size=100, replace=False).tolist())
    bank = [v for v in ids if v not in unmatched]
    prof = profiles([(v, 40, 0) for v in bank[::2]] + [(v, 40, 1) for v in bank[1::2]])
    tx = ledger([(v, "2015-01", 100, 5411) for v in bank])
    j = join_datasets(graph, prof, tx)

    h = nx.relabel_nodes(gx, dict(enumerate(ids))).subgraph(bank)
    comps = sorted(nx.connected_components(h), key=lambda c: (-len(c), min(c)))
    assert set(j.graph.nodes) == comps[0]
    assert j.graph.n_edges == h.subgraph(comps[0]).number_of_edges()
    j.check()


def test_join_drops_zero_spenders_and_profileless():
    g = SocialGraph.from_pairs("abcd", [("a", "b"), ("b", "c"), ("c", "d")])
    tx = ledger([("a", "2015-01", 5, 1), ("b", "2015-01", 5, 1), ("c", "2015-01", 0, 1), ("d", "2015-01", 5, 1)])
    j = join_datasets(g, profiles([(v, 30, 0) for v in "abcd"]), tx)
    assert j.graph.nodes == ("a", "b")


def test_joined_check_names_invariant():
    from spendnet.ingestion import JoinedDataset

    g = SocialGraph.from_pairs("abcd", [("a", "b"), ("c", "d")])
    bad = JoinedDataset(g, profiles([(v, 1, 0) for v in "abcd"]), ledger([(v, "2015-01", 1, 1) for v in "abcd"]))
    with pytest.raises(InvariantViolation, match="connected"):
        bad.check()
