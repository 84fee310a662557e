"""Stage-by-stage pipeline over an input directory.

Stages are computed lazily and cached on a :class:`Pipeline`, so a single
subcommand recomputes exactly the upstream stages it needs while ``all``
computes each stage once. Each ``emit_*`` function writes one stage's
artifacts and its report.json section.

Two populations are distinguished: the *bank*
population (active customers with a profile) defines AMP and the class
partition and feeds the category analysis; the *network* population (egos of
the joined social graph) feeds the class-level consumption statistics and the
null model, taking its classes from the bank partition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from . import categories as cat
from . import clustering, consumption, demographics, ingestion, nullmodel, socioeco
from .artifacts import ArtifactWriter, matrix_frame, sha256
from .config import RunConfig
from .louvain import louvain
from .model import require
from .synthgen import SynthConfig, class_assortativity, generate, write_population
from .taxonomy import load_taxonomy

log = logging.getLogger(__name__)

INPUT_FILES = ("interactions.csv", "transactions.csv", "profiles.csv")


class MissingInput(FileNotFoundError):
    pass


def _gender_letter(g):
    return np.where(np.isnan(g), "", np.where(g == 1.0, "M", "F"))


@dataclass(frozen=True, eq=False)
class ConsumptionResult:
    shares: consumption.GroupSpendingMatrix
    groups: tuple[str, ...]
    vectors: dict                   # variant -> SpendingVectors
    stats: dict                     # variant -> ClassVectorStats
    d_sv: dict                      # variant -> n x n
    d_k1: np.ndarray


class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.input_dir = Path(cfg.input_dir)

    def _path(self, name: str) -> Path:
        p = self.input_dir / name
        if not p.is_file():
            raise MissingInput(f"missing input file {p}")
        return p

    def check_inputs(self) -> None:
        for name in INPUT_FILES:
            self._path(name)

    @cached_property
    def taxonomy(self):
        if self.cfg.taxonomy:
            p = Path(self.cfg.taxonomy)
            if not p.is_file():
                raise MissingInput(f"missing taxonomy file {p}")
            return load_taxonomy(p)
        return load_taxonomy()

    # ingestion
    @cached_property
    def interaction_stats(self) -> ingestion.ParseStats:
        return ingestion.ParseStats()

    @cached_property
    def directed(self) -> ingestion.DirectedEventGraph:
        events = ingestion.parse_interactions(self._path("interactions.csv"), self.interaction_stats)
        return ingestion.DirectedEventGraph.from_events(events)

    @cached_property
    def pruned(self) -> ingestion.DirectedEventGraph:
        return ingestion.prune_inactive(self.directed)

    @cached_property
    def social_graph(self):
        return ingestion.undirect(self.pruned)

    @cached_property
    def transaction_stats(self) -> ingestion.ParseStats:
        return ingestion.ParseStats()

    @cached_property
    def ledger(self) -> pd.DataFrame:
        self.check_inputs()
        return ingestion.read_transactions(self._path("transactions.csv"), self.transaction_stats)

    @cached_property
    def profile_stats(self) -> ingestion.ParseStats:
        return ingestion.ParseStats()

    @cached_property
    def profiles(self) -> pd.DataFrame:
        self.check_inputs()
        return ingestion.read_profiles(self._path("profiles.csv"), self.profile_stats)

    @cached_property
    def unknown_mcc_rows(self) -> int:
        return int((~self.ledger["mcc"].isin([c.mcc for c in self.taxonomy.categories])).sum())

    @cached_property
    def bank_ledger(self) -> pd.DataFrame:
        """Active customers (>= min_months) that have a profile."""
        active = ingestion.filter_active(self.ledger, self.cfg.min_months)
        return active[active["ego_id"].isin(self.profiles.index)].reset_index(drop=True)

    @cached_property
    def joined(self) -> ingestion.JoinedDataset:
        self.check_inputs()
        j = ingestion.join_datasets(self.social_graph, self.profiles, self.ledger)
        j.check()
        return j

    # classes
    @cached_property
    def amp(self) -> socioeco.AmpTable:
        return socioeco.compute_amp(self.bank_ledger)

    @cached_property
    def partition(self) -> socioeco.ClassPartition:
        p = socioeco.partition_classes(self.amp, self.cfg.n_classes)
        p.check()
        return p

    @cached_property
    def bank_classes(self) -> pd.Series:
        return self.partition.as_series().sort_index()

    @cached_property
    def network_classes(self) -> pd.Series:
        """Classes of network egos; egos outside the bank population are placed
        by the partition's AMP boundaries."""
        nodes = pd.Index(self.joined.graph.nodes)
        out = self.bank_classes.reindex(nodes)
        missing = out.index[out.isna()]
        if len(missing):
            amp = socioeco.compute_amp(self.joined.ledger).as_series().reindex(missing)
            out.loc[missing] = self.partition.classify(amp.to_numpy())
            log.info("%d network egos classified by AMP boundaries", len(missing))
        return out.astype(np.int64).rename("class")

    # consumption
    @cached_property
    def consumption(self) -> ConsumptionResult:
        n = self.cfg.n_classes
        led = self.joined.ledger
        cls = self.network_classes
        shares = consumption.group_spending_shares(led, cls, self.taxonomy, n)
        shares.check()
        groups = tuple(g for g in shares.retained())
        vectors, stats, d_sv = {}, {}, {}
        for variant in consumption.VARIANTS:
            v = consumption.spending_vectors(led, self.taxonomy, variant, list(groups))
            v.check()
            s = consumption.class_vector_stats(v, cls, n)
            s.check()
            vectors[variant], stats[variant] = v, s
            d_sv[variant] = consumption.class_distance_matrix(s.means)
        d_k1 = consumption.class_distance_matrix(stats["excluding_cash"].cash_mean)
        return ConsumptionResult(shares, groups, vectors, stats, d_sv, d_k1)

    # null model
    @cached_property
    def swap_plan(self) -> nullmodel.SwapPlan:
        return nullmodel.SwapPlan(self.cfg.swap_multiplier, self.cfg.replicas, self.cfg.stage_seed("nullmodel"))

    @cached_property
    def null(self) -> nullmodel.LRatioResult:
        vec = self.consumption.vectors[self.cfg.variant_name]
        g = self.joined.graph
        require(set(vec.egos) >= set(g.nodes), "every network ego has a spending vector")
        return nullmodel.l_ratio(g, vec, self.network_classes, self.cfg.n_classes, self.swap_plan, self.cfg.jobs)

    # categories
    @cached_property
    def distributions(self) -> cat.PurchaseDistributions:
        return cat.purchase_distributions(self.bank_ledger, self.taxonomy, self.cfg.min_purchases)

    @cached_property
    def correlation(self) -> cat.CorrelationMatrix:
        m = cat.correlation_matrix(self.distributions)
        ok = ~np.isnan(m.rho)
        require(np.array_equal(m.rho[ok], m.rho.T[ok]), "rho exactly symmetric")
        return m

    @cached_property
    def min_common(self) -> int:
        return self.cfg.min_common or cat.default_min_common(len(self.distributions))

    @cached_property
    def category_graph(self) -> cat.CategoryCorrelationGraph:
        return cat.build_graph(self.correlation, self.cfg.rho_min, self.min_common)

    @cached_property
    def communities(self) -> cat.CategoryCorrelationGraph:
        g = self.category_graph
        if not g.edges:
            return g.with_communities({}, math.nan, ())
        labels, q, levels = louvain(g.nodes, g.edges, seed=self.cfg.stage_seed("communities"))
        require(all(b >= a - 1e-12 for a, b in zip(levels, levels[1:])), "modularity non-decreasing across passes")
        return g.with_communities(labels, q, levels)

    # demographics
    @cached_property
    def afs(self) -> demographics.CategoryFeatureSet:
        res = demographics.afs(self.distributions, self.profiles, self.bank_classes)
        res.check(self.cfg.n_classes)
        return res

    @cached_property
    def feature_correlations(self) -> pd.DataFrame:
        return demographics.feature_correlations(self.afs.table)

    @cached_property
    def clusters(self) -> clustering.ClusteringResult | None:
        table = self.afs.table.dropna(subset=list(demographics.FEATURES))
        ks = [k for k in self.cfg.k_range if k <= len(table) - 1]
        if len(ks) < len(self.cfg.k_range):
            log.warning("k range clipped to %d categories", len(table))
        if not ks:
            return None
        return clustering.kmeans_select(
            table[list(demographics.FEATURES)].to_numpy(),
            ks,
            seed=self.cfg.stage_seed("demographics"),
            standardize_features=self.cfg.standardize,
            n_init=self.cfg.kmeans_restarts,
            references=self.cfg.gap_references,
        )

    @cached_property
    def community_afs(self) -> demographics.CategoryFeatureSet | None:
        comm = self.communities.communities
        if not comm:
            return None
        return demographics.community_afs(self.distributions, comm, self.profiles, self.bank_classes)


# emitters ------------------------------------------------------------------

def emit_generate(cfg: RunConfig, out: ArtifactWriter) -> None:
    scfg = SynthConfig(
        n_egos=cfg.n_egos,
        pareto_shape=cfg.pareto_shape,
        n_classes_planted=cfg.planted_classes,
        homophily=cfg.homophily,
        mean_degree=cfg.mean_degree,
        profile_concentration=cfg.concentration,
        months=cfg.months,
        seed=cfg.stage_seed("generate"),
    )
    tax = Pipeline(cfg).taxonomy
    pop = generate(scfg, tax)
    paths = write_population(pop, out.out_dir)
    for name, p in paths.items():
        df = {"interactions": pop.interactions, "transactions": pop.ledger,
              "profiles": pop.profiles, "planted_classes": pop.planted}[name]
        out.report.setdefault("artifacts", {})[p.name] = {"stage": "generate", "rows": int(len(df)),
                                                          "sha256": sha256(p)}
    out.section("generate", {
        "config": scfg.as_dict(),
        "egos": pop.graph.n_nodes,
        "edges": pop.graph.n_edges,
        "transactions": len(pop.ledger),
        "interaction_events": len(pop.interactions),
        "planted_class_sizes": np.bincount(pop.planted.to_numpy(), minlength=cfg.planted_classes + 1)[1:],
        "planted_assortativity": class_assortativity(pop.graph, pop.planted.to_numpy()),
    })


def emit_ingest(p: Pipeline, out: ArtifactWriter) -> None:
    j = p.joined
    g = j.graph
    out.write_csv("social_edges.csv", pd.DataFrame(g.edge_ids(), columns=["ego_a", "ego_b"]), "ingest")
    months = j.ledger.groupby("ego_id")["month"].nunique().reindex(list(g.nodes))
    prof = j.profiles.reindex(list(g.nodes))
    egos = pd.DataFrame({
        "ego_id": list(g.nodes),
        "degree": g.degrees(),
        "age": prof["age"].to_numpy(),
        "gender": _gender_letter(prof["gender"].to_numpy(dtype=float)),
        "active_months": months.to_numpy(),
        "in_bank_population": np.isin(list(g.nodes), p.bank_classes.index),
    })
    egos["in_bank_population"] = egos["in_bank_population"].astype(int)
    out.write_csv("joined_egos.csv", egos, "ingest")
    st = p.interaction_stats
    out.section("ingest", {
        "interaction_rows": st.rows,
        "interaction_malformed": st.malformed,
        "self_interactions": st.self_interactions,
        "directed_nodes": len(p.directed.nodes),
        "directed_pairs": len(p.directed.src),
        "pruned_nodes": len(p.pruned.nodes),
        "undirected_edges": p.social_graph.n_edges,
        "transaction_rows": p.transaction_stats.rows,
        "transaction_malformed": p.transaction_stats.malformed,
        "transaction_unknown_mcc_rows": p.unknown_mcc_rows,
        "profile_rows": p.profile_stats.rows,
        "profile_malformed": p.profile_stats.malformed,
        "bank_population": int(p.bank_ledger["ego_id"].nunique()),
        "network_nodes": g.n_nodes,
        "network_edges": g.n_edges,
        "join": j.dropped,
    })


def emit_classes(p: Pipeline, out: ArtifactWriter) -> None:
    part = p.partition
    amp = p.amp
    df = pd.DataFrame({"ego_id": amp.egos, "amp": amp.amp, "active_months": amp.months})
    df["class"] = p.bank_classes.reindex(amp.egos).to_numpy()
    out.write_csv("classes.csv", df, "classes")
    f, c = socioeco.cumulative_curve(amp)
    out.write_csv("curve.csv", pd.DataFrame({"f": f, "C": c}), "classes")
    out.section("classes", {
        "n_classes": part.n,
        "egos": len(amp),
        "excluded_zero_spend": amp.excluded,
        "gini": socioeco.gini_from_curve(f, c),
        "class_sizes": part.sizes,
        "class_amp_sums": part.sums,
        "class_mean_amp": part.means,
        "boundaries": [list(b) if b else None for b in part.boundaries],
        "target_sum": float(part.amp.sum() / part.n),
    })


def emit_consumption(p: Pipeline, out: ArtifactWriter) -> None:
    res = p.consumption
    n = p.cfg.n_classes
    sh = res.shares
    r = sh.shares.copy()
    r.columns = [str(c) for c in r.columns]
    r.insert(0, "pcg_name", [p.taxonomy.pcg_names[g] for g in r.index])
    r.insert(1, "total_cents", sh.group_totals.reindex(r.index).to_numpy())
    r.insert(2, "minor", [int(g in sh.flagged) for g in r.index])
    out.write_csv("r_matrix.csv", r.reset_index(), "consumption")

    rows = []
    for variant, st in res.stats.items():
        for j in range(n):
            for k, g in enumerate(st.groups):
                rows.append((variant, j + 1, g, st.means[j, k]))
    out.write_csv("sv_class_means.csv", pd.DataFrame(rows, columns=["variant", "class", "pcg", "mean"]), "consumption")
    out.write_csv("d_matrix_ex_cash.csv", matrix_frame(res.d_sv["excluding_cash"]), "consumption")
    out.write_csv("d_matrix_inc_cash.csv", matrix_frame(res.d_sv["including_cash"]), "consumption")
    out.write_csv("d_matrix_k1.csv", matrix_frame(res.d_k1), "consumption")
    ex, inc = res.stats["excluding_cash"], res.stats["including_cash"]
    out.write_csv("dispersion_entropy.csv", pd.DataFrame({
        "class": np.arange(1, n + 1),
        "size": ex.sizes,
        "sigma_ex_cash": ex.dispersion,
        "entropy_ex_cash": ex.entropy,
        "sigma_inc_cash": inc.dispersion,
        "entropy_inc_cash": inc.entropy,
        "cash_mean": ex.cash_mean,
        "sigma_cash": ex.cash_dispersion,
    }), "consumption")
    out.section("consumption", {
        "network_egos": len(res.vectors["excluding_cash"]),
        "retained_groups": list(res.groups),
        "minor_groups": list(sh.flagged),
        "zero_spend_groups": list(sh.omitted),
        "minor_threshold": consumption.MINOR_GROUP_SHARE,
        "excluded_without_in_scope_spend": {v: res.vectors[v].excluded for v in res.vectors},
    })


def emit_nullmodel(p: Pipeline, out: ArtifactWriter) -> None:
    res = p.null
    n = p.cfg.n_classes
    out.write_csv("L_sv.csv", matrix_frame(res.l_sv), "nullmodel")
    out.write_csv("L_k1.csv", matrix_frame(res.l_k1), "nullmodel")
    k = len(res.groups)
    with np.errstate(invalid="ignore"):
        obs_sv = np.nanmean(np.where(np.isnan(res.observed.d[:k]), np.nan, res.observed.d[:k]), axis=0) \
            if k else np.full((n, n), np.nan)
    rows = []
    for i in range(n):
        for j in range(i, n):
            rows.append({
                "class_i": i + 1,
                "class_j": j + 1,
                "edges": int(res.observed.counts[i, j]),
                "null_edges_mean": float(res.null_counts[:, i, j].mean()),
                "d_sv_observed": obs_sv[i, j],
                "l_sv": res.l_sv[i, j],
                "l_sv_se": res.l_sv_se[i, j],
                "l_k1": res.l_k1[i, j],
                "l_k1_se": res.l_k1_se[i, j],
                "replicas_defined": int(res.replicas_defined[i, j]),
            })
    out.write_csv("null_stats.csv", pd.DataFrame(rows), "nullmodel")
    diag = np.diag(res.l_sv)
    m = p.joined.graph.n_edges
    out.section("nullmodel", {
        "variant": p.cfg.variant_name,
        "replicas": res.replicas,
        "swap_multiplier": p.swap_plan.swap_multiplier,
        "attempted_swaps_per_replica": p.swap_plan.swap_multiplier * m,
        "accepted_swaps_mean": float(res.accepted_swaps.mean()),
        "seed": p.swap_plan.seed,
        "groups": list(res.groups),
        "diagonal_below_one": int(np.sum(diag < 1)),
        "undefined_pairs": int(np.sum(np.isnan(res.l_sv[np.triu_indices(n)]))),
    })


def emit_categories(p: Pipeline, out: ArtifactWriter) -> None:
    m = p.correlation
    ii, jj = np.nonzero(np.triu(m.common > 0, 1))
    out.write_csv("rho_matrix.csv", pd.DataFrame({
        "mcc_i": m.mccs[ii], "mcc_j": m.mccs[jj], "rho": m.rho[ii, jj], "common": m.common[ii, jj],
    }), "categories")
    g = p.category_graph
    pos = {c: i for i, c in enumerate(m.mccs)}
    out.write_csv("graph_edges.csv", pd.DataFrame({
        "mcc_a": [e[0] for e in g.edges],
        "mcc_b": [e[1] for e in g.edges],
        "rho": [e[2] for e in g.edges],
        "common": [int(m.common[pos[e[0]], pos[e[1]]]) for e in g.edges],
    }), "categories")
    d = p.distributions
    out.section("categories", {
        "bank_egos": len(d),
        "egos_without_in_scope_purchases": d.excluded_egos,
        "categories": len(d.mccs),
        "dropped_rare_categories": list(d.dropped_mccs),
        "min_purchases": p.cfg.min_purchases,
        "rho_min": p.cfg.rho_min,
        "min_common": p.min_common,
        "graph_nodes": len(g.nodes),
        "graph_edges": g.n_edges,
    })


def emit_communities(p: Pipeline, out: ArtifactWriter) -> None:
    g = p.communities
    labels = g.communities or {}
    rows = [(c, labels[c], p.taxonomy.category(c).name, p.taxonomy.category(c).pcg) for c in g.nodes]
    out.write_csv("communities.csv", pd.DataFrame(rows, columns=["mcc", "community", "name", "pcg"]), "communities")
    sizes = pd.Series(list(labels.values()), dtype=np.int64).value_counts().sort_index()
    out.section("communities", {
        "seed": p.cfg.stage_seed("communities"),
        "modularity": g.modularity,
        "level_modularity": list(g.level_modularity),
        "n_communities": len(sizes),
        "community_sizes": {int(k): int(v) for k, v in sizes.items()},
    })


def emit_demographics(p: Pipeline, out: ArtifactWriter) -> None:
    a = p.afs
    out.write_csv("afs.csv", a.table.reset_index()[["mcc", "age", "gender", "seg", "n_purchasers"]], "demographics")
    cl = p.clusters
    table = a.table.dropna(subset=list(demographics.FEATURES))
    if cl is not None:
        out.write_csv("clusters.csv", pd.DataFrame({"mcc": table.index, "cluster": cl.labels}), "demographics")
        sel = cl.scores.reset_index()[["k", "db", "ch", "gap", "gap_se", "inertia"]]
    else:
        out.write_csv("clusters.csv", pd.DataFrame(columns=["mcc", "cluster"]), "demographics")
        sel = pd.DataFrame(columns=["k", "db", "ch", "gap", "gap_se", "inertia"])
    out.write_csv("selection.csv", sel, "demographics")
    ca = p.community_afs
    ct = ca.table.reset_index() if ca is not None else pd.DataFrame(columns=["community"])
    ct = ct.reindex(columns=["community", "age", "gender", "seg", "n_purchasers"])
    out.write_csv("community_afs.csv", ct, "demographics")
    corr = p.feature_correlations
    out.section("demographics", {
        "categories": len(a.table),
        "flagged_categories": list(a.flagged),
        "pearson": {f"{r.x}-{r.y}": {"r": r.r, "p": r.p, "n": r.n} for r in corr.itertuples()},
        "k_range": list(p.cfg.k_range),
        "standardized": p.cfg.standardize,
        "seed": p.cfg.stage_seed("demographics"),
        "best_k": cl.best if cl is not None else None,
        "chosen_k": cl.k if cl is not None else None,
        "inertia": cl.inertia if cl is not None else None,
    })


STAGES = {
    "ingest": emit_ingest,
    "classes": emit_classes,
    "consumption": emit_consumption,
    "nullmodel": emit_nullmodel,
    "categories": emit_categories,
    "communities": emit_communities,
    "demographics": emit_demographics,
}


def _read_matrix(path: Path) -> np.ndarray:
    return pd.read_csv(path).drop(columns=["class"]).to_numpy(dtype=float)


def emit_report(cfg: RunConfig, out: ArtifactWriter) -> None:
    """Check the artifact manifest, summarize headline numbers, draw SVGs on request."""
    from . import svg

    manifest = out.report.get("artifacts", {})
    bad = [name for name, meta in sorted(manifest.items())
           if not (out.out_dir / name).is_file() or sha256(out.out_dir / name) != meta.get("sha256")]
    require(not bad, f"artifacts match their recorded hashes (mismatch: {', '.join(bad)})")

    stages = out.report.get("stages", {})
    summary = {
        "gini": stages.get("classes", {}).get("gini"),
        "modularity": stages.get("communities", {}).get("modularity"),
        "n_communities": stages.get("communities", {}).get("n_communities"),
        "chosen_k": stages.get("demographics", {}).get("chosen_k"),
        "age_seg_pearson": stages.get("demographics", {}).get("pearson", {}).get("age-seg"),
        "diagonal_L_sv_below_one": stages.get("nullmodel", {}).get("diagonal_below_one"),
        "stages_present": sorted(stages),
    }
    figures = []
    if cfg.svg:
        d = out.out_dir
        if (d / "curve.csv").is_file():
            c = pd.read_csv(d / "curve.csv")
            figures.append(("fig_curve.svg", svg.line_plot(c["f"], c["C"], "Cumulative AMP", "population fraction f", "C(f)")))
        for name, title, center in [
            ("d_matrix_ex_cash.csv", "d_SV between classes (cash excluded)", None),
            ("d_matrix_inc_cash.csv", "d_SV between classes (cash included)", None),
            ("d_matrix_k1.csv", "cash-share distance between classes", None),
            ("L_sv.csv", "L_SV observed / null", 1.0),
            ("L_k1.csv", "L_k1 observed / null", 1.0),
        ]:
            if (d / name).is_file():
                figures.append((f"fig_{name[:-4]}.svg", svg.heatmap(_read_matrix(d / name), title, center=center)))
        if (d / "afs.csv").is_file():
            a = pd.read_csv(d / "afs.csv")
            groups = np.zeros(len(a), dtype=int)
            if (d / "clusters.csv").is_file():
                cl = pd.read_csv(d / "clusters.csv")
                groups = a["mcc"].map(dict(zip(cl["mcc"], cl["cluster"]))).fillna(0).astype(int).to_numpy()
            figures.append(("fig_afs.svg", svg.scatter(a["age"], a["seg"], groups, "Category AFS", "<age>", "<SEG>")))
        for name, text in figures:
            out.write_text(name, text, "report")
    summary["figures"] = [f for f, _ in figures]
    out.section("report", summary)
