"""Synthetic populations with planted wealth, class homophily and spending profiles.

Each ego draws a Pareto total spend, a set of active months and a conformity
weight ``kappa``. High-kappa egos keep most of their ties inside their own
(or an adjacent) planted class and spend close to their class profile;
low-kappa egos connect at random and spend idiosyncratically. Planted classes
are the equal-sum partition of the realized AMP, so they coincide with what
the analysis recovers from the written files.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from .model import SocialGraph
from .socioeco import AmpTable, partition_classes
from .taxonomy import CategoryTaxonomy

log = logging.getLogger(__name__)

START_YEAR = 2015
START_EPOCH = 1420070400          # 2015-01-01T00:00:00Z
MONTH_SECONDS = 30 * 86400
CONFORMITY_SPREAD = 1.5           # Beta(h*t, (1-h)*t) concentration of kappa
MINOR_SHARE = 0.0005              # per planted minor group, of non-cash spend
LIFESTYLE_BOOST = 12.0
CONFORMITY_GAIN = 9.0             # profile concentration grows as 1 + gain * kappa
PROFILE_SKEW = 1.0                # Dirichlet parameter of the poorest class profile
CLASS_CONCENTRATION = 3.0         # richest / poorest class concentration ratio


@dataclass(frozen=True)
class SynthConfig:
    n_egos: int = 10_000
    pareto_shape: float = 2.5
    n_classes_planted: int = 9
    homophily: float = 0.8
    mean_degree: float = 10.0
    profile_concentration: float = 100.0
    months: int = 12
    seed: int = 0
    min_monthly: float = 50.0          # Pareto scale, per observed month
    purchase_rate: float = 5.0         # mean purchases per active month
    active_prob: float = 0.85          # chance each month beyond two is active
    age_coupling: float = 0.6          # 0 = age independent of wealth rank
    gender_coupling: float = 0.3       # P(male) = 0.5 + coupling * (rank - 0.5)
    n_lifestyles: int = 12
    minor_groups: tuple[str, ...] = ("contractors", "government", "utilities")

    def __post_init__(self):
        for name in ("n_egos", "n_classes_planted", "months", "n_lifestyles"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("pareto_shape", "mean_degree", "profile_concentration", "min_monthly", "purchase_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.homophily <= 1.0:
            raise ValueError("homophily must lie in [0, 1]")
        if self.months < 2:
            raise ValueError("months must be >= 2 (egos need two active months)")
        if self.mean_degree >= self.n_egos:
            raise ValueError(f"infeasible mean_degree {self.mean_degree} for {self.n_egos} egos")
        if self.n_classes_planted > self.n_egos:
            raise ValueError("more planted classes than egos")
        if not 0.0 <= self.active_prob <= 1.0:
            raise ValueError("active_prob must lie in [0, 1]")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["minor_groups"] = list(self.minor_groups)
        return d


@dataclass(frozen=True, eq=False)
class Population:
    graph: SocialGraph
    profiles: pd.DataFrame        # index ego_id; age, gender (0/1), zip
    ledger: pd.DataFrame          # ego_id, month, cents, mcc
    planted: pd.Series            # ego_id -> class 1..n
    interactions: pd.DataFrame    # caller_id, callee_id, timestamp, kind, duration
    kappa: np.ndarray = field(repr=False)
    lifestyle: np.ndarray = field(repr=False)


def _conformity(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    h = cfg.homophily
    if h <= 0.0:
        return np.zeros(n)
    if h >= 1.0:
        return np.ones(n)
    return rng.beta(h * CONFORMITY_SPREAD, (1.0 - h) * CONFORMITY_SPREAD, size=n)


def _dirichlet_rows(rng, alpha: np.ndarray) -> np.ndarray:
    """One Dirichlet draw per row of ``alpha`` (positive concentrations)."""
    g = rng.standard_gamma(alpha)
    s = g.sum(axis=1, keepdims=True)
    bad = s[:, 0] <= 0
    g[bad] = alpha[bad]
    s[bad] = alpha[bad].sum(axis=1, keepdims=True)
    return g / s


def _largest_remainder(total: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Split integer ``total[i]`` across row ``weights[i]`` (rows sum to 1)."""
    raw = total[:, None] * weights
    out = np.floor(raw).astype(np.int64)
    short = total - out.sum(axis=1)
    rank = np.argsort(np.argsort(-(raw - out), axis=1, kind="stable"), axis=1, kind="stable")
    out += rank < short[:, None]
    return out


def class_profiles(cfg: SynthConfig, rng, n_groups: int) -> np.ndarray:
    """Class preference points on the simplex, moving steadily from class 1 to n.

    The poorest class sits at a specialised Dirichlet draw and the richest at
    the uniform profile, with the other classes evenly spaced in between. Profile
    distance then grows with class distance and, entropy being concave, profile
    entropy rises with class. A uniform floor keeps every group visible.
    """
    poor = 0.2 / n_groups + 0.8 * rng.dirichlet(np.full(n_groups, PROFILE_SKEW))
    rich = np.full(n_groups, 1.0 / n_groups)
    t = np.linspace(0.0, 1.0, cfg.n_classes_planted)[:, None]
    return (1 - t) * poor + t * rich


def _social_edges(cfg, rng, classes: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    n = len(classes)
    deg = np.maximum(1, rng.poisson(cfg.mean_degree, size=n))
    owner = np.repeat(np.arange(n), deg)
    local = rng.random(len(owner)) < kappa[owner]

    loc = owner[local]
    key = classes[loc] + rng.random(len(loc))
    loc = loc[np.argsort(key, kind="stable")]
    loc = loc[: len(loc) // 2 * 2].reshape(-1, 2)

    glob = rng.permutation(owner[~local])
    glob = glob[: len(glob) // 2 * 2].reshape(-1, 2)

    e = np.sort(np.concatenate([loc, glob]), axis=1)
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(e, axis=0)
    return _connect(cfg, rng, e, classes)


def _pick_partner(rng, v, classes, pool, h):
    """A node from ``pool``; same class as ``v`` with probability ``h`` when possible."""
    if rng.random() < h:
        same = pool[classes[pool] == classes[v]]
        if len(same):
            return int(same[rng.integers(len(same))])
    return int(pool[rng.integers(len(pool))])


def _connect(cfg, rng, edges: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Attach isolated egos and stray components to the largest component."""
    n = len(classes)
    adj = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_comp, comp = csgraph.connected_components(adj, directed=False)
    if n_comp == 1:
        return edges
    sizes = np.bincount(comp)
    giant = int(np.argmax(sizes))
    pool = np.flatnonzero(comp == giant)
    extra = []
    # one bridge per stray component, from its lowest-numbered node
    firsts = np.full(n_comp, -1)
    for v in range(n - 1, -1, -1):
        firsts[comp[v]] = v
    for c in range(n_comp):
        if c == giant:
            continue
        v = int(firsts[c])
        extra.append((v, _pick_partner(rng, v, classes, pool, cfg.homophily)))
    extra = np.sort(np.array(extra, dtype=np.int64), axis=1)
    return np.unique(np.concatenate([edges, extra]), axis=0)


def _mcc_tables(taxonomy: CategoryTaxonomy, groups: list[str], cfg: SynthConfig, rng):
    """Per-lifestyle cumulative mcc weights, laid out group by group."""
    mccs, bounds = [], []
    for g in groups:
        codes = list(taxonomy.mccs_in(g))
        bounds.append((len(mccs), len(mccs) + len(codes)))
        mccs.extend(codes)
    mccs = np.array(mccs, dtype=np.int64)
    # Zipf-like popularity within each group, in a random order
    base = np.empty(len(mccs))
    for lo, hi in bounds:
        base[lo:hi] = 1.0 / (1.0 + rng.permutation(hi - lo))
    boost = np.ones((cfg.n_lifestyles, len(mccs)))
    per = max(1, len(mccs) // cfg.n_lifestyles + 3)
    for l in range(cfg.n_lifestyles):
        boost[l, rng.choice(len(mccs), size=min(per, len(mccs)), replace=False)] = LIFESTYLE_BOOST
    w = base[None, :] * boost
    cum = np.cumsum(w, axis=1)
    return mccs, np.array(bounds), cum


def _choose_mcc(rng, mccs, bounds, cum, lifestyle, group):
    lo, hi = bounds[group, 0], bounds[group, 1]
    before = np.where(lo > 0, cum[lifestyle, np.maximum(lo - 1, 0)], 0.0)
    after = cum[lifestyle, hi - 1]
    target = before + rng.random(len(group)) * (after - before)
    # flatten the per-lifestyle rows into one increasing sequence
    span = cum[:, -1].max() + 1.0
    flat = (cum + span * np.arange(cum.shape[0])[:, None]).ravel()
    pos = np.searchsorted(flat, target + span * lifestyle, side="right") - lifestyle * cum.shape[1]
    return mccs[np.clip(pos, lo, hi - 1)]


def _split_amounts(rng, block_cents: np.ndarray, block_count: np.ndarray) -> np.ndarray:
    """Random split of each block's cents into ``count`` parts of at least 1 cent."""
    block = np.repeat(np.arange(len(block_cents)), block_count)
    w = rng.exponential(size=len(block))
    wsum = np.bincount(block, weights=w, minlength=len(block_cents))
    spare = (block_cents - block_count)[block]
    raw = spare * w / wsum[block]
    out = np.floor(raw).astype(np.int64)
    short = block_cents - block_count - np.bincount(block, weights=out, minlength=len(block_cents)).astype(np.int64)
    order = np.lexsort((-(raw - out), block))
    start = np.concatenate([[0], np.cumsum(block_count)[:-1]])
    rank = np.empty(len(block), dtype=np.int64)
    rank[order] = np.arange(len(block)) - start[block[order]]
    return out + 1 + (rank < short[block])


def _month_label(index: np.ndarray) -> np.ndarray:
    year = START_YEAR + index // 12
    month = index % 12 + 1
    return np.array([f"{y:04d}-{m:02d}" for y, m in zip(year, month)], dtype=object)


def generate(cfg: SynthConfig, taxonomy: CategoryTaxonomy) -> Population:
    """Draw one synthetic population; deterministic for a given ``cfg``."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_egos
    width = max(6, len(str(n - 1)))
    ids = np.array([f"u{i:0{width}d}" for i in range(n)], dtype=object)

    # wealth and activity
    scale = cfg.min_monthly * cfg.months
    total = scale * (1.0 + rng.pareto(cfg.pareto_shape, size=n))
    cents = np.maximum(np.round(total * 100).astype(np.int64), 1)
    active = 2 + rng.binomial(cfg.months - 2, cfg.active_prob, size=n)
    amp = AmpTable(ids, cents / 100.0 / active, active.astype(np.int64))
    part = partition_classes(amp, cfg.n_classes_planted)
    classes = pd.Series(part.labels, index=part.egos).reindex(ids).to_numpy(dtype=np.int64)
    rank = np.empty(n)
    rank[np.argsort(amp.amp, kind="stable")] = (np.arange(n) + 0.5) / n

    # demographics tied to wealth rank
    c = cfg.age_coupling
    age = 22 + 40 * (c * rank + (1 - c) * rng.random(n)) + rng.normal(0, 5, size=n)
    age = np.clip(np.round(age), 18, 90).astype(np.int64)
    male = rng.random(n) < np.clip(0.5 + cfg.gender_coupling * (rank - 0.5), 0, 1)
    zips = np.array([f"{z:04d}" for z in rng.integers(1000, 10000, size=n)], dtype=object)
    centers = np.linspace(20, 70, cfg.n_lifestyles)
    pref = np.exp(-0.5 * ((age[:, None] - centers[None, :]) / 12.0) ** 2)
    pref[:, ::2] *= np.where(male, 1.5, 0.67)[:, None]
    pref /= pref.sum(axis=1, keepdims=True)
    lifestyle = (rng.random(n)[:, None] > np.cumsum(pref, axis=1)).sum(axis=1)
    lifestyle = np.minimum(lifestyle, cfg.n_lifestyles - 1)

    # conformity, social ties
    kappa = _conformity(cfg, rng, n)
    edges = _social_edges(cfg, rng, classes - 1, kappa)

    # spending vectors: non-cash groups around the class profile, cash share by class
    cash = taxonomy.cash_group
    groups = [g for g in taxonomy.groups if g != cash and taxonomy.mccs_in(g)]
    minor = [g for g in groups if g in cfg.minor_groups]
    main = [g for g in groups if g not in cfg.minor_groups]
    profiles_k = class_profiles(cfg, rng, len(main))
    class_conc = np.linspace(1.0, CLASS_CONCENTRATION, cfg.n_classes_planted)[classes - 1]
    conc = cfg.profile_concentration * class_conc * (1.0 + CONFORMITY_GAIN * kappa)
    x_main = _dirichlet_rows(rng, conc[:, None] * profiles_k[classes - 1])
    x = np.zeros((n, len(groups)))
    x[:, [groups.index(g) for g in main]] = x_main * (1.0 - MINOR_SHARE * len(minor))
    x[:, [groups.index(g) for g in minor]] = MINOR_SHARE
    cash_mean = np.linspace(0.75, 0.35, cfg.n_classes_planted)[classes - 1]
    cash_share = np.clip(rng.beta(conc * cash_mean, conc * (1 - cash_mean)), 0.05, 0.95)

    cash_cents = np.round(cents * cash_share).astype(np.int64)
    cols = np.column_stack([_largest_remainder(cents - cash_cents, x), cash_cents])
    n_cols = cols.shape[1]

    # purchase counts per (ego, group); every active month needs one purchase
    share = cols / cents[:, None]
    count = np.where(cols > 0, 1 + rng.poisson(cfg.purchase_rate * active[:, None] * share), 0)
    count = np.minimum(count, cols)
    deficit = np.maximum(active - count.sum(axis=1), 0)
    big = np.argmax(cols, axis=1)
    count[np.arange(n), big] = np.minimum(count[np.arange(n), big] + deficit, cols[np.arange(n), big])

    flat_count = count.ravel()
    amounts = _split_amounts(rng, cols.ravel()[flat_count > 0], flat_count[flat_count > 0])
    block = np.flatnonzero(flat_count > 0)
    p_block = np.repeat(block, flat_count[flat_count > 0])
    p_ego = p_block // n_cols
    p_col = p_block % n_cols

    # merchant categories
    mccs, bounds, cum = _mcc_tables(taxonomy, groups, cfg, rng)
    p_mcc = np.empty(len(p_ego), dtype=np.int64)
    nc = p_col < len(groups)
    p_mcc[nc] = _choose_mcc(rng, mccs, bounds, cum, lifestyle[p_ego[nc]], p_col[nc])
    cash_codes = np.array(sorted(taxonomy.cash_mccs), dtype=np.int64)
    cash_w = np.where(cash_codes == 24, 6.0, 1.0) if 24 in cash_codes else np.ones(len(cash_codes))
    p_mcc[~nc] = rng.choice(cash_codes, size=int((~nc).sum()), p=cash_w / cash_w.sum())

    # months: the first |T| purchases of each ego cover its active months
    month_perm = np.argsort(rng.random((n, cfg.months)), axis=1)
    order = np.lexsort((rng.random(len(p_ego)), p_ego))
    starts = np.concatenate([[0], np.cumsum(np.bincount(p_ego, minlength=n))[:-1]])
    pos = np.empty(len(p_ego), dtype=np.int64)
    pos[order] = np.arange(len(p_ego)) - starts[p_ego[order]]
    slot = np.where(pos < active[p_ego], pos, rng.integers(0, 1 << 30, size=len(p_ego)) % active[p_ego])
    p_month = month_perm[p_ego, slot]

    ledger = pd.DataFrame({
        "ego_id": ids[p_ego],
        "month": _month_label(p_month),
        "cents": amounts,
        "mcc": p_mcc,
    })
    ledger = ledger.sort_values(["ego_id", "month", "cents", "mcc"], kind="mergesort").reset_index(drop=True)

    profiles = pd.DataFrame(
        {"age": age, "gender": male.astype(float), "zip": zips}, index=pd.Index(ids, name="ego_id")
    )
    graph = SocialGraph(tuple(ids), edges)
    planted = pd.Series(classes, index=pd.Index(ids, name="ego_id"), name="class")
    interactions = _interactions(cfg, rng, ids, edges)
    log.info("generated %d egos, %d edges, %d purchases", n, len(edges), len(ledger))
    return Population(graph, profiles, ledger, planted, interactions, kappa, lifestyle)


def _interactions(cfg, rng, ids, edges) -> pd.DataFrame:
    """Call/SMS events for every tie, plus noise the ingestion stage must remove.

    ``svc`` numbers only place calls (pruned as inactive) and ``p`` numbers
    are reciprocal contacts with no bank record (dropped at the join).
    """
    n = len(ids)
    n_svc = max(1, n // 500)
    n_ext = max(1, n // 20)
    svc = np.array([f"svc{i:05d}" for i in range(n_svc)], dtype=object)
    ext = np.array([f"p{i:06d}" for i in range(n_ext)], dtype=object)

    a = ids[edges[:, 0]]
    b = ids[edges[:, 1]]
    ext_to = rng.integers(0, n, size=n_ext)
    svc_to = rng.integers(0, n, size=(n_svc, 5)).ravel()
    src = np.concatenate([a, b, ext, ids[ext_to], np.repeat(svc, 5)])
    dst = np.concatenate([b, a, ids[ext_to], ext, ids[svc_to]])
    reps = 1 + rng.poisson(1.0, size=len(src))
    src = np.repeat(src, reps)
    dst = np.repeat(dst, reps)
    m = len(src)
    ts = START_EPOCH + rng.integers(0, cfg.months * MONTH_SECONDS, size=m)
    is_call = rng.random(m) < 0.7
    duration = np.where(is_call, 1 + rng.exponential(120.0, size=m).astype(np.int64), 0)
    df = pd.DataFrame({
        "caller_id": src,
        "callee_id": dst,
        "timestamp": ts,
        "kind": np.where(is_call, "call", "sms"),
        "duration": duration,
    })
    return df.sort_values(["timestamp", "caller_id", "callee_id"], kind="mergesort").reset_index(drop=True)


def format_cents(cents: np.ndarray) -> np.ndarray:
    c = np.asarray(cents, dtype=np.int64)
    return np.array([f"{v // 100}.{v % 100:02d}" for v in c], dtype=object)


def write_population(pop: Population, out_dir: str | Path) -> dict[str, Path]:
    """Write the four CSV files ingestion reads (plus planted classes)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "interactions": out / "interactions.csv",
        "transactions": out / "transactions.csv",
        "profiles": out / "profiles.csv",
        "planted_classes": out / "planted_classes.csv",
    }
    pop.interactions.to_csv(paths["interactions"], index=False, lineterminator="\n")
    tx = pd.DataFrame({
        "ego_id": pop.ledger["ego_id"],
        "month": pop.ledger["month"],
        "amount": format_cents(pop.ledger["cents"].to_numpy()),
        "mcc": pop.ledger["mcc"],
    })
    tx.to_csv(paths["transactions"], index=False, lineterminator="\n")
    prof = pd.DataFrame({
        "ego_id": pop.profiles.index,
        "age": pop.profiles["age"].to_numpy(),
        "gender": np.where(pop.profiles["gender"].to_numpy() == 1.0, "M", "F"),
        "zip": pop.profiles["zip"].to_numpy(),
    })
    prof.to_csv(paths["profiles"], index=False, lineterminator="\n")
    pop.planted.rename("class").reset_index().to_csv(paths["planted_classes"], index=False, lineterminator="\n")
    return paths


def class_assortativity(graph: SocialGraph, labels) -> float:
    """Newman's categorical assortativity of ``labels`` (aligned with graph nodes)."""
    lab = np.asarray(labels)
    _, code = np.unique(lab, return_inverse=True)
    k = code.max() + 1
    a, b = code[graph.edges[:, 0]], code[graph.edges[:, 1]]
    e = np.zeros((k, k))
    np.add.at(e, (a, b), 1.0)
    np.add.at(e, (b, a), 1.0)
    e /= e.sum()
    ai = e.sum(axis=1)
    s = float(np.sum(ai * ai))
    if s >= 1.0:
        return float("nan")
    return float((np.trace(e) - s) / (1.0 - s))
