"""Per-viewer observation ledgers and per-tick aggregate measurements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import NodeId, TraitAssignment

CSV_HEADER = ("tick,algorithm,feed_length,prevalence,seed,b_local,gini,"
              "precision_at_10,precision_at_30,unique_edges_seen,"
              "mean_likes_given,mean_likes_received")


class UndefinedMetricError(Exception):
    pass


@dataclass
class ObservationLedger:
    """Counts of how many times each author was observed by one viewer.

    The attention a viewer pays to an author is obs_count[author] / total_obs.
    """

    viewer: NodeId
    obs_count: dict[NodeId, int] = field(default_factory=dict)
    total_obs: int = 0

    def clear(self) -> None:
        self.obs_count.clear()
        self.total_obs = 0


def record_exposure(ledger: ObservationLedger, author: NodeId) -> ObservationLedger:
    ledger.obs_count[author] = ledger.obs_count.get(author, 0) + 1
    ledger.total_obs += 1
    return ledger


@dataclass
class MetricsRow:
    tick: int
    algorithm: str
    feed_length: int
    prevalence: float
    seed: int
    b_local: float | None
    gini: float | None
    precision_at_10: float | None
    precision_at_30: float | None
    unique_edges_seen: int
    mean_likes_given: float
    mean_likes_received: float | None

    def to_csv(self) -> str:
        def fmt(v) -> str:
            if v is None:
                return "NA"
            return f"{v:.6f}"

        return ",".join([
            str(self.tick),
            self.algorithm,
            str(self.feed_length),
            fmt(self.prevalence),
            str(self.seed),
            fmt(self.b_local),
            fmt(self.gini),
            fmt(self.precision_at_10),
            fmt(self.precision_at_30),
            str(self.unique_edges_seen),
            fmt(self.mean_likes_given),
            fmt(self.mean_likes_received),
        ])


def write_csv(path, rows: list[MetricsRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def local_bias(ledgers, traits: TraitAssignment, prevalence: float) -> float:
    """Mean attention-weighted frequency of the trait minus its prevalence.

    Per viewer: sum over observed authors of attention * label.  Viewers with
    empty ledgers are excluded from the mean.
    """
    fractions = []
    labels = traits.labels
    for ledger in ledgers:
        if ledger.total_obs == 0:
            continue
        ones = sum(c for a, c in ledger.obs_count.items() if labels[a] == 1)
        fractions.append(ones / ledger.total_obs)
    if not fractions:
        raise UndefinedMetricError("all ledgers empty")
    return float(np.mean(fractions)) - prevalence


def gini(counts) -> float:
    """Gini coefficient of a sequence of non-negative counts.

    G = sum((2i - n - 1) * x_i) / (n * sum(x_i)) with x ascending, i from 1.
    """
    x = np.sort(np.asarray(counts, dtype=np.float64))
    if x.size == 0 or x.sum() == 0:
        raise UndefinedMetricError("gini undefined for empty or all-zero counts")
    if np.any(x < 0):
        raise ValueError("counts must be non-negative")
    n = x.size
    i = np.arange(1, n + 1, dtype=np.float64)
    return float(((2.0 * i - n - 1.0) * x).sum() / (n * x.sum()))


def precision_at_k(served_feeds, like_log, k: int) -> float:
    """Cumulative liked fraction of impressions at feed positions below k.

    ``served_feeds`` is an iterable of RankedFeed-like objects (viewer,
    positions); ``like_log`` an iterable of (viewer, tweet_id, tick).  The
    mean runs over viewers with at least one position-< k impression.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    liked = {(viewer, tweet) for viewer, tweet, _ in like_log}
    imps: dict[NodeId, int] = {}
    hits: dict[NodeId, int] = {}
    for feed in served_feeds:
        head = feed.positions[:k]
        if not head:
            continue
        imps[feed.viewer] = imps.get(feed.viewer, 0) + len(head)
        got = sum(1 for t in head if (feed.viewer, t) in liked)
        hits[feed.viewer] = hits.get(feed.viewer, 0) + got
    if not imps:
        raise UndefinedMetricError("no impressions at positions below k")
    return float(np.mean([hits.get(v, 0) / imps[v] for v in imps]))


def aggregate_row(state, traits: TraitAssignment, cfg, tick: int) -> MetricsRow:
    """One CSV row of every per-tick measurement, from live run state.

    ``state`` is the engine's SimState; precision uses its incremental
    per-viewer counters, everything else is recomputed from the ledgers and
    logs at the tick barrier.
    """
    ledgers = list(state.ledgers.values())
    labels = traits.labels

    pooled_counts: list[int] = []
    fractions: list[float] = []
    unique_edges = 0
    for ledger in ledgers:
        unique_edges += len(ledger.obs_count)
        if ledger.total_obs == 0:
            continue
        ones = 0
        for author, c in ledger.obs_count.items():
            pooled_counts.append(c)
            if labels[author] == 1:
                ones += c
        fractions.append(ones / ledger.total_obs)

    b_local = float(np.mean(fractions)) - traits.realized_prevalence() if fractions else None
    g = gini(pooled_counts) if pooled_counts else None

    p10 = _precision_from_counters(state.precision_counters, 0)
    p30 = _precision_from_counters(state.precision_counters, 2)

    core_count = len(state.ledgers)
    likes_total = len(state.like_log)
    mean_given = likes_total / core_count if core_count else 0.0
    observed_ever = len(state.ever_observed_authors)
    mean_received = likes_total / observed_ever if observed_ever else None

    return MetricsRow(
        tick=tick,
        algorithm=cfg.algorithm,
        feed_length=cfg.feed_length,
        prevalence=cfg.prevalence,
        seed=cfg.seed,
        b_local=b_local,
        gini=g,
        precision_at_10=p10,
        precision_at_30=p30,
        unique_edges_seen=unique_edges,
        mean_likes_given=mean_given,
        mean_likes_received=mean_received,
    )


def _precision_from_counters(counters: dict, offset: int) -> float | None:
    # counters: viewer -> [imp10, like10, imp30, like30]
    vals = [c[offset + 1] / c[offset] for c in counters.values() if c[offset] > 0]
    if not vals:
        return None
    return float(np.mean(vals))
