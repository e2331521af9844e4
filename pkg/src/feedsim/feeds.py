"""Feed ranker plugin interface and the analytic rankers."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .graph import NodeId, Network, TraitAssignment
from .metrics import ObservationLedger
from .streams import Streams

ALGORITHMS = ("random", "chronological", "ncf", "widedeep", "minimize_rho")


@dataclass
class RankedFeed:
    viewer: NodeId
    tick: int
    positions: list[int]  # tweet ids, exposure order


@dataclass
class RankContext:
    """Read-only view handed to rankers for one serve call."""

    network: Network
    traits: TraitAssignment
    tick: int
    streams: Streams
    ledgers: dict[NodeId, ObservationLedger]


class FeedRanker(ABC):
    """Orders candidate tweets into a feed of at most n positions."""

    @abstractmethod
    def rank(self, viewer: NodeId, candidates, ctx: RankContext, n: int) -> RankedFeed:
        ...

    def begin_tick(self, tick: int, interaction_log) -> None:
        """Hook run single-threaded before any feed is served this tick."""

    def notify_feedback(self, batch) -> None:
        """Receive the tick's (viewer, author, liked, tick) interactions."""


def _recency_order(candidates):
    return sorted(candidates, key=lambda t: (-t.created_tick, -t.id))


class RandomRanker(FeedRanker):
    """Uniform random order, truncated to n."""

    def rank(self, viewer, candidates, ctx, n):
        rng = ctx.streams.generator("shuffle", viewer, ctx.tick)
        perm = rng.permutation(len(candidates))
        chosen = [candidates[i].id for i in perm[:n]]
        return RankedFeed(viewer=viewer, tick=ctx.tick, positions=chosen)


class ChronologicalRanker(FeedRanker):
    """Newest first; ties broken by tweet id descending."""

    def rank(self, viewer, candidates, ctx, n):
        ordered = _recency_order(candidates)
        return RankedFeed(viewer=viewer, tick=ctx.tick,
                          positions=[t.id for t in ordered[:n]])


class MinimizeRhoRanker(FeedRanker):
    """Greedy feed construction that balances perceived in-degrees.

    The viewer's ledger defines a perceived network: each observed author has
    perceived in-degree equal to its observation count.  Serving a tweet adds
    one observation of its author (a new author enters at perceived in-degree
    1).  Each slot picks the candidate whose hypothetical observation
    minimizes |mean perceived in-degree of 1-labeled authors - mean perceived
    in-degree of all authors|, then commits that observation and re-scores.
    While the perceived network holds no 1-labeled author the score is 0 for
    every candidate and the recency tie-break decides.

    With ``static=True`` all candidates are scored once against the ledger
    alone and the feed is the ascending-score order without commits.
    """

    def __init__(self, static: bool = False):
        self.static = static

    def rank(self, viewer, candidates, ctx, n):
        if not candidates:
            return RankedFeed(viewer=viewer, tick=ctx.tick, positions=[])
        ledger = ctx.ledgers[viewer]
        labels = ctx.traits.labels

        authors = sorted({t.author for t in candidates})
        author_idx = {a: i for i, a in enumerate(authors)}
        seen = np.array([a in ledger.obs_count for a in authors])
        is_one = np.array([labels[a] == 1 for a in authors])

        n1 = 0
        ntot = 0
        sum1 = 0.0
        sumall = 0.0
        for a, c in ledger.obs_count.items():
            ntot += 1
            sumall += c
            if labels[a] == 1:
                n1 += 1
                sum1 += c

        cand_author = np.array([author_idx[t.author] for t in candidates])
        cand_is_one = is_one[cand_author]
        created = np.array([t.created_tick for t in candidates])
        ids = np.array([t.id for t in candidates])
        remaining = np.ones(len(candidates), dtype=bool)
        chosen: list[int] = []

        for _ in range(min(n, len(candidates))):
            unseen = ~seen[cand_author]
            new_sumall = sumall + 1.0
            new_ntot = ntot + unseen.astype(np.int64)
            new_sum1 = sum1 + cand_is_one.astype(np.float64)
            new_n1 = n1 + (cand_is_one & unseen).astype(np.int64)
            with np.errstate(divide="ignore", invalid="ignore"):
                score = np.abs(new_sum1 / new_n1 - new_sumall / new_ntot)
            score[new_n1 == 0] = 0.0
            score[~remaining] = np.inf
            # min score, then newest, then highest id
            order = np.lexsort((-ids, -created, score))
            pick = int(order[0])
            chosen.append(int(ids[pick]))
            remaining[pick] = False
            if not self.static:
                a = cand_author[pick]
                sumall += 1.0
                if cand_is_one[pick]:
                    sum1 += 1.0
                if not seen[a]:
                    ntot += 1
                    if cand_is_one[pick]:
                        n1 += 1
                    seen[a] = True
        return RankedFeed(viewer=viewer, tick=ctx.tick, positions=chosen)


def make_ranker(algorithm: str, static_minimize_rho: bool = False) -> FeedRanker:
    """Build an analytic ranker by config name; learned ones live in learners."""
    if algorithm == "random":
        return RandomRanker()
    if algorithm == "chronological":
        return ChronologicalRanker()
    if algorithm == "minimize_rho":
        return MinimizeRhoRanker(static=static_minimize_rho)
    raise ValueError(f"unknown analytic algorithm {algorithm!r}")
