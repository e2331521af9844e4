"""Discrete tick loop: activation, tweet production, feed serving, biased
likes, and the mid-run ledger reset.

Each tick runs two phases around a barrier.  Phase 1 activates nodes and
publishes their tweets; phase 2 serves feeds to the activated core users and
records exposures and likes.  Core users are split into contiguous partitions
for phase 2; a partition only ever mutates state owned by its own viewers, and
partition outputs are merged in partition order, so results are bit-identical
for any worker count.  Every random draw comes from a counter-based stream
keyed by (seed, entity, tick, purpose), never from shared sequential state.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .feeds import ALGORITHMS, FeedRanker, RankContext, RankedFeed
from .graph import Network, NodeId, TraitAssignment
from .metrics import ObservationLedger, record_exposure
from .streams import Streams


class EngineError(Exception):
    pass


@dataclass(frozen=True)
class Tweet:
    id: int
    author: NodeId
    created_tick: int


@dataclass(frozen=True)
class SimConfig:
    ticks: int = 36
    reset_tick: int = 24
    activation_prob: float = 0.083
    lognormal_mu: float = 0.0
    lognormal_sigma: float = 1.0
    like_prob_same: float = 0.20
    like_prob_diff: float = 0.05
    feed_length: int = 30
    prevalence: float = 0.15
    algorithm: str = "random"
    candidate_window: int = 24
    minimize_rho_static: bool = False
    seed: int = 0

    def validate(self) -> None:
        for name in ("activation_prob", "like_prob_same", "like_prob_diff"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"simulation.{name} must be in [0,1], got {v}")
        if not 0.0 < self.prevalence < 1.0:
            raise ValueError(f"simulation.prevalence must be in (0,1), got {self.prevalence}")
        if self.reset_tick >= self.ticks:
            raise ValueError(f"simulation.reset_tick must be below ticks, got {self.reset_tick}")
        if self.feed_length < 1:
            raise ValueError(f"simulation.feed_length must be >= 1, got {self.feed_length}")
        if self.ticks < 1:
            raise ValueError(f"simulation.ticks must be >= 1, got {self.ticks}")
        if self.candidate_window < 1:
            raise ValueError(f"simulation.candidate_window must be >= 1, got {self.candidate_window}")
        if self.lognormal_sigma < 0:
            raise ValueError(f"simulation.lognormal_sigma must be >= 0, got {self.lognormal_sigma}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"simulation.algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")

    def with_run(self, algorithm: str, prevalence: float, feed_length: int, seed: int) -> "SimConfig":
        return replace(self, algorithm=algorithm, prevalence=prevalence,
                       feed_length=feed_length, seed=seed)


@dataclass
class SimState:
    tick: int
    tweets: list[Tweet]
    tweets_by_author: dict[NodeId, list[int]]
    served_history: dict[NodeId, set[int]]
    like_log: list[tuple[NodeId, int, int]]
    interaction_log: list[tuple[NodeId, NodeId, int, int]]
    ledgers: dict[NodeId, ObservationLedger]
    liked_by: dict[NodeId, list[int]]
    feed_log: list[RankedFeed]
    precision_counters: dict[NodeId, list[int]]
    ever_observed_authors: set[NodeId]
    fof_extra: dict[NodeId, frozenset[NodeId]]


def new_state(net: Network) -> SimState:
    cores = sorted(net.core_users)
    fof_extra = {}
    for v in cores:
        friends = set(net.followees(v))
        fof: set[NodeId] = set()
        for f in friends:
            fof.update(net.followees(f))
        fof.discard(v)
        fof -= friends
        fof_extra[v] = frozenset(fof)
    return SimState(
        tick=0,
        tweets=[],
        tweets_by_author={},
        served_history={v: set() for v in cores},
        like_log=[],
        interaction_log=[],
        ledgers={v: ObservationLedger(viewer=v) for v in cores},
        liked_by={v: [] for v in cores},
        feed_log=[],
        precision_counters={v: [0, 0, 0, 0] for v in cores},
        ever_observed_authors=set(),
        fof_extra=fof_extra,
    )


def sample_activation(node: NodeId, tick: int, cfg: SimConfig, streams: Streams) -> bool:
    return streams.uniform("activation", node, tick) < cfg.activation_prob


def sample_tweet_count(cfg: SimConfig, streams: Streams, node: NodeId, tick: int) -> int:
    # round half up; a lognormal draw below 0.5 means the activated user posts nothing
    z = streams.normal("tweets", node, tick)
    raw = float(np.exp(cfg.lognormal_mu + cfg.lognormal_sigma * z))
    return int(np.floor(raw + 0.5))


def decide_like(viewer_label: int, author_label: int, cfg: SimConfig,
                streams: Streams, viewer: NodeId, tweet_id: int) -> bool:
    p = cfg.like_prob_same if viewer_label == author_label else cfg.like_prob_diff
    return streams.uniform("like", viewer, tweet_id) < p


def build_candidate_pool(viewer: NodeId, state: SimState, net: Network,
                         cfg: SimConfig) -> list[Tweet]:
    """Unseen recent tweets by friends, plus friend-liked tweets authored by
    friends-of-friends, ordered by tweet id ascending."""
    horizon = state.tick - cfg.candidate_window
    served = state.served_history[viewer]
    pool: dict[int, Tweet] = {}
    friends = net.followees(viewer)
    for f in friends:
        ids = state.tweets_by_author.get(f)
        if not ids:
            continue
        for tid in reversed(ids):
            tweet = state.tweets[tid]
            if tweet.created_tick <= horizon:
                break
            if tid not in served:
                pool[tid] = tweet
    fof = state.fof_extra[viewer]
    if fof:
        for f in friends:
            liked = state.liked_by.get(f)
            if not liked:
                continue
            for tid in liked:
                if tid in pool or tid in served:
                    continue
                tweet = state.tweets[tid]
                if tweet.created_tick > horizon and tweet.author in fof:
                    pool[tid] = tweet
    return [pool[tid] for tid in sorted(pool)]


def reset_ledgers(state: SimState) -> SimState:
    """Clear edge-observation counts; history, logs and counters survive."""
    for ledger in state.ledgers.values():
        ledger.clear()
    return state


def _serve_partition(viewers, state: SimState, net: Network, traits: TraitAssignment,
                     ranker: FeedRanker, cfg: SimConfig, ctx: RankContext):
    feeds: list[RankedFeed] = []
    likes: list[tuple[NodeId, int, int]] = []
    interactions: list[tuple[NodeId, NodeId, int, int]] = []
    observed: set[NodeId] = set()
    labels = traits.labels
    streams = ctx.streams
    tick = state.tick
    for viewer in viewers:
        pool = build_candidate_pool(viewer, state, net, cfg)
        try:
            feed = ranker.rank(viewer, pool, ctx, cfg.feed_length)
        except Exception as exc:
            raise EngineError(f"ranker failed at tick {tick} for user {viewer}: {exc}") from exc
        feeds.append(feed)
        ledger = state.ledgers[viewer]
        counters = state.precision_counters[viewer]
        served = state.served_history[viewer]
        vlabel = labels[viewer]
        for pos, tid in enumerate(feed.positions):
            tweet = state.tweets[tid]
            record_exposure(ledger, tweet.author)
            observed.add(tweet.author)
            liked = decide_like(vlabel, labels[tweet.author], cfg, streams, viewer, tid)
            if pos < 10:
                counters[0] += 1
                counters[1] += int(liked)
            if pos < 30:
                counters[2] += 1
                counters[3] += int(liked)
            interactions.append((viewer, tweet.author, int(liked), tick))
            if liked:
                likes.append((viewer, tid, tick))
            served.add(tid)
    return feeds, likes, interactions, observed


def run_tick(state: SimState, net: Network, traits: TraitAssignment,
             ranker: FeedRanker, cfg: SimConfig, streams: Streams,
             workers: int = 1, on_tick_complete=None) -> SimState:
    """Advance the simulation by one tick.

    ``on_tick_complete`` runs after all serving but before the ledger reset,
    which is where per-tick measurements belong.
    """
    if state.tick >= cfg.ticks:
        raise EngineError(f"tick {state.tick} is past the configured horizon {cfg.ticks}")
    tick = state.tick

    # phase 1: activation and publishing, ids assigned in ascending node order
    activated: set[NodeId] = set()
    next_id = len(state.tweets)
    for node in net.nodes:
        if not sample_activation(node, tick, cfg, streams):
            continue
        activated.add(node)
        count = sample_tweet_count(cfg, streams, node, tick)
        if count <= 0:
            continue
        ids = state.tweets_by_author.setdefault(node, [])
        for _ in range(count):
            state.tweets.append(Tweet(id=next_id, author=node, created_tick=tick))
            ids.append(next_id)
            next_id += 1

    # barrier: learner training is single-threaded between the phases
    ranker.begin_tick(tick, state.interaction_log)

    # phase 2: serve feeds to activated core users, partitioned by viewer
    active_cores = [v for v in sorted(net.core_users) if v in activated]
    ctx = RankContext(network=net, traits=traits, tick=tick,
                      streams=streams, ledgers=state.ledgers)
    parts = _split(active_cores, workers)
    if len(parts) <= 1:
        results = [_serve_partition(p, state, net, traits, ranker, cfg, ctx) for p in parts]
    else:
        with ThreadPoolExecutor(max_workers=len(parts)) as pool:
            futures = [pool.submit(_serve_partition, p, state, net, traits, ranker, cfg, ctx)
                       for p in parts]
            results = [f.result() for f in futures]

    tick_interactions: list[tuple[NodeId, NodeId, int, int]] = []
    for feeds, likes, interactions, observed in results:
        state.feed_log.extend(feeds)
        state.like_log.extend(likes)
        tick_interactions.extend(interactions)
        state.ever_observed_authors |= observed
        for viewer, tid, _ in likes:
            state.liked_by[viewer].append(tid)
    state.interaction_log.extend(tick_interactions)
    ranker.notify_feedback(tick_interactions)

    if on_tick_complete is not None:
        on_tick_complete(state)
    if tick + 1 == cfg.reset_tick:
        reset_ledgers(state)
    state.tick += 1
    return state


def _split(items: list, workers: int) -> list[list]:
    workers = max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [items]
    k = min(workers, len(items))
    size, extra = divmod(len(items), k)
    parts = []
    start = 0
    for i in range(k):
        end = start + size + (1 if i < extra else 0)
        parts.append(items[start:end])
        start = end
    return parts


def run_simulation(net: Network, traits: TraitAssignment, cfg: SimConfig,
                   ranker: FeedRanker, workers: int = 1):
    """Run the full tick horizon and return one MetricsRow per tick."""
    from .metrics import aggregate_row

    cfg.validate()
    streams = Streams(cfg.seed)
    state = new_state(net)
    rows = []

    def collect(st: SimState) -> None:
        rows.append(aggregate_row(st, traits, cfg, st.tick))

    for _ in range(cfg.ticks):
        run_tick(state, net, traits, ranker, cfg, streams,
                 workers=workers, on_tick_complete=collect)
    return rows, state


def snapshot_state(state: SimState, out_dir) -> None:
    """Dump tweets, likes, and ledgers as TSV files for debugging."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "tweets.tsv"), "w", encoding="utf-8") as fh:
        fh.write("id\tauthor\tcreated_tick\n")
        for t in state.tweets:
            fh.write(f"{t.id}\t{t.author}\t{t.created_tick}\n")
    with open(os.path.join(out_dir, "likes.tsv"), "w", encoding="utf-8") as fh:
        fh.write("viewer\ttweet\ttick\n")
        for viewer, tid, tick in state.like_log:
            fh.write(f"{viewer}\t{tid}\t{tick}\n")
    with open(os.path.join(out_dir, "ledgers.tsv"), "w", encoding="utf-8") as fh:
        fh.write("viewer\tauthor\tcount\n")
        for viewer in sorted(state.ledgers):
            ledger = state.ledgers[viewer]
            for author in sorted(ledger.obs_count):
                fh.write(f"{viewer}\t{author}\t{ledger.obs_count[author]}\n")
