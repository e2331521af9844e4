"""Follow network construction, trait labeling, and degree-attribute correlation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .streams import Streams

log = logging.getLogger(__name__)

NodeId = int


class GraphError(Exception):
    pass


class EdgeListParseError(GraphError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UndefinedCorrelationError(GraphError):
    pass


@dataclass(frozen=True)
class Network:
    """Immutable directed follow graph.

    An edge (u, v) means u follows v; u observes tweets authored by v.
    """

    nodes: tuple[NodeId, ...]                 # ascending
    out_adj: dict[NodeId, tuple[NodeId, ...]]  # follower -> sorted followees
    in_degree: dict[NodeId, int]
    core_users: frozenset[NodeId]
    edge_count: int

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def mean_in_degree(self) -> float:
        return self.edge_count / self.node_count

    def followees(self, node: NodeId) -> tuple[NodeId, ...]:
        return self.out_adj.get(node, ())

    def out_degree(self, node: NodeId) -> int:
        return len(self.out_adj.get(node, ()))

    def edges(self):
        """Iterate (follower, followee) pairs in sorted order."""
        for u in self.nodes:
            for v in self.out_adj.get(u, ()):
                yield (u, v)


@dataclass
class TraitAssignment:
    """Binary label per node, at an exact global count of 1-labels."""

    labels: dict[NodeId, int]
    prevalence: float
    realized_rho: float | None
    converged: bool = True

    @property
    def ones_count(self) -> int:
        return sum(self.labels.values())

    def realized_prevalence(self) -> float:
        return self.ones_count / len(self.labels)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _build_network(adj: dict[NodeId, set[NodeId]],
                   nodes: set[NodeId],
                   core_users: frozenset[NodeId] | None) -> Network:
    in_deg: dict[NodeId, int] = {v: 0 for v in nodes}
    edge_count = 0
    out_adj: dict[NodeId, tuple[NodeId, ...]] = {}
    for u in sorted(adj):
        vs = tuple(sorted(adj[u]))
        if vs:
            out_adj[u] = vs
            edge_count += len(vs)
            for v in vs:
                in_deg[v] += 1
    if core_users is None:
        core_users = frozenset(u for u in nodes if out_adj.get(u))
    return Network(
        nodes=tuple(sorted(nodes)),
        out_adj=out_adj,
        in_degree=in_deg,
        core_users=core_users,
        edge_count=edge_count,
    )


def load_edge_list(path) -> Network:
    """Load a tab-separated follower<TAB>followee file.

    Lines beginning with ``#`` are comments, except a ``#core:`` header which
    declares the core user set as comma-separated ids.  Duplicate edges are
    collapsed; self-loops are dropped with a warning.  Without a core header,
    every node with out-degree >= 1 is core.
    """
    adj: dict[NodeId, set[NodeId]] = {}
    nodes: set[NodeId] = set()
    declared_core: list[NodeId] | None = None
    rejected = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                if line.startswith("#core:"):
                    body = line[len("#core:"):].strip()
                    try:
                        declared_core = [int(tok) for tok in body.split(",") if tok.strip()]
                    except ValueError:
                        raise EdgeListParseError(line_no, f"bad core header {body!r}")
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise EdgeListParseError(line_no, f"expected 2 tab-separated fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(line_no, f"non-integer node id in {line!r}")
            if u == v:
                rejected += 1
                log.warning("line %d: self-loop %d->%d rejected", line_no, u, v)
                continue
            nodes.add(u)
            nodes.add(v)
            adj.setdefault(u, set()).add(v)
    if not any(adj.values()):
        raise GraphError("no edges")
    if rejected:
        log.warning("%d self-loop edge(s) rejected during load", rejected)
    core = None
    if declared_core is not None:
        unknown = [c for c in declared_core if c not in nodes]
        if unknown:
            raise GraphError(f"core header names unknown node ids: {unknown[:5]}")
        core = frozenset(declared_core)
    return _build_network(adj, nodes, core)


def save_edge_list(net: Network, path) -> None:
    """Write the network in the same format load_edge_list reads."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#core:" + ",".join(str(c) for c in sorted(net.core_users)) + "\n")
        for u, v in net.edges():
            fh.write(f"{u}\t{v}\n")


def save_traits(traits: TraitAssignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node in sorted(traits.labels):
            fh.write(f"{node}\t{traits.labels[node]}\n")


def load_traits(path, prevalence: float | None = None) -> TraitAssignment:
    labels: dict[NodeId, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise EdgeListParseError(line_no, f"bad label line {line!r}")
            labels[int(parts[0])] = int(parts[1])
    if not labels:
        raise GraphError("no labels")
    prev = prevalence if prevalence is not None else sum(labels.values()) / len(labels)
    return TraitAssignment(labels=labels, prevalence=prev, realized_rho=None)


# Out-degree is two-tiered: a heavy tier of core_count nodes holds most of
# the follow edges (follower networks crawled around central users look like
# this: the central users' follow lists are complete, the periphery's are
# thin), with a mild lognormal spread inside each tier.  The heavy tier's
# share of the edge budget keeps core candidate pools well above feed length.
_HEAVY_EDGE_SHARE = 0.65
_TIER_SIGMA = 0.35


def generate_synthetic(node_count: int, edge_count: int, core_count: int, seed: int) -> Network:
    """Directed preferential-attachment network with an exact edge count.

    Each new node follows existing nodes with probability proportional to
    their current in-degree + 1, which produces the heavy-tailed in-degree
    profile of follower networks.  If the attachment pass lands short of
    ``edge_count`` distinct edges, uniform random edges top the count up.
    Core users are the ``core_count`` nodes of highest out-degree.
    """
    if core_count < 1 or node_count < core_count:
        raise GraphError(f"need node_count >= core_count >= 1, got {node_count}, {core_count}")
    if edge_count < 1:
        raise GraphError("edge_count must be >= 1")
    if edge_count > node_count * (node_count - 1):
        raise GraphError(f"edge_count {edge_count} exceeds max for {node_count} nodes")
    if node_count < 2:
        raise GraphError("need at least 2 nodes")

    rng = Streams(seed).generator("graph")
    adj: dict[NodeId, set[NodeId]] = {v: set() for v in range(node_count)}

    heavy = set(int(v) for v in rng.choice(node_count, size=core_count, replace=False))
    heavy_mean = _HEAVY_EDGE_SHARE * edge_count / core_count
    light_count = node_count - core_count
    light_mean = (1.0 - _HEAVY_EDGE_SHARE) * edge_count / light_count if light_count else 0.0

    # attachment_pool holds one entry per unit of in-degree; the implicit
    # "+1" smoothing term is realized by sometimes sampling a node uniformly
    attachment_pool: list[int] = []
    total = 0

    for v in range(1, node_count):
        if total >= edge_count:
            break
        mean_out = heavy_mean if v in heavy else light_mean
        spread = float(np.exp(_TIER_SIGMA * rng.standard_normal() - 0.5 * _TIER_SIGMA ** 2))
        target = max(1, _round_half_up(mean_out * spread))
        target = min(target, v, edge_count - total)
        chosen = adj[v]
        attempts = 0
        while len(chosen) < target and attempts < 40 * target:
            attempts += 1
            i = int(rng.integers(0, len(attachment_pool) + v))
            cand = attachment_pool[i] if i < len(attachment_pool) else i - len(attachment_pool)
            if cand == v or cand in chosen:
                continue
            chosen.add(cand)
            attachment_pool.append(cand)
            total += 1

    while total < edge_count:
        u = int(rng.integers(0, node_count))
        w = int(rng.integers(0, node_count))
        if u == w or w in adj[u]:
            continue
        adj[u].add(w)
        total += 1

    by_out = sorted(range(node_count), key=lambda v: (-len(adj[v]), v))
    core = frozenset(by_out[:core_count])
    return _build_network(adj, set(range(node_count)), core)


def degree_attribute_correlation(in_degrees, labels) -> float:
    """Correlation between in-degree and the binary label.

    Computed as P(x=1) * (mean degree of 1-labeled nodes - mean degree) over
    the product of population standard deviations, which is algebraically the
    Pearson correlation of the two sequences.
    """
    k = np.asarray(in_degrees, dtype=np.float64)
    x = np.asarray(labels, dtype=np.float64)
    if k.shape != x.shape or k.ndim != 1 or k.size < 2:
        raise GraphError("need two equal-length sequences of length >= 2")
    p = float(x.mean())
    if p == 0.0 or p == 1.0:
        raise UndefinedCorrelationError("all labels equal; correlation undefined")
    sigma_k = float(k.std())
    if sigma_k == 0.0:
        raise UndefinedCorrelationError("all in-degrees equal; correlation undefined")
    sigma_x = float(np.sqrt(p * (1.0 - p)))
    mean_k1 = float(k[x == 1.0].mean())
    return p / (sigma_x * sigma_k) * (mean_k1 - float(k.mean()))


_SWAP_CANDIDATES = 32


def assign_traits(net: Network, prevalence: float, target_rho: float | None = None,
                  tolerance: float = 0.02, seed: int = 0) -> TraitAssignment:
    """Label exactly round(prevalence * N) nodes with 1.

    Without ``target_rho`` the 1-labels are a uniform random subset.  With a
    target, greedy label swaps between a 1-node and a 0-node walk the realized
    degree-attribute correlation toward the target; each step tries
    ``_SWAP_CANDIDATES`` sampled pairs and commits the best improvement.  The
    number of 1-labels never changes during the search.
    """
    if not 0.0 < prevalence < 1.0:
        raise GraphError(f"prevalence must be in (0,1), got {prevalence}")
    if target_rho is not None and abs(target_rho) > 1.0:
        raise GraphError(f"target_rho must be in [-1,1], got {target_rho}")
    n = net.node_count
    count1 = _round_half_up(prevalence * n)
    count1 = min(max(count1, 0), n)
    nodes = list(net.nodes)
    rng = Streams(seed).generator("traits", f"{prevalence!r}")
    ones_idx = rng.choice(n, size=count1, replace=False)
    x = np.zeros(n, dtype=np.int64)
    x[ones_idx] = 1
    k = np.array([net.in_degree[v] for v in nodes], dtype=np.float64)

    def rho_of(sum1k: float) -> float:
        p = count1 / n
        sigma_x = np.sqrt(p * (1 - p))
        sigma_k = k.std()
        if sigma_x == 0.0 or sigma_k == 0.0:
            return float("nan")
        return float(p / (sigma_x * sigma_k) * (sum1k / count1 - k.mean()))

    converged = True
    if target_rho is not None and 0 < count1 < n:
        ones = list(np.flatnonzero(x == 1))
        zeros = list(np.flatnonzero(x == 0))
        pos_in_ones = {v: i for i, v in enumerate(ones)}
        pos_in_zeros = {v: i for i, v in enumerate(zeros)}
        sum1k = float(k[x == 1].sum())
        budget = n * 20
        for _ in range(budget):
            current = rho_of(sum1k)
            if np.isnan(current) or abs(current - target_rho) <= tolerance:
                break
            best_gain = 0.0
            best_pair = None
            pick_ones = rng.integers(0, len(ones), size=_SWAP_CANDIDATES)
            pick_zeros = rng.integers(0, len(zeros), size=_SWAP_CANDIDATES)
            for io, iz in zip(pick_ones, pick_zeros):
                a, b = ones[io], zeros[iz]
                cand = rho_of(sum1k + k[b] - k[a])
                gain = abs(current - target_rho) - abs(cand - target_rho)
                if gain > best_gain:
                    best_gain = gain
                    best_pair = (a, b)
            if best_pair is None:
                continue
            a, b = best_pair
            x[a], x[b] = 0, 1
            sum1k += k[b] - k[a]
            ones[pos_in_ones[a]] = b
            zeros[pos_in_zeros[b]] = a
            pos_in_ones[b] = pos_in_ones.pop(a)
            pos_in_zeros[a] = pos_in_zeros.pop(b)
        final = rho_of(float(k[x == 1].sum()))
        converged = not np.isnan(final) and abs(final - target_rho) <= tolerance

    labels = {v: int(x[i]) for i, v in enumerate(nodes)}
    try:
        realized = degree_attribute_correlation(k, x)
    except UndefinedCorrelationError:
        realized = None
    return TraitAssignment(labels=labels, prevalence=prevalence,
                           realized_rho=realized, converged=converged)
