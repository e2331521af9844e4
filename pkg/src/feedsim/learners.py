"""Self-contained neural rankers: embedding tables, an MLP trunk, focal loss,
and plain stochastic gradient descent.

Two model kinds share the stack.  "ncf" scores a viewer-author pair with a
generalized-matrix-factorization term (elementwise embedding product through a
learned output vector) plus an MLP over the concatenated embeddings.
"widedeep" replaces the GMF term with wide scalar weights: one per viewer, one
per author, and one on the same-label cross feature.  Items are keyed by
author id: fresh tweets have no interaction history, so the author is the
stable unit the models can learn about.

All gradients are computed analytically; tests hold them to central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .feeds import FeedRanker, RankedFeed
from .graph import NodeId, Network, TraitAssignment
from .streams import Streams

_EPS = 1e-7


class LearnerDivergedError(Exception):
    pass


@dataclass
class LearnerConfig:
    embedding_dim: int = 16
    mlp_layers: tuple[int, ...] = (32, 16, 8)
    epochs_per_tick: int = 10
    learning_rate: float = 0.01
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    batch_size: int = 256
    init_scale: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        positive = {
            "embedding_dim": self.embedding_dim,
            "epochs_per_tick": self.epochs_per_tick,
            "learning_rate": self.learning_rate,
            "focal_alpha": self.focal_alpha,
            "focal_gamma": self.focal_gamma,
            "batch_size": self.batch_size,
            "init_scale": self.init_scale,
        }
        for name, v in positive.items():
            if v <= 0:
                raise ValueError(f"learner.{name} must be positive, got {v}")
        if not self.mlp_layers or any(w <= 0 for w in self.mlp_layers):
            raise ValueError("learner.mlp_layers must be a non-empty list of positive widths")
        if self.mlp_layers[0] != 2 * self.embedding_dim:
            raise ValueError(
                f"learner.mlp_layers[0] must be 2*embedding_dim "
                f"({2 * self.embedding_dim}), got {self.mlp_layers[0]}")


@dataclass
class ModelParams:
    kind: str                       # "ncf" | "widedeep"
    node_ids: tuple[NodeId, ...]    # row order of the tables
    emb_viewer: np.ndarray          # (N, d)
    emb_author: np.ndarray          # (N, d)
    gmf_w: np.ndarray               # (d,)
    mlp_w: list[np.ndarray]         # per hidden layer, (out, in)
    mlp_b: list[np.ndarray]         # per hidden layer, (out,)
    head_w: np.ndarray              # (last_width,)
    bias: float
    wide_viewer: np.ndarray         # (N,)
    wide_author: np.ndarray         # (N,)
    wide_cross: float
    index: dict[NodeId, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {v: i for i, v in enumerate(self.node_ids)}

    def all_finite(self) -> bool:
        arrays = [self.emb_viewer, self.emb_author, self.gmf_w, self.head_w,
                  self.wide_viewer, self.wide_author,
                  np.array([self.bias, self.wide_cross])]
        arrays += self.mlp_w + self.mlp_b
        return all(np.isfinite(a).all() for a in arrays)


def init_params(kind: str, node_ids, cfg: LearnerConfig) -> ModelParams:
    """Fresh parameters.  Embedding rows are keyed per node so their values do
    not depend on how many nodes exist or in what order they are touched."""
    cfg.validate()
    if kind not in ("ncf", "widedeep"):
        raise ValueError(f"unknown model kind {kind!r}")
    node_ids = tuple(node_ids)
    streams = Streams(cfg.seed)
    d = cfg.embedding_dim
    n = len(node_ids)
    emb_v = np.empty((n, d))
    emb_a = np.empty((n, d))
    for i, node in enumerate(node_ids):
        emb_v[i] = streams.generator("emb", "viewer", node).uniform(-cfg.init_scale, cfg.init_scale, d)
        emb_a[i] = streams.generator("emb", "author", node).uniform(-cfg.init_scale, cfg.init_scale, d)
    gmf_w = streams.generator("gmf").uniform(-cfg.init_scale, cfg.init_scale, d)
    mlp_w, mlp_b = [], []
    fan_in = 2 * d
    for li, width in enumerate(cfg.mlp_layers):
        bound = np.sqrt(6.0 / (fan_in + width))
        mlp_w.append(streams.generator("mlp", li).uniform(-bound, bound, (width, fan_in)))
        mlp_b.append(np.zeros(width))
        fan_in = width
    head_w = streams.generator("mlp", len(cfg.mlp_layers)).uniform(
        -np.sqrt(6.0 / (fan_in + 1)), np.sqrt(6.0 / (fan_in + 1)), fan_in)
    return ModelParams(
        kind=kind, node_ids=node_ids,
        emb_viewer=emb_v, emb_author=emb_a, gmf_w=gmf_w,
        mlp_w=mlp_w, mlp_b=mlp_b, head_w=head_w, bias=0.0,
        wide_viewer=np.zeros(n), wide_author=np.zeros(n), wide_cross=0.0,
    )


def focal_loss(p: float, y: int, alpha: float, gamma: float) -> float:
    """Binary focal cross-entropy for one prediction, with saturation clamp."""
    p = min(max(p, _EPS), 1.0 - _EPS)
    if y == 1:
        return float(-alpha * (1.0 - p) ** gamma * np.log(p))
    return float(-(1.0 - alpha) * p ** gamma * np.log(1.0 - p))


def _focal_dz(p: np.ndarray, y: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    """d(focal loss)/d(logit) for each example."""
    p = np.clip(p, _EPS, 1.0 - _EPS)
    pos = alpha * gamma * p * (1.0 - p) ** gamma * np.log(p) - alpha * (1.0 - p) ** (gamma + 1.0)
    neg = (-(1.0 - alpha) * gamma * (1.0 - p) * p ** gamma * np.log(1.0 - p)
           + (1.0 - alpha) * p ** (gamma + 1.0))
    return np.where(y == 1, pos, neg)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_batch(params: ModelParams, v_idx: np.ndarray, a_idx: np.ndarray,
                   same: np.ndarray | None):
    """Probability of a like for each (viewer, author) row, with a cache for
    the backward pass.  ``same`` is the same-label indicator, used only by the
    widedeep kind."""
    ev = params.emb_viewer[v_idx]           # (B, d)
    ea = params.emb_author[a_idx]           # (B, d)
    x = np.concatenate([ev, ea], axis=1)    # (B, 2d)
    hs = []
    h = x
    for w, b in zip(params.mlp_w, params.mlp_b):
        h = np.maximum(h @ w.T + b, 0.0)
        hs.append(h)
    deep = hs[-1] @ params.head_w
    if params.kind == "ncf":
        inter = ev * ea
        z = inter @ params.gmf_w + deep + params.bias
    else:
        z = (params.wide_viewer[v_idx] + params.wide_author[a_idx]
             + params.wide_cross * same + deep + params.bias)
    # keep outputs strictly inside (0,1) even where float64 sigmoid saturates
    p = np.clip(_sigmoid(z), _EPS, 1.0 - _EPS)
    cache = (v_idx, a_idx, ev, ea, x, hs, same)
    return p, cache


@dataclass
class Grads:
    """Gradients of the mean batch loss; embedding and wide parts stay sparse."""
    v_idx: np.ndarray
    a_idx: np.ndarray
    d_emb_viewer: np.ndarray   # (B, d) rows for v_idx
    d_emb_author: np.ndarray   # (B, d) rows for a_idx
    d_gmf_w: np.ndarray
    d_mlp_w: list[np.ndarray]
    d_mlp_b: list[np.ndarray]
    d_head_w: np.ndarray
    d_bias: float
    d_wide_viewer: np.ndarray  # (B,) rows for v_idx
    d_wide_author: np.ndarray  # (B,) rows for a_idx
    d_wide_cross: float


def _backward_batch(params: ModelParams, cache, dz: np.ndarray) -> Grads:
    v_idx, a_idx, ev, ea, x, hs, same = cache
    d = ev.shape[1]
    if params.kind == "ncf":
        d_gmf = dz @ (ev * ea)
        dev = dz[:, None] * (ea * params.gmf_w)
        dea = dz[:, None] * (ev * params.gmf_w)
        d_wv = np.zeros_like(dz)
        d_wa = np.zeros_like(dz)
        d_wc = 0.0
    else:
        d_gmf = np.zeros_like(params.gmf_w)
        dev = np.zeros_like(ev)
        dea = np.zeros_like(ea)
        d_wv = dz.copy()
        d_wa = dz.copy()
        d_wc = float(dz @ same)
    d_head = dz @ hs[-1]
    dh = dz[:, None] * params.head_w        # (B, last)
    d_mlp_w = [None] * len(params.mlp_w)
    d_mlp_b = [None] * len(params.mlp_b)
    for li in range(len(params.mlp_w) - 1, -1, -1):
        dh = dh * (hs[li] > 0)
        prev = hs[li - 1] if li > 0 else x
        d_mlp_w[li] = dh.T @ prev
        d_mlp_b[li] = dh.sum(axis=0)
        dh = dh @ params.mlp_w[li]
    dev += dh[:, :d]
    dea += dh[:, d:]
    return Grads(
        v_idx=v_idx, a_idx=a_idx,
        d_emb_viewer=dev, d_emb_author=dea,
        d_gmf_w=d_gmf, d_mlp_w=d_mlp_w, d_mlp_b=d_mlp_b,
        d_head_w=d_head, d_bias=float(dz.sum()),
        d_wide_viewer=d_wv, d_wide_author=d_wa, d_wide_cross=d_wc,
    )


def _sgd_step(params: ModelParams, g: Grads, lr: float) -> None:
    np.add.at(params.emb_viewer, g.v_idx, -lr * g.d_emb_viewer)
    np.add.at(params.emb_author, g.a_idx, -lr * g.d_emb_author)
    if params.kind == "ncf":
        params.gmf_w -= lr * g.d_gmf_w
    else:
        np.add.at(params.wide_viewer, g.v_idx, -lr * g.d_wide_viewer)
        np.add.at(params.wide_author, g.a_idx, -lr * g.d_wide_author)
        params.wide_cross -= lr * g.d_wide_cross
    for w, dw in zip(params.mlp_w, g.d_mlp_w):
        w -= lr * dw
    for b, db in zip(params.mlp_b, g.d_mlp_b):
        b -= lr * db
    params.head_w -= lr * g.d_head_w
    params.bias -= lr * g.d_bias


def batch_loss_and_grads(params: ModelParams, cfg: LearnerConfig,
                         v_idx: np.ndarray, a_idx: np.ndarray,
                         y: np.ndarray, same: np.ndarray):
    """Mean focal loss over the batch and its gradients."""
    p, cache = _forward_batch(params, v_idx, a_idx, same)
    pc = np.clip(p, _EPS, 1.0 - _EPS)
    losses = np.where(
        y == 1,
        -cfg.focal_alpha * (1.0 - pc) ** cfg.focal_gamma * np.log(pc),
        -(1.0 - cfg.focal_alpha) * pc ** cfg.focal_gamma * np.log(1.0 - pc))
    dz = _focal_dz(p, y, cfg.focal_alpha, cfg.focal_gamma) / len(y)
    return float(losses.mean()), _backward_batch(params, cache, dz)


def train_tick(params: ModelParams, examples, cfg: LearnerConfig,
               tick: int, streams: Streams, traits: TraitAssignment) -> list[float]:
    """Run epochs_per_tick passes of mini-batch SGD over the example log.

    ``examples`` is a (viewer, author, liked) record array or tuple of arrays;
    an empty log leaves the parameters untouched.  Returns mean loss per
    epoch.  Raises LearnerDivergedError if any parameter goes non-finite.
    """
    viewers, authors, ys = examples
    m = len(ys)
    if m == 0:
        return []
    idx = params.index
    v_idx = np.fromiter((idx[v] for v in viewers), dtype=np.int64, count=m)
    a_idx = np.fromiter((idx[a] for a in authors), dtype=np.int64, count=m)
    y = np.asarray(ys, dtype=np.int64)
    labels = traits.labels
    vl = np.fromiter((labels[v] for v in viewers), dtype=np.int64, count=m)
    al = np.fromiter((labels[a] for a in authors), dtype=np.int64, count=m)
    same = (vl == al).astype(np.float64)

    epoch_losses = []
    for epoch in range(cfg.epochs_per_tick):
        perm = streams.generator("train", tick, epoch).permutation(m)
        losses = []
        for start in range(0, m, cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            loss, grads = batch_loss_and_grads(
                params, cfg, v_idx[sel], a_idx[sel], y[sel], same[sel])
            _sgd_step(params, grads, cfg.learning_rate)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
    if not params.all_finite():
        raise LearnerDivergedError(
            f"non-finite parameter after training at tick {tick}")
    return epoch_losses


def ncf_forward(params: ModelParams, viewer: NodeId, author: NodeId) -> float:
    v = np.array([params.index[viewer]])
    a = np.array([params.index[author]])
    p, _ = _forward_batch(params, v, a, None)
    return float(p[0])


def widedeep_forward(params: ModelParams, viewer: NodeId, author: NodeId,
                     viewer_label: int, author_label: int) -> float:
    v = np.array([params.index[viewer]])
    a = np.array([params.index[author]])
    same = np.array([1.0 if viewer_label == author_label else 0.0])
    p, _ = _forward_batch(params, v, a, same)
    return float(p[0])


def rank_learned(viewer: NodeId, candidates, ctx, n: int, forward_fn) -> RankedFeed:
    """Score candidates with forward_fn(viewer, authors) and serve the top n.

    Ties break by created_tick descending then tweet id descending.
    """
    if not candidates:
        return RankedFeed(viewer=viewer, tick=ctx.tick, positions=[])
    authors = [t.author for t in candidates]
    scores = forward_fn(viewer, authors)
    order = sorted(range(len(candidates)),
                   key=lambda i: (-scores[i], -candidates[i].created_tick, -candidates[i].id))
    return RankedFeed(viewer=viewer, tick=ctx.tick,
                      positions=[candidates[i].id for i in order[:n]])


class LearnedRanker(FeedRanker):
    """Feed ranker backed by one of the trainable models.

    Accumulates every served impression as a training example (liked = 1,
    not liked = 0) and retrains for epochs_per_tick at the start of each tick.
    Scoring never mutates parameters.
    """

    def __init__(self, kind: str, net: Network, traits: TraitAssignment,
                 cfg: LearnerConfig):
        cfg.validate()
        self.kind = kind
        self.cfg = cfg
        self.traits = traits
        self.params = init_params(kind, net.nodes, cfg)
        self.streams = Streams(cfg.seed)
        self._viewers: list[NodeId] = []
        self._authors: list[NodeId] = []
        self._liked: list[int] = []
        self.epoch_loss_log: list[list[float]] = []

    def notify_feedback(self, batch) -> None:
        for viewer, author, liked, _tick in batch:
            self._viewers.append(viewer)
            self._authors.append(author)
            self._liked.append(liked)

    def begin_tick(self, tick: int, interaction_log) -> None:
        losses = train_tick(self.params, (self._viewers, self._authors, self._liked),
                            self.cfg, tick, self.streams, self.traits)
        if losses:
            self.epoch_loss_log.append(losses)

    def _scores(self, viewer: NodeId, authors) -> np.ndarray:
        idx = self.params.index
        v = np.full(len(authors), idx[viewer], dtype=np.int64)
        a = np.fromiter((idx[x] for x in authors), dtype=np.int64, count=len(authors))
        if self.kind == "widedeep":
            labels = self.traits.labels
            vlab = labels[viewer]
            same = np.fromiter((1.0 if labels[x] == vlab else 0.0 for x in authors),
                               dtype=np.float64, count=len(authors))
        else:
            same = None
        p, _ = _forward_batch(self.params, v, a, same)
        return p

    def rank(self, viewer, candidates, ctx, n):
        return rank_learned(viewer, candidates, ctx, n, self._scores)


# ---------------------------------------------------------------------------
# Parameter serialization: little-endian float64 payload with a dimension
# header, for checkpoint/restore.

_MAGIC = b"FSLM"


def save_params(params: ModelParams, path) -> None:
    kind_b = params.kind.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(kind_b).to_bytes(1, "little"))
        fh.write(kind_b)
        n, d = params.emb_viewer.shape
        widths = [w.shape[0] for w in params.mlp_w]
        for v in (n, d, len(widths), *widths):
            fh.write(int(v).to_bytes(8, "little"))
        np.asarray(params.node_ids, dtype="<i8").tofile(fh)
        for arr in (params.emb_viewer, params.emb_author, params.gmf_w,
                    *params.mlp_w, *params.mlp_b, params.head_w,
                    params.wide_viewer, params.wide_author,
                    np.array([params.bias, params.wide_cross])):
            np.ascontiguousarray(arr, dtype="<f8").tofile(fh)


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a model parameter file")
        klen = int.from_bytes(fh.read(1), "little")
        kind = fh.read(klen).decode("ascii")
        n = int.from_bytes(fh.read(8), "little")
        d = int.from_bytes(fh.read(8), "little")
        n_layers = int.from_bytes(fh.read(8), "little")
        widths = [int.from_bytes(fh.read(8), "little") for _ in range(n_layers)]
        node_ids = tuple(np.fromfile(fh, dtype="<i8", count=n).tolist())

        def arr(*shape):
            size = int(np.prod(shape))
            return np.fromfile(fh, dtype="<f8", count=size).reshape(shape)

        emb_v = arr(n, d)
        emb_a = arr(n, d)
        gmf_w = arr(d)
        mlp_w, mlp_b = [], []
        fan_in = 2 * d
        for w in widths:
            mlp_w.append(arr(w, fan_in))
            fan_in = w
        for w in widths:
            mlp_b.append(arr(w))
        head_w = arr(widths[-1])
        wide_v = arr(n)
        wide_a = arr(n)
        tail = arr(2)
    return ModelParams(kind=kind, node_ids=node_ids, emb_viewer=emb_v,
                       emb_author=emb_a, gmf_w=gmf_w, mlp_w=mlp_w, mlp_b=mlp_b,
                       head_w=head_w, bias=float(tail[0]), wide_viewer=wide_v,
                       wide_author=wide_a, wide_cross=float(tail[1]))
