"""Weighted directed interaction graphs.

Builds the graph from interaction records, computes edge weights under the
sum and entropy models, extracts the giant strongly connected component,
and produces the row-stochastic transition structure used by ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EmptyGraphError, SnapshotFormatError, ValidationError
from .ingest import InteractionRecord, RecordBatch, TargetPeriod, UserAttributes

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightModel:
    """Edge-weight model: plain interaction count or entropy-scaled count."""

    kind: str  # "sum" or "entropy"
    epochs: int = 1

    def __post_init__(self):
        if self.kind not in ("sum", "entropy"):
            raise ValidationError(f"unknown weight model {self.kind!r}")
        if self.epochs < 1:
            raise ValidationError("weight model epochs must be >= 1")

    @classmethod
    def parse(cls, token: str) -> "WeightModel":
        if token == "sum":
            return cls("sum", 1)
        if token.startswith("entropy:"):
            try:
                return cls("entropy", int(token.split(":", 1)[1]))
            except ValueError as exc:
                raise ValidationError(f"bad weight model token {token!r}") from exc
        if token == "entropy":
            raise ValidationError("entropy model token must carry an epoch count, e.g. entropy:4")
        raise ValidationError(f"bad weight model token {token!r}")

    def token(self) -> str:
        return "sum" if self.kind == "sum" else f"entropy:{self.epochs}"


def edge_weight_sum(counts: Sequence[int]) -> float:
    """Total interaction count across epochs."""
    if len(counts) == 0:
        raise ValidationError("counts must be nonempty")
    return float(np.sum(np.asarray(counts, dtype=np.float64)))


def edge_weight_entropy(counts: Sequence[int]) -> float:
    """Interaction count scaled up by the temporal entropy of its spread.

    With per-epoch counts d_1..d_mu summing to c, the weight is
    ``(1 + H) * c`` where H is the natural-log entropy of the epoch
    distribution (0 log 0 = 0).  All interactions in a single epoch give
    exactly the sum weight c; spreading over epochs can only increase it.
    """
    d = np.asarray(counts, dtype=np.float64)
    total = d.sum()
    if total <= 0:
        raise ValidationError("entropy weight undefined for all-zero counts")
    p = d[d > 0] / total
    entropy = float(-(p * np.log(p)).sum())
    return float((1.0 + entropy) * total)


def _entropy_weights(counts: np.ndarray) -> np.ndarray:
    """Vectorized entropy weights for an (edges, epochs) count matrix."""
    totals = counts.sum(axis=1).astype(np.float64)
    p = counts / totals[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -plogp.sum(axis=1)
    return (1.0 + entropy) * totals


class InteractionGraph:
    """Immutable weighted directed graph over a dense-indexed user set.

    Users are stored sorted ascending so internal index order equals
    lexicographic id order, which is the tie-break order used everywhere.
    Edges are unique ordered pairs sorted by (source, target); weights are
    strictly positive.  ``epoch_counts`` holds per-epoch interaction counts
    when the graph was built from records, or None for directly weighted
    constructions.
    """

    __slots__ = ("users", "verified", "edge_src", "edge_dst", "edge_weight", "epoch_counts", "model", "_index")

    def __init__(self, users, verified, edge_src, edge_dst, edge_weight, epoch_counts=None, model=None):
        self.users: tuple[str, ...] = tuple(users)
        if list(self.users) != sorted(self.users):
            raise ValidationError("users must be sorted ascending")
        if len(set(self.users)) != len(self.users):
            raise ValidationError("duplicate user ids")
        self.verified = np.asarray(verified, dtype=bool)
        self.edge_src = np.asarray(edge_src, dtype=np.int64)
        self.edge_dst = np.asarray(edge_dst, dtype=np.int64)
        self.edge_weight = np.asarray(edge_weight, dtype=np.float64)
        self.epoch_counts = None if epoch_counts is None else np.asarray(epoch_counts, dtype=np.int64)
        self.model = model
        self._index: dict[str, int] = {uid: i for i, uid in enumerate(self.users)}
        self._validate()

    def _validate(self):
        n, e = self.n_users, self.n_edges
        if len(self.verified) != n:
            raise ValidationError("verified flag count does not match user count")
        if len(self.edge_dst) != e or len(self.edge_weight) != e:
            raise ValidationError("edge arrays must have equal length")
        if e:
            if self.edge_src.min() < 0 or self.edge_src.max() >= n:
                raise ValidationError("edge source index out of range")
            if self.edge_dst.min() < 0 or self.edge_dst.max() >= n:
                raise ValidationError("edge target index out of range")
            if np.any(self.edge_src == self.edge_dst):
                raise ValidationError("self-edges are not allowed")
            if np.any(self.edge_weight <= 0):
                raise ValidationError("edge weights must be > 0")
            keys = self.edge_src * n + self.edge_dst
            if np.any(np.diff(keys) <= 0):
                raise ValidationError("edges must be sorted unique (source, target) pairs")
        if self.epoch_counts is not None:
            if self.epoch_counts.shape[0] != e:
                raise ValidationError("epoch count rows must match edge count")
            if e and np.any(self.epoch_counts.sum(axis=1) <= 0):
                raise ValidationError("every edge needs at least one interaction")

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    @property
    def total_weight(self) -> float:
        return float(self.edge_weight.sum())

    def index_of(self, user_id: str) -> int:
        return self._index[user_id]

    def out_weight(self) -> np.ndarray:
        return np.bincount(self.edge_src, weights=self.edge_weight, minlength=self.n_users)

    def in_weight(self) -> np.ndarray:
        return np.bincount(self.edge_dst, weights=self.edge_weight, minlength=self.n_users)

    @classmethod
    def from_weighted_edges(cls, edges, verified=(), model=None) -> "InteractionGraph":
        """Build directly from ``(source_id, target_id, weight)`` triples."""
        edges = list(edges)
        if not edges:
            raise EmptyGraphError("no edges")
        users = sorted({s for s, _, _ in edges} | {t for _, t, _ in edges})
        index = {uid: i for i, uid in enumerate(users)}
        src = np.array([index[s] for s, _, _ in edges], dtype=np.int64)
        dst = np.array([index[t] for _, t, _ in edges], dtype=np.int64)
        w = np.array([float(x) for _, _, x in edges], dtype=np.float64)
        order = np.argsort(src * len(users) + dst, kind="stable")
        src, dst, w = src[order], dst[order], w[order]
        keys = src * len(users) + dst
        if np.any(np.diff(keys) == 0):
            raise ValidationError("duplicate (source, target) pair in edge list")
        verified_set = set(verified)
        vflags = np.array([uid in verified_set for uid in users], dtype=bool)
        return cls(users, vflags, src, dst, w, None, model)

    def subgraph(self, keep_indices: np.ndarray) -> "InteractionGraph":
        """Induced subgraph on the given user indices (order-independent)."""
        keep = np.zeros(self.n_users, dtype=bool)
        keep[keep_indices] = True
        remap = np.cumsum(keep) - 1
        users = tuple(uid for i, uid in enumerate(self.users) if keep[i])
        mask = keep[self.edge_src] & keep[self.edge_dst]
        counts = None if self.epoch_counts is None else self.epoch_counts[mask]
        return InteractionGraph(
            users,
            self.verified[keep],
            remap[self.edge_src[mask]],
            remap[self.edge_dst[mask]],
            self.edge_weight[mask],
            counts,
            self.model,
        )


def build_graph(
    records: Iterable[InteractionRecord] | RecordBatch,
    attrs: dict[str, bool] | Iterable[UserAttributes],
    model: WeightModel,
    period: TargetPeriod,
) -> InteractionGraph:
    """Aggregate records into one weighted edge per ordered interacting pair.

    Users with zero interactions are excluded.  Entropy weights use the
    period's epoch binning; the model's epoch count must match the period's.
    """
    if model.kind == "entropy" and model.epochs != period.epochs:
        raise ValidationError(
            f"entropy model epochs ({model.epochs}) must match period epochs ({period.epochs})"
        )
    if not isinstance(attrs, dict):
        attrs = {a.user_id: a.verified for a in attrs}

    if isinstance(records, RecordBatch):
        users = records.users
        src = records.source_index
        dst = records.target_index
        ts = records.timestamp
    else:
        records = list(records)
        users = tuple(sorted({r.source for r in records} | {r.target for r in records}))
        index = {uid: i for i, uid in enumerate(users)}
        src = np.fromiter((index[r.source] for r in records), dtype=np.int64, count=len(records))
        dst = np.fromiter((index[r.target] for r in records), dtype=np.int64, count=len(records))
        ts = np.fromiter((r.timestamp for r in records), dtype=np.int64, count=len(records))
    if len(src) == 0:
        raise EmptyGraphError("no interaction records")
    if np.any(src == dst):
        raise ValidationError("self-interaction record reached build_graph")

    n_all = len(users)
    mu = period.epochs
    length = period.epoch_length
    epochs = np.minimum((ts - period.start) // length, mu - 1)

    pair_keys, pair_inverse = np.unique(src * n_all + dst, return_inverse=True)
    counts = np.bincount(pair_inverse * mu + epochs, minlength=len(pair_keys) * mu)
    counts = counts.reshape(len(pair_keys), mu).astype(np.int64)
    pair_src = pair_keys // n_all
    pair_dst = pair_keys % n_all

    # drop users with no interactions (batch user sets may be supersets)
    active = np.zeros(n_all, dtype=bool)
    active[pair_src] = True
    active[pair_dst] = True
    remap = np.cumsum(active) - 1
    kept_users = tuple(uid for i, uid in enumerate(users) if active[i])

    if model.kind == "sum":
        weights = counts.sum(axis=1).astype(np.float64)
    else:
        weights = _entropy_weights(counts)

    verified = np.array([bool(attrs.get(uid, False)) for uid in kept_users], dtype=bool)
    return InteractionGraph(
        kept_users, verified, remap[pair_src], remap[pair_dst], weights, counts, model
    )


def _adjacency(g: InteractionGraph) -> sp.csr_matrix:
    return sp.csr_matrix(
        (np.ones(g.n_edges, dtype=np.int8), (g.edge_src, g.edge_dst)),
        shape=(g.n_users, g.n_users),
    )


def extract_gscc(g: InteractionGraph) -> tuple[InteractionGraph, tuple[int, int]]:
    """Induced subgraph of the largest strongly connected component.

    Ties on component size go to the component containing the
    lexicographically smallest user id.  Also returns the sizes of the two
    largest components (second is 0 when there is only one).
    """
    if g.n_users == 0:
        raise EmptyGraphError("empty graph")
    n_comp, labels = connected_components(_adjacency(g), directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=n_comp)
    top2 = np.sort(sizes)[::-1][:2]
    second = int(top2[1]) if len(top2) > 1 else 0
    best = sizes.max()
    # first user index whose component has maximal size == smallest id tie-break
    winner = labels[int(np.argmax(sizes[labels] == best))]
    members = np.flatnonzero(labels == winner)
    return g.subgraph(members), (int(best), second)


def inverse_unit_graph(g: InteractionGraph) -> InteractionGraph:
    """Same vertex set with every edge reversed and weight set to one."""
    if g.n_users == 0:
        raise EmptyGraphError("empty graph")
    n = g.n_users
    order = np.argsort(g.edge_dst * n + g.edge_src, kind="stable")
    return InteractionGraph(
        g.users,
        g.verified,
        g.edge_dst[order],
        g.edge_src[order],
        np.ones(g.n_edges, dtype=np.float64),
        None,
        None,
    )


@dataclass(frozen=True)
class NormalizedMatrix:
    """Row-stochastic transition structure of an interaction graph.

    ``forward`` rows are senders; entry (i, j) is i's out-weight share to j.
    ``backward`` is the transpose in CSR form, so one distribution step is a
    single backward @ credits product whose per-user sums run over
    predecessors in ascending index order (deterministic reduction).
    Dangling users (no out-edges) get a self-loop of weight one so their
    credits are retained.
    """

    users: tuple[str, ...]
    forward: sp.csr_matrix
    backward: sp.csr_matrix
    dangling: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users)


def normalize(g: InteractionGraph) -> NormalizedMatrix:
    if g.n_users == 0:
        raise EmptyGraphError("empty graph")
    n = g.n_users
    out_w = g.out_weight()
    dangling = out_w == 0
    data = g.edge_weight / out_w[g.edge_src]
    src = g.edge_src
    dst = g.edge_dst
    if dangling.any():
        loops = np.flatnonzero(dangling)
        src = np.concatenate([src, loops])
        dst = np.concatenate([dst, loops])
        data = np.concatenate([data, np.ones(len(loops))])
    forward = sp.csr_matrix((data, (src, dst)), shape=(n, n))
    row_sums = np.asarray(forward.sum(axis=1)).ravel()
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise ValidationError("normalized rows failed the stochasticity check")
    backward = forward.transpose().tocsr()
    backward.sort_indices()
    return NormalizedMatrix(g.users, forward, backward, dangling)


_SNAPSHOT_HEADER = "#truetop-graph v1"


def write_snapshot(g: InteractionGraph, path) -> None:
    """Persist a record-built graph; round-trips weights bit-exactly."""
    if g.epoch_counts is None or g.model is None:
        raise SnapshotFormatError("only record-built graphs (with epoch counts) can be snapshotted")
    for uid in g.users:
        if "," in uid or "\n" in uid or uid.startswith("#"):
            raise ValidationError(f"user id {uid!r} cannot be serialized")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_SNAPSHOT_HEADER} model={g.model.token()}\n")
        for e in range(g.n_edges):
            counts = "|".join(str(int(c)) for c in g.epoch_counts[e])
            fh.write(
                f"{g.users[g.edge_src[e]]},{g.users[g.edge_dst[e]]},{float(g.edge_weight[e])!r},{counts}\n"
            )
        fh.write("#users\n")
        for i, uid in enumerate(g.users):
            fh.write(f"{uid},{1 if g.verified[i] else 0}\n")


def read_snapshot(path) -> InteractionGraph:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(_SNAPSHOT_HEADER + " model="):
            raise SnapshotFormatError(f"bad snapshot header: {header!r}")
        model = WeightModel.parse(header.split("model=", 1)[1])
        edges: list[tuple[str, str, float, list[int]]] = []
        users: list[tuple[str, bool]] = []
        in_users = False
        for raw in fh:
            line = raw.rstrip("\n")
            if line == "#users":
                in_users = True
                continue
            if not line:
                continue
            parts = line.split(",")
            if in_users:
                if len(parts) != 2 or parts[1] not in ("0", "1"):
                    raise SnapshotFormatError(f"bad user line: {line!r}")
                users.append((parts[0], parts[1] == "1"))
            else:
                if len(parts) != 4:
                    raise SnapshotFormatError(f"bad edge line: {line!r}")
                try:
                    weight = float(parts[2])
                    counts = [int(c) for c in parts[3].split("|")]
                except ValueError as exc:
                    raise SnapshotFormatError(f"bad edge line: {line!r}") from exc
                edges.append((parts[0], parts[1], weight, counts))
    if not users:
        raise SnapshotFormatError("snapshot has no user section")
    ids = [uid for uid, _ in users]
    if ids != sorted(ids):
        raise SnapshotFormatError("snapshot users must be sorted")
    index = {uid: i for i, uid in enumerate(ids)}
    mu = model.epochs if model.kind == "entropy" else (len(edges[0][3]) if edges else 1)
    src = np.array([index[s] for s, _, _, _ in edges], dtype=np.int64)
    dst = np.array([index[t] for _, t, _, _ in edges], dtype=np.int64)
    w = np.array([x for _, _, x, _ in edges], dtype=np.float64)
    counts = np.array([c for _, _, _, c in edges], dtype=np.int64).reshape(len(edges), -1)
    if counts.size and counts.shape[1] != mu:
        raise SnapshotFormatError("epoch count width does not match the weight model")
    order = np.argsort(src * len(ids) + dst, kind="stable")
    verified = np.array([v for _, v in users], dtype=bool)
    return InteractionGraph(ids, verified, src[order], dst[order], w[order], counts[order], model)
