"""Interaction-log parsing and synthetic interaction-data generation.

The external log format is UTF-8, line-delimited, comma-separated:
``source_id,target_id,kind,timestamp`` with kind in {retweet, reply, mention}
and timestamp a base-10 integer.  Lines starting with ``#`` are comments.
User-attribute files are ``user_id,verified`` with verified in {0, 1}.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import ValidationError
from .rng import substream

log = logging.getLogger(__name__)

KINDS = ("retweet", "reply", "mention")
_KIND_CODE = {kind: code for code, kind in enumerate(KINDS)}


@dataclass(frozen=True)
class InteractionRecord:
    """One retweet/reply/mention event from ``source`` to ``target``."""

    source: str
    target: str
    kind: str
    timestamp: int


@dataclass(frozen=True)
class UserAttributes:
    user_id: str
    verified: bool


@dataclass(frozen=True)
class TargetPeriod:
    """Half-open observation window [start, end) split into equal epochs.

    The last epoch absorbs the remainder when the window length is not a
    multiple of ``epochs``.
    """

    start: int
    end: int
    epochs: int = 1

    def __post_init__(self):
        if self.start >= self.end:
            raise ValidationError(f"period start {self.start} must precede end {self.end}")
        if self.epochs < 1:
            raise ValidationError("epoch count must be >= 1")
        if self.end - self.start < self.epochs:
            raise ValidationError("period shorter than the requested epoch count")

    @property
    def epoch_length(self) -> int:
        return (self.end - self.start) // self.epochs

    def contains(self, timestamp: int) -> bool:
        return self.start <= timestamp < self.end

    def epoch_of(self, timestamp: int) -> int:
        """0-based epoch index; caller must ensure the timestamp is in-period."""
        return min((timestamp - self.start) // self.epoch_length, self.epochs - 1)


@dataclass
class ParseStats:
    parsed: int = 0
    dropped_malformed: int = 0
    dropped_out_of_period: int = 0
    dropped_self: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_malformed + self.dropped_out_of_period + self.dropped_self


def _parse_line(line: str) -> InteractionRecord | None:
    parts = line.split(",")
    if len(parts) != 4:
        return None
    source, target, kind, ts_text = parts
    if not source or not target or "," in source:
        return None
    if kind not in _KIND_CODE:
        return None
    try:
        timestamp = int(ts_text)
    except ValueError:
        return None
    return InteractionRecord(source, target, kind, timestamp)


def parse_interaction_log(
    stream: Iterable[str], period: TargetPeriod
) -> tuple[list[InteractionRecord], ParseStats]:
    """Parse a log into in-period records, preserving file order.

    Malformed lines are skipped with a warning; self-interactions and
    out-of-period records are dropped and counted.  Blank lines and ``#``
    comments are ignored silently.
    """
    records: list[InteractionRecord] = []
    stats = ParseStats()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        record = _parse_line(line)
        if record is None:
            stats.dropped_malformed += 1
            log.warning("skipping malformed log line %d: %r", lineno, line)
            continue
        if record.source == record.target:
            stats.dropped_self += 1
            continue
        if not period.contains(record.timestamp):
            stats.dropped_out_of_period += 1
            continue
        records.append(record)
        stats.parsed += 1
    return records, stats


def serialize_interaction_log(records: Iterable[InteractionRecord]) -> Iterator[str]:
    """Inverse of :func:`parse_interaction_log` for valid records."""
    for r in records:
        yield f"{r.source},{r.target},{r.kind},{r.timestamp}\n"


def parse_user_attributes(stream: Iterable[str]) -> dict[str, bool]:
    """Parse a ``user_id,verified`` file.  Duplicate ids are rejected."""
    attrs: dict[str, bool] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2 or not parts[0] or parts[1] not in ("0", "1"):
            raise ValidationError(f"malformed attribute line {lineno}: {line!r}")
        user_id, flag = parts
        if user_id in attrs:
            raise ValidationError(f"duplicate user id in attribute file: {user_id}")
        attrs[user_id] = flag == "1"
    return attrs


def serialize_user_attributes(attrs: Iterable[UserAttributes]) -> Iterator[str]:
    for a in attrs:
        yield f"{a.user_id},{1 if a.verified else 0}\n"


class RecordBatch:
    """Columnar batch of interaction records.

    Synthetic experiments produce millions of records; keeping them in numpy
    arrays (dense user indices, kind codes, timestamps) avoids materializing
    one object per record.  Iterating a batch yields plain
    :class:`InteractionRecord` objects in batch order.
    """

    def __init__(self, users, source_index, target_index, kind_code, timestamp):
        self.users: tuple[str, ...] = tuple(users)
        self.source_index = np.asarray(source_index, dtype=np.int64)
        self.target_index = np.asarray(target_index, dtype=np.int64)
        self.kind_code = np.asarray(kind_code, dtype=np.uint8)
        self.timestamp = np.asarray(timestamp, dtype=np.int64)
        n = len(self.source_index)
        if not (len(self.target_index) == len(self.kind_code) == len(self.timestamp) == n):
            raise ValidationError("record batch columns must have equal length")

    def __len__(self) -> int:
        return len(self.source_index)

    def __iter__(self) -> Iterator[InteractionRecord]:
        users = self.users
        for s, t, k, ts in zip(self.source_index, self.target_index, self.kind_code, self.timestamp):
            yield InteractionRecord(users[s], users[t], KINDS[k], int(ts))

    @classmethod
    def from_records(cls, records: Iterable[InteractionRecord]) -> "RecordBatch":
        records = list(records)
        users = sorted({r.source for r in records} | {r.target for r in records})
        index = {uid: i for i, uid in enumerate(users)}
        src = np.fromiter((index[r.source] for r in records), dtype=np.int64, count=len(records))
        dst = np.fromiter((index[r.target] for r in records), dtype=np.int64, count=len(records))
        kind = np.fromiter((_KIND_CODE[r.kind] for r in records), dtype=np.uint8, count=len(records))
        ts = np.fromiter((r.timestamp for r in records), dtype=np.int64, count=len(records))
        return cls(users, src, dst, kind, ts)

    def write_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self:
                fh.write(f"{r.source},{r.target},{r.kind},{r.timestamp}\n")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the preferential-attachment interaction generator.

    The in-degree tail of the emitted multigraph is heavy-tailed with
    exponent approximately ``degree_exponent`` (attachment kernel
    in-degree + offset, offset = (exponent - 2) * mean_out_degree).
    Exponents at or below 2 saturate near 2.  Identical spec + seed gives
    byte-identical output.
    """

    node_count: int
    degree_exponent: float = 2.5
    mean_out_degree: float = 10.0
    interactions_per_edge: str = "constant:1"
    rng_seed: int = 0
    period: TargetPeriod = field(default_factory=lambda: TargetPeriod(0, 7_776_000, 1))
    reciprocation: float = 0.4
    verified_fraction: float = 0.02
    min_verified: int = 1

    def __post_init__(self):
        if self.node_count < 2:
            raise ValidationError("node_count must be >= 2")
        if self.degree_exponent <= 1.0:
            raise ValidationError("degree_exponent must be > 1")
        if self.mean_out_degree <= 0:
            raise ValidationError("mean_out_degree must be positive")
        if not 0.0 <= self.reciprocation <= 1.0:
            raise ValidationError("reciprocation must be in [0, 1]")
        if not 0.0 <= self.verified_fraction <= 1.0:
            raise ValidationError("verified_fraction must be in [0, 1]")


def parse_count_distribution(descriptor: str):
    """Parse a positive-integer count-distribution descriptor.

    Supported forms: ``constant:k``, ``uniform:a:b`` (inclusive bounds) and
    ``geometric:p`` (support 1, 2, ..., mean 1/p).  Returns a sampler
    ``f(rng, size) -> int64 array``.
    """
    parts = descriptor.split(":")
    kind = parts[0]
    try:
        if kind == "constant" and len(parts) == 2:
            k = int(parts[1])
            if k < 1:
                raise ValidationError("constant count must be >= 1")
            return lambda rng, size: np.full(size, k, dtype=np.int64)
        if kind == "uniform" and len(parts) == 3:
            a, b = int(parts[1]), int(parts[2])
            if not 1 <= a <= b:
                raise ValidationError("uniform bounds must satisfy 1 <= a <= b")
            return lambda rng, size: rng.integers(a, b + 1, size=size, dtype=np.int64)
        if kind == "geometric" and len(parts) == 2:
            p = float(parts[1])
            if not 0.0 < p <= 1.0:
                raise ValidationError("geometric p must be in (0, 1]")
            return lambda rng, size: rng.geometric(p, size=size).astype(np.int64)
    except ValueError as exc:
        raise ValidationError(f"bad count distribution {descriptor!r}") from exc
    raise ValidationError(f"unknown count distribution {descriptor!r}")


def _user_ids(n: int) -> tuple[str, ...]:
    width = max(4, len(str(n - 1)))
    return tuple(f"u{i:0{width}d}" for i in range(n))


def generate_powerlaw_graph(spec: SyntheticSpec) -> tuple[RecordBatch, list[UserAttributes]]:
    """Generate interaction records over a heavy-tailed directed multigraph.

    Construction: nodes arrive one at a time and attach a Poisson number of
    out-edges (mean ``mean_out_degree``) to earlier nodes, picked
    proportionally to in-degree plus offset; each new edge is reciprocated
    with probability ``reciprocation`` so a giant strongly connected core
    forms.  Per ordered pair, an interaction count is drawn from
    ``interactions_per_edge`` and each interaction gets a uniform in-period
    timestamp and a uniform kind.  The top ``verified_fraction`` of nodes
    by in-degree are flagged verified.
    """
    n = spec.node_count
    rng = substream(spec.rng_seed, "generate")
    m = spec.mean_out_degree
    offset = max((spec.degree_exponent - 2.0) * m, 0.05)
    sampler = parse_count_distribution(spec.interactions_per_edge)

    core = max(2, min(n, int(round(m)) + 1))
    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []
    core_idx = np.arange(core, dtype=np.int64)
    src_parts.append(core_idx)
    dst_parts.append(np.roll(core_idx, -1))
    if core >= 3:
        # one chord so the seed core is aperiodic on its own
        src_parts.append(np.array([0], dtype=np.int64))
        dst_parts.append(np.array([2], dtype=np.int64))

    capacity = int(n * m * (1.0 + spec.reciprocation) * 1.5) + 4 * core + 16
    pool = np.empty(capacity, dtype=np.int64)
    fill = 0

    def pool_append(values: np.ndarray):
        nonlocal fill, pool, capacity
        need = fill + len(values)
        if need > capacity:
            capacity = max(need, capacity * 2)
            grown = np.empty(capacity, dtype=np.int64)
            grown[:fill] = pool[:fill]
            pool = grown
        pool[fill:need] = values
        fill = need

    pool_append(np.concatenate(dst_parts))

    for v in range(core, n):
        m_v = 1 + int(rng.poisson(max(m - 1.0, 0.0)))
        # attachment kernel indeg + offset == mixture of pool pick and uniform
        p_pool = fill / (fill + offset * v)
        use_pool = rng.random(m_v) < p_pool
        targets = np.empty(m_v, dtype=np.int64)
        k_pool = int(use_pool.sum())
        if k_pool:
            targets[use_pool] = pool[rng.integers(0, fill, size=k_pool)]
        if m_v - k_pool:
            targets[~use_pool] = rng.integers(0, v, size=m_v - k_pool)
        src_parts.append(np.full(m_v, v, dtype=np.int64))
        dst_parts.append(targets)
        pool_append(targets)
        if spec.reciprocation > 0.0:
            back = targets[rng.random(m_v) < spec.reciprocation]
            if len(back):
                src_parts.append(back)
                dst_parts.append(np.full(len(back), v, dtype=np.int64))
                pool_append(np.full(len(back), v, dtype=np.int64))

    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)

    # collapse structural multi-edges into distinct ordered pairs
    keys = src * n + dst
    pair_keys = np.unique(keys)
    pair_src = pair_keys // n
    pair_dst = pair_keys % n

    counts = sampler(rng, len(pair_keys))
    total = int(counts.sum())
    rec_src = np.repeat(pair_src, counts)
    rec_dst = np.repeat(pair_dst, counts)
    rec_ts = rng.integers(spec.period.start, spec.period.end, size=total, dtype=np.int64)
    rec_kind = rng.integers(0, len(KINDS), size=total).astype(np.uint8)

    users = _user_ids(n)
    batch = RecordBatch(users, rec_src, rec_dst, rec_kind, rec_ts)

    indeg = np.bincount(pair_dst, minlength=n)
    n_verified = min(n, max(spec.min_verified, math.ceil(spec.verified_fraction * n)))
    # highest in-degree first, ties by ascending id (== ascending index)
    order = np.lexsort((np.arange(n), -indeg))
    verified = np.zeros(n, dtype=bool)
    verified[order[:n_verified]] = True
    attrs = [UserAttributes(users[i], bool(verified[i])) for i in range(n)]
    return batch, attrs
