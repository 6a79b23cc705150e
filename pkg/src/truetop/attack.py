"""Sybil-region construction, attack-link placement, and resilience math.

The simulated adversary attaches a region of fake users to an honest graph
with a handful of accidental unit-weight links from honest users, and (in
the worst case) emits nothing back so all incoming credits are hoarded.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ScenarioError, ValidationError
from .graph import InteractionGraph
from .rng import substream

STRATEGIES = ("random", "community", "seed_attack")


@dataclass(frozen=True)
class SybilRegion:
    """Attacker-controlled subgraph: size, internal wiring, and return links.

    ``complete`` wires every ordered pair at weight one.  ``back_links``
    adds that many unit-weight sybil-to-honest edges; zero keeps the
    worst-case credit-hoarding adversary.
    """

    count: int
    topology: str = "complete"  # "complete" or "custom"
    edges: tuple[tuple[int, int], ...] = ()
    back_links: int = 0
    id_prefix: str = "zsybil"

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("sybil count must be >= 1")
        if self.topology not in ("complete", "custom"):
            raise ValidationError(f"unknown sybil topology {self.topology!r}")
        if self.topology == "custom":
            for a, b in self.edges:
                if a == b or not (0 <= a < self.count and 0 <= b < self.count):
                    raise ValidationError(f"bad custom sybil edge ({a}, {b})")
        if self.back_links < 0:
            raise ValidationError("back_links must be >= 0")

    def member_ids(self) -> tuple[str, ...]:
        width = max(4, len(str(self.count - 1)))
        return tuple(f"{self.id_prefix}{i:0{width}d}" for i in range(self.count))


@dataclass(frozen=True)
class AttackScenario:
    """Placement of the honest-to-sybil links.

    ``links`` honest users each gain one unit-weight edge to a random sybil;
    the strategy decides which honest users: uniformly at random, a BFS ball
    around a random user, or (for an attacker who knows the seeds) a random
    subset of the first ``successor_pool`` users discovered by BFS from the
    known seeds.
    """

    strategy: str
    links: int
    successor_pool: int = 0
    rng_seed: int = 0
    known_seeds: tuple[str, ...] = ()
    trials: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown attack strategy {self.strategy!r}")
        if self.links < 1:
            raise ValidationError("attack link count must be >= 1")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.strategy == "seed_attack":
            if not self.known_seeds:
                raise ValidationError("seed_attack requires known_seeds")
            if self.successor_pool < 1:
                raise ValidationError("seed_attack requires a positive successor_pool")


def scenario_from_dict(doc: dict) -> tuple[SybilRegion, AttackScenario]:
    """Decode the scenario descriptor document (see the JSON file format)."""
    try:
        region = SybilRegion(
            count=int(doc["n2"]),
            topology=doc.get("topology", "complete"),
            back_links=int(doc.get("back_links", 0)),
        )
        scenario = AttackScenario(
            strategy=doc["strategy"],
            links=int(doc["w_g"]),
            successor_pool=int(doc.get("d", 0)),
            rng_seed=int(doc.get("rng_seed", 0)),
            known_seeds=tuple(doc.get("known_seeds", ())),
            trials=int(doc.get("trials", 1)),
        )
    except KeyError as exc:
        raise ValidationError(f"scenario document is missing field {exc}") from exc
    return region, scenario


def undirected_neighbors(g: InteractionGraph) -> tuple[np.ndarray, np.ndarray]:
    """CSR-style (indptr, indices) adjacency ignoring edge direction."""
    n = g.n_users
    a = np.concatenate([g.edge_src, g.edge_dst])
    b = np.concatenate([g.edge_dst, g.edge_src])
    keys = np.unique(a * n + b)
    heads = keys // n
    indices = keys % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, heads + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, indices


def _bfs_order(indptr: np.ndarray, indices: np.ndarray, roots: Sequence[int], n: int) -> Iterator[int]:
    """Yield nodes in BFS discovery order (roots first, ascending)."""
    visited = np.zeros(n, dtype=bool)
    queue: deque[int] = deque()
    for r in sorted(roots):
        if not visited[r]:
            visited[r] = True
            queue.append(r)
            yield r
    while queue:
        u = queue.popleft()
        for v in indices[indptr[u]:indptr[u + 1]]:
            if not visited[v]:
                visited[v] = True
                queue.append(int(v))
                yield int(v)


def seed_attack_pool(
    g: InteractionGraph,
    known_seeds: Sequence[str],
    pool_size: int,
    neighbors: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """First ``pool_size`` non-seed users by BFS depth from the known seeds."""
    if neighbors is None:
        neighbors = undirected_neighbors(g)
    indptr, indices = neighbors
    try:
        roots = [g.index_of(uid) for uid in known_seeds]
    except KeyError as exc:
        raise ScenarioError(f"known seed {exc} is not in the honest graph") from exc
    root_set = set(roots)
    pool: list[int] = []
    for node in _bfs_order(indptr, indices, roots, g.n_users):
        if node in root_set:
            continue
        pool.append(node)
        if len(pool) >= pool_size:
            break
    if len(pool) < pool_size:
        raise ScenarioError(
            f"seed neighborhood has only {len(pool)} reachable users, fewer than pool size {pool_size}"
        )
    return np.array(pool, dtype=np.int64)


@dataclass
class AttackResult:
    graph: InteractionGraph
    sybil_ids: tuple[str, ...]
    sybil_mask: np.ndarray  # aligned to graph.users
    cross_edges: tuple[tuple[str, str], ...]
    alpha_realized: float
    honest_weight: float


def _pick_attacked(
    honest: InteractionGraph,
    scenario: AttackScenario,
    rng: np.random.Generator,
    neighbors: tuple[np.ndarray, np.ndarray] | None,
    pool: np.ndarray | None,
) -> np.ndarray:
    n = honest.n_users
    w_g = scenario.links
    if w_g > n:
        raise ScenarioError(f"cannot attack {w_g} users in a graph of {n}")
    if scenario.strategy == "random":
        return rng.choice(n, size=w_g, replace=False)
    if scenario.strategy == "community":
        if neighbors is None:
            neighbors = undirected_neighbors(honest)
        indptr, indices = neighbors
        root = int(rng.integers(0, n))
        found: list[int] = []
        for node in _bfs_order(indptr, indices, [root], n):
            found.append(node)
            if len(found) >= w_g:
                break
        if len(found) < w_g:
            raise ScenarioError(
                f"community reachable from the start user has only {len(found)} members"
            )
        return np.array(found, dtype=np.int64)
    # seed_attack
    if pool is None:
        pool = seed_attack_pool(honest, scenario.known_seeds, scenario.successor_pool, neighbors)
    if w_g > len(pool):
        raise ScenarioError(f"successor pool of {len(pool)} is smaller than {w_g} links")
    return rng.choice(pool, size=w_g, replace=False)


def attach_sybil_region(
    honest: InteractionGraph,
    region: SybilRegion,
    scenario: AttackScenario,
    *,
    trial: int = 0,
    neighbors: tuple[np.ndarray, np.ndarray] | None = None,
    pool: np.ndarray | None = None,
) -> AttackResult:
    """Attach the sybil region to the honest graph under the scenario.

    Every attack link has weight one (a single accidental interaction), so
    the realized honest-to-sybil weight fraction is links / honest weight.
    Region labels are returned for metric computation.  ``trial`` selects an
    independent random sub-stream so repetitions can run in any order.
    """
    if honest.n_users == 0:
        raise ScenarioError("honest graph is empty")
    rng = substream(scenario.rng_seed, "attack", trial)
    attacked = np.sort(_pick_attacked(honest, scenario, rng, neighbors, pool))
    link_targets = rng.integers(0, region.count, size=scenario.links)

    sybil_ids = region.member_ids()
    collisions = set(sybil_ids) & set(honest.users)
    if collisions:
        raise ValidationError(f"sybil id prefix collides with honest ids: {sorted(collisions)[:3]}")

    all_users = tuple(sorted(honest.users + sybil_ids))
    user_pos = {uid: i for i, uid in enumerate(all_users)}
    honest_map = np.array([user_pos[uid] for uid in honest.users], dtype=np.int64)
    sybil_map = np.array([user_pos[uid] for uid in sybil_ids], dtype=np.int64)

    parts_src = [honest_map[honest.edge_src]]
    parts_dst = [honest_map[honest.edge_dst]]
    parts_w = [honest.edge_weight]

    if region.topology == "complete":
        if region.count > 1:
            a = np.repeat(np.arange(region.count), region.count)
            b = np.tile(np.arange(region.count), region.count)
            keep = a != b
            parts_src.append(sybil_map[a[keep]])
            parts_dst.append(sybil_map[b[keep]])
            parts_w.append(np.ones(int(keep.sum())))
    elif region.edges:
        ea = np.array([e[0] for e in region.edges], dtype=np.int64)
        eb = np.array([e[1] for e in region.edges], dtype=np.int64)
        parts_src.append(sybil_map[ea])
        parts_dst.append(sybil_map[eb])
        parts_w.append(np.ones(len(ea)))

    parts_src.append(honest_map[attacked])
    parts_dst.append(sybil_map[link_targets])
    parts_w.append(np.ones(scenario.links))

    if region.back_links:
        pair_space = region.count * honest.n_users
        if region.back_links > pair_space:
            raise ScenarioError("more back links than sybil-honest pairs")
        picks = rng.choice(pair_space, size=region.back_links, replace=False)
        parts_src.append(sybil_map[picks // honest.n_users])
        parts_dst.append(honest_map[picks % honest.n_users])
        parts_w.append(np.ones(region.back_links))

    src = np.concatenate(parts_src)
    dst = np.concatenate(parts_dst)
    w = np.concatenate(parts_w)
    order = np.argsort(src * len(all_users) + dst, kind="stable")
    src, dst, w = src[order], dst[order], w[order]

    counts = None
    if honest.epoch_counts is not None:
        mu = honest.epoch_counts.shape[1]
        added = len(src) - honest.n_edges
        extra = np.zeros((added, mu), dtype=np.int64)
        extra[:, 0] = 1
        counts = np.concatenate([honest.epoch_counts, extra])[order]

    verified = np.zeros(len(all_users), dtype=bool)
    verified[honest_map] = honest.verified
    sybil_mask = np.zeros(len(all_users), dtype=bool)
    sybil_mask[sybil_map] = True

    graph = InteractionGraph(all_users, verified, src, dst, w, counts, honest.model)
    cross = tuple(
        (honest.users[i], sybil_ids[j]) for i, j in zip(attacked, link_targets)
    )
    honest_weight = honest.total_weight
    return AttackResult(
        graph=graph,
        sybil_ids=sybil_ids,
        sybil_mask=sybil_mask,
        cross_edges=cross,
        alpha_realized=scenario.links / honest_weight,
        honest_weight=honest_weight,
    )


def attack_fraction_from_io_ratios(
    honest_per_sybil: float, io_ratio_honest: float, io_ratio_sybil: float
) -> float:
    """Estimate the honest-to-sybil weight fraction from measured I-O ratios.

    With one outgoing interaction per honest user pair, a sybil population
    1/honest_per_sybil the size of the honest one, and the given
    incoming/outgoing ratios, the honest-to-sybil weight is
    io_ratio_sybil * n2 * n1 interactions against (1 + io_ratio_honest) * n1^2
    total honest weight.
    """
    if honest_per_sybil <= 0 or io_ratio_honest <= 0 or io_ratio_sybil < 0:
        raise ValidationError("ratios must be positive (sybil ratio may be zero)")
    return io_ratio_sybil / ((1.0 + io_ratio_honest) * honest_per_sybil)


def sybil_credit_closed_form(alpha: float, beta: float, t: int) -> float:
    """Total sybil-region credits after t rounds of the two-region exchange.

    When every honest user routes exactly an ``alpha`` fraction of its
    out-weight to the region and every sybil routes ``beta`` back, starting
    with all credits on the honest side, the region total is
    ``(1 - 1/(alpha+beta)) * alpha * (1-alpha-beta)^(t-1) + alpha/(alpha+beta)``:
    monotone non-decreasing in t with limit alpha / (alpha + beta).
    """
    if alpha < 0 or beta < 0 or not 0.0 < alpha + beta < 1.0:
        raise ValidationError("alpha + beta must lie in (0, 1)")
    if t < 1:
        raise ValidationError("t must be >= 1")
    rate = alpha + beta
    return (1.0 - 1.0 / rate) * alpha * (1.0 - rate) ** (t - 1) + alpha / rate


def sybil_count_metric(region_credits: float, top_credits: Sequence[float]) -> int:
    """Attacker-optimal number of sybils placeable in the top-K.

    Given the region's total credits C and the honest top-K credits in
    non-increasing order, returns the largest x such that x evenly funded
    sybils each match the (K+1-x)-th honest credit, or 0 when C is below
    the K-th credit.
    """
    top = np.asarray(top_credits, dtype=np.float64)
    if len(top) == 0:
        raise ValidationError("top credits must be nonempty")
    if np.any(np.diff(top) > 0):
        raise ValidationError("top credits must be non-increasing")
    if np.any(top <= 0):
        raise ValidationError("top credits must be positive")
    if region_credits < 0:
        raise ValidationError("region credits must be >= 0")
    k = len(top)
    if region_credits < top[-1]:
        return 0
    for x in range(k, 0, -1):
        if region_credits >= x * top[k - x]:
            return x
    return 0


def sybil_count_bound(alpha: float, t: int, k: int) -> float:
    """Worst-case ceiling on top-K sybils after t rounds at leak fraction alpha.

    ``k * (1 - (1-alpha)^t) / (1-alpha)^t``; assumes homogeneous per-round
    leakage (every unit of honest credit loses the alpha fraction each
    round) and a hoarding region.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValidationError("alpha must be in [0, 1)")
    if t < 0:
        raise ValidationError("t must be >= 0")
    if k < 1:
        raise ValidationError("k must be >= 1")
    kept = (1.0 - alpha) ** t
    return k * (1.0 - kept) / kept


def two_region_graph(
    honest_count: int, sybil_count: int, alpha: float, beta: float
) -> tuple[InteractionGraph, np.ndarray]:
    """Graph realizing the two-region exchange model exactly.

    Every honest user splits (1 - alpha) of its out-weight evenly over the
    other honest users and alpha evenly over the sybils; every sybil splits
    (1 - beta) internally and beta back.  Aggregate credits then follow the
    closed form of :func:`sybil_credit_closed_form` up to float rounding.
    """
    if honest_count < 2 or sybil_count < 2:
        raise ValidationError("both regions need at least 2 users")
    if not 0.0 < alpha < 1.0 or not 0.0 <= beta < 1.0:
        raise ValidationError("alpha in (0,1) and beta in [0,1) required")
    width = max(4, len(str(max(honest_count, sybil_count) - 1)))
    honest_ids = [f"h{i:0{width}d}" for i in range(honest_count)]
    sybil_ids = [f"s{i:0{width}d}" for i in range(sybil_count)]

    srcs: list[np.ndarray] = []
    dsts: list[np.ndarray] = []
    ws: list[np.ndarray] = []

    def mesh(n_a, n_b, offset_a, offset_b, weight, skip_diag):
        a = np.repeat(np.arange(n_a), n_b)
        b = np.tile(np.arange(n_b), n_a)
        if skip_diag:
            keep = a != b
            a, b = a[keep], b[keep]
        srcs.append(a + offset_a)
        dsts.append(b + offset_b)
        ws.append(np.full(len(a), weight))

    n_h, n_s = honest_count, sybil_count
    mesh(n_h, n_h, 0, 0, (1.0 - alpha) / (n_h - 1), skip_diag=True)
    mesh(n_h, n_s, 0, n_h, alpha / n_s, skip_diag=False)
    mesh(n_s, n_s, n_h, n_h, (1.0 - beta) / (n_s - 1), skip_diag=True)
    if beta > 0.0:
        mesh(n_s, n_h, n_h, 0, beta / n_h, skip_diag=False)

    users = honest_ids + sybil_ids  # 'h' < 's' so already sorted
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    w = np.concatenate(ws)
    order = np.argsort(src * len(users) + dst, kind="stable")
    verified = np.array([uid.startswith("h") for uid in users], dtype=bool)
    graph = InteractionGraph(users, verified, src[order], dst[order], w[order], None, None)
    mask = np.array([uid.startswith("s") for uid in users], dtype=bool)
    return graph, mask
