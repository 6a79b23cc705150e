"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the package's own linear-algebra paths:
dense matrices built straight from edge lists, boolean-closure reachability,
and eigensolves via numpy.
"""

from __future__ import annotations

import numpy as np
import pytest

from truetop.graph import InteractionGraph


def graph_from_edges(edges, verified=(), model=None) -> InteractionGraph:
    """Convenience wrapper: edges as (src_id, dst_id, weight) triples."""
    return InteractionGraph.from_weighted_edges(edges, verified=verified, model=model)


def dense_transition(g: InteractionGraph) -> np.ndarray:
    """Row-stochastic dense matrix built independently from the edge list.

    Applies the same dangling rule (self-loop) as the package, but through
    plain dense arithmetic.
    """
    n = g.n_users
    W = np.zeros((n, n))
    for s, t, w in zip(g.edge_src, g.edge_dst, g.edge_weight):
        W[s, t] = w
    for i in range(n):
        total = W[i].sum()
        if total == 0.0:
            W[i, i] = 1.0
        else:
            W[i] /= total
    return W


def dense_power_trajectory(v0: np.ndarray, W: np.ndarray, steps: int) -> list[np.ndarray]:
    """x_t = v0 W^t for t = 1..steps via repeated dense products."""
    out = []
    x = np.asarray(v0, dtype=np.float64).copy()
    for _ in range(steps):
        x = x @ W
        out.append(x.copy())
    return out


def dominant_left_eigenvector(W: np.ndarray) -> np.ndarray:
    """Stationary distribution via a dense eigensolve (oracle)."""
    values, vectors = np.linalg.eig(W.T)
    idx = int(np.argmax(values.real))
    v = np.real(vectors[:, idx])
    v = np.abs(v)
    return v / v.sum()


def second_eigenvalue_magnitude(W: np.ndarray) -> float:
    values = np.linalg.eigvals(W)
    mags = np.sort(np.abs(values))[::-1]
    return float(mags[1]) if len(mags) > 1 else 0.0


def dense_pagerank(W: np.ndarray, reset: float, tol: float, max_iter: int = 100_000) -> np.ndarray:
    """Independently written teleporting iteration on a dense matrix."""
    n = W.shape[0]
    u = np.full(n, 1.0 / n)
    x = u.copy()
    for _ in range(max_iter):
        x_new = (1.0 - reset) * (x @ W) + reset * u
        if np.abs(x_new - x).sum() < tol:
            return x_new
        x = x_new
    return x


def brute_force_sccs(n: int, pairs) -> list[frozenset]:
    """Strongly connected components via boolean transitive closure."""
    reach = np.eye(n, dtype=bool)
    adj = np.zeros((n, n), dtype=bool)
    for a, b in pairs:
        adj[a, b] = True
    for _ in range(n):
        newer = reach | (reach @ adj)
        if np.array_equal(newer, reach):
            break
        reach = newer
    mutual = reach & reach.T
    seen = set()
    comps = []
    for i in range(n):
        if i in seen:
            continue
        comp = frozenset(np.flatnonzero(mutual[i]).tolist())
        seen |= comp
        comps.append(comp)
    return comps


def random_strongly_connected(rng: np.random.Generator, n: int, extra_edge_prob: float = 0.25,
                              verified_count: int = 1) -> InteractionGraph:
    """Random strongly connected weighted graph: a full cycle plus noise."""
    ids = [f"u{i:03d}" for i in range(n)]
    edges = {}
    perm = rng.permutation(n)
    for i in range(n):
        a, b = int(perm[i]), int(perm[(i + 1) % n])
        edges[(a, b)] = float(rng.integers(1, 6))
    count = max(1, int(extra_edge_prob * n * 2))
    for _ in range(count):
        a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
        if a != b:
            edges[(a, b)] = float(rng.integers(1, 6))
    verified = rng.choice(n, size=min(verified_count, n), replace=False)
    triples = [(ids[a], ids[b], w) for (a, b), w in edges.items()]
    return graph_from_edges(triples, verified=[ids[i] for i in verified])


def teleport_zipf_graph(n: int, restart: float, zipf_exponent: float,
                        rng: np.random.Generator, verified_count: int = 5) -> InteractionGraph:
    """Dense aperiodic graph whose stationary scores track a Zipf profile.

    Every row mixes a rank-one jump to a Zipf target distribution with a
    random stochastic matrix; the stationary vector inherits the Zipf
    head, giving strictly decreasing relative gaps at the top ranks.
    """
    q = np.arange(1, n + 1, dtype=np.float64) ** (-zipf_exponent)
    q /= q.sum()
    R = rng.random((n, n)) + 0.1
    np.fill_diagonal(R, 0.0)
    R /= R.sum(axis=1, keepdims=True)
    W = restart * q[None, :] + (1.0 - restart) * R
    np.fill_diagonal(W, 0.0)  # no self-loops in an interaction graph
    ids = [f"u{i:03d}" for i in range(n)]
    src = np.repeat(np.arange(n), n - 1)
    dst = np.concatenate([np.concatenate([np.arange(i), np.arange(i + 1, n)]) for i in range(n)])
    weights = W[src, dst]
    order = np.argsort(src * n + dst, kind="stable")
    verified = np.zeros(n, dtype=bool)
    verified[:verified_count] = True
    return InteractionGraph(ids, verified, src[order], dst[order], weights[order], None, None)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
