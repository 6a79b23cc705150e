"""Seed selection, credit distribution, early termination, baseline rankers."""

import numpy as np
import pytest

from conftest import (
    dense_pagerank,
    dense_power_trajectory,
    dense_transition,
    dominant_left_eigenvector,
    graph_from_edges,
    random_strongly_connected,
    teleport_zipf_graph,
)
from truetop.errors import SeedingError, ValidationError
from truetop.graph import inverse_unit_graph, normalize
from truetop.ingest import InteractionRecord
from truetop.rank import (
    CreditState,
    RankedList,
    SeedConfig,
    TerminationConfig,
    distribute_step,
    kred_baseline,
    pagerank_baseline,
    power_iteration,
    ranked_list,
    ranking_distance,
    select_seeds,
    truetop_rank,
)


def seed_vector(g, credits: dict[str, float]) -> np.ndarray:
    v = np.zeros(g.n_users)
    for uid, c in credits.items():
        v[g.index_of(uid)] = c
    return v


class TestSelectSeeds:
    def test_single_verified(self):
        g = graph_from_edges([("a", "v", 1), ("v", "a", 1)], verified=["v"])
        seeds, v0 = select_seeds(g, SeedConfig(1, "basic", 3))
        assert seeds == ("v",)
        assert v0[g.index_of("v")] == 1.0

    def test_even_split(self):
        edges = [(f"u{i}", f"u{(i + 1) % 6}", 1.0) for i in range(6)]
        g = graph_from_edges(edges, verified=[f"u{i}" for i in range(4)])
        seeds, v0 = select_seeds(g, SeedConfig(4, "basic", 9))
        assert len(seeds) == 4
        assert np.allclose(v0[v0 > 0], 0.25)

    def test_too_few_verified(self):
        g = graph_from_edges([("a", "b", 1), ("b", "a", 1)], verified=["a"])
        with pytest.raises(SeedingError):
            select_seeds(g, SeedConfig(2, "basic", 0))

    def test_basic_deterministic(self):
        edges = [(f"u{i}", f"u{(i + 1) % 8}", 1.0) for i in range(8)]
        g = graph_from_edges(edges, verified=[f"u{i}" for i in range(8)])
        first = select_seeds(g, SeedConfig(3, "basic", 123))
        second = select_seeds(g, SeedConfig(3, "basic", 123))
        assert first[0] == second[0]
        assert np.array_equal(first[1], second[1])

    def test_reverse_wec_star_hub(self):
        # five leaves all point at the verified hub; the unit inverse graph
        # sends the hub's credits out to every leaf
        edges = [(f"l{i}", "hub", 1.0) for i in range(5)]
        g = graph_from_edges(edges, verified=["hub"])
        seeds, v0 = select_seeds(g, SeedConfig(1, "reverse_wec"))
        assert seeds == ("hub",)
        assert v0[g.index_of("hub")] == 1.0
        # hand-check the reverse dynamics against dense matrix powers
        inv = inverse_unit_graph(g)
        W = dense_transition(inv)
        start = np.zeros(g.n_users)
        start[g.index_of("hub")] = 1.0
        after = dense_power_trajectory(start, W, 1)[0]
        assert after[g.index_of("hub")] == 0.0
        assert np.allclose(after[[g.index_of(f"l{i}") for i in range(5)]], 0.2)

    def test_reverse_wec_prefers_wider_reach(self):
        # u reaches two users, v reaches none beyond itself; all verified
        g = graph_from_edges([("u", "a", 1), ("u", "b", 1), ("v", "a", 1)],
                             verified=["u", "v", "a", "b"])
        seeds, v0 = select_seeds(g, SeedConfig(2, "reverse_wec"))
        # converged reverse credits (hand computed): u = 0.625, v = 0.375
        assert set(seeds) == {"u", "v"}
        assert v0[g.index_of("u")] == pytest.approx(0.625, abs=1e-9)
        assert v0[g.index_of("v")] == pytest.approx(0.375, abs=1e-9)


class TestDistributeStep:
    def test_two_cycle_forwards_everything(self):
        g = graph_from_edges([("a", "b", 1), ("b", "a", 1)])
        nm = normalize(g)
        state = CreditState(seed_vector(g, {"a": 1.0}), 0)
        out = distribute_step(state, nm)
        assert out.iteration == 1
        assert out.credits[g.index_of("a")] == 0.0
        assert out.credits[g.index_of("b")] == 1.0

    def test_weighted_split(self):
        g = graph_from_edges([("a", "b", 2), ("a", "c", 1), ("b", "a", 1), ("c", "a", 1)])
        nm = normalize(g)
        out = distribute_step(CreditState(seed_vector(g, {"a": 1.0})), nm)
        assert out.credits[g.index_of("b")] == pytest.approx(2 / 3, abs=1e-15)
        assert out.credits[g.index_of("c")] == pytest.approx(1 / 3, abs=1e-15)

    def test_matches_dense_matrix_powers(self, rng):
        g = random_strongly_connected(rng, 8)
        nm = normalize(g)
        W = dense_transition(g)
        v0 = np.zeros(g.n_users)
        v0[0] = 1.0
        expected = dense_power_trajectory(v0, W, 5)
        state = CreditState(v0.copy())
        for t in range(5):
            state = distribute_step(state, nm)
            assert np.max(np.abs(state.credits - expected[t])) <= 1e-12

    def test_conservation(self, rng):
        for _ in range(5):
            g = random_strongly_connected(rng, 20)
            nm = normalize(g)
            state = CreditState(np.full(g.n_users, 1.0 / g.n_users))
            for _ in range(30):
                state = distribute_step(state, nm)
                assert abs(state.total() - 1.0) <= 1e-12


class TestRankingDistance:
    def _rl(self, *pairs):
        return RankedList([p[0] for p in pairs], [p[1] for p in pairs])

    def test_identical_is_zero(self):
        r = self._rl(("a", 3.0), ("b", 2.0), ("c", 1.0))
        assert ranking_distance(r, r, 2) == 0

    def test_top_two_swap(self):
        prev = self._rl(("a", 3.0), ("b", 2.0), ("c", 1.0))
        curr = self._rl(("b", 3.0), ("a", 2.0), ("c", 1.0))
        assert ranking_distance(prev, curr, 2) == 2

    def test_k1_union_covers_both(self):
        prev = self._rl(("a", 2.0), ("b", 1.0))
        curr = self._rl(("b", 2.0), ("a", 1.0))
        assert ranking_distance(prev, curr, 1) == 2

    def test_symmetry_and_zero_iff(self, rng):
        ids = [f"u{i}" for i in range(12)]
        for _ in range(25):
            a = ranked_list(ids, rng.random(12))
            b = ranked_list(ids, rng.random(12))
            k = int(rng.integers(1, 6))
            d_ab = ranking_distance(a, b, k)
            d_ba = ranking_distance(b, a, k)
            assert d_ab == d_ba
            same_window = a.top(k) == b.top(k) and all(
                a.rank_of(u) == b.rank_of(u) for u in a.top(k)
            )
            assert (d_ab == 0) == same_window

    def test_mismatched_users_rejected(self):
        a = self._rl(("a", 2.0), ("b", 1.0))
        b = self._rl(("a", 2.0), ("c", 1.0))
        with pytest.raises(ValidationError):
            ranking_distance(a, b, 1)


class TestRankedListTieBreak:
    def test_ties_ascending_id(self):
        r = ranked_list(("a", "b", "c"), np.array([1.0, 2.0, 1.0]))
        assert r.user_ids == ("b", "a", "c")


class TestTrueTopRank:
    def test_huge_tolerance_stops_immediately(self):
        g = graph_from_edges([("a", "b", 1), ("b", "c", 1), ("c", "a", 1)])
        term = TerminationConfig(top_k=2, rank_tolerance=2 * 3 * 2, max_iterations=50)
        res = truetop_rank(g, seed_vector(g, {"a": 1.0}), term)
        assert res.iterations == 1 and res.stabilized

    def test_two_cycle_never_stabilizes(self):
        g = graph_from_edges([("a", "b", 1), ("b", "a", 1)])
        term = TerminationConfig(top_k=1, rank_tolerance=0.0, max_iterations=25)
        res = truetop_rank(g, seed_vector(g, {"a": 1.0}), term)
        assert not res.stabilized
        assert res.iterations == 24  # loop guard is t < T
        # the ranking alternates with period two
        assert all(row.rank_distance > 0 for row in res.trace)

    def test_matches_converged_ranking_on_aperiodic_graph(self, rng):
        # needs clearly separated top credits so a consecutive-iteration
        # plateau cannot occur before the ranking has actually settled
        g = teleport_zipf_graph(30, restart=0.6, zipf_exponent=1.0, rng=rng)
        nm = normalize(g)
        v0 = seed_vector(g, {g.users[0]: 1.0})
        res = truetop_rank(g, v0, TerminationConfig(top_k=4, rank_tolerance=0.0, max_iterations=2000))
        assert res.stabilized
        limit = power_iteration(nm, v0, tol=1e-12, max_iterations=20_000)
        assert limit.converged
        oracle = ranked_list(g.users, limit.credits)
        assert res.top_k == oracle.top(4)

    def test_iterations_monotone_in_tolerance(self, rng):
        g = random_strongly_connected(rng, 30, extra_edge_prob=0.6)
        v0 = seed_vector(g, {g.users[0]: 1.0})
        iters = []
        for eps in (0.0, 2.0, 10.0, 50.0):
            term = TerminationConfig(top_k=5, rank_tolerance=eps, max_iterations=3000)
            iters.append(truetop_rank(g, v0, term).iterations)
        assert iters == sorted(iters, reverse=True)

    def test_deterministic(self, rng):
        g = random_strongly_connected(rng, 25, extra_edge_prob=0.5)
        v0 = np.full(g.n_users, 1.0 / g.n_users)
        term = TerminationConfig(top_k=5, rank_tolerance=0.0, max_iterations=500)
        a = truetop_rank(g, v0, term)
        b = truetop_rank(g, v0, term)
        assert a.top_k == b.top_k
        assert a.ranking.user_ids == b.ranking.user_ids
        assert a.ranking.scores == b.ranking.scores

    def test_region_trace(self):
        g = graph_from_edges([("a", "b", 1), ("b", "a", 1), ("a", "s", 1), ("s", "s2", 1), ("s2", "s", 1)])
        mask = np.array([uid.startswith("s") for uid in g.users])
        term = TerminationConfig(top_k=2, rank_tolerance=0.0, max_iterations=10)
        res = truetop_rank(g, seed_vector(g, {"a": 1.0}), term, region_mask=mask)
        assert all(row.region_credits is not None for row in res.trace)
        # credits leak into the region and are never returned
        region = [row.region_credits for row in res.trace]
        assert all(b >= a - 1e-15 for a, b in zip(region, region[1:]))


class TestPowerIteration:
    def test_uniform_complete_digraph(self):
        n = 5
        edges = [(f"u{i}", f"u{j}", 1.0) for i in range(n) for j in range(n) if i != j]
        g = graph_from_edges(edges)
        nm = normalize(g)
        res = power_iteration(nm, np.full(n, 1.0 / n), tol=1e-12)
        assert res.converged
        assert np.allclose(res.credits, 1.0 / n, atol=1e-15)

    def test_periodic_two_cycle_flagged(self):
        g = graph_from_edges([("a", "b", 1), ("b", "a", 1)])
        nm = normalize(g)
        v0 = np.array([1.0, 0.0])
        res = power_iteration(nm, v0, tol=1e-9, max_iterations=300)
        assert not res.converged
        assert res.iterations == 300

    def test_matches_dense_eigensolver(self, rng):
        g = random_strongly_connected(rng, 8, extra_edge_prob=1.0)
        nm = normalize(g)
        res = power_iteration(nm, np.full(8, 1 / 8), tol=1e-13, max_iterations=50_000)
        assert res.converged
        oracle = dominant_left_eigenvector(dense_transition(g))
        assert np.abs(res.credits - oracle).sum() <= 1e-8

    def test_seed_independence_of_limit(self, rng):
        g = random_strongly_connected(rng, 20, extra_edge_prob=0.8)
        nm = normalize(g)
        nu = 1e-10
        a = power_iteration(nm, seed_vector(g, {g.users[0]: 1.0}), tol=nu, max_iterations=100_000)
        v2 = seed_vector(g, {g.users[3]: 0.5, g.users[7]: 0.5})
        b = power_iteration(nm, v2, tol=nu, max_iterations=100_000)
        assert a.converged and b.converged
        assert np.abs(a.credits - b.credits).sum() <= 10 * nu


class TestPagerank:
    def test_uniform_complete_digraph(self):
        n = 4
        edges = [(f"u{i}", f"u{j}", 1.0) for i in range(n) for j in range(n) if i != j]
        nm = normalize(graph_from_edges(edges))
        res = pagerank_baseline(nm, 0.15, tol=1e-12)
        assert np.allclose(res.credits, 1.0 / n, atol=1e-12)

    def test_full_reset_is_uniform(self):
        g = graph_from_edges([("a", "b", 5), ("b", "a", 1)])
        res = pagerank_baseline(normalize(g), reset=1.0, tol=1e-12, max_iterations=5)
        assert np.allclose(res.credits, 0.5, atol=1e-15)

    def test_matches_independent_dense_implementation(self):
        # chain with a back edge
        g = graph_from_edges([("a", "b", 1), ("b", "c", 2), ("c", "d", 1), ("d", "e", 3), ("e", "a", 1)])
        nm = normalize(g)
        res = pagerank_baseline(nm, 0.15, tol=1e-14, max_iterations=100_000)
        oracle = dense_pagerank(dense_transition(g), 0.15, tol=1e-14)
        assert np.max(np.abs(res.credits - oracle)) <= 1e-10


class TestKredBaseline:
    def test_no_interactions(self):
        ranking = kred_baseline([], users=["a", "b"])
        assert ranking.scores == (0.0, 0.0)
        assert ranking.user_ids == ("a", "b")

    def test_count_ordering(self):
        records = [InteractionRecord("x", "b", "retweet", t) for t in range(3)]
        records += [InteractionRecord("x", "c", "reply", 9)]
        ranking = kred_baseline(records)
        assert ranking.user_ids[0] == "b" and ranking.user_ids[1] == "c"
        assert ranking.scores[0] == 3.0

    def test_pairwise_daily_clique_counts(self):
        # 5 accounts retweeting each other once per day for 3 days:
        # every account receives (5-1) * 3 incoming interactions
        ids = [f"s{i}" for i in range(5)]
        records = [
            InteractionRecord(a, b, "retweet", day)
            for day in range(3)
            for a in ids
            for b in ids
            if a != b
        ]
        ranking = kred_baseline(records)
        assert set(ranking.scores) == {12.0}
