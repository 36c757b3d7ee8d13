import itertools

import numpy as np
import pytest

from proximon.compliance import (
    AlertMonitor,
    ComplianceWindow,
    ViolationGraph,
    clusters,
    high_risk_graph,
    rolling_metrics,
    window_metrics,
)
from proximon.errors import ConfigurationError


def window(**kwargs):
    return ComplianceWindow(span_s=30.0, high_risk_threshold_s=5.0, **kwargs)


class TestAccumulate:
    def test_empty_pairs_still_register_ids(self):
        w = window()
        w.accumulate([1, 2, 3], [], dt=0.1)
        assert w.person_ids == {1, 2, 3}
        assert w.durations == {}

    def test_sixty_frames_at_ten_fps(self):
        w = window()
        for _ in range(60):
            w.accumulate([1, 2], [(1, 2)], dt=0.1)
        assert w.effective_duration((1, 2)) == pytest.approx(6.0)

    def test_pair_order_irrelevant(self):
        w = window()
        w.accumulate([1, 2], [(2, 1)], dt=0.5)
        w.accumulate([1, 2], [(1, 2)], dt=0.5)
        assert w.effective_duration((1, 2)) == pytest.approx(1.0)
        assert len(w.durations) == 1

    def test_contiguous_runs_mode(self):
        w = window(contiguous_runs=True)
        for _ in range(30):
            w.accumulate([1, 2], [(1, 2)], dt=0.1)   # 3 s run
        w.accumulate([1, 2], [], dt=0.1)              # gap resets the run
        for _ in range(40):
            w.accumulate([1, 2], [(1, 2)], dt=0.1)   # 4 s run
        assert w.durations[(1, 2)] == pytest.approx(7.0)
        assert w.effective_duration((1, 2)) == pytest.approx(4.0)
        assert w.high_risk_edges() == frozenset()     # no run crossed 5 s


class TestHighRiskGraph:
    def test_six_seconds_is_an_edge(self):
        w = window()
        w.accumulate([1, 2], [(1, 2)], dt=6.0)
        assert high_risk_graph(w).edges == {(1, 2)}

    def test_exactly_five_seconds_is_not(self):
        w = window()
        w.accumulate([1, 2], [(1, 2)], dt=5.0)
        assert high_risk_graph(w).edges == frozenset()

    def test_threshold_filters_pairs(self):
        w = window()
        w.accumulate([1, 2, 3], [(1, 2)], dt=4.0)
        w.accumulate([1, 2, 3], [(2, 3)], dt=8.0)
        g = high_risk_graph(w)
        assert g.edges == {(2, 3)}
        assert g.nodes == {2, 3}


class TestClusters:
    def test_two_components(self):
        g = ViolationGraph(frozenset({1, 2, 3, 4, 5}), frozenset({(1, 2), (2, 3), (4, 5)}))
        parts = clusters(g)
        assert [sorted(p) for p in parts] == [[1, 2, 3], [4, 5]]
        assert g.degree(2) == 2

    def test_empty(self):
        assert clusters(ViolationGraph(frozenset(), frozenset())) == []

    def test_star_graph(self):
        g = ViolationGraph(frozenset({7, 1, 2, 3}), frozenset({(1, 7), (2, 7), (3, 7)}))
        parts = clusters(g)
        assert len(parts) == 1 and len(parts[0]) == 4
        assert g.degree(7) == 3

    def test_partition_against_reachability_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 20))
            nodes = list(range(n))
            edges = set()
            for i, j in itertools.combinations(nodes, 2):
                if rng.random() < 0.15:
                    edges.add((i, j))
            graph_nodes = {v for e in edges for v in e}
            g = ViolationGraph(frozenset(graph_nodes), frozenset(edges))
            parts = clusters(g)
            # disjoint cover
            assert sum(len(p) for p in parts) == len(graph_nodes)
            assert set().union(*parts) == graph_nodes if parts else graph_nodes == set()

            def reachable(a, b):
                seen, stack = set(), [a]
                while stack:
                    v = stack.pop()
                    if v == b:
                        return True
                    if v in seen:
                        continue
                    seen.add(v)
                    stack.extend(
                        w for e in edges for w in e if v in e and w != v
                    )
                return False

            for p in parts:
                members = sorted(p)
                for a, b in itertools.combinations(members, 2):
                    assert reachable(a, b)
                for other in parts:
                    if other is not p:
                        assert not reachable(min(p), min(other))

    def test_matrix_graph_equivalence_brute_force(self, rng):
        for _ in range(20):
            ids = list(range(int(rng.integers(2, 15))))
            w = window()
            for i, j in itertools.combinations(ids, 2):
                t = float(rng.uniform(0, 10))
                w.accumulate(ids, [(i, j)], dt=t)
            matrix = {
                (i, j): w.durations.get((i, j), 0.0) > w.high_risk_threshold_s
                for i, j in itertools.combinations(ids, 2)
            }
            edges = high_risk_graph(w).edges
            for pair, is_high in matrix.items():
                assert (pair in edges) == is_high


class TestMetrics:
    def test_transient_pairs_never_edge(self, rng):
        w = window()
        for _ in range(10):
            i, j = rng.integers(0, 10, 2)
            if i == j:
                continue
            w.accumulate([i, j], [(i, j)], dt=float(rng.uniform(0.01, 0.49)))
        # every pair stays under 10 * 0.49 < 5 s
        assert high_risk_graph(w).edges == frozenset()

    def test_queue_vs_cluster_ratio(self):
        for k in range(3, 9):
            path = window()
            for i in range(k - 1):
                path.accumulate(range(k), [(i, i + 1)], dt=6.0)
            clique = window()
            for i, j in itertools.combinations(range(k), 2):
                clique.accumulate(range(k), [(i, j)], dt=6.0)
            path_m = window_metrics(path.summary())
            clique_m = window_metrics(clique.summary())
            assert path_m.high_risk_pairs == k - 1
            assert clique_m.high_risk_pairs == k * (k - 1) // 2
            assert path_m.violators == clique_m.violators == k
            assert path_m.ratio == pytest.approx((k - 1) / k)
            assert clique_m.ratio == pytest.approx((k - 1) / 2)
            assert clique_m.ratio > path_m.ratio

    def test_cluster_sizes_sum_to_violators(self):
        w = window()
        w.accumulate([1, 2, 3, 4, 5, 6, 9], [(1, 2), (2, 3), (4, 5)], dt=6.0)
        m = window_metrics(w.summary())
        assert sum(m.cluster_sizes) == m.violators == 5
        assert m.distinct_people == 7
        assert m.max_cluster == 3


class TestRolling:
    def make_summary(self, start, ids, edges):
        w = window(start_ts=start)
        w.accumulate(ids, edges, dt=6.0)
        return w.summary()

    def test_single_window_identity(self):
        s = self.make_summary(0.0, [1, 2, 3], [(1, 2)])
        assert rolling_metrics([s], horizon_s=300.0) == window_metrics(s)

    def test_ten_windows_fit_exactly(self):
        history = [self.make_summary(30.0 * k, [k], []) for k in range(10)]
        rolled = rolling_metrics(history, horizon_s=300.0)
        assert rolled.window_count == 10
        assert rolled.distinct_people == 10

    def test_twelve_windows_keep_last_ten(self):
        history = [self.make_summary(30.0 * k, [k], []) for k in range(12)]
        rolled = rolling_metrics(history, horizon_s=300.0)
        assert rolled.window_count == 10
        assert rolled.distinct_people == 10  # ids 2..11

    def test_union_graph_semantics(self):
        a = self.make_summary(0.0, [1, 2, 3], [(1, 2)])
        b = self.make_summary(30.0, [2, 3, 4], [(2, 3), (1, 2)])
        rolled = rolling_metrics([a, b], horizon_s=300.0)
        assert rolled.distinct_people == 4
        assert rolled.high_risk_pairs == 3      # summed per-window counts
        assert rolled.violators == 3            # union graph nodes {1, 2, 3}
        assert rolled.cluster_sizes == (3,)
        assert rolled.ratio == pytest.approx(2 / 3)  # union edges / union violators

    def test_empty_history(self):
        m = rolling_metrics([], horizon_s=300.0)
        assert m.distinct_people == 0 and m.window_count == 0


class TestAlerts:
    def metrics(self, high_risk):
        w = window()
        if high_risk:
            for k in range(high_risk):
                w.accumulate([2 * k, 2 * k + 1], [(2 * k, 2 * k + 1)], dt=6.0)
        return window_metrics(w.summary())

    def test_zero_value_never_alerts(self):
        monitor = AlertMonitor({"high_risk_pairs": 5})
        assert monitor.check(self.metrics(0)) == []

    def test_edge_triggered(self):
        monitor = AlertMonitor({"high_risk_pairs": 5})
        first = monitor.check(self.metrics(7))
        assert len(first) == 1
        assert first[0].value == 7 and first[0].threshold == 5
        assert monitor.check(self.metrics(8)) == []  # still breached, no re-fire

    def test_rearm_cycle(self):
        monitor = AlertMonitor({"high_risk_pairs": 5})
        assert len(monitor.check(self.metrics(7))) == 1
        assert monitor.check(self.metrics(3)) == []   # back below: re-arms
        assert len(monitor.check(self.metrics(6))) == 1

    def test_rearm_needs_streak(self):
        monitor = AlertMonitor({"high_risk_pairs": 5}, rearm_after=2)
        assert len(monitor.check(self.metrics(7))) == 1
        assert monitor.check(self.metrics(3)) == []
        assert monitor.check(self.metrics(6)) == []   # only one calm check so far
        assert monitor.check(self.metrics(3)) == []
        assert monitor.check(self.metrics(3)) == []
        assert len(monitor.check(self.metrics(6))) == 1

    def test_unknown_metric_rejected(self):
        with pytest.raises(ConfigurationError):
            AlertMonitor({"nope": 1})

    def test_no_thresholds_warns(self):
        monitor = AlertMonitor({})
        with pytest.warns(UserWarning):
            assert monitor.check(self.metrics(7)) == []
