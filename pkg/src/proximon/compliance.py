"""Windowed violation accounting, risk graphs, rolling metrics, and alerts.

Per-frame violation pairs are accumulated into fixed-span windows as pairwise
durations. Pairs whose duration crosses the high-risk threshold become edges
of an undirected graph whose connected components are the violation clusters;
counts and ratios derived from that graph summarize each window. A rolling
aggregate over the most recent windows feeds edge-triggered threshold alerts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigurationError

Pair = tuple[int, int]

METRIC_NAMES = (
    "distinct_people",
    "violation_pairs",
    "high_risk_pairs",
    "violators",
    "ratio",
    "max_cluster",
)


def _ordered(pair: Iterable[int]) -> Pair:
    a, b = pair
    if a == b:
        raise ValueError(f"violation pair with identical ids ({a}, {b})")
    return (a, b) if a < b else (b, a)


@dataclass
class ComplianceWindow:
    """Accumulator for one aggregation window.

    Durations are total violation seconds per unordered id pair; with
    contiguous_runs enabled the high-risk test uses the longest consecutive
    run instead of the total.
    """

    span_s: float = 30.0
    high_risk_threshold_s: float = 5.0
    start_ts: float = 0.0
    contiguous_runs: bool = False
    person_ids: set[int] = field(default_factory=set)
    durations: dict[Pair, float] = field(default_factory=dict)
    _current_run: dict[Pair, float] = field(default_factory=dict)
    _best_run: dict[Pair, float] = field(default_factory=dict)

    def accumulate(self, present_ids: Iterable[int], violating_pairs: Iterable[Pair], dt: float) -> None:
        """Register one frame: every tracked id is counted, violating or not."""
        if dt <= 0:
            raise ValueError(f"frame period must be positive, got {dt}")
        self.person_ids.update(present_ids)
        pairs = {_ordered(p) for p in violating_pairs}
        for pair in pairs:
            self.person_ids.update(pair)
            self.durations[pair] = self.durations.get(pair, 0.0) + dt
        if self.contiguous_runs:
            for pair in pairs:
                run = self._current_run.get(pair, 0.0) + dt
                self._current_run[pair] = run
                if run > self._best_run.get(pair, 0.0):
                    self._best_run[pair] = run
            for pair in list(self._current_run):
                if pair not in pairs:
                    del self._current_run[pair]

    def effective_duration(self, pair: Pair) -> float:
        pair = _ordered(pair)
        if self.contiguous_runs:
            return self._best_run.get(pair, 0.0)
        return self.durations.get(pair, 0.0)

    def high_risk_edges(self) -> frozenset[Pair]:
        """Pairs strictly above the threshold; an exact-threshold tie is compliant."""
        return frozenset(
            pair for pair in self.durations if self.effective_duration(pair) > self.high_risk_threshold_s
        )

    def summary(self) -> "WindowSummary":
        return WindowSummary(
            start_ts=self.start_ts,
            span_s=self.span_s,
            person_ids=frozenset(self.person_ids),
            violating_pairs=frozenset(p for p, d in self.durations.items() if d > 0),
            high_risk_edges=self.high_risk_edges(),
        )


@dataclass(frozen=True)
class WindowSummary:
    """Immutable snapshot of a closed window, sufficient to rebuild its graph."""

    start_ts: float
    span_s: float
    person_ids: frozenset[int]
    violating_pairs: frozenset[Pair]
    high_risk_edges: frozenset[Pair]


@dataclass(frozen=True)
class ViolationGraph:
    nodes: frozenset[int]
    edges: frozenset[Pair]

    def degree(self, node: int) -> int:
        return sum(1 for a, b in self.edges if node in (a, b))


def high_risk_graph(window: ComplianceWindow | WindowSummary) -> ViolationGraph:
    """Graph of high-risk pairs; isolated compliant people carry no node."""
    edges = (
        window.high_risk_edges() if isinstance(window, ComplianceWindow) else window.high_risk_edges
    )
    nodes = frozenset(n for e in edges for n in e)
    return ViolationGraph(nodes, frozenset(edges))


def clusters(graph: ViolationGraph) -> list[set[int]]:
    """Connected components, largest first (ties by smallest member id)."""
    seen: set[int] = set()
    adjacency: dict[int, set[int]] = {n: set() for n in graph.nodes}
    for a, b in graph.edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    components = []
    for node in sorted(graph.nodes):
        if node in seen:
            continue
        stack = [node]
        component = set()
        while stack:
            n = stack.pop()
            if n in component:
                continue
            component.add(n)
            stack.extend(adjacency[n] - component)
        seen |= component
        components.append(component)
    components.sort(key=lambda c: (-len(c), min(c)))
    return components


@dataclass(frozen=True)
class ComplianceMetrics:
    distinct_people: int = 0
    violation_pairs: int = 0
    high_risk_pairs: int = 0
    violators: int = 0
    ratio: float = 0.0             # high-risk edges per violator
    cluster_sizes: tuple[int, ...] = ()
    max_cluster: int = 0
    window_count: int = 0

    def value_of(self, metric: str) -> float:
        if metric not in METRIC_NAMES:
            raise ConfigurationError(f"unknown metric {metric!r}; known: {METRIC_NAMES}")
        return float(getattr(self, metric))

    def to_dict(self) -> dict:
        return {
            "distinct_people": self.distinct_people,
            "violation_pairs": self.violation_pairs,
            "high_risk_pairs": self.high_risk_pairs,
            "violators": self.violators,
            "ratio": self.ratio,
            "clusters": list(self.cluster_sizes),
            "max_cluster": self.max_cluster,
            "window_count": self.window_count,
        }


def _metrics_from_graph(
    distinct_people: int,
    violation_pairs: int,
    high_risk_pairs: int,
    graph: ViolationGraph,
    window_count: int,
) -> ComplianceMetrics:
    parts = clusters(graph)
    sizes = tuple(len(c) for c in parts)
    violators = len(graph.nodes)
    return ComplianceMetrics(
        distinct_people=distinct_people,
        violation_pairs=violation_pairs,
        high_risk_pairs=high_risk_pairs,
        violators=violators,
        ratio=len(graph.edges) / violators if violators else 0.0,
        cluster_sizes=sizes,
        max_cluster=max(sizes, default=0),
        window_count=window_count,
    )


def window_metrics(summary: WindowSummary) -> ComplianceMetrics:
    graph = ViolationGraph(
        frozenset(n for e in summary.high_risk_edges for n in e), summary.high_risk_edges
    )
    return _metrics_from_graph(
        len(summary.person_ids), len(summary.violating_pairs), len(summary.high_risk_edges),
        graph, window_count=1,
    )


def rolling_metrics(history: Sequence[WindowSummary], horizon_s: float = 300.0) -> ComplianceMetrics:
    """Aggregate the last ceil(horizon / span) windows.

    Pair counts are summed across windows; people and violators are counted
    once via id-set unions; the ratio and cluster statistics come from the
    union of the windows' high-risk graphs.
    """
    if not history:
        return ComplianceMetrics()
    span = history[0].span_s
    keep = max(1, math.ceil(horizon_s / span))
    recent = list(history[-keep:])
    people: set[int] = set()
    union_edges: set[Pair] = set()
    violation_sum = 0
    high_risk_sum = 0
    for summary in recent:
        people |= summary.person_ids
        union_edges |= summary.high_risk_edges
        violation_sum += len(summary.violating_pairs)
        high_risk_sum += len(summary.high_risk_edges)
    graph = ViolationGraph(frozenset(n for e in union_edges for n in e), frozenset(union_edges))
    return _metrics_from_graph(
        len(people), violation_sum, high_risk_sum, graph, window_count=len(recent)
    )


@dataclass(frozen=True)
class AlertEvent:
    metric: str
    value: float
    threshold: float
    window_start_ts: float
    window_end_ts: float

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value, "threshold": self.threshold}


class AlertMonitor:
    """Edge-triggered threshold alerts over aggregated metrics.

    An alert fires when a metric first exceeds its threshold and stays
    silent while continuously breached; after the metric has been at or
    below threshold for rearm_after consecutive checks it may fire again.
    """

    def __init__(self, thresholds: dict[str, float], rearm_after: int = 1):
        for name in thresholds:
            if name not in METRIC_NAMES:
                raise ConfigurationError(f"unknown alert metric {name!r}; known: {METRIC_NAMES}")
        if rearm_after < 1:
            raise ConfigurationError(f"rearm_after must be >= 1, got {rearm_after}")
        self.thresholds = dict(thresholds)
        self.rearm_after = rearm_after
        self._breached: dict[str, bool] = {name: False for name in thresholds}
        self._calm_streak: dict[str, int] = {name: 0 for name in thresholds}

    def check(
        self, metrics: ComplianceMetrics, window_start_ts: float = 0.0, window_end_ts: float = 0.0
    ) -> list[AlertEvent]:
        if not self.thresholds:
            warnings.warn("no alert thresholds configured", stacklevel=2)
            return []
        events = []
        for name, threshold in self.thresholds.items():
            value = metrics.value_of(name)
            if value > threshold:
                if not self._breached[name]:
                    self._breached[name] = True
                    events.append(AlertEvent(name, value, threshold, window_start_ts, window_end_ts))
                self._calm_streak[name] = 0
            else:
                self._calm_streak[name] += 1
                if self._calm_streak[name] >= self.rearm_after:
                    self._breached[name] = False
        return events
