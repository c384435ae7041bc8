"""Reference matcher: enumerate every match of a plan over a full edge list.

Ground truth for engine correctness tests.  Two independent implementations
are provided: ``enumerate_matches`` walks the plan order depth-first with
endpoint indexes, and ``enumerate_matches_bruteforce`` checks every d-tuple
of edges outright.  Both deliberately avoid the engine's incremental
machinery; they agree with each other and (by the soundness property) with
stepwise admission.

Matches are keyed by the tuple of edge ids in plan order.  By default the
vertex mapping is a homomorphism (two variables may bind one vertex); pass
``injective=True`` to require distinct vertices for distinct variables.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import defaultdict
from itertools import product

from .edges import TemporalEdge
from .planner import QueryPlan
from .query import MembershipRegistry, check_vertex_constraint

MatchSet = set[tuple[int, ...]]


def _passes_vertex_constraints(
    plan: QueryPlan, variables: dict[str, str], membership: MembershipRegistry | None
) -> bool:
    for vc in plan.query.vertex_constraints:
        vertex = variables.get(vc.vertex)
        if vertex is not None and not check_vertex_constraint(vc, vertex, membership):
            return False
    return True


def _injective(variables: dict[str, str]) -> bool:
    values = list(variables.values())
    return len(set(values)) == len(values)


def enumerate_matches(
    plan: QueryPlan,
    edges: list[TemporalEdge],
    *,
    membership: MembershipRegistry | None = None,
    injective: bool = False,
) -> MatchSet:
    """All matches of ``plan`` in ``edges``; independent of the list's order."""
    by_source: dict[str, list[TemporalEdge]] = defaultdict(list)
    by_target: dict[str, list[TemporalEdge]] = defaultdict(list)
    by_both: dict[tuple[str, str], list[TemporalEdge]] = defaultdict(list)
    ordered = sorted(edges, key=lambda e: (e.start_time, e.local_id))
    for e in ordered:
        by_source[e.source].append(e)
        by_target[e.target].append(e)
        by_both[(e.source, e.target)].append(e)
    starts = {
        "source": {k: [e.start_time for e in v] for k, v in by_source.items()},
        "target": {k: [e.start_time for e in v] for k, v in by_target.items()},
        "both": {k: [e.start_time for e in v] for k, v in by_both.items()},
    }

    matches: MatchSet = set()
    constraints = plan.query.temporal_constraints

    def candidates(step: int, variables: dict[str, str], anchor: float) -> list[TemporalEdge]:
        s = plan.steps[step]
        src = variables.get(s.pattern.source)
        trg = variables.get(s.pattern.target)
        if src is not None and trg is not None:
            pool, times = by_both[(src, trg)], starts["both"].get((src, trg), [])
        elif src is not None:
            pool, times = by_source[src], starts["source"].get(src, [])
        elif trg is not None:
            pool, times = by_target[trg], starts["target"].get(trg, [])
        else:
            return ordered
        lo = bisect_left(times, anchor + s.lo)
        hi = bisect_right(times, anchor + s.hi)
        return pool[lo:hi]

    def extend(step: int, env: dict[str, TemporalEdge], variables: dict[str, str], used: set[int]) -> None:
        if step == plan.depth:
            matches.add(tuple(env[s.pattern.label].local_id for s in plan.steps))
            return
        s = plan.steps[step]
        anchor = env[plan.steps[0].pattern.label].start_time if step else 0.0
        for e in candidates(step, variables, anchor) if step else ordered:
            if e.local_id in used:
                continue
            want_src = variables.get(s.pattern.source)
            if want_src is not None and e.source != want_src:
                continue
            want_trg = variables.get(s.pattern.target)
            if want_trg is not None and e.target != want_trg:
                continue
            if s.pattern.source == s.pattern.target and e.source != e.target:
                continue
            env[s.pattern.label] = e
            available = set(env)
            ok = all(c.evaluate(env) for c in constraints if c.labels() <= available)
            if ok:
                new_vars = dict(variables)
                new_vars[s.pattern.source] = e.source
                new_vars[s.pattern.target] = e.target
                if injective and not _injective(new_vars):
                    ok = False
                if ok and not _passes_vertex_constraints(plan, new_vars, membership):
                    ok = False
                if ok:
                    used.add(e.local_id)
                    extend(step + 1, env, new_vars, used)
                    used.remove(e.local_id)
            del env[s.pattern.label]

    extend(0, {}, {}, set())
    return matches


def enumerate_matches_bruteforce(
    plan: QueryPlan,
    edges: list[TemporalEdge],
    *,
    membership: MembershipRegistry | None = None,
    injective: bool = False,
) -> MatchSet:
    """Index-free cross-check: test every assignment of edges to plan steps.

    Exponential in the plan depth; only for small inputs.
    """
    matches: MatchSet = set()
    for combo in product(edges, repeat=plan.depth):
        ids = tuple(e.local_id for e in combo)
        if len(set(ids)) != len(ids):
            continue
        variables: dict[str, str] = {}
        ok = True
        for s, e in zip(plan.steps, combo):
            for var, vertex in ((s.pattern.source, e.source), (s.pattern.target, e.target)):
                bound = variables.get(var)
                if bound is None:
                    variables[var] = vertex
                elif bound != vertex:
                    ok = False
                    break
            if not ok:
                break
        if not ok:
            continue
        env = {s.pattern.label: e for s, e in zip(plan.steps, combo)}
        if not all(c.evaluate(env) for c in plan.query.temporal_constraints):
            continue
        if injective and not _injective(variables):
            continue
        if not _passes_vertex_constraints(plan, variables, membership):
            continue
        matches.add(ids)
    return matches


def window_bound_violations(
    plan: QueryPlan, edges: list[TemporalEdge], matches: MatchSet
) -> list[tuple[float, int, int]]:
    """Check the per-window complexity bound.

    For each window of length ``max_extent`` anchored at a match's first
    edge, the number of matches falling entirely inside must not exceed
    n**d, n being the number of edges starting in the window.  Returns a
    list of (anchor, match_count, edge_count) violations; empty means the
    bound holds.
    """
    if not matches:
        return []
    edges_by_id = {e.local_id: e for e in edges}
    spans = []
    for ids in matches:
        times = [edges_by_id[i].start_time for i in ids]
        spans.append((min(times), max(times)))
    spans.sort()
    span_mins = [s[0] for s in spans]
    all_starts = sorted(e.start_time for e in edges)
    extent = plan.max_extent
    d = plan.depth

    violations = []
    for anchor in sorted({lo for lo, _ in spans}):
        window_hi = anchor + extent
        n = bisect_right(all_starts, window_hi) - bisect_left(all_starts, anchor)
        lo_i = bisect_left(span_mins, anchor)
        hi_i = bisect_right(span_mins, window_hi)
        inside = sum(1 for lo, hi in spans[lo_i:hi_i] if hi <= window_hi)
        if inside > n**d:
            violations.append((anchor, inside, n))
    return violations
