"""Compile a subgraph query into a temporally ordered execution plan.

The planner derives three things from the temporal constraints:

* a strict total order on the pattern edges by start time (execution order),
* the maximum temporal extent of a match (start of last edge minus start of
  first edge), which drives expiry everywhere, and
* per-step admission windows, normalized to the first edge's start time.

All derivations go through a difference-bound graph over edge start times.
A constraint mentioning ``endtime(x)`` is converted into a start-time bound
by padding with the configured maximum edge duration where the duration
works against us, and dropped where it works for us.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from .edges import TemporalEdge
from .query import (
    ENDTIME,
    DifferenceBound,
    EdgePattern,
    InstantComparison,
    MembershipRegistry,
    SubgraphQuery,
    check_vertex_constraint,
    validate,
)


class PlanError(Exception):
    """Base class for query planning failures."""


class InvalidQuery(PlanError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class NoTotalOrder(PlanError):
    """The temporal constraints do not imply a strict total order on edge start times."""


class UnboundedExtent(PlanError):
    """No finite bound on the match extent is derivable and no default was configured."""


class Disconnected(PlanError):
    """Some step binds no vertex variable seen at an earlier step."""


@dataclass(frozen=True, slots=True)
class PlanStep:
    """One edge of the execution order.

    ``lo``/``hi`` bound this edge's start time as offsets from the first
    edge's start time (closed interval; exact strictness is re-checked by
    ``satisfied_at``).  ``bound_source``/``bound_target`` say which endpoint
    variables are already bound when this step runs.
    """

    pattern: EdgePattern
    lo: float
    hi: float
    bound_source: bool
    bound_target: bool
    new_variables: tuple[str, ...]


@dataclass(frozen=True)
class QueryPlan:
    query: SubgraphQuery
    steps: tuple[PlanStep, ...]
    max_extent: float

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def ordered_labels(self) -> tuple[str, ...]:
        return tuple(s.pattern.label for s in self.steps)

    def describe(self) -> str:
        lines = [f"edges: {len(self.steps)}  max_extent: {self.max_extent:g}s"]
        for i, s in enumerate(self.steps):
            bound = []
            if s.bound_source:
                bound.append("source")
            if s.bound_target:
                bound.append("target")
            lines.append(
                f"  step {i}: {s.pattern.format()}  window [+{s.lo:g}, +{s.hi:g}]s"
                f"  bound: {','.join(bound) or 'none'}"
            )
        return "\n".join(lines)


# A difference atom states  value(left) - value(right) <cmp> c  where each
# value is the start or end instant of an edge.
def _atoms(query: SubgraphQuery):
    for c in query.temporal_constraints:
        if isinstance(c, InstantComparison):
            yield c.left, c.right, c.comparator, 0.0
        elif isinstance(c, DifferenceBound) and c.op == "-":
            yield c.left, c.right, c.comparator, c.bound
        # '+' forms relate absolute times and contribute nothing to
        # ordering or windows; they are still enforced by satisfied_at.


def _implied_order(left, right, comparator, c) -> tuple[str, str] | None:
    """Return (earlier, later) if the atom forces a strict start-time order.

    With durations unknown but nonnegative, ``v(A) - v(B) < c`` forces
    ``start(A) < start(B)`` only when B is a start instant and c <= 0 (strict)
    and the mirrored rule holds for ``>``.  Non-strict comparators qualify
    only when the bound is strictly inside.
    """
    if left.edge == right.edge:
        return None
    left_end = left.selector == ENDTIME
    right_end = right.selector == ENDTIME
    if comparator == "<" and not right_end and c <= 0.0:
        return left.edge, right.edge
    if comparator == "<=" and not right_end and c < 0.0:
        return left.edge, right.edge
    if comparator == ">" and not left_end and c >= 0.0:
        return right.edge, left.edge
    if comparator == ">=" and not left_end and c > 0.0:
        return right.edge, left.edge
    return None


def _difference_edges(left, right, comparator, c, max_edge_duration):
    """Yield (x, y, w) meaning start(x) - start(y) <= w.

    End instants on the small side of the inequality are padded with the
    maximum edge duration; on the large side they only slacken the bound and
    are dropped.
    """
    pad_left = max_edge_duration if left.selector == ENDTIME else 0.0
    pad_right = max_edge_duration if right.selector == ENDTIME else 0.0
    if comparator in ("<", "<="):
        # start(left) <= value(left) <= value(right) + c <= start(right) + pad_right + c
        yield left.edge, right.edge, c + pad_right
    else:
        # value(left) >= value(right) + c  =>  start(right) - start(left) <= -c + pad_left
        yield right.edge, left.edge, -c + pad_left


def _total_order(labels: Sequence[str], pairs: set[tuple[str, str]]) -> list[str]:
    """Unique topological order of ``labels`` under ``pairs``; NoTotalOrder otherwise."""
    succ: dict[str, set[str]] = {l: set() for l in labels}
    indeg: dict[str, int] = {l: 0 for l in labels}
    for a, b in pairs:
        if b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    order: list[str] = []
    remaining = set(labels)
    while remaining:
        sources = [l for l in remaining if indeg[l] == 0]
        if not sources:
            raise NoTotalOrder("temporal constraints are cyclic; no execution order exists")
        if len(sources) > 1:
            names = ", ".join(sorted(sources))
            raise NoTotalOrder(
                f"edges {{{names}}} are not strictly ordered by the temporal constraints"
            )
        head = sources[0]
        order.append(head)
        remaining.remove(head)
        for nxt in succ[head]:
            indeg[nxt] -= 1
    return order


def plan(
    query: SubgraphQuery,
    *,
    max_edge_duration: float = 60.0,
    default_extent: float | None = None,
) -> QueryPlan:
    """Derive the execution plan for a validated query.

    Raises InvalidQuery, NoTotalOrder, UnboundedExtent, or Disconnected.
    Deterministic for a fixed query.
    """
    diags = validate(query)
    if diags:
        raise InvalidQuery(diags)

    labels = list(query.labels())
    atoms = list(_atoms(query))

    pairs: set[tuple[str, str]] = set()
    for left, right, cmp_, c in atoms:
        ordered = _implied_order(left, right, cmp_, c)
        if ordered:
            pairs.add(ordered)
    order = _total_order(labels, pairs)

    # Tightest pairwise start-time difference bounds (min-plus closure).
    index = {l: i for i, l in enumerate(labels)}
    n = len(labels)
    inf = math.inf
    dist = [[0.0 if i == j else inf for j in range(n)] for i in range(n)]
    for left, right, cmp_, c in atoms:
        for x, y, w in _difference_edges(left, right, cmp_, c, max_edge_duration):
            i, j = index[x], index[y]
            # start(x) - start(y) <= w  is the arc y -> x of weight w.
            if w < dist[j][i]:
                dist[j][i] = w
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik == inf:
                continue
            di = dist[i]
            for j in range(n):
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    for i in range(n):
        if dist[i][i] < 0.0:
            raise PlanError("temporal constraints are contradictory (negative constraint cycle)")

    first = index[order[0]]
    last = index[order[-1]]
    max_extent = dist[first][last] if n > 1 else 0.0
    if not math.isfinite(max_extent):
        if default_extent is None:
            raise UnboundedExtent(
                "no finite bound on the match extent is derivable; configure a default extent"
            )
        max_extent = default_extent
    if n > 1 and max_extent <= 0.0:
        raise PlanError("temporal constraints are contradictory (non-positive match extent)")

    patterns = {e.label: e for e in query.edges}
    steps: list[PlanStep] = []
    seen_vars: set[str] = set()
    for pos, label in enumerate(order):
        pattern = patterns[label]
        if pos == 0:
            lo = hi = 0.0
        else:
            i = index[label]
            hi = min(dist[first][i], max_extent)
            lo = (max(-dist[i][first], 0.0) if math.isfinite(dist[i][first]) else 0.0) + 0.0
            bound_source = pattern.source in seen_vars
            bound_target = pattern.target in seen_vars
            if not (bound_source or bound_target):
                raise Disconnected(
                    f"edge {label!r} shares no vertex variable with earlier steps"
                )
        new_vars = tuple(v for v in pattern.variables() if v not in seen_vars)
        steps.append(
            PlanStep(
                pattern=pattern,
                lo=lo,
                hi=hi,
                bound_source=pos > 0 and pattern.source in seen_vars,
                bound_target=pos > 0 and pattern.target in seen_vars,
                new_variables=new_vars,
            )
        )
        seen_vars.update(pattern.variables())

    return QueryPlan(query=query, steps=tuple(steps), max_extent=max_extent)


def _binding_edges(binding) -> Sequence[TemporalEdge]:
    if binding is None:
        return ()
    bound = getattr(binding, "bound_edges", binding)
    return bound


def satisfied_at(
    plan: QueryPlan,
    step: int,
    binding,
    edge: TemporalEdge,
    membership: MembershipRegistry | None = None,
) -> bool:
    """Pure predicate: may ``edge`` serve as step ``step`` given the bound prefix?

    ``binding`` is the sequence of edges bound to steps ``0..step-1`` (an
    intermediate result or a plain sequence; only the first ``step`` entries
    are considered).  True iff the edge's endpoints are consistent with the
    variables bound so far, every temporal constraint whose edges are all
    available holds, and vertex constraints on newly bound variables hold.
    """
    if not 0 <= step < plan.depth:
        raise IndexError(f"step {step} out of range for plan of depth {plan.depth}")
    prefix = list(_binding_edges(binding))[:step]
    if len(prefix) < step:
        raise ValueError(f"binding supplies {len(prefix)} edges but step is {step}")

    env: dict[str, TemporalEdge] = {}
    vars_: dict[str, str] = {}
    for s, bound in zip(plan.steps, prefix):
        env[s.pattern.label] = bound
        vars_[s.pattern.source] = bound.source
        vars_[s.pattern.target] = bound.target

    pattern = plan.steps[step].pattern
    want_source = vars_.get(pattern.source)
    if want_source is not None and edge.source != want_source:
        return False
    want_target = vars_.get(pattern.target)
    if want_target is not None and edge.target != want_target:
        return False
    if pattern.source == pattern.target and edge.source != edge.target:
        return False

    env[pattern.label] = edge
    available = set(env)
    for c in plan.query.temporal_constraints:
        if c.labels() <= available and not c.evaluate(env):
            return False

    newly_bound: dict[str, str] = {}
    if pattern.source not in vars_:
        newly_bound[pattern.source] = edge.source
    if pattern.target not in vars_:
        newly_bound[pattern.target] = edge.target
    if newly_bound:
        for vc in plan.query.vertex_constraints:
            vertex = newly_bound.get(vc.vertex)
            if vertex is not None and not check_vertex_constraint(vc, vertex, membership):
                return False
    return True
