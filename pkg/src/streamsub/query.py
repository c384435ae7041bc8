"""Query domain types: edge patterns, temporal constraints, vertex constraints.

A subgraph query is a small pattern graph over vertex variables plus
constraints on the start/end times of the pattern edges and membership
constraints on the vertices.  These types are immutable and safe to share
across threads.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

from .edges import TemporalEdge, format_seconds

STARTTIME = "starttime"
ENDTIME = "endtime"
SELECTORS = (STARTTIME, ENDTIME)
COMPARATORS = ("<", ">", "<=", ">=")
ARITH_OPS = ("+", "-")

_COMPARE: dict[str, Callable[[float, float], bool]] = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True, slots=True)
class EdgeInstant:
    """Refers to the start or end instant of a pattern edge, e.g. starttime(e1)."""

    edge: str
    selector: str  # STARTTIME or ENDTIME

    def value(self, env: Mapping[str, TemporalEdge]) -> float:
        edge = env[self.edge]
        return edge.start_time if self.selector == STARTTIME else edge.end_time

    def format(self) -> str:
        return f"{self.selector}({self.edge})"


@dataclass(frozen=True, slots=True)
class InstantComparison:
    """Constraint of the shape ``starttime(e2) > endtime(e1)``."""

    left: EdgeInstant
    comparator: str
    right: EdgeInstant

    def labels(self) -> frozenset[str]:
        return frozenset((self.left.edge, self.right.edge))

    def evaluate(self, env: Mapping[str, TemporalEdge]) -> bool:
        return _COMPARE[self.comparator](self.left.value(env), self.right.value(env))

    def format(self) -> str:
        return f"{self.left.format()} {self.comparator} {self.right.format()}"


@dataclass(frozen=True, slots=True)
class DifferenceBound:
    """Constraint of the shape ``starttime(e3) - starttime(e1) <= 10``.

    ``op`` is ``-`` or ``+``; the combined value is compared to ``bound``
    seconds.
    """

    left: EdgeInstant
    op: str
    right: EdgeInstant
    comparator: str
    bound: float

    def labels(self) -> frozenset[str]:
        return frozenset((self.left.edge, self.right.edge))

    def evaluate(self, env: Mapping[str, TemporalEdge]) -> bool:
        lhs = self.left.value(env)
        rhs = self.right.value(env)
        combined = lhs - rhs if self.op == "-" else lhs + rhs
        return _COMPARE[self.comparator](combined, self.bound)

    def format(self) -> str:
        return (
            f"{self.left.format()} {self.op} {self.right.format()} "
            f"{self.comparator} {format_seconds(self.bound)}"
        )


TemporalConstraint = InstantComparison | DifferenceBound


@dataclass(frozen=True, slots=True)
class EdgePattern:
    """One labelled pattern edge between two vertex variables."""

    label: str
    source: str
    target: str

    def variables(self) -> tuple[str, ...]:
        if self.source == self.target:
            return (self.source,)
        return (self.source, self.target)

    def format(self) -> str:
        return f"{self.source} {self.label} {self.target}"


@dataclass(frozen=True, slots=True)
class VertexConstraint:
    """Membership test on a vertex variable against a named set."""

    vertex: str
    set_name: str
    negated: bool = False

    def format(self) -> str:
        op = "not in" if self.negated else "in"
        return f"{self.vertex} {op} {self.set_name}"


@dataclass(frozen=True)
class SubgraphQuery:
    edges: tuple[EdgePattern, ...]
    temporal_constraints: tuple[TemporalConstraint, ...] = ()
    vertex_constraints: tuple[VertexConstraint, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "temporal_constraints", tuple(self.temporal_constraints))
        object.__setattr__(self, "vertex_constraints", tuple(self.vertex_constraints))

    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.edges)

    def variables(self) -> tuple[str, ...]:
        seen: list[str] = []
        for e in self.edges:
            for v in (e.source, e.target):
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    def format(self) -> str:
        lines = [e.format() + ";" for e in self.edges]
        lines += [c.format() + ";" for c in self.temporal_constraints]
        lines += [c.format() + ";" for c in self.vertex_constraints]
        body = "\n  ".join(lines)
        return "{\n  " + body + "\n}"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """One validation finding; ``code`` is stable, ``subject`` names the culprit."""

    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}({self.subject}): {self.message}"


def validate(query: SubgraphQuery) -> list[Diagnostic]:
    """Check that a query is internally consistent.

    Returns an empty list when every label and variable resolves, labels are
    unique, and all constraint fields are well-formed.  Never raises.
    """
    diags: list[Diagnostic] = []
    if not query.edges:
        diags.append(Diagnostic("empty_query", "", "query declares no edges"))
        return diags

    labels: set[str] = set()
    for e in query.edges:
        if not e.label or not e.source or not e.target:
            diags.append(Diagnostic("empty_name", e.label or "?", "empty label or variable name"))
        if e.label in labels:
            diags.append(Diagnostic("duplicate_label", e.label, f"edge label {e.label!r} declared twice"))
        labels.add(e.label)
    variables = set(query.variables())

    for c in query.temporal_constraints:
        for inst in (c.left, c.right):
            if inst.edge not in labels:
                diags.append(Diagnostic("unknown_label", inst.edge, f"constraint references undeclared edge {inst.edge!r}"))
            if inst.selector not in SELECTORS:
                diags.append(Diagnostic("bad_selector", inst.selector, f"unknown selector {inst.selector!r}"))
        if c.comparator not in COMPARATORS:
            diags.append(Diagnostic("bad_comparator", c.comparator, f"unknown comparator {c.comparator!r}"))
        if isinstance(c, DifferenceBound):
            if c.op not in ARITH_OPS:
                diags.append(Diagnostic("bad_operator", c.op, f"unknown arithmetic operator {c.op!r}"))
            if not math.isfinite(c.bound):
                diags.append(Diagnostic("bad_bound", repr(c.bound), "numeric bound must be finite"))

    for vc in query.vertex_constraints:
        if vc.vertex not in variables:
            diags.append(Diagnostic("unknown_variable", vc.vertex, f"vertex constraint references undeclared variable {vc.vertex!r}"))

    return diags


class MembershipRegistry:
    """Named vertex-membership predicates.

    Set names used by vertex constraints resolve here when the engine starts.
    Static collections register directly; anything callable is used as a
    predicate ``vertex_id -> bool``.
    """

    def __init__(self) -> None:
        self._predicates: dict[str, Callable[[str], bool]] = {}

    def register(self, name: str, members: Iterable[str] | Callable[[str], bool]) -> None:
        if callable(members):
            self._predicates[name] = members
        else:
            frozen = frozenset(members)
            self._predicates[name] = frozen.__contains__

    def resolve(self, name: str) -> Callable[[str], bool]:
        try:
            return self._predicates[name]
        except KeyError:
            known = ", ".join(sorted(self._predicates)) or "<none>"
            raise KeyError(f"no membership set named {name!r} registered (known: {known})") from None

    def check(self, name: str, vertex: str) -> bool:
        return self.resolve(name)(vertex)

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._predicates))

    def __contains__(self, name: str) -> bool:
        return name in self._predicates


def check_vertex_constraint(constraint: VertexConstraint, vertex: str, membership: MembershipRegistry | None) -> bool:
    if membership is None:
        raise KeyError(f"vertex constraint on {constraint.set_name!r} but no membership registry supplied")
    member = membership.check(constraint.set_name, vertex)
    return (not member) if constraint.negated else member
