"""Continuous temporal subgraph matching over partitioned edge streams."""

from .edges import EdgeIdAllocator, TemporalEdge
from .planner import (
    Disconnected,
    InvalidQuery,
    NoTotalOrder,
    PlanError,
    QueryPlan,
    UnboundedExtent,
    plan,
    satisfied_at,
)
from .query import (
    DifferenceBound,
    EdgeInstant,
    EdgePattern,
    InstantComparison,
    MembershipRegistry,
    SubgraphQuery,
    VertexConstraint,
    validate,
)
from .sal import (
    SalProgram,
    SalSyntaxError,
    format_program,
    parse_constraint,
    parse_program,
    parse_query,
    parse_query_or_program,
)
from .oracle import enumerate_matches, enumerate_matches_bruteforce
from .cluster import LocalCluster
from .store import GraphStore

__all__ = [
    "Disconnected",
    "DifferenceBound",
    "EdgeIdAllocator",
    "EdgeInstant",
    "EdgePattern",
    "GraphStore",
    "InstantComparison",
    "InvalidQuery",
    "LocalCluster",
    "MembershipRegistry",
    "NoTotalOrder",
    "PlanError",
    "QueryPlan",
    "SalProgram",
    "SalSyntaxError",
    "SubgraphQuery",
    "TemporalEdge",
    "UnboundedExtent",
    "VertexConstraint",
    "enumerate_matches",
    "enumerate_matches_bruteforce",
    "format_program",
    "parse_constraint",
    "parse_program",
    "parse_query",
    "parse_query_or_program",
    "plan",
    "satisfied_at",
    "validate",
]

__version__ = "0.1.0"
