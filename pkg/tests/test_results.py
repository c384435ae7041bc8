from __future__ import annotations

import math

import pytest

from streamsub.graph_index import BY_SOURCE, BY_TARGET, GraphIndex
from streamsub.oracle import enumerate_matches
from streamsub.results import KEY_BOTH, KEY_SOURCE, IntermediateResult, ResultMap

from conftest import make_edge, triangle_stream


def fresh_map(plan, horizon=None, **kwargs):
    horizon = plan.max_extent if horizon is None else horizon
    csr = GraphIndex(BY_SOURCE, bin_count=64, max_query_duration=horizon)
    csc = GraphIndex(BY_TARGET, bin_count=64, max_query_duration=horizon)
    sink: list = []
    rmap = ResultMap(csr, csc, sink=sink.append, capacity=kwargs.pop("capacity", 256), **kwargs)
    return rmap, csr, csc, sink


def test_seed_and_indexing(triangle_plan):
    e1 = make_edge("A", "B", 0.0, 0.0, 1)
    seed = IntermediateResult.seed(triangle_plan, "q0", e1)
    assert not seed.complete
    assert seed.key_mode() == KEY_SOURCE
    assert seed.key_vertices() == ("B", None)
    assert seed.window() == (0.0, 10.0)
    assert seed.expiry == 10.0
    request = seed.to_request(3)
    assert request.bound_source == "B" and request.bound_target is None
    assert (request.lo, request.hi) == (0.0, 10.0)
    assert request.requesting_worker == 3 and request.step_index == 1


def test_process_extends_and_retains_original(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1, e2, _ = triangle_stream()
    rmap.add(IntermediateResult.seed(triangle_plan, "q0", e1))
    assert rmap.stored_count() == 1

    csr.add_edge(e2)
    csc.add_edge(e2)
    requests = rmap.process(e2)
    # new two-edge result stored under the both-bound key (C and A), original kept
    assert rmap.stored_count() == 2
    assert len(requests) == 1
    assert (requests[0].bound_source, requests[0].bound_target) == ("C", "A")

    # the original single-edge result still matches a different second edge
    e2b = make_edge("B", "D", 2.0, 0.0, 42)
    csr.add_edge(e2b)
    csc.add_edge(e2b)
    rmap.process(e2b)
    assert rmap.stored_count() == 3
    assert sink == []


def test_process_nonmatching_edge_returns_nothing(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1 = make_edge("A", "B", 0.0, 0.0, 1)
    rmap.add(IntermediateResult.seed(triangle_plan, "q0", e1))
    stray = make_edge("X", "Y", 1.0, 0.0, 5)
    assert rmap.process(stray) == []
    assert rmap.stored_count() == 1


def test_expired_results_deleted_in_touched_slot(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1 = make_edge("A", "B", 0.0, 0.0, 1)
    rmap.add(IntermediateResult.seed(triangle_plan, "q0", e1))  # expiry 10
    late = make_edge("B", "Z", 11.0, 0.0, 7)  # same source-key slot (B)
    assert rmap.process(late) == []
    assert rmap.stored_count() == 0
    assert rmap.results_expired == 1


def test_boundary_expiry_is_inclusive(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1 = make_edge("A", "B", 0.0, 0.0, 1)
    rmap.add(IntermediateResult.seed(triangle_plan, "q0", e1))
    boundary = make_edge("B", "C", 10.0, 0.0, 2)  # exactly at the extent bound
    rmap.process(boundary)
    assert rmap.stored_count() == 2


def test_add_with_graph_completes_immediately(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1, e2, e3 = triangle_stream()
    for e in (e2, e3):
        csr.add_edge(e)
        csc.add_edge(e)
    rmap.add(IntermediateResult.seed(triangle_plan, "q0", e1))
    assert len(sink) == 1
    assert sink[0].edge_ids == (1, 2, 3)
    assert sink[0].complete
    # the complete match itself is not stored; partial expansions are
    stored_sizes = sorted(len(r.bound_edges) for r in _all_results(rmap))
    assert stored_sizes == [1, 2]


def _all_results(rmap):
    out = []
    for stored in rmap._slots:
        if stored:
            out.extend(stored)
    return out


def test_add_into_empty_graph_stores_once(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    requests = rmap.add(IntermediateResult.seed(triangle_plan, "q0", make_edge("A", "B", 0.0, 0.0, 1)))
    assert rmap.stored_count() == 1
    assert len(requests) == 1
    assert requests[0].step_index == 1
    assert requests[0].bound_source == "B"


def test_add_complete_result_emits_once(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1, e2, e3 = triangle_stream()
    result = IntermediateResult.seed(triangle_plan, "q0", e1).extend(e2).extend(e3)
    assert result is not None and result.complete
    assert rmap.add(result) == []
    assert len(sink) == 1
    assert rmap.stored_count() == 0


def test_process_against_graph_fixed_point(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1, e2, e3 = triangle_stream()
    for e in (e2, e3):
        csr.add_edge(e)
        csc.add_edge(e)
    generation = rmap.process_against_graph([IntermediateResult.seed(triangle_plan, "q0", e1)])
    sizes = sorted(len(r.bound_edges) for r in generation)
    assert sizes == [1, 2, 3]


def test_process_against_graph_complete_results_not_extended(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1, e2, e3 = triangle_stream()
    complete = IntermediateResult.seed(triangle_plan, "q0", e1).extend(e2).extend(e3)
    out = rmap.process_against_graph([complete])
    assert out == [complete]


def test_process_against_graph_branches(triangle_plan):
    rmap, csr, csc, sink = fresh_map(triangle_plan)
    e1 = make_edge("A", "B", 0.0, 0.0, 1)
    for i, t in enumerate((1.0, 2.0)):
        edge = make_edge("B", f"C{i}", t, 0.0, 10 + i)
        csr.add_edge(edge)
        csc.add_edge(edge)
    generation = rmap.process_against_graph([IntermediateResult.seed(triangle_plan, "q0", e1)])
    two_edge = [r for r in generation if len(r.bound_edges) == 2]
    assert len(two_edge) == 2
    assert {r.bound_edges[1].target for r in two_edge} == {"C0", "C1"}


def test_same_edge_cannot_fill_two_steps(triangle_plan):
    loop_query_edges = triangle_stream()
    seed = IntermediateResult.seed(triangle_plan, "q0", loop_query_edges[0])
    extended = seed.extend(loop_query_edges[1])
    assert extended is not None
    assert extended.extend(loop_query_edges[1]) is None


def test_no_duplicate_matches_against_oracle(triangle_plan):
    from conftest import random_stream

    rmap, csr, csc, sink = fresh_map(triangle_plan, capacity=1024)
    edges = random_stream(600, 6, 5.0, seed=3)
    for e in edges:
        csr.add_edge(e)
        csc.add_edge(e)
        rmap.process(e)
        rmap.add(IntermediateResult.seed(triangle_plan, "q0", e))
    emitted = [tuple(m.edge_ids) for m in sink]
    assert len(emitted) == len(set(emitted))
    assert set(emitted) == enumerate_matches(triangle_plan, edges)


def test_capacity_must_be_power_of_two(triangle_plan):
    csr = GraphIndex(BY_SOURCE, bin_count=16)
    csc = GraphIndex(BY_TARGET, bin_count=16)
    with pytest.raises(ValueError):
        ResultMap(csr, csc, capacity=1000)
