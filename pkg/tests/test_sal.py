from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsub.query import (
    ENDTIME,
    STARTTIME,
    DifferenceBound,
    EdgeInstant,
    EdgePattern,
    InstantComparison,
    VertexConstraint,
)
from streamsub.sal import (
    SalSyntaxError,
    format_program,
    parse_constraint,
    parse_program,
    parse_query,
    parse_query_or_program,
    tokenize,
)

from conftest import FULL_PROGRAM, TRIANGLE_BLOCK, WATERING_HOLE_BLOCK


def test_triangle_block_structure(triangle_query):
    q = triangle_query
    assert q.edges == (
        EdgePattern("e1", "x1", "x2"),
        EdgePattern("e2", "x2", "x3"),
        EdgePattern("e3", "x3", "x1"),
    )
    assert len(q.temporal_constraints) == 3
    assert q.temporal_constraints[0] == DifferenceBound(
        EdgeInstant("e3", STARTTIME), "-", EdgeInstant("e1", STARTTIME), "<=", 10.0
    )
    assert q.temporal_constraints[1] == InstantComparison(
        EdgeInstant("e1", STARTTIME), "<", EdgeInstant("e2", STARTTIME)
    )
    assert q.vertex_constraints == ()


def test_watering_hole_block_structure(watering_query):
    q = watering_query
    assert q.edges == (
        EdgePattern("e1", "target", "bait"),
        EdgePattern("e2", "target", "controller"),
    )
    assert q.temporal_constraints == (
        InstantComparison(EdgeInstant("e2", STARTTIME), ">", EdgeInstant("e1", ENDTIME)),
        DifferenceBound(EdgeInstant("e2", STARTTIME), "-", EdgeInstant("e1", ENDTIME), "<", 20.0),
    )
    assert q.vertex_constraints == (
        VertexConstraint("bait", "Top1000", negated=False),
        VertexConstraint("controller", "Top1000", negated=True),
    )


def test_full_program_structure(watering_query):
    program = parse_program(FULL_PROGRAM)
    assert program.preamble == {"WindowSize": 1000.0}
    assert program.connection.name == "Netflows"
    assert program.connection.kind == "VastStream"
    assert program.connection.host == "localhost"
    assert program.connection.port == 9999
    assert program.partition_keys == ["SourceIp", "DestIp"]
    assert program.hash_functions == {"SourceIp": "IpHashFunction", "DestIp": "IpHashFunction"}
    assert program.features == ["Top1000"]
    assert len(program.warnings) == 1 and "FOREACH GENERATE" in program.warnings[0]
    assert program.subgraph.source_field == "SourceIp"
    assert program.subgraph.target_field == "DestIp"
    assert program.query == watering_query


def test_empty_program_is_syntax_error():
    with pytest.raises(SalSyntaxError) as err:
        parse_program("")
    assert "connection" in str(err.value)


def test_query_or_program_accepts_both():
    assert parse_query_or_program(TRIANGLE_BLOCK).labels() == ("e1", "e2", "e3")
    assert parse_query_or_program(FULL_PROGRAM).labels() == ("e1", "e2")


def test_parse_constraint_comparison_form():
    c = parse_constraint("starttime(e2) > endtime(e1)")
    assert c == InstantComparison(EdgeInstant("e2", STARTTIME), ">", EdgeInstant("e1", ENDTIME))


def test_parse_constraint_difference_form():
    c = parse_constraint("starttime(e3) - starttime(e1) <= 10")
    assert c == DifferenceBound(
        EdgeInstant("e3", STARTTIME), "-", EdgeInstant("e1", STARTTIME), "<=", 10.0
    )


def test_parse_constraint_negative_bound():
    c = parse_constraint("starttime(e1) - starttime(e2) < -2.5")
    assert isinstance(c, DifferenceBound) and c.bound == -2.5


def test_parse_constraint_rejects_multiplication():
    with pytest.raises(SalSyntaxError):
        parse_constraint("starttime(e1) * 2 < 5")


def test_parse_constraint_rejects_instant_vs_number():
    with pytest.raises(SalSyntaxError):
        parse_constraint("starttime(e1) < 5")


def test_parse_constraint_rejects_trailing_junk():
    with pytest.raises(SalSyntaxError):
        parse_constraint("starttime(e1) < starttime(e2) starttime")


def test_misspelled_starttime_alias():
    c = parse_constraint("startime(e1) < starttime(e2)")
    assert c.left.selector == STARTTIME


def test_unsupported_stream_kind_lists_supported():
    text = 'Flows = KafkaStream("localhost", 1);\nSubgraph on Flows with source(SourceIp) and target(DestIp) { a e1 b; }'
    with pytest.raises(SalSyntaxError) as err:
        parse_program(text)
    assert "VastStream" in str(err.value)


def test_unknown_partition_key_rejected():
    text = (
        'Netflows = VastStream("localhost", 9999);\n'
        "PARTITION Netflows By Nope;\n"
        "Subgraph on Netflows with source(SourceIp) and target(DestIp) { a e1 b; }"
    )
    with pytest.raises(SalSyntaxError) as err:
        parse_program(text)
    assert "Nope" in str(err.value)


def test_duplicate_connection_rejected():
    text = (
        'A = VastStream("h", 1);\n'
        'B = VastStream("h", 2);\n'
        "Subgraph on A with source(SourceIp) and target(DestIp) { a e1 b; }"
    )
    with pytest.raises(SalSyntaxError):
        parse_program(text)


def test_error_positions_are_line_and_column():
    text = "{\n  x1 e1 x2;\n  starttime(e1) ** 2;\n}"
    with pytest.raises(SalSyntaxError) as err:
        parse_query(text)
    assert err.value.line == 3
    assert err.value.col >= 17


def test_comments_are_stripped():
    q = parse_query("{ // leading\n a e1 b; // trailing\n }")
    assert q.edges == (EdgePattern("e1", "a", "b"),)


def test_tokenizer_reports_unexpected_character():
    with pytest.raises(SalSyntaxError):
        tokenize("{ a e1 b; $ }")


def test_program_roundtrip_canonical():
    program = parse_program(FULL_PROGRAM)
    printed = format_program(program)
    reparsed = parse_program(printed)
    # features are dropped from canonical text, so compare from the second trip
    assert format_program(reparsed) == printed
    second = parse_program(format_program(reparsed))
    assert second == reparsed


def test_feature_free_program_roundtrip_identical():
    text = (
        "WindowSize = 42\n"
        'Netflows = VastStream("localhost", 9999);\n'
        "PARTITION Netflows By SourceIp;\n"
        "HASH SourceIp WITH IpHashFunction;\n"
        "Subgraph on Netflows with source(SourceIp) and target(DestIp)\n"
        + TRIANGLE_BLOCK
    )
    program = parse_program(text)
    assert parse_program(format_program(program)) == program


_instants = st.builds(
    EdgeInstant,
    edge=st.sampled_from(["e1", "e2", "e3"]),
    selector=st.sampled_from([STARTTIME, ENDTIME]),
)
_comparisons = st.builds(
    InstantComparison,
    left=_instants,
    comparator=st.sampled_from(["<", ">", "<=", ">="]),
    right=_instants,
)
_bounds = st.builds(
    DifferenceBound,
    left=_instants,
    op=st.sampled_from(["+", "-"]),
    right=_instants,
    comparator=st.sampled_from(["<", ">", "<=", ">="]),
    bound=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).map(lambda x: round(x, 3)),
)


@settings(max_examples=200, deadline=None)
@given(st.one_of(_comparisons, _bounds))
def test_constraint_format_parse_roundtrip(constraint):
    assert parse_constraint(constraint.format()) == constraint


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_fuzz_text_never_crashes(text):
    try:
        parse_program(text)
    except SalSyntaxError:
        pass
    try:
        parse_query(text)
    except SalSyntaxError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=80))
def test_fuzz_bytes_never_crash(data):
    text = data.decode("latin-1")
    try:
        parse_program(text)
    except SalSyntaxError:
        pass


def test_fuzz_mutations_of_real_program():
    rng = random.Random(5)
    base = FULL_PROGRAM
    for _ in range(500):
        chars = list(base)
        for _ in range(rng.randrange(1, 6)):
            pos = rng.randrange(len(chars))
            chars[pos] = chr(rng.randrange(32, 127))
        mutated = "".join(chars)
        try:
            parse_program(mutated)
        except SalSyntaxError:
            pass
