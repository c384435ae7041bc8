from __future__ import annotations

import socket
import threading

import pytest

from streamsub.edges import EdgeIdAllocator, id_origin
from streamsub.ingest import (
    GeneratorConfig,
    MalformedLine,
    NetflowTuple,
    edge_from_netflow,
    edges_from,
    generate,
    generate_edges,
    parse_netflow_line,
    read_netflow_file,
    socket_lines,
    vertex_name,
)


def test_parse_documented_schema():
    nf = parse_netflow_line("0.0,0.5,10.0.0.1,10.0.0.2,5000,80,TCP")
    assert nf.time_seconds == 0.0
    assert nf.duration_seconds == 0.5
    assert nf.source_ip == "10.0.0.1"
    assert nf.dest_ip == "10.0.0.2"
    assert nf.source_port == 5000
    assert nf.dest_port == 80
    assert nf.protocol == "TCP"
    assert nf.extras == ()


def test_parse_too_few_fields():
    with pytest.raises(MalformedLine):
        parse_netflow_line("0.0,0.5,10.0.0.1")


def test_parse_negative_duration():
    with pytest.raises(MalformedLine) as err:
        parse_netflow_line("0.0,-1.0,a,b,1,2,TCP")
    assert err.value.field_index == 1
    assert err.value.field_name == "durationSeconds"


def test_parse_bad_time_and_ports():
    with pytest.raises(MalformedLine) as err:
        parse_netflow_line("soon,1.0,a,b,1,2,TCP")
    assert err.value.field_index == 0
    with pytest.raises(MalformedLine) as err:
        parse_netflow_line("0,1.0,a,b,x,2,TCP")
    assert err.value.field_index == 4


def test_extras_preserved_and_line_roundtrip():
    line = "1.5,0.25,a,b,10,20,UDP,extra1,extra2"
    nf = parse_netflow_line(line)
    assert nf.extras == ("extra1", "extra2")
    assert parse_netflow_line(nf.to_line()) == nf


def test_edge_view():
    nf = parse_netflow_line("2.0,0.5,src,dst,1,2,TCP")
    edge = edge_from_netflow(nf, 77)
    assert (edge.source, edge.target) == ("src", "dst")
    assert (edge.start_time, edge.duration) == (2.0, 0.5)
    assert edge.local_id == 77
    assert edge.payload == nf.to_line()


def test_generator_is_deterministic():
    config = GeneratorConfig(vertex_pool_size=2, edges_per_worker=10, rate_per_worker=10.0, seed=7)
    first = list(generate(config, 0))
    second = list(generate(config, 0))
    assert first == second
    assert len(first) == 10


def test_generator_workers_differ_but_reproduce():
    config = GeneratorConfig(vertex_pool_size=50, edges_per_worker=50, seed=3, worker_count=2)
    w0 = list(generate(config, 0))
    w1 = list(generate(config, 1))
    assert w0 != w1
    assert w0 == list(generate(config, 0))
    with pytest.raises(ValueError):
        next(generate(config, 5))


def test_generator_covers_vertex_pool():
    config = GeneratorConfig(vertex_pool_size=5000, edges_per_worker=60_000, seed=1)
    seen = set()
    for nf in generate(config, 0):
        seen.add(nf.source_ip)
        seen.add(nf.dest_ip)
    assert len(seen) > 0.99 * 5000


def test_generator_rate_spacing():
    config = GeneratorConfig(vertex_pool_size=10, edges_per_worker=1000, rate_per_worker=100.0, seed=2)
    times = [nf.time_seconds for nf in generate(config, 0)]
    assert times == sorted(times)
    assert abs(times[-1] - 10.0) < 0.1


def test_generator_no_self_loops_and_valid_durations():
    config = GeneratorConfig(vertex_pool_size=3, edges_per_worker=500, seed=5, duration_range=(0.0, 2.0))
    for nf in generate(config, 0):
        assert nf.source_ip != nf.dest_ip
        assert 0.0 <= nf.duration_seconds <= 2.0


def test_generator_config_guards():
    with pytest.raises(ValueError):
        GeneratorConfig(vertex_pool_size=1)
    with pytest.raises(ValueError):
        GeneratorConfig(vertex_pool_size=5, rate_per_worker=0.0)
    with pytest.raises(ValueError):
        GeneratorConfig(vertex_pool_size=5, duration_range=(2.0, 1.0))


def test_generate_edges_ids_carry_worker_origin():
    config = GeneratorConfig(vertex_pool_size=10, edges_per_worker=5, seed=1, worker_count=3)
    for w in range(3):
        for edge in generate_edges(config, w):
            assert id_origin(edge.local_id) == w


def test_vertex_name_is_ip_like():
    assert vertex_name(0) == "10.0.0.0"
    assert vertex_name(1) == "10.0.0.1"
    assert vertex_name(65536 + 256 + 2) == "10.1.1.2"


def test_read_netflow_file(tmp_path):
    path = tmp_path / "edges.csv"
    path.write_text("0.0,0.5,a,b,1,2,TCP\n\n1.0,0.5,b,c,1,2,TCP\n")
    tuples = list(read_netflow_file(str(path)))
    assert [nf.source_ip for nf in tuples] == ["a", "b"]


def test_edges_from_allocates_sequential_ids():
    allocator = EdgeIdAllocator(0)
    tuples = [
        NetflowTuple(0.0, 0.0, "a", "b", 1, 2, "TCP"),
        NetflowTuple(1.0, 0.0, "b", "c", 1, 2, "TCP"),
    ]
    edges = list(edges_from(tuples, allocator))
    assert [e.local_id for e in edges] == [0, 1]
    assert edges[0].payload is None


def test_socket_source_parses_lines():
    port_holder = {}
    results = []

    def serve():
        for nf in socket_lines("127.0.0.1", port_holder["port"], timeout=5.0):
            results.append(nf)

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port_holder["port"] = probe.getsockname()[1]
    reader = threading.Thread(target=serve)
    reader.start()
    import time

    client = None
    deadline = time.time() + 5.0
    while client is None and time.time() < deadline:
        try:
            client = socket.create_connection(("127.0.0.1", port_holder["port"]), timeout=0.2)
        except OSError:
            time.sleep(0.02)
    assert client is not None
    client.sendall(b"0.0,0.5,a,b,1,2,TCP\n1.0,0.25,b,c,3,4,UDP\n")
    client.close()
    reader.join(timeout=5.0)
    assert [nf.source_ip for nf in results] == ["a", "b"]
    assert results[1].protocol == "UDP"
