import io
import json

import numpy as np
import pytest

from flowloc.vasculature import (
    ALWAYS_TRAVERSED_REGIONS, BODY_PARTS, AnchorSpec, BloodstreamGraph,
    GraphError, RegionNode, RegionType, VesselEdge, builtin_24_region,
    cardiovascular_paths, load_graph,
)

from _graphs import random_dag_through_heart, simple_cycle_graph, two_branch_graph
from _oracles import brute_force_heart_cycles


def test_single_path_graph():
    g = simple_cycle_graph()
    paths = cardiovascular_paths(g)
    assert len(paths) == 1
    assert paths[0].probability == 1.0
    assert paths[0].region_sequence[0] == g.heart_id


def test_two_branch_paths_match_fixture():
    g = two_branch_graph()
    paths = cardiovascular_paths(g)
    got = sorted((round(p.travel_time_s, 9), p.probability) for p in paths)
    assert got == [(60.0, 0.49), (67.0, 0.51)]


def test_branch_weights_must_sum_to_one():
    nodes = [
        RegionNode(0, "Heart", RegionType.TRANSITION, 1.0, 10.0, is_heart=True),
        RegionNode(1, "A", RegionType.ARTERY, 10.0, 10.0),
        RegionNode(2, "B", RegionType.ARTERY, 10.0, 10.0),
    ]
    edges = [VesselEdge(0, 1, 0.5), VesselEdge(0, 2, 0.4),
             VesselEdge(1, 0, 1.0), VesselEdge(2, 0, 1.0)]
    with pytest.raises(GraphError, match="branch weights not summing to 1"):
        BloodstreamGraph(nodes, edges)


def test_structural_validation_errors():
    heart = RegionNode(0, "Heart", RegionType.TRANSITION, 1.0, 10.0, is_heart=True)
    other = RegionNode(1, "A", RegionType.ARTERY, 10.0, 10.0)
    with pytest.raises(GraphError, match="duplicate node id"):
        BloodstreamGraph([heart, heart], [])
    with pytest.raises(GraphError, match="exactly one heart"):
        BloodstreamGraph([other], [])
    with pytest.raises(GraphError, match="self-loop"):
        BloodstreamGraph([heart, other],
                         [VesselEdge(0, 1, 1.0), VesselEdge(1, 1, 1.0)])
    with pytest.raises(GraphError, match="not reachable from heart"):
        BloodstreamGraph([heart, other], [])
    with pytest.raises(GraphError, match="length must be > 0"):
        RegionNode(2, "bad", RegionType.VEIN, -1.0, 1.0)
        BloodstreamGraph([heart, RegionNode(2, "bad", RegionType.VEIN, -1.0, 1.0)], [])


def test_cycle_not_through_heart_rejected():
    nodes = [
        RegionNode(0, "Heart", RegionType.TRANSITION, 1.0, 10.0, is_heart=True),
        RegionNode(1, "A", RegionType.ARTERY, 10.0, 10.0),
        RegionNode(2, "B", RegionType.ARTERY, 10.0, 10.0),
    ]
    edges = [VesselEdge(0, 1, 1.0), VesselEdge(1, 2, 0.5), VesselEdge(2, 1, 0.5),
             VesselEdge(1, 0, 0.5), VesselEdge(2, 0, 0.5)]
    g = BloodstreamGraph(nodes, edges)
    with pytest.raises(GraphError, match="cycle not passing through heart"):
        cardiovascular_paths(g)


def test_builtin_24_region_structure():
    g = builtin_24_region()
    paths = cardiovascular_paths(g)
    assert len(paths) == 24
    names = {g.nodes[nid].name for nid in g.nodes}
    for part in BODY_PARTS:
        assert part in names
    assert abs(sum(p.probability for p in paths) - 1.0) < 1e-9
    times = [p.travel_time_s for p in paths]
    assert len(set(round(t, 9) for t in times)) == 24
    assert all(30.0 <= t <= 120.0 for t in times)
    for p in paths:
        assert p.region_sequence[0] == g.heart_id
    for node in g.nodes.values():
        if node.region_type == RegionType.ARTERY:
            assert node.blood_speed_cm_s in (10.0, 20.0)
        elif node.region_type == RegionType.VEIN:
            assert 2.0 <= node.blood_speed_cm_s <= 4.0
        elif not node.is_heart:
            assert node.blood_speed_cm_s == 1.0
    assert ALWAYS_TRAVERSED_REGIONS == {23, 24}
    assert g.heart_anchor() is not None


def test_serialization_roundtrip():
    g = builtin_24_region()
    buf = io.StringIO()
    g.dump(buf)
    buf.seek(0)
    g2 = load_graph(buf)
    assert g.to_json_obj() == g2.to_json_obj()


def test_load_rejects_malformed():
    with pytest.raises(GraphError, match="malformed"):
        load_graph('{"nodes": [{"id": 0}], "edges": []}')
    with pytest.raises(GraphError):
        load_graph("not json at all {")


def test_travel_time_additive_under_node_split():
    g = two_branch_graph()
    base = {round(p.travel_time_s, 12) for p in cardiovascular_paths(g)}
    # Split node 1 into two half-length nodes with the same speed.
    n1 = g.nodes[1]
    nodes = [g.nodes[0], g.nodes[2],
             RegionNode(1, "R1a", n1.region_type, n1.length_cm / 2, n1.blood_speed_cm_s),
             RegionNode(3, "R1b", n1.region_type, n1.length_cm / 2, n1.blood_speed_cm_s)]
    edges = [VesselEdge(0, 1, 0.49), VesselEdge(0, 2, 0.51),
             VesselEdge(1, 3, 1.0), VesselEdge(3, 0, 1.0), VesselEdge(2, 0, 1.0)]
    split = BloodstreamGraph(nodes, edges, g.anchors)
    got = {round(p.travel_time_s, 12) for p in cardiovascular_paths(split)}
    for t in base:
        assert any(abs(t - s) < 1e-9 for s in got)


@pytest.mark.parametrize("seed", range(12))
def test_paths_match_brute_force_on_random_dags(seed):
    rng = np.random.default_rng(seed)
    g, succ = random_dag_through_heart(rng, n_nodes=int(rng.integers(4, 12)))
    paths = cardiovascular_paths(g)
    expected = brute_force_heart_cycles(succ, 0)
    assert sorted(p.region_sequence for p in paths) == expected
    assert abs(sum(p.probability for p in paths) - 1.0) < 1e-9
    for p in paths:
        t = sum(g.nodes[nid].transit_time_s for nid in p.region_sequence)
        assert abs(t - p.travel_time_s) < 1e-9
