"""Directed bloodstream graph: regions, vessels, anchors and heart-to-heart paths.

The bloodstream is a directed graph of region nodes (arteries, veins and the
slow artery-vein transitions inside organs/limbs) with explicit branch
probabilities on junction edges.  All loops have to pass through the single
heart node, so the set of heart-to-heart cycles ("cardiovascular paths") is
finite and carries a probability distribution used by the analytic model and
the mobility simulator alike.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import IO, Iterable, Mapping

WEIGHT_TOL = 1e-9


class GraphError(ValueError):
    """Raised when a graph violates a structural invariant."""


class RegionType(IntEnum):
    ARTERY = 0
    VEIN = 1
    TRANSITION = 2


@dataclass(frozen=True)
class RegionNode:
    id: int
    name: str
    region_type: RegionType
    length_cm: float
    blood_speed_cm_s: float
    centroid_cm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    is_heart: bool = False

    @property
    def transit_time_s(self) -> float:
        return self.length_cm / self.blood_speed_cm_s


@dataclass(frozen=True)
class VesselEdge:
    src: int
    dst: int
    branch_weight: float


@dataclass(frozen=True)
class AnchorSpec:
    id: int
    attached_node: int
    range_cm: float
    is_heart_anchor: bool = False


@dataclass(frozen=True)
class CardioPath:
    """A simple heart-to-heart cycle.

    ``region_sequence`` starts at the heart node and lists every node once;
    ``travel_time_s`` is the sum of node transit times along the cycle and
    ``probability`` the product of branch weights taken at junctions.
    """

    region_sequence: tuple[int, ...]
    travel_time_s: float
    probability: float


class BloodstreamGraph:
    """Validated, immutable vessel graph.

    Construction rejects invalid input instead of repairing it: ids must be
    unique non-negative integers, exactly one node is the heart, outgoing
    branch weights sum to one, there are no self loops, and every node lies on
    a cycle through the heart.
    """

    def __init__(self, nodes: Iterable[RegionNode], edges: Iterable[VesselEdge],
                 anchors: Iterable[AnchorSpec] = ()):
        self.nodes: dict[int, RegionNode] = {}
        for node in nodes:
            if node.id < 0:
                raise GraphError(f"negative node id {node.id}")
            if node.id in self.nodes:
                raise GraphError(f"duplicate node id {node.id}")
            if node.length_cm <= 0:
                raise GraphError(f"node {node.id}: length must be > 0")
            if node.blood_speed_cm_s <= 0:
                raise GraphError(f"node {node.id}: blood speed must be > 0")
            if node.region_type not in (0, 1, 2):
                raise GraphError(f"node {node.id}: bad region_type {node.region_type}")
            self.nodes[node.id] = node

        hearts = [n.id for n in self.nodes.values() if n.is_heart]
        if len(hearts) != 1:
            raise GraphError(f"expected exactly one heart node, found {len(hearts)}")
        self.heart_id: int = hearts[0]

        self.edges: list[VesselEdge] = []
        self._succ: dict[int, list[tuple[int, float]]] = {nid: [] for nid in self.nodes}
        self._pred: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        seen_pairs: set[tuple[int, int]] = set()
        for edge in edges:
            if edge.src not in self.nodes or edge.dst not in self.nodes:
                raise GraphError(f"edge {edge.src}->{edge.dst} references unknown node")
            if edge.src == edge.dst:
                raise GraphError(f"self-loop at node {edge.src}")
            if (edge.src, edge.dst) in seen_pairs:
                raise GraphError(f"duplicate edge {edge.src}->{edge.dst}")
            if not (0.0 < edge.branch_weight <= 1.0):
                raise GraphError(f"edge {edge.src}->{edge.dst}: branch_weight outside (0,1]")
            seen_pairs.add((edge.src, edge.dst))
            self.edges.append(edge)
            self._succ[edge.src].append((edge.dst, edge.branch_weight))
            self._pred[edge.dst].append(edge.src)

        for nid, out in self._succ.items():
            if out:
                total = sum(w for _, w in out)
                if abs(total - 1.0) > WEIGHT_TOL:
                    raise GraphError(
                        f"branch weights not summing to 1 at node {nid} (got {total})")

        self.anchors: list[AnchorSpec] = list(anchors)
        for anchor in self.anchors:
            if anchor.attached_node not in self.nodes:
                raise GraphError(f"anchor {anchor.id} attached to unknown node")
            if anchor.range_cm <= 0:
                raise GraphError(f"anchor {anchor.id}: range must be > 0")

        self._check_connectivity()

    # -- structural checks -------------------------------------------------

    def _check_connectivity(self) -> None:
        fwd = self._reachable_from(self.heart_id, self._succ_ids)
        if fwd != set(self.nodes):
            missing = sorted(set(self.nodes) - fwd)
            raise GraphError(f"nodes not reachable from heart: {missing}")
        bwd = self._reachable_from(self.heart_id, lambda n: self._pred[n])
        if bwd != set(self.nodes):
            missing = sorted(set(self.nodes) - bwd)
            raise GraphError(f"nodes that cannot reach heart: {missing}")

    def _succ_ids(self, nid: int) -> list[int]:
        return [dst for dst, _ in self._succ[nid]]

    @staticmethod
    def _reachable_from(start, neighbors) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            for nxt in neighbors(stack.pop()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    # -- accessors ---------------------------------------------------------

    @property
    def heart(self) -> RegionNode:
        return self.nodes[self.heart_id]

    def successors(self, nid: int) -> list[tuple[int, float]]:
        """(destination id, branch weight) pairs, in insertion order."""
        return self._succ[nid]

    def predecessors(self, nid: int) -> list[int]:
        return self._pred[nid]

    def heart_anchor(self) -> AnchorSpec | None:
        for anchor in self.anchors:
            if anchor.is_heart_anchor:
                return anchor
        return None

    def anchors_on_node(self, nid: int) -> list[AnchorSpec]:
        return [a for a in self.anchors if a.attached_node == nid]

    # -- serialization -----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "name": n.name,
                    "region_type": int(n.region_type),
                    "length_cm": n.length_cm,
                    "blood_speed_cm_s": n.blood_speed_cm_s,
                    "centroid_cm": list(n.centroid_cm),
                    "is_heart": n.is_heart,
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": [
                {"from": e.src, "to": e.dst, "branch_weight": e.branch_weight}
                for e in self.edges
            ],
            "anchors": [
                {
                    "id": a.id,
                    "attached_node": a.attached_node,
                    "range_cm": a.range_cm,
                    "is_heart_anchor": a.is_heart_anchor,
                }
                for a in self.anchors
            ],
        }

    def dump(self, fp: IO[str]) -> None:
        json.dump(self.to_json_obj(), fp, indent=2, sort_keys=True)


def _node_from_obj(obj: Mapping) -> RegionNode:
    try:
        centroid = obj.get("centroid_cm", [0.0, 0.0, 0.0])
        return RegionNode(
            id=int(obj["id"]),
            name=str(obj["name"]),
            region_type=RegionType(int(obj["region_type"])),
            length_cm=float(obj["length_cm"]),
            blood_speed_cm_s=float(obj["blood_speed_cm_s"]),
            centroid_cm=(float(centroid[0]), float(centroid[1]), float(centroid[2])),
            is_heart=bool(obj.get("is_heart", False)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise GraphError(f"malformed node record: {obj!r}") from exc
    except ValueError as exc:
        raise GraphError(f"malformed node record: {obj!r}") from exc


def load_graph(source: IO[str] | str) -> BloodstreamGraph:
    """Parse and validate a graph JSON document (stream, path or raw text)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                with open(text, "r", encoding="utf-8") as fp:
                    text = fp.read()
            except OSError as exc:
                raise GraphError(f"cannot read graph source: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph file: {exc}") from exc
    if not isinstance(obj, dict) or "nodes" not in obj or "edges" not in obj:
        raise GraphError("graph file must be an object with 'nodes' and 'edges'")

    nodes = [_node_from_obj(rec) for rec in obj["nodes"]]
    try:
        edges = [
            VesselEdge(int(rec["from"]), int(rec["to"]), float(rec["branch_weight"]))
            for rec in obj["edges"]
        ]
        anchors = [
            AnchorSpec(
                id=int(rec["id"]),
                attached_node=int(rec["attached_node"]),
                range_cm=float(rec["range_cm"]),
                is_heart_anchor=bool(rec.get("is_heart_anchor", False)),
            )
            for rec in obj.get("anchors", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed record: {exc}") from exc
    return BloodstreamGraph(nodes, edges, anchors)


# -- cardiovascular path enumeration --------------------------------------

def _assert_heart_cyclic_only(graph: BloodstreamGraph) -> None:
    # Cycle detection on the graph with the heart removed; any remaining cycle
    # violates the finite-path assumption.
    color: dict[int, int] = {}

    def visit(nid: int) -> None:
        color[nid] = 1
        for dst in graph._succ_ids(nid):
            if dst == graph.heart_id:
                continue
            state = color.get(dst, 0)
            if state == 1:
                raise GraphError(f"cycle not passing through heart (via node {dst})")
            if state == 0:
                visit(dst)
        color[nid] = 2

    for nid in graph.nodes:
        if nid != graph.heart_id and color.get(nid, 0) == 0:
            visit(nid)


def cardiovascular_paths(graph: BloodstreamGraph) -> list[CardioPath]:
    """Enumerate all simple heart-to-heart cycles with times and probabilities."""
    _assert_heart_cyclic_only(graph)
    heart = graph.heart_id
    paths: list[CardioPath] = []

    def walk(nid: int, seq: list[int], time_s: float, prob: float) -> None:
        for dst, weight in graph.successors(nid):
            if dst == heart:
                paths.append(CardioPath(tuple(seq), time_s, prob * weight))
            else:
                node = graph.nodes[dst]
                seq.append(dst)
                walk(dst, seq, time_s + node.transit_time_s, prob * weight)
                seq.pop()

    walk(heart, [heart], graph.heart.transit_time_s, 1.0)
    paths.sort(key=lambda p: p.region_sequence)
    total = sum(p.probability for p in paths)
    if abs(total - 1.0) > 1e-9:
        raise GraphError(f"path probabilities sum to {total}, expected 1")
    return paths


# -- bundled 24-region topology -------------------------------------------

BODY_PARTS = (
    "Head", "Thorax", "Right shoulder", "Left shoulder", "Spleen",
    "Right upper arm", "Left upper arm", "Liver", "Right elbow", "Intestine",
    "Right hand", "Kidneys", "Left elbow", "Left hand", "Right hip",
    "Left hip", "Right knee", "Left pelvis", "Left knee", "Right pelvis",
    "Right foot", "Left foot", "Lungs", "Right heart",
)

HEART_NODE_ID = 0
AORTA_NODE_ID = 100
ARTERY_ID_BASE = 100   # artery for body part k is 100 + k
VEIN_ID_BASE = 200     # vein for body part k is 200 + k

#: Regions every loop is considered to traverse; excluded from event-bit
#: ratio comparisons (Lungs=23, Right heart=24).
ALWAYS_TRAVERSED_REGIONS = frozenset({23, 24})

#: Region ids whose veins carry the extra on-body anchors (right/left hand).
EXTRA_ANCHOR_REGIONS = (11, 14)


def builtin_24_region() -> BloodstreamGraph:
    """Synthetic 24-body-part topology.

    Every body part k (1..24) contributes a branch aorta -> artery_k ->
    transition_k -> vein_k -> heart.  Segment speeds follow the standard
    classes (aorta 20 cm/s, arteries 10 cm/s, transitions 1 cm/s, veins
    2-4 cm/s); lengths are chosen so the 24 loop times are distinct and lie
    within [30, 120] s.
    """
    nodes = [
        RegionNode(HEART_NODE_ID, "Heart", RegionType.TRANSITION, 2.0, 20.0,
                   (0.0, 0.0, 0.0), is_heart=True),
        RegionNode(AORTA_NODE_ID, "Aorta", RegionType.ARTERY, 80.0, 20.0,
                   (0.0, 2.0, 10.0)),
    ]
    edges = [VesselEdge(HEART_NODE_ID, AORTA_NODE_ID, 1.0)]

    # Slightly non-uniform branch weights, exactly normalized.
    raw = [1.0 + 0.05 * ((3 * k) % 7) for k in range(1, 25)]
    total = sum(raw)
    weights = [w / total for w in raw]
    weights[-1] = 1.0 - sum(weights[:-1])

    for k, name in enumerate(BODY_PARTS, start=1):
        artery_id = ARTERY_ID_BASE + k
        vein_id = VEIN_ID_BASE + k
        vein_speed = 2.0 + 0.5 * ((k - 1) % 5)
        angle = 2.0 * math.pi * k / 24.0
        radius = 10.0 + 2.0 * k
        x, y = radius * math.cos(angle), radius * math.sin(angle)
        nodes.append(RegionNode(artery_id, f"{name} artery", RegionType.ARTERY,
                                50.0 + 2.0 * k, 10.0, (x, 2.0, y)))
        nodes.append(RegionNode(k, name, RegionType.TRANSITION,
                                16.0 + 1.9 * k, 1.0, (x, 0.0, y)))
        nodes.append(RegionNode(vein_id, f"{name} vein", RegionType.VEIN,
                                50.0, vein_speed, (x, -2.0, y)))
        edges.append(VesselEdge(AORTA_NODE_ID, artery_id, weights[k - 1]))
        edges.append(VesselEdge(artery_id, k, 1.0))
        edges.append(VesselEdge(k, vein_id, 1.0))
        edges.append(VesselEdge(vein_id, HEART_NODE_ID, 1.0))

    anchors = [AnchorSpec(0, HEART_NODE_ID, 2.0, is_heart_anchor=True)]
    for i, region in enumerate(EXTRA_ANCHOR_REGIONS, start=1):
        anchors.append(AnchorSpec(i, VEIN_ID_BASE + region, 2.0))
    return BloodstreamGraph(nodes, edges, anchors)


def path_event_region(path: CardioPath, graph: BloodstreamGraph) -> int | None:
    """Id of the transition region on ``path``, if there is exactly one."""
    transitions = [nid for nid in path.region_sequence
                   if graph.nodes[nid].region_type == RegionType.TRANSITION
                   and not graph.nodes[nid].is_heart]
    if len(transitions) == 1:
        return transitions[0]
    return None
