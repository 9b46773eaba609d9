"""Multi-anchor region filtering via DFS cover sets.

Each extra on-body anchor covers the regions that lie on some simple path
from the heart to the anchor's node.  Binary per-anchor event predictions
then carve the region set down by set algebra: positive anchors intersect
their covers, negative anchors subtract theirs, and an empty result falls
back to all regions.  Scores of excluded regions are clamped to a minimal
value so the argmax lands inside the allowed set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .vasculature import BloodstreamGraph


@dataclass(frozen=True)
class CoverSet:
    anchor_id: int
    regions: frozenset[int]


@dataclass
class RegionPrediction:
    logits: dict[int, float]
    filtered: bool = False

    def argmax(self) -> int:
        return max(sorted(self.logits), key=lambda r: self.logits[r])


def dfs_all_paths(graph: BloodstreamGraph, heart_id: int, anchor_node: int) -> CoverSet:
    """Union of all nodes on any simple directed path heart -> anchor node."""
    if heart_id not in graph.nodes or anchor_node not in graph.nodes:
        raise ValueError("heart or anchor node missing from graph")
    if heart_id == anchor_node:
        return CoverSet(anchor_node, frozenset({heart_id}))

    # Nodes from which the anchor is reachable; used only to prune branches
    # that can never complete a path.
    can_reach = {anchor_node}
    stack = [anchor_node]
    while stack:
        for pred in graph.predecessors(stack.pop()):
            if pred not in can_reach:
                can_reach.add(pred)
                stack.append(pred)
    if heart_id not in can_reach:
        warnings.warn(f"anchor node {anchor_node} unreachable from heart")
        return CoverSet(anchor_node, frozenset())

    on_path: set[int] = set()
    path: list[int] = [heart_id]
    on_stack = {heart_id}

    def walk(nid: int) -> None:
        if nid == anchor_node:
            on_path.update(path)
            return
        for dst, _ in graph.successors(nid):
            if dst in on_stack or dst not in can_reach:
                continue
            path.append(dst)
            on_stack.add(dst)
            walk(dst)
            on_stack.discard(dst)
            path.pop()

    walk(heart_id)
    return CoverSet(anchor_node, frozenset(on_path))


def cover_sets_for_anchors(graph: BloodstreamGraph) -> dict[int, CoverSet]:
    """Cover set per non-heart anchor, keyed by anchor id."""
    covers = {}
    for anchor in graph.anchors:
        if not anchor.is_heart_anchor:
            covers[anchor.id] = dfs_all_paths(graph, graph.heart_id, anchor.attached_node)
    return covers


def allowed_regions(predictions: Mapping[int, int], covers: Mapping[int, CoverSet],
                    all_regions: Iterable[int]) -> frozenset[int]:
    """Resolve the S1/S0 set algebra into the allowed region set.

    ``predictions`` maps anchor id to its binary event-presence bit; every
    predicted anchor needs a cover set.  An empty outcome falls back to all
    regions.
    """
    universe = frozenset(all_regions)
    missing = set(predictions) - set(covers)
    if missing:
        raise ValueError(f"missing cover sets for anchors {sorted(missing)}")
    s1 = [aid for aid, bit in predictions.items() if bit]
    s0 = [aid for aid, bit in predictions.items() if not bit]

    if not s1:
        result = universe
        for aid in s0:
            result -= covers[aid].regions
    elif not s0:
        result = frozenset.intersection(*(covers[aid].regions for aid in s1))
        result &= universe
    else:
        result = frozenset.intersection(*(covers[aid].regions for aid in s1))
        for aid in s0:
            result -= covers[aid].regions
        result &= universe
    if not result:
        return universe
    return result


def apply_filter(pred: RegionPrediction, allowed: Iterable[int],
                 minimal_value: float | None = None) -> RegionPrediction:
    """Clamp scores outside ``allowed`` to a minimal finite value."""
    allowed = set(allowed)
    if not allowed <= set(pred.logits):
        raise ValueError("allowed set contains unknown regions")
    if minimal_value is None:
        # Anchored on the surviving scores so repeated filtering is idempotent.
        reference = [pred.logits[r] for r in allowed] or list(pred.logits.values())
        minimal_value = min(reference) - 1e6
    logits = {region: (score if region in allowed else minimal_value)
              for region, score in pred.logits.items()}
    return RegionPrediction(logits=logits, filtered=True)
