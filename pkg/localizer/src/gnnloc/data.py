"""JSON-lines dataset loading for the graph localizer.

Each line of the dataset file describes one labeled event: the region graph
(standardized node features plus directed edges), the anchor feature vectors
extracted upstream, and the true event region.  Samples are converted to
dense tensors; anchors are linked to every region node, so no explicit
anchor edge list is stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch


class DatasetError(ValueError):
    pass


@dataclass
class HeteroSample:
    """One labeled graph: region node features, anchor features, adjacency."""

    region_ids: list[int]
    region_x: torch.Tensor      # [R, region_dim]
    anchor_ids: list[int]
    anchor_x: torch.Tensor      # [A, anchor_dim]
    adjacency: torch.Tensor     # [R, R] symmetrized with self-loops
    centroids: np.ndarray       # [R, 3]
    heart_anchor_ids: frozenset[int]
    label: int

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    def label_index(self) -> int:
        return self.region_ids.index(self.label)


def _parse_sample(obj: dict) -> HeteroSample:
    try:
        regions = sorted(obj["regions"], key=lambda r: r["id"])
        region_ids = [int(r["id"]) for r in regions]
        region_x = torch.tensor(
            [[r["type"], r["length"], r["speed"]] for r in regions],
            dtype=torch.float64)
        centroids = np.array([r["centroid"] for r in regions], dtype=float)
        anchors = sorted(obj["anchors"], key=lambda a: a["id"])
        anchor_ids = [int(a["id"]) for a in anchors]
        anchor_x = torch.tensor([a["features"] for a in anchors],
                                dtype=torch.float64)
        hearts = frozenset(a["id"] for a in anchors if a.get("is_heart_anchor"))
        label = int(obj["label"])
        edges = obj["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"malformed dataset sample: {exc}") from exc
    if label not in region_ids:
        raise DatasetError(f"label {label} is not a region id")

    index = {rid: i for i, rid in enumerate(region_ids)}
    n = len(region_ids)
    adj = torch.eye(n, dtype=torch.float64)
    for src, dst in edges:
        if src not in index or dst not in index:
            raise DatasetError(f"edge ({src}, {dst}) references unknown region")
        adj[index[src], index[dst]] = 1.0
        adj[index[dst], index[src]] = 1.0
    return HeteroSample(region_ids=region_ids, region_x=region_x,
                        anchor_ids=anchor_ids, anchor_x=anchor_x,
                        adjacency=adj, centroids=centroids,
                        heart_anchor_ids=hearts, label=label)


def load_dataset(path) -> list[HeteroSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON: {exc}") from exc
            samples.append(_parse_sample(obj))
    if not samples:
        raise DatasetError(f"dataset {path} is empty")
    return samples


def stratified_split(samples: list[HeteroSample], seed: int = 0,
                     fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)):
    """Deterministic stratified train/validation/test split.

    Classes with fewer than three members degrade gracefully: their samples
    go to the training split first.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_label.setdefault(s.label, []).append(i)
    train, val, test = [], [], []
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        rng.shuffle(idx)
        n = len(idx)
        n_test = int(round(fractions[2] * n))
        n_val = int(round(fractions[1] * n))
        test.extend(idx[:n_test])
        val.extend(idx[n_test:n_test + n_val])
        train.extend(idx[n_test + n_val:])
    pick = lambda ids: [samples[i] for i in sorted(ids)]  # noqa: E731
    return pick(train), pick(val), pick(test)
