"""Synthetic HeteroSample builders for the unit tests."""

from __future__ import annotations

import numpy as np
import torch

from gnnloc.data import HeteroSample


def ring_sample(n_regions: int = 6, n_anchors: int = 2, anchor_dim: int = 5,
                label: int = 0, seed: int = 0, anchor_x=None) -> HeteroSample:
    rng = np.random.default_rng(seed)
    region_x = torch.tensor(rng.normal(size=(n_regions, 3)), dtype=torch.float64)
    if anchor_x is None:
        anchor_x = torch.tensor(rng.normal(size=(n_anchors, anchor_dim)),
                                dtype=torch.float64)
    adj = torch.eye(n_regions, dtype=torch.float64)
    for i in range(n_regions):
        j = (i + 1) % n_regions
        adj[i, j] = adj[j, i] = 1.0
    centroids = rng.normal(size=(n_regions, 3))
    return HeteroSample(
        region_ids=list(range(n_regions)), region_x=region_x,
        anchor_ids=list(range(len(anchor_x))), anchor_x=anchor_x,
        adjacency=adj, centroids=centroids,
        heart_anchor_ids=frozenset({0}), label=label)


def separable_dataset(n_per_class: int = 25, classes=(1, 3), seed: int = 0):
    """Samples whose anchor features encode the label with small noise."""
    rng = np.random.default_rng(seed)
    samples = []
    base = ring_sample(n_regions=6, seed=99)
    for label in classes:
        for _ in range(n_per_class):
            anchor_x = torch.tensor(
                rng.normal(loc=float(label), scale=0.05, size=(2, 5)),
                dtype=torch.float64)
            s = ring_sample(n_regions=6, label=label, anchor_x=anchor_x, seed=99)
            s.region_x = base.region_x
            samples.append(s)
    return samples
