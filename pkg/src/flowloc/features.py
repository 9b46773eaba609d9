"""Anchor feature extraction and labeled dataset export.

The circulation times of positive event bits received by an anchor form a
mixture of narrow clusters, one per number of failed report attempts, so each
anchor's variable-length reception stream is summarized by a univariate
Gaussian mixture (component count picked by BIC) plus the positive-bit and
reception rates.  The resulting fixed-length vectors, together with the graph
snapshot and the true event region, make up the training dataset for the
downstream graph localizer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .mobility_sim import SimTrace
from .vasculature import BloodstreamGraph

VARIANCE_FLOOR = 1e-4  # seconds^2
EM_TOL = 1e-6
EM_MAX_ITER = 500
EM_RESTARTS = 5
DEFAULT_K_MAX = 4


@dataclass(frozen=True)
class GmmParams:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.weights)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers)


def _log_likelihood(x, weights, means, variances) -> float:
    log_pdf = (-0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :]
               - 0.5 * np.log(2 * np.pi * variances[None, :])
               + np.log(weights[None, :]))
    m = log_pdf.max(axis=1)
    return float(np.sum(m + np.log(np.exp(log_pdf - m[:, None]).sum(axis=1))))


def _em_fit(x: np.ndarray, k: int, rng: np.random.Generator) -> tuple[GmmParams, float]:
    means = _kmeanspp_centers(x, k, rng).astype(float)
    variances = np.full(k, max(np.var(x), VARIANCE_FLOOR))
    weights = np.full(k, 1.0 / k)
    prev_ll = -np.inf
    for _ in range(EM_MAX_ITER):
        log_pdf = (-0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :]
                   - 0.5 * np.log(2 * np.pi * variances[None, :])
                   + np.log(weights[None, :]))
        m = log_pdf.max(axis=1, keepdims=True)
        resp = np.exp(log_pdf - m)
        resp /= resp.sum(axis=1, keepdims=True)

        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        weights = nk / len(x)
        means = (resp * x[:, None]).sum(axis=0) / nk
        variances = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        variances = np.maximum(variances, VARIANCE_FLOOR)

        ll = _log_likelihood(x, weights, means, variances)
        if ll < prev_ll - 1e-8:
            raise AssertionError("EM log-likelihood decreased")
        if ll - prev_ll < EM_TOL:
            prev_ll = ll
            break
        prev_ll = ll
    order = np.argsort(means)
    params = GmmParams(tuple(weights[order]), tuple(means[order]), tuple(variances[order]))
    return params, prev_ll


def fit_gmm(samples, k_max: int = DEFAULT_K_MAX, seed: int = 0) -> GmmParams:
    """EM fit for k = 1..min(k_max, n); the component count minimizes BIC."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot fit a mixture to an empty sample set")
    rng = np.random.default_rng(seed)
    best: GmmParams | None = None
    best_bic = np.inf
    for k in range(1, min(k_max, x.size) + 1):
        fit_best: tuple[GmmParams, float] | None = None
        for _ in range(EM_RESTARTS):
            params, ll = _em_fit(x, k, rng)
            if fit_best is None or ll > fit_best[1]:
                fit_best = (params, ll)
        params, ll = fit_best
        n_free = 3 * k - 1
        bic = n_free * math.log(x.size) - 2.0 * ll
        if bic < best_bic:
            best_bic = bic
            best = params
    return best


@dataclass(frozen=True)
class AnchorFeatureVector:
    """(weight, mean, variance) per mixture slot, zero-padded to ``k_max``,
    followed by the average positive bits per device and the reception rate."""

    gmm_slots: tuple[float, ...]
    avg_positive_bits: float
    reception_rate_hz: float
    k_max: int

    def flatten(self) -> list[float]:
        return list(self.gmm_slots) + [self.avg_positive_bits, self.reception_rate_hz]

    def __len__(self) -> int:
        return 3 * self.k_max + 2


def extract_features(trace: SimTrace, anchor_id: int, k_max: int = DEFAULT_K_MAX,
                     n_devices: int = 1, seed: int = 0) -> AnchorFeatureVector:
    data = trace.raw_data(anchor_id)
    positive_times = [d.t_s for d in data if d.b == 1]
    slots = [0.0] * (3 * k_max)
    if positive_times:
        gmm = fit_gmm(positive_times, k_max=min(k_max, len(positive_times)), seed=seed)
        for i in range(gmm.k):
            slots[3 * i] = gmm.weights[i]
            slots[3 * i + 1] = gmm.means[i]
            slots[3 * i + 2] = gmm.variances[i]
    return AnchorFeatureVector(
        gmm_slots=tuple(slots),
        avg_positive_bits=len(positive_times) / n_devices,
        reception_rate_hz=len(data) / trace.duration_s,
        k_max=k_max,
    )


@dataclass
class DatasetSample:
    regions: list[dict]
    edges: list[list[int]]
    anchors: list[dict]
    label: int


def build_dataset(runs, k_max: int = DEFAULT_K_MAX,
                  min_positive_bits: int = 2, seed: int = 0,
                  n_devices: int = 1) -> list[DatasetSample]:
    """Assemble dataset samples from (graph, trace, event_region) runs.

    Runs with fewer than ``min_positive_bits`` positive receptions at the
    heart anchor are dropped; region features (type, length, speed) are then
    standardized across the surviving samples, constants left at zero.
    """
    kept: list[tuple[BloodstreamGraph, SimTrace, int]] = []
    for graph, trace, label in runs:
        positives = sum(1 for d in trace.raw_data(graph.heart_anchor().id) if d.b == 1)
        if positives >= min_positive_bits:
            kept.append((graph, trace, label))
    if not kept:
        raise ValueError("all runs were filtered out (too few positive bits)")

    raw_rows = []
    for graph, _, _ in kept:
        for node in sorted(graph.nodes.values(), key=lambda n: n.id):
            raw_rows.append([float(node.region_type), node.length_cm, node.blood_speed_cm_s])
    raw = np.asarray(raw_rows)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    standardized = np.where(std > 0, (raw - mean) / np.where(std > 0, std, 1.0), 0.0)

    samples = []
    row = 0
    for graph, trace, label in kept:
        regions = []
        for node in sorted(graph.nodes.values(), key=lambda n: n.id):
            feats = standardized[row]
            row += 1
            regions.append({
                "id": node.id,
                "type": float(feats[0]),
                "length": float(feats[1]),
                "speed": float(feats[2]),
                "centroid": list(node.centroid_cm),
            })
        edges = [[e.src, e.dst] for e in graph.edges]
        anchors = []
        for anchor in graph.anchors:
            vec = extract_features(trace, anchor.id, k_max=k_max,
                                   n_devices=n_devices, seed=seed)
            anchors.append({"id": anchor.id, "features": vec.flatten(),
                            "is_heart_anchor": anchor.is_heart_anchor})
        samples.append(DatasetSample(regions=regions, edges=edges,
                                     anchors=anchors, label=label))
    return samples


def export_dataset(runs, path, k_max: int = DEFAULT_K_MAX,
                   min_positive_bits: int = 2, seed: int = 0,
                   n_devices: int = 1) -> int:
    """Write the JSON-lines dataset file; returns the number of samples."""
    samples = build_dataset(runs, k_max=k_max, min_positive_bits=min_positive_bits,
                            seed=seed, n_devices=n_devices)
    with open(path, "w", encoding="utf-8") as fp:
        for sample in samples:
            fp.write(json.dumps({
                "regions": sample.regions,
                "edges": sample.edges,
                "anchors": sample.anchors,
                "label": sample.label,
            }, sort_keys=True) + "\n")
    return len(samples)
