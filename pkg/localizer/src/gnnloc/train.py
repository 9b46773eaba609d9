"""Training, inference and evaluation for the graph localizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from sklearn.metrics import f1_score
from torch import nn

from .data import HeteroSample
from .filtering import allowed_regions, argmax_region, clamp_scores
from .model import (
    AnchorBitClassifier, Hyperparams, Localizer, ModelDims, build_model,
)


def inverse_frequency_weights(labels, classes) -> torch.Tensor:
    """One weight per class, inversely proportional to its frequency.

    Scaled so the weights average one over the observed classes, which keeps
    the summed loss on the same footing as unweighted training.
    """
    counts = np.array([sum(1 for y in labels if y == c) for c in classes], dtype=float)
    counts = np.maximum(counts, 1.0)
    weights = 1.0 / counts
    present = counts[counts > 0]
    weights *= len(present) / weights.sum()
    return torch.tensor(weights, dtype=torch.float64)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    macro_f1: float


@dataclass
class TrainResult:
    model: Localizer
    history: list[EpochLog] = field(default_factory=list)


def _batch(samples: list[HeteroSample]):
    """Stack samples sharing one graph into dense batch tensors."""
    ref = samples[0]
    for s in samples[1:]:
        if s.region_ids != ref.region_ids or not torch.equal(s.adjacency, ref.adjacency):
            raise ValueError("samples in one batch must share the region graph")
    region_x = torch.stack([s.region_x for s in samples])
    anchor_x = torch.stack([s.anchor_x for s in samples])
    y = torch.tensor([s.label_index() for s in samples])
    return region_x, anchor_x, ref.adjacency, y


def train(samples: list[HeteroSample], hp: Hyperparams, seed: int = 0,
          batch_size: int = 16) -> TrainResult:
    """Minibatch training with weighted cross-entropy (sum reduction)."""
    if not samples:
        raise ValueError("training dataset is empty")
    labels = [s.label for s in samples]
    if len(set(labels)) < 2:
        raise ValueError("training dataset needs at least two classes")

    region_x, anchor_x, adjacency, y = _batch(samples)
    classes = samples[0].region_ids
    weights = inverse_frequency_weights(labels, classes)
    loss_fn = nn.CrossEntropyLoss(weight=weights, reduction="sum")

    model = build_model(
        hp, ModelDims(region_x.shape[-1], anchor_x.shape[-1]), seed=seed)
    flat = anchor_x.reshape(-1, anchor_x.shape[-1])
    model.set_normalization(flat.mean(dim=0), flat.std(dim=0))
    optimizer = torch.optim.Adam(model.parameters(), lr=hp.learning_rate,
                                 weight_decay=hp.weight_decay)
    gen = torch.Generator().manual_seed(seed)
    history = []
    for epoch in range(hp.epochs):
        epoch_loss = 0.0
        for chunk in torch.randperm(len(samples), generator=gen).split(batch_size):
            optimizer.zero_grad()
            logits = model(region_x[chunk], anchor_x[chunk], adjacency)
            loss = loss_fn(logits, y[chunk])
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), hp.grad_clip_norm)
            optimizer.step()
            epoch_loss += float(loss.item())
        with torch.no_grad():
            pred = model(region_x, anchor_x, adjacency).argmax(dim=-1)
        f1 = f1_score(y.numpy(), pred.numpy(), average="macro", zero_division=0)
        history.append(EpochLog(epoch, epoch_loss, float(f1)))
    return TrainResult(model=model, history=history)


def predict_logits(model: Localizer, sample: HeteroSample) -> dict[int, float]:
    with torch.no_grad():
        logits = model(sample.region_x, sample.anchor_x, sample.adjacency)
    return {rid: float(v) for rid, v in zip(sample.region_ids, logits)}


def predict_with_filter(model: Localizer, sample: HeteroSample,
                        covers: dict[int, set[int]] | None = None,
                        anchor_bits: dict[int, int] | None = None,
                        bit_model: AnchorBitClassifier | None = None) -> dict[int, float]:
    """Raw logits, optionally filtered by extra-anchor event bits.

    Bits may be given directly or produced by ``bit_model`` from the extra
    anchors' feature vectors.  Without extra-anchor input the raw logits are
    returned untouched.
    """
    logits = predict_logits(model, sample)
    if anchor_bits is None and bit_model is not None:
        anchor_bits = {}
        for i, aid in enumerate(sample.anchor_ids):
            if aid in sample.heart_anchor_ids:
                continue
            anchor_bits[aid] = bit_model.predict_bit(sample.anchor_x[i])
    if not anchor_bits:
        return logits
    if covers is None:
        raise ValueError("anchor bits supplied without cover sets")
    allowed = allowed_regions(anchor_bits, covers, logits)
    return clamp_scores(logits, allowed)


@dataclass
class EvalMetrics:
    region_accuracy: float
    macro_f1: float
    top_k_accuracy: dict[int, float]
    mean_point_error_cm: float
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "region_accuracy": self.region_accuracy,
            "macro_f1": self.macro_f1,
            "top_k_accuracy": {str(k): v for k, v in self.top_k_accuracy.items()},
            "mean_point_error_cm": self.mean_point_error_cm,
            "n_samples": self.n_samples,
        }


def evaluate(model: Localizer, samples: list[HeteroSample],
             max_k: int = 6) -> EvalMetrics:
    if not samples:
        raise ValueError("evaluation dataset is empty")
    y_true, y_pred = [], []
    top_hits = {k: 0 for k in range(1, max_k + 1)}
    point_errors = []
    for sample in samples:
        logits = predict_logits(model, sample)
        ranked = sorted(logits, key=lambda r: -logits[r])
        pred = argmax_region(logits)
        y_true.append(sample.label)
        y_pred.append(pred)
        for k in top_hits:
            top_hits[k] += sample.label in ranked[:k]
        idx = {rid: i for i, rid in enumerate(sample.region_ids)}
        delta = sample.centroids[idx[pred]] - sample.centroids[idx[sample.label]]
        point_errors.append(float(np.linalg.norm(delta)))
    n = len(samples)
    return EvalMetrics(
        region_accuracy=float(np.mean([t == p for t, p in zip(y_true, y_pred)])),
        macro_f1=float(f1_score(y_true, y_pred, average="macro", zero_division=0)),
        top_k_accuracy={k: hits / n for k, hits in top_hits.items()},
        mean_point_error_cm=float(np.mean(point_errors)),
        n_samples=n,
    )


def weighted_random_baseline_f1(labels, seed: int = 0, draws: int = 10_000) -> float:
    """Macro F1 of a predictor drawing labels with inverse-frequency weights."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    weights = (1.0 / counts) / (1.0 / counts).sum()
    scores = []
    for _ in range(max(draws // max(len(labels), 1), 1)):
        pred = rng.choice(classes, size=len(labels), p=weights)
        scores.append(f1_score(labels, pred, average="macro", zero_division=0))
    return float(np.mean(scores))
