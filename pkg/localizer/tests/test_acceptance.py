"""Acceptance suite for the localizer: one verdict line per criterion."""

import contextlib
import itertools
import time

import torch

from gnnloc.data import load_dataset, stratified_split
from gnnloc.filtering import allowed_regions, clamp_scores
from gnnloc.model import Hyperparams, ModelDims, build_model
from gnnloc.train import (
    evaluate, predict_logits, predict_with_filter, train,
    weighted_random_baseline_f1,
)

from _samples import ring_sample
from test_model import tiny_hp


@contextlib.contextmanager
def verdict(name):
    info = {}
    try:
        yield info
    except BaseException:
        print(f"[FAIL] {name}: {info.get('detail', '')}", flush=True)
        raise
    print(f"[PASS] {name}: {info.get('detail', '')}", flush=True)


def test_shape_and_invariant_suite():
    with verdict("shape, attention, gradient and filter invariants") as info:
        hp = tiny_hp(attention_heads=4, initial_conv_layers=1, final_conv_layers=1)
        model = build_model(hp, ModelDims(3, 5), seed=0)

        # Output length tracks the region count of the input graph.
        for n in (5, 24, 33):
            s = ring_sample(n_regions=n, seed=n)
            assert model(s.region_x, s.anchor_x, s.adjacency).shape == (n,)

        # Per-node attention rows sum to one.
        s = ring_sample(n_regions=9, n_anchors=3, seed=1)
        model(s.region_x, s.anchor_x, s.adjacency)
        worst = 0.0
        for alpha in model.attention_maps():
            worst = max(worst, float((alpha.sum(dim=-1) - 1.0).abs().max()))
        assert worst < 1e-5

        # Head-layer gradients against central finite differences.
        y = torch.tensor(4)
        def loss_value():
            logits = model(s.region_x, s.anchor_x, s.adjacency)
            return torch.nn.functional.cross_entropy(
                logits.unsqueeze(0), y.unsqueeze(0))
        model.zero_grad()
        loss_value().backward()
        analytic = model.head.weight.grad.clone()
        eps = 1e-6
        numeric = torch.zeros_like(analytic)
        with torch.no_grad():
            flat = model.head.weight.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = loss_value().item()
                flat[i] = orig - eps
                down = loss_value().item()
                flat[i] = orig
                numeric.view(-1)[i] = (up - down) / (2 * eps)
        rel = float(((analytic - numeric).abs()
                     / torch.clamp(numeric.abs(), min=1e-8)).max())
        assert rel < 1e-4

        # predict_with_filter equals apply-filter-after-forward, bitwise.
        covers = {1: {0, 1, 2, 3}, 2: {0, 4, 5}}
        raw = predict_logits(model, s)
        for bits in itertools.product((0, 1), repeat=2):
            prediction = {1: bits[0], 2: bits[1]}
            composed = clamp_scores(raw, allowed_regions(prediction, covers, raw))
            assert predict_with_filter(model, s, covers, prediction) == composed
        info["detail"] = (f"attention max deviation {worst:.2e}, "
                          f"gradient rel err {rel:.2e}, filter bitwise equal")


def test_learning_sanity(dataset_path):
    with verdict("learning sanity on generated dataset") as info:
        t0 = time.time()
        samples = load_dataset(dataset_path)
        assert len(samples) >= 250
        train_set, _, test_set = stratified_split(samples, seed=0)
        hp = Hyperparams()  # reference configuration
        result = train(train_set, hp, seed=0)
        metrics = evaluate(result.model, test_set)
        baseline = weighted_random_baseline_f1(
            [s.label for s in test_set], seed=0)
        elapsed = time.time() - t0
        info["detail"] = (
            f"macro F1 {metrics.macro_f1:.3f} vs baseline {baseline:.3f}, "
            f"top-1 {metrics.top_k_accuracy[1]:.3f}, "
            f"top-6 {metrics.top_k_accuracy[6]:.3f}, {elapsed:.0f} s")
        assert metrics.macro_f1 >= 2.0 * baseline
        assert metrics.top_k_accuracy[6] >= metrics.top_k_accuracy[1]
        assert metrics.top_k_accuracy[6] >= 0.5
        assert elapsed < 600.0
