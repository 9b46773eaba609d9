import json

import pytest
import torch

from gnnloc.data import DatasetError, load_dataset, stratified_split

from _samples import ring_sample


def write_jsonl(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n")


def minimal_sample(label=1, n_regions=3):
    return {
        "regions": [{"id": i, "type": 0.0, "length": float(i), "speed": 1.0,
                     "centroid": [float(i), 0.0, 0.0]} for i in range(n_regions)],
        "edges": [[i, (i + 1) % n_regions] for i in range(n_regions)],
        "anchors": [{"id": 0, "features": [0.1] * 4, "is_heart_anchor": True},
                    {"id": 1, "features": [0.2] * 4, "is_heart_anchor": False}],
        "label": label,
    }


def test_load_roundtrip(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [minimal_sample(1), minimal_sample(2)])
    samples = load_dataset(path)
    assert len(samples) == 2
    s = samples[0]
    assert s.region_ids == [0, 1, 2]
    assert s.label == 1 and s.label_index() == 1
    assert s.anchor_x.shape == (2, 4)
    assert s.heart_anchor_ids == {0}
    # Ring adjacency symmetrized with self-loops.
    assert torch.equal(s.adjacency, s.adjacency.T)
    assert torch.all(s.adjacency.diagonal() == 1.0)


def test_load_rejects_bad_label(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [minimal_sample(label=99)])
    with pytest.raises(DatasetError, match="not a region id"):
        load_dataset(path)


def test_load_rejects_bad_edge(tmp_path):
    obj = minimal_sample()
    obj["edges"].append([0, 42])
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [obj])
    with pytest.raises(DatasetError, match="unknown region"):
        load_dataset(path)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("not json\n")
    with pytest.raises(DatasetError, match="invalid JSON"):
        load_dataset(path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n")
    with pytest.raises(DatasetError, match="empty"):
        load_dataset(empty)


def test_stratified_split_proportions():
    samples = [ring_sample(label=i % 4, seed=i) for i in range(80)]
    train, val, test = stratified_split(samples, seed=3)
    assert len(train) + len(val) + len(test) == 80
    assert len(train) == 64 and len(val) == 8 and len(test) == 8
    for split in (train, val, test):
        labels = {s.label for s in split}
        assert labels == {0, 1, 2, 3}
    # Deterministic per seed.
    again = stratified_split(samples, seed=3)
    assert [s.label for s in again[0]] == [s.label for s in train]


def test_stratified_split_small_classes_go_to_train():
    samples = [ring_sample(label=0, seed=1), ring_sample(label=1, seed=2)]
    train, val, test = stratified_split(samples, seed=0)
    assert len(train) == 2 and not val and not test
