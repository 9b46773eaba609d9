"""Command line front end: train, eval and predict on JSONL datasets.

Model checkpoints are directories holding the weights tensor file plus the
hyperparameters and feature dimensions as JSON, so a saved model can be
reloaded without the original config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import torch

from .data import DatasetError, load_dataset, stratified_split
from .model import Hyperparams, Localizer, ModelDims
from .train import (
    evaluate, predict_with_filter, train, weighted_random_baseline_f1,
)


class UsageError(ValueError):
    pass


def save_model(model: Localizer, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), out_dir / "weights.pt")
    meta = {"hyperparams": dataclasses.asdict(model.hp),
            "dims": dataclasses.asdict(model.dims)}
    (out_dir / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True),
                                        encoding="utf-8")


def load_model(model_dir: Path) -> Localizer:
    try:
        meta = json.loads((model_dir / "model.json").read_text(encoding="utf-8"))
        hp = Hyperparams(**meta["hyperparams"])
        model = Localizer(hp, ModelDims(**meta["dims"]))
        model.load_state_dict(torch.load(model_dir / "weights.pt",
                                         weights_only=True))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot load model from {model_dir}: {exc}") from exc
    model.eval()
    return model


def _load_hp(path: str | None) -> Hyperparams:
    if path is None:
        return Hyperparams()
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return Hyperparams.from_dict(json.load(fp))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read hyperparameters {path}: {exc}") from exc
    except TypeError as exc:
        raise UsageError(f"unknown hyperparameter field: {exc}") from exc


def cmd_train(args) -> int:
    samples = load_dataset(args.dataset)
    hp = _load_hp(args.hp)
    train_set, val_set, _ = stratified_split(samples, seed=args.seed)
    result = train(train_set, hp, seed=args.seed)
    out_dir = Path(args.out)
    save_model(result.model, out_dir)
    metrics = {"final_loss": result.history[-1].loss,
               "final_train_macro_f1": result.history[-1].macro_f1,
               "history": [dataclasses.asdict(h) for h in result.history]}
    if val_set:
        metrics["validation"] = evaluate(result.model, val_set).as_dict()
    (out_dir / "train_metrics.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8")
    print(out_dir / "weights.pt")
    print(out_dir / "train_metrics.json")
    return 0


def cmd_eval(args) -> int:
    samples = load_dataset(args.dataset)
    model = load_model(Path(args.model))
    if args.split == "test":
        _, _, samples = stratified_split(samples, seed=args.seed)
    metrics = evaluate(model, samples).as_dict()
    metrics["weighted_random_baseline_f1"] = weighted_random_baseline_f1(
        [s.label for s in samples], seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8")
    print(out)
    return 0


def cmd_predict(args) -> int:
    samples = load_dataset(args.dataset)
    model = load_model(Path(args.model))
    covers = None
    bits = None
    if args.filter:
        if not args.covers:
            raise UsageError("--filter requires --covers")
        try:
            with open(args.covers, "r", encoding="utf-8") as fp:
                raw = json.load(fp)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read covers {args.covers}: {exc}") from exc
        covers = {int(aid): set(regions) for aid, regions in raw["covers"].items()}
        bits = {int(aid): int(bit) for aid, bit in raw.get("bits", {}).items()}
    rows = []
    for i, sample in enumerate(samples):
        scores = predict_with_filter(model, sample, covers=covers,
                                     anchor_bits=bits if args.filter else None)
        pred = max(sorted(scores), key=lambda r: scores[r])
        rows.append({"sample": i, "predicted_region": pred, "label": sample.label,
                     "scores": {str(r): scores[r] for r in sorted(scores)}})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(rows, indent=2, sort_keys=True), encoding="utf-8")
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("--dataset", required=True)
    p.add_argument("--hp", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("all", "test"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="eval_metrics.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--filter", action="store_true")
    p.add_argument("--covers", default=None)
    p.add_argument("--out", default="predictions.json")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (UsageError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
