"""Experiment runner: distributions, simulations, validation, datasets, filtering.

Subcommands write deterministic CSV/JSON artifacts given a config file plus
flag overrides (flags > file > defaults).  Exit codes: 0 success, 1 usage or
config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analytic_model as am
from . import anchor_filter as af
from . import features as ft
from . import mobility_sim as ms
from . import stats as st
from .vasculature import (
    ALWAYS_TRAVERSED_REGIONS, BODY_PARTS, BloodstreamGraph, builtin_24_region,
    cardiovascular_paths, load_graph,
)


class UsageError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc


def _resolve_graph(config: dict) -> BloodstreamGraph:
    path = config.get("graph")
    if path in (None, "builtin-24"):
        return builtin_24_region()
    with open(path, "r", encoding="utf-8") as fp:
        return load_graph(fp)


def _event_regions(graph: BloodstreamGraph) -> list[int]:
    regions = []
    for path in cardiovascular_paths(graph):
        from .vasculature import path_event_region
        region = path_event_region(path, graph)
        regions.append(region if region is not None else path.region_sequence[1])
    return sorted(set(regions))


def _model_params(config: dict, graph: BloodstreamGraph | None) -> am.ModelParams:
    if "travel_times_s" in config:
        return am.ModelParams(
            travel_times_s=tuple(config["travel_times_s"]),
            path_probs=tuple(config["path_probs"]),
            p_det=config.get("p_det", 0.7),
            p_trans=config.get("p_trans", 0.7),
            event_path=config.get("event_path", 0),
            noise_sigma_s=config.get("noise_sigma_s", 1.0),
            horizon_s=config.get("horizon_s", 1100.0),
            truncation_eps=config.get("truncation_eps", 1e-9),
        )
    if graph is None:
        graph = _resolve_graph(config)
    return am.params_from_graph(
        graph,
        event_region=config.get("event_region", 1),
        p_det=config.get("p_det", 0.7),
        p_trans=config.get("p_trans", 0.7),
        noise_sigma_s=config.get("noise_sigma_s", 1.0),
        horizon_s=config.get("horizon_s", 1100.0),
        truncation_eps=config.get("truncation_eps", 1e-9),
    )


# -- subcommand implementations -------------------------------------------

def cmd_model_dist(config: dict, out_dir: Path, seed: int) -> list[Path]:
    params = _model_params(config, None)
    table = am.enumerate_distribution(params)
    out_dir.mkdir(parents=True, exist_ok=True)
    dist_path = out_dir / "distribution.csv"
    dist_path.write_text(table.to_csv(), encoding="utf-8")

    # Histogram-ready aggregation: probability mass per lattice time.
    mass: dict[float, float] = {}
    for (n, _b), p in table.entries.items():
        t = table.lattice_time(n)
        mass[t] = mass.get(t, 0.0) + p
    hist_path = out_dir / "histogram.csv"
    with hist_path.open("w", encoding="utf-8") as fp:
        fp.write("t_s,probability\n")
        for t in sorted(mass):
            fp.write(f"{t!r},{mass[t]!r}\n")
    return [dist_path, hist_path]


def _sim_config(config: dict, seed: int, p_det: float | None = None,
                p_trans: float | None = None) -> ms.SimConfig:
    return ms.SimConfig(
        duration_s=config.get("duration_s", 1100.0),
        n_devices=config.get("n_devices", 64),
        dt_s=config.get("dt_s", 0.01),
        sampling_granularity_hz=config.get("sampling_granularity_hz", 1),
        detection_radius_cm=config.get("detection_radius_cm", 1.0),
        transmission_mode=config.get("transmission_mode", ms.INJECTED),
        injected_p_trans=p_trans if p_trans is not None else config.get("p_trans", 0.7),
        injected_p_det=p_det if p_det is not None else config.get("p_det"),
        seed=seed,
    )


def cmd_simulate(config: dict, out_dir: Path, seed: int) -> list[Path]:
    graph = _resolve_graph(config)
    sim_config = _sim_config(config, seed)
    event = ms.EventSpec(config.get("event_region", 1),
                         config.get("event_offset_cm", 0.0))
    trace = ms.run(graph, sim_config, event)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    trace_path.write_text(trace.to_csv(), encoding="utf-8")
    return [trace_path]


def run_validation_point(graph: BloodstreamGraph, p_det: float, p_trans: float,
                         config: dict, seed: int) -> st.ValidationReport:
    """Model sampler vs simulator over every event region at one sweep point."""
    regions = config.get("regions") or _event_regions(graph)
    duration = config.get("duration_s", 1100.0)
    model_data: dict[int, list] = {}
    sim_data: dict[int, list] = {}
    for i, region in enumerate(regions):
        sim_config = _sim_config(config, seed * 10007 + i, p_det=p_det, p_trans=p_trans)
        trace = ms.run(graph, sim_config, ms.EventSpec(region, 0.0))
        sim = trace.raw_data(graph.heart_anchor().id)
        sim_data[region] = sim
        params = am.params_from_graph(graph, region, p_det=p_det, p_trans=p_trans,
                                      noise_sigma_s=config.get("noise_sigma_s", 0.0),
                                      horizon_s=duration)
        model_data[region] = am.sample_device_stream(
            params, sim_config.n_devices, seed=seed * 20011 + i)
    excluded = set(config.get("kl_excluded_regions", sorted(ALWAYS_TRAVERSED_REGIONS)))
    return st.validate(model_data, sim_data, alpha=config.get("alpha", 0.05),
                       smoothing=config.get("smoothing"),
                       kl_excluded_regions=excluded)


def _validate_point_task(args):
    graph_obj, p_det, p_trans, config, seed = args
    graph = load_graph(json.dumps(graph_obj))
    return run_validation_point(graph, p_det, p_trans, config, seed)


def cmd_validate(config: dict, out_dir: Path, seed: int, jobs: int = 1) -> list[Path]:
    sweep = config.get("sweep")
    if not sweep:
        raise UsageError("validate requires a non-empty 'sweep' list in the config")
    graph = _resolve_graph(config)
    tasks = [(graph.to_json_obj(), point.get("p_det", 1.0), point.get("p_trans", 1.0),
              config, seed + idx) for idx, point in enumerate(sweep)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_validate_point_task, tasks))
    else:
        reports = [_validate_point_task(task) for task in tasks]

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    summary = []
    for point, report in zip(sweep, reports):
        tag = f"pdet{point.get('p_det', 1.0)}_ptrans{point.get('p_trans', 1.0)}"
        path = out_dir / f"validation_{tag}.csv"
        path.write_text(report.to_csv(), encoding="utf-8")
        written.append(path)
        summary.append({"p_det": point.get("p_det", 1.0),
                        "p_trans": point.get("p_trans", 1.0),
                        **report.summary()})
    summary_path = out_dir / "validation_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True),
                            encoding="utf-8")
    written.append(summary_path)
    return written


def _parse_trace_csv(path: str | Path) -> ms.SimTrace:
    receptions = []
    duration = 0.0
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().strip()
        if header != "anchor_id,time_s,t_s,b":
            raise UsageError(f"unexpected trace header in {path}")
        for line in fp:
            aid, when, t, b = line.strip().split(",")
            receptions.append((int(aid), float(when), am.RawDatum(float(t), int(b))))
            duration = max(duration, float(when))
    return ms.SimTrace(receptions=receptions, diagnostics=[], duration_s=max(duration, 1.0))


def cmd_features(config: dict, out_dir: Path, seed: int) -> list[Path]:
    trace_path = config.get("trace")
    if not trace_path:
        raise UsageError("features requires a 'trace' path in the config")
    trace = _parse_trace_csv(trace_path)
    k_max = config.get("k_max", ft.DEFAULT_K_MAX)
    n_devices = config.get("n_devices", 64)
    anchor_ids = sorted({aid for aid, _, _ in trace.receptions})
    out = {}
    for aid in anchor_ids:
        vec = ft.extract_features(trace, aid, k_max=k_max, n_devices=n_devices, seed=seed)
        out[str(aid)] = vec.flatten()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "features.json"
    path.write_text(json.dumps(out, indent=2, sort_keys=True), encoding="utf-8")
    return [path]


def cmd_pipeline(config: dict, out_dir: Path, seed: int) -> list[Path]:
    graph = _resolve_graph(config)
    n_runs = config.get("n_runs", 100)
    regions = config.get("regions") or _event_regions(graph)
    fixed_region = config.get("event_region")
    rng = np.random.default_rng(seed)
    runs = []
    for i in range(n_runs):
        region = fixed_region if fixed_region is not None \
            else regions[int(rng.integers(len(regions)))]
        sim_config = _sim_config(config, seed * 31013 + i)
        trace = ms.run(graph, sim_config, ms.EventSpec(region, 0.0))
        runs.append((graph, trace, region))
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "dataset.jsonl"
    n_samples = ft.export_dataset(runs, path, k_max=config.get("k_max", ft.DEFAULT_K_MAX),
                                  seed=seed, n_devices=config.get("n_devices", 64))
    if n_samples == 0:
        raise RuntimeError("all runs filtered out")
    return [path]


def cmd_filter(config: dict, out_dir: Path, seed: int) -> list[Path]:
    graph = _resolve_graph(config)
    preds_path = config.get("predictions")
    logits_path = config.get("logits")
    if not preds_path or not logits_path:
        raise UsageError("filter requires 'predictions' and 'logits' paths")
    predictions = {}
    with open(preds_path, "r", encoding="utf-8") as fp:
        fp.readline()
        for line in fp:
            aid, bit = line.strip().split(",")
            predictions[int(aid)] = int(bit)
    logits = {}
    with open(logits_path, "r", encoding="utf-8") as fp:
        fp.readline()
        for line in fp:
            region, score = line.strip().split(",")
            logits[int(region)] = float(score)

    covers = af.cover_sets_for_anchors(graph)
    allowed = af.allowed_regions(predictions, covers, set(logits))
    filtered = af.apply_filter(af.RegionPrediction(logits), allowed)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "filtered_logits.csv"
    with path.open("w", encoding="utf-8") as fp:
        fp.write("region,logit\n")
        for region in sorted(filtered.logits):
            fp.write(f"{region},{filtered.logits[region]!r}\n")
    return [path]


# -- argument parsing ------------------------------------------------------

OVERRIDE_KEYS = (
    "p_det", "p_trans", "event_region", "n_devices", "duration_s", "alpha",
    "smoothing", "k_max", "n_runs", "graph", "trace", "predictions", "logits",
    "noise_sigma_s", "horizon_s",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowloc")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("model-dist", "simulate", "validate", "features", "pipeline", "filter"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--graph", default=None)
        p.add_argument("--p-det", dest="p_det", type=float, default=None)
        p.add_argument("--p-trans", dest="p_trans", type=float, default=None)
        p.add_argument("--event-region", dest="event_region", type=int, default=None)
        p.add_argument("--n-devices", dest="n_devices", type=int, default=None)
        p.add_argument("--duration", dest="duration_s", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--smoothing", type=float, default=None)
        p.add_argument("--k-max", dest="k_max", type=int, default=None)
        p.add_argument("--n-runs", dest="n_runs", type=int, default=None)
        p.add_argument("--trace", default=None)
        p.add_argument("--predictions", default=None)
        p.add_argument("--logits", default=None)
    return parser


COMMANDS = {
    "model-dist": cmd_model_dist,
    "simulate": cmd_simulate,
    "features": cmd_features,
    "pipeline": cmd_pipeline,
    "filter": cmd_filter,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        config = _load_config(args.config)
        for key in OVERRIDE_KEYS:
            value = getattr(args, key, None)
            if value is not None:
                config[key] = value
        out_dir = Path(args.out)
        if args.command == "validate":
            written = cmd_validate(config, out_dir, args.seed, jobs=args.jobs)
        else:
            written = COMMANDS[args.command](config, out_dir, args.seed)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
