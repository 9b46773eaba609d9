"""Model-vs-simulator validation statistics.

Three metrics, matching the evaluation protocol: a two-sided Mann-Whitney U
test on circulation times with a detected event (b=1), the maximum vertical
ECDF distance on times without detection (b=0), and a smoothed Bernoulli KL
divergence between the per-region ratios of positive event bits.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

EXACT_MW_LIMIT = 20  # exact null distribution up to this combined sample size


@dataclass(frozen=True)
class MwResult:
    u_statistic: float
    p_value: float
    accept: bool


def mann_whitney_u(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> MwResult:
    """Two-sided Mann-Whitney U test.

    Exact null distribution for small tie-free samples, normal approximation
    with mid-rank tie correction otherwise.  ``accept`` holds when the
    equal-distribution hypothesis is not rejected at ``alpha``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    has_ties = len(np.unique(np.concatenate([a, b]))) < a.size + b.size
    method = "exact" if (a.size + b.size <= EXACT_MW_LIMIT and not has_ties) else "asymptotic"
    res = sps.mannwhitneyu(a, b, alternative="two-sided", method=method)
    p = float(min(res.pvalue, 1.0))
    return MwResult(float(res.statistic), p, p >= alpha)


def ecdf_max_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    grid = np.concatenate([a, b])
    f_a = np.searchsorted(a, grid, side="right") / a.size
    f_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(f_a - f_b)))


def kl_bernoulli(p_model: float, p_sim: float, smoothing: float = 1e-3) -> float:
    """KL(p_model || p_sim) for Bernoulli ratios, clamped away from {0,1}."""
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    p = min(max(p_model, smoothing), 1.0 - smoothing)
    q = min(max(p_sim, smoothing), 1.0 - smoothing)
    return p * math.log(p / q) + (1.0 - p) * math.log((1.0 - p) / (1.0 - q))


@dataclass
class RegionReport:
    region: int
    mw_u: float | None
    mw_p: float | None
    mw_accept: bool | None
    ecdf_distance: float | None
    one_ratio_model: float
    one_ratio_sim: float
    kl: float | None  # None when the region is excluded from the KL metric


@dataclass
class ValidationReport:
    regions: list[RegionReport]
    acceptance_fraction: float
    mean_ecdf_distance: float
    max_kl: float
    alpha: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("region,mw_u,mw_p,mw_accept,ecdf_distance,"
                  "one_ratio_model,one_ratio_sim,kl\n")
        for r in self.regions:
            row = [str(r.region)]
            for val in (r.mw_u, r.mw_p):
                row.append("" if val is None else repr(val))
            row.append("" if r.mw_accept is None else str(int(r.mw_accept)))
            row.append("" if r.ecdf_distance is None else repr(r.ecdf_distance))
            row.append(repr(r.one_ratio_model))
            row.append(repr(r.one_ratio_sim))
            row.append("" if r.kl is None else repr(r.kl))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "acceptance_fraction": self.acceptance_fraction,
            "mean_ecdf_distance": self.mean_ecdf_distance,
            "max_kl": self.max_kl,
            "alpha": self.alpha,
            "n_regions": len(self.regions),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _split_by_bit(samples) -> tuple[np.ndarray, np.ndarray]:
    ones, zeros = [], []
    for item in samples:
        t, b = (item.t_s, item.b) if hasattr(item, "t_s") else (item[0], item[1])
        (ones if b else zeros).append(t)
    return np.asarray(ones), np.asarray(zeros)


def validate(model_data: Mapping[int, Sequence], sim_data: Mapping[int, Sequence],
             alpha: float = 0.05, smoothing: float | None = None,
             kl_excluded_regions: Iterable[int] = ()) -> ValidationReport:
    """Compare per-region raw data sets from the model sampler and simulator.

    ``model_data``/``sim_data`` map a region id (event location) to (t, b)
    samples.  MW runs on the b=1 times, the ECDF distance on the b=0 times,
    and the KL divergence on the positive-bit ratios; regions traversed on
    every loop are excluded from KL via ``kl_excluded_regions``.
    """
    if set(model_data) != set(sim_data):
        raise ValueError("model and simulator region sets differ")
    excluded = set(kl_excluded_regions)
    regions = []
    for region in sorted(model_data):
        m_ones, m_zeros = _split_by_bit(model_data[region])
        s_ones, s_zeros = _split_by_bit(sim_data[region])
        mw = mann_whitney_u(m_ones, s_ones, alpha) \
            if m_ones.size and s_ones.size else None
        dist = ecdf_max_distance(m_zeros, s_zeros) \
            if m_zeros.size and s_zeros.size else None
        n_m = m_ones.size + m_zeros.size
        n_s = s_ones.size + s_zeros.size
        ratio_m = m_ones.size / n_m if n_m else 0.0
        ratio_s = s_ones.size / n_s if n_s else 0.0
        if region in excluded:
            kl = None
        else:
            # Laplace smoothing keeps the divergence finite for scarce events.
            smooth = smoothing if smoothing is not None else 1.0 / (max(n_m, n_s) + 2)
            kl = kl_bernoulli(ratio_m, ratio_s, smooth)
        regions.append(RegionReport(
            region=region,
            mw_u=None if mw is None else mw.u_statistic,
            mw_p=None if mw is None else mw.p_value,
            mw_accept=None if mw is None else mw.accept,
            ecdf_distance=dist,
            one_ratio_model=ratio_m,
            one_ratio_sim=ratio_s,
            kl=kl,
        ))

    decided = [r.mw_accept for r in regions if r.mw_accept is not None]
    dists = [r.ecdf_distance for r in regions if r.ecdf_distance is not None]
    kls = [r.kl for r in regions if r.kl is not None]
    return ValidationReport(
        regions=regions,
        acceptance_fraction=sum(decided) / len(decided) if decided else 0.0,
        mean_ecdf_distance=float(np.mean(dists)) if dists else 0.0,
        max_kl=max(kls) if kls else 0.0,
        alpha=alpha,
    )
