"""Analytic model of raw localization data under imperfect detection/transmission.

A nanodevice loops through the vessel graph, picking cardiovascular path i
with probability P_R_i per loop.  Each pass by the heart anchor reports with
probability p_trans; until a report succeeds the circulation time keeps
accumulating, so the reported time is a lattice point sum(n_i * T_i) plus
Gaussian jitter.  The event bit is 1 if the event was detected on at least one
of the n_j passes through the event path.  This module enumerates the exact
probability of every (iteration vector, bit) outcome and samples from it.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

LOG_EPS = -745.0  # exp underflows to 0 below this


class EnumerationError(RuntimeError):
    """Raised when the outcome lattice under the horizon is too large."""


@dataclass(frozen=True)
class ModelParams:
    travel_times_s: tuple[float, ...]
    path_probs: tuple[float, ...]
    p_det: float
    p_trans: float
    event_path: int            # index j into the path arrays
    noise_sigma_s: float = 1.0
    horizon_s: float = 1100.0  # M
    truncation_eps: float = 1e-9
    max_entries: int = 10**7

    def __post_init__(self):
        if len(self.travel_times_s) != len(self.path_probs) or not self.travel_times_s:
            raise ValueError("travel_times_s and path_probs must be equal, non-empty")
        if any(t <= 0 for t in self.travel_times_s):
            raise ValueError("travel times must be positive")
        if abs(sum(self.path_probs) - 1.0) > 1e-9:
            raise ValueError("path probabilities must sum to 1")
        if not (0.0 < self.p_det <= 1.0 and 0.0 < self.p_trans <= 1.0):
            raise ValueError("p_det and p_trans must lie in (0, 1]")
        if not 0 <= self.event_path < len(self.path_probs):
            raise ValueError("event_path out of range")
        if self.noise_sigma_s < 0:
            raise ValueError("noise_sigma_s must be >= 0")
        if self.horizon_s <= max(self.travel_times_s):
            raise ValueError("horizon must exceed the longest travel time")
        if not 0.0 <= self.truncation_eps <= 1e-3:
            raise ValueError("truncation_eps must lie in [0, 1e-3]")

    @property
    def n_paths(self) -> int:
        return len(self.path_probs)


@dataclass(frozen=True)
class RawDatum:
    t_s: float
    b: int

    def __post_init__(self):
        if self.t_s <= 0:
            raise ValueError("t must be positive")
        if self.b not in (0, 1):
            raise ValueError("b must be 0 or 1")


@dataclass
class DistributionTable:
    """Exact outcome probabilities plus the un-enumerated residual mass."""

    params: ModelParams
    entries: dict[tuple[tuple[int, ...], int], float]
    residual_tail: float

    def lattice_time(self, n: tuple[int, ...]) -> float:
        return float(np.dot(n, self.params.travel_times_s))

    def total_mass(self) -> float:
        return sum(self.entries.values()) + self.residual_tail

    def sorted_outcomes(self) -> list[tuple[tuple[int, ...], int]]:
        return sorted(self.entries, key=lambda key: (self.lattice_time(key[0]), key[0], key[1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        p = self.params
        buf.write(f"# travel_times_s={list(p.travel_times_s)}\n")
        buf.write(f"# path_probs={list(p.path_probs)}\n")
        buf.write(f"# p_det={p.p_det} p_trans={p.p_trans} event_path={p.event_path}\n")
        buf.write(f"# horizon_s={p.horizon_s} truncation_eps={p.truncation_eps}\n")
        buf.write(f"# residual_tail={self.residual_tail!r}\n")
        cols = [f"n_{i + 1}" for i in range(p.n_paths)]
        buf.write(",".join(cols + ["b", "t_mean_s", "probability"]) + "\n")
        for n, b in self.sorted_outcomes():
            row = [str(c) for c in n] + [str(b), repr(self.lattice_time(n)),
                                         repr(self.entries[(n, b)])]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def multinomial_coefficient(n: tuple[int, ...] | list[int]) -> float:
    """(sum n_i)! / prod n_i!, evaluated via log-gamma."""
    total = sum(n)
    if total < 1:
        raise ValueError("iteration vector must have at least one loop")
    if any(c < 0 for c in n):
        raise ValueError("loop counts must be non-negative")
    log_c = math.lgamma(total + 1) - sum(math.lgamma(c + 1) for c in n)
    return math.exp(log_c)


def _log_multiset_prob(n, params: ModelParams) -> float:
    # log of multinomial(n) * prod P_R_i^{n_i}
    out = math.lgamma(sum(n) + 1)
    for count, prob in zip(n, params.path_probs):
        out -= math.lgamma(count + 1)
        if count:
            out += count * math.log(prob)
    return out


def _transmission_weight(n, params: ModelParams) -> float:
    """Probability of the loop multiset with report succeeding on the last pass."""
    total = sum(n)
    log_w = _log_multiset_prob(n, params) + math.log(params.p_trans)
    if params.p_trans < 1.0:
        log_w += (total - 1) * math.log1p(-params.p_trans)
    elif total > 1:
        return 0.0
    return math.exp(log_w) if log_w > LOG_EPS else 0.0


def prob_detected(n: tuple[int, ...], params: ModelParams) -> float:
    """Probability of outcome (n, b=1) for an event on path ``event_path``."""
    if sum(n) < 1:
        raise ValueError("iteration vector must have at least one loop")
    n_j = n[params.event_path]
    if n_j == 0:
        return 0.0  # infeasible support: detected without passing the event
    detect_any = 1.0 - (1.0 - params.p_det) ** n_j
    return _transmission_weight(n, params) * detect_any


def prob_not_detected(n: tuple[int, ...], params: ModelParams) -> float:
    """Probability of outcome (n, b=0) for an event on path ``event_path``."""
    if sum(n) < 1:
        raise ValueError("iteration vector must have at least one loop")
    n_j = n[params.event_path]
    miss_all = (1.0 - params.p_det) ** n_j
    return _transmission_weight(n, params) * miss_all


def enumerate_distribution(params: ModelParams) -> DistributionTable:
    """Recursively enumerate all iteration vectors within the horizon.

    Vectors are visited per total loop count m; a branch is pruned when even
    its most favorable completion falls below ``truncation_eps``.  Whatever is
    not enumerated is reported as ``residual_tail``.
    """
    times = params.travel_times_s
    probs = params.path_probs
    r = params.n_paths
    eps = params.truncation_eps
    m_max = int(params.horizon_s // min(times))

    # Suffix maxima of path probabilities for the pruning bound.
    suffix_max = [0.0] * (r + 1)
    for i in range(r - 1, -1, -1):
        suffix_max[i] = max(probs[i], suffix_max[i + 1])

    entries: dict[tuple[tuple[int, ...], int], float] = {}
    counts = [0] * r

    def emit(n: tuple[int, ...]) -> None:
        if len(entries) > params.max_entries:
            raise EnumerationError("horizon too large: entry cap exceeded")
        weight = _transmission_weight(n, params)
        if weight <= 0.0:
            return
        n_j = n[params.event_path]
        miss_all = (1.0 - params.p_det) ** n_j
        p0 = weight * miss_all
        if p0 > 0.0 and (eps == 0.0 or p0 >= eps):
            entries[(n, 0)] = p0
        if n_j >= 1:
            p1 = weight * (1.0 - miss_all)
            if p1 > 0.0 and (eps == 0.0 or p1 >= eps):
                entries[(n, 1)] = p1

    def assign(i: int, remaining: int, time_used: float, log_partial: float) -> None:
        # log_partial carries log g(m) + lgamma(m+1) plus the assigned regions'
        # c*log(P_i) - lgamma(c+1) terms.
        if i == r - 1:
            extra = remaining * times[i]
            if time_used + extra > params.horizon_s + 1e-9:
                return
            counts[i] = remaining
            emit(tuple(counts))
            counts[i] = 0
            return
        for c in range(remaining + 1):
            t_here = time_used + c * times[i]
            if t_here > params.horizon_s + 1e-9:
                break
            log_next = log_partial - math.lgamma(c + 1)
            if c:
                log_next += c * math.log(probs[i])
            # Upper bound on any completion: put the remaining counts on the
            # likeliest path and drop the remaining factorial penalties.
            rest = remaining - c
            bound = log_next
            if rest:
                bound += rest * math.log(suffix_max[i + 1])
            if eps > 0.0 and bound < math.log(eps):
                continue
            counts[i] = c
            assign(i + 1, rest, t_here, log_next)
            counts[i] = 0

    for m in range(1, m_max + 1):
        if params.p_trans == 1.0 and m > 1:
            break
        # Mass of the whole loop-count class; every entry is bounded by it.
        log_class = math.log(params.p_trans) + (m - 1) * math.log1p(-params.p_trans) \
            if params.p_trans < 1.0 else 0.0
        if eps > 0.0 and log_class < math.log(eps):
            break
        assign(0, m, 0.0, log_class + math.lgamma(m + 1))

    residual = 1.0 - sum(entries.values())
    return DistributionTable(params=params, entries=entries,
                             residual_tail=max(residual, 0.0))


def sample_raw_data(params: ModelParams, count: int, seed: int,
                    table: DistributionTable | None = None) -> list[RawDatum]:
    """Draw raw data by inverse CDF over the enumerated table plus jitter."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if table is None:
        table = enumerate_distribution(params)
    outcomes = table.sorted_outcomes()
    probs = np.array([table.entries[key] for key in outcomes])
    probs = probs / probs.sum()  # tail renormalized away
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(outcomes), size=count, p=probs)
    data: list[RawDatum] = []
    for i in idx:
        n, b = outcomes[i]
        t = table.lattice_time(n)
        if params.noise_sigma_s > 0:
            jittered = t + rng.normal(0.0, params.noise_sigma_s)
            while jittered <= 0:
                jittered = t + rng.normal(0.0, params.noise_sigma_s)
            t = jittered
        data.append(RawDatum(float(t), int(b)))
    return data


def sample_raw_data_direct(params: ModelParams, count: int, seed: int) -> list[RawDatum]:
    """Sample the generative process directly, without table enumeration.

    Equivalent in distribution to the enumerated table (conditioned on a
    report within the horizon), but tractable for many paths where the
    outcome lattice is too large to tabulate.  Used by the validation
    pipeline on the 24-region graph.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    times = np.asarray(params.travel_times_s)
    probs = np.asarray(params.path_probs)
    data: list[RawDatum] = []
    while len(data) < count:
        t_total = 0.0
        n_j = 0
        while True:
            path = rng.choice(params.n_paths, p=probs)
            t_total += times[path]
            if t_total > params.horizon_s:
                t_total = 0.0  # report missed the horizon; restart the device
                n_j = 0
                continue
            if path == params.event_path:
                n_j += 1
            if rng.random() < params.p_trans:
                break
        b = 0
        if n_j and rng.random() < 1.0 - (1.0 - params.p_det) ** n_j:
            b = 1
        t = t_total
        if params.noise_sigma_s > 0:
            jittered = t + rng.normal(0.0, params.noise_sigma_s)
            while jittered <= 0:
                jittered = t + rng.normal(0.0, params.noise_sigma_s)
            t = jittered
        data.append(RawDatum(float(t), int(b)))
    return data


def sample_device_stream(params: ModelParams, n_devices: int, seed: int) -> list[RawDatum]:
    """Raw data of ``n_devices`` model devices observed over the horizon.

    Each device repeatedly accumulates loop times, reporting with probability
    p_trans at every heart passage and resetting on success, until the horizon
    ends.  Unlike per-outcome draws this carries the same finite-duration
    censoring as a simulator run, which matters for long compound iterations
    at low transmission probability.
    """
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    rng = np.random.default_rng(seed)
    times = np.asarray(params.travel_times_s)
    probs = np.asarray(params.path_probs)
    data: list[RawDatum] = []
    for _ in range(n_devices):
        wall = 0.0
        elapsed = 0.0
        n_j = 0
        while True:
            path = rng.choice(params.n_paths, p=probs)
            wall += times[path]
            if wall > params.horizon_s:
                break
            elapsed += times[path]
            if path == params.event_path:
                n_j += 1
            if rng.random() < params.p_trans:
                b = 0
                if n_j and rng.random() < 1.0 - (1.0 - params.p_det) ** n_j:
                    b = 1
                t = elapsed
                if params.noise_sigma_s > 0:
                    jittered = t + rng.normal(0.0, params.noise_sigma_s)
                    while jittered <= 0:
                        jittered = t + rng.normal(0.0, params.noise_sigma_s)
                    t = jittered
                data.append(RawDatum(float(t), int(b)))
                elapsed = 0.0
                n_j = 0
    return data


def empirical_mse(table: DistributionTable, drawn: np.ndarray) -> float:
    """Mean squared error between empirical outcome frequencies and the table."""
    outcomes = table.sorted_outcomes()
    probs = np.array([table.entries[key] for key in outcomes])
    probs = probs / probs.sum()
    freqs = np.bincount(drawn, minlength=len(outcomes)) / len(drawn)
    return float(np.mean((freqs - probs) ** 2))


def mse_vs_count(params: ModelParams, device_counts: list[int], seed: int,
                 table: DistributionTable | None = None) -> list[tuple[int, float]]:
    """Convergence of empirical outcome frequencies with the device count."""
    if list(device_counts) != sorted(device_counts):
        raise ValueError("device counts must be ascending")
    if table is None:
        table = enumerate_distribution(params)
    outcomes = table.sorted_outcomes()
    probs = np.array([table.entries[key] for key in outcomes])
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    out = []
    for count in device_counts:
        drawn = rng.choice(len(outcomes), size=count, p=probs)
        out.append((count, empirical_mse(table, drawn)))
    return out


def params_from_graph(graph, event_region: int, p_det: float, p_trans: float,
                      noise_sigma_s: float = 1.0, horizon_s: float = 1100.0,
                      truncation_eps: float = 1e-9) -> ModelParams:
    """Model parameters for a graph with the event in ``event_region``."""
    from .vasculature import cardiovascular_paths

    paths = cardiovascular_paths(graph)
    event_idx = None
    for i, path in enumerate(paths):
        if event_region in path.region_sequence:
            if event_idx is not None:
                raise ValueError(f"region {event_region} lies on multiple paths")
            event_idx = i
    if event_idx is None:
        raise ValueError(f"region {event_region} is not on any cardiovascular path")
    return ModelParams(
        travel_times_s=tuple(p.travel_time_s for p in paths),
        path_probs=tuple(p.probability for p in paths),
        p_det=p_det,
        p_trans=p_trans,
        event_path=event_idx,
        noise_sigma_s=noise_sigma_s,
        horizon_s=horizon_s,
        truncation_eps=truncation_eps,
    )
