"""Independent oracles used by the unit and acceptance tests.

Everything here deliberately avoids the library's own enumeration/DFS code
paths: the Monte-Carlo oracle simulates loop choice, detection and
transmission trial by trial, and the graph oracles enumerate paths by brute
force.
"""

from __future__ import annotations

import numpy as np


def mc_outcome_frequencies(params, trials: int, seed: int):
    """Loop-by-loop Monte-Carlo frequencies of (iteration vector, bit) outcomes.

    Returns (freqs, residual_fraction) where freqs maps (n, b) tuples to
    empirical frequency and residual_fraction counts trials whose report
    missed the horizon.
    """
    rng = np.random.default_rng(seed)
    r = params.n_paths
    times = np.asarray(params.travel_times_s)
    probs = np.asarray(params.path_probs)

    n_loops = rng.geometric(params.p_trans, size=trials)
    kmax = int(n_loops.max())
    draws = rng.choice(r, size=(trials, kmax), p=probs)
    active = np.arange(kmax)[None, :] < n_loops[:, None]

    total_time = np.where(active, times[draws], 0.0).sum(axis=1)
    reported = total_time <= params.horizon_s

    # Per-pass detection draws on the event path.
    det_draws = rng.random((trials, kmax)) < params.p_det
    passes_event = (draws == params.event_path) & active
    detected = (passes_event & det_draws).any(axis=1).astype(int)

    counts = np.stack([(draws == i) & active for i in range(r)], axis=2).sum(axis=1)

    freqs: dict[tuple[tuple[int, ...], int], float] = {}
    idx = np.flatnonzero(reported)
    for i in idx:
        key = (tuple(int(c) for c in counts[i]), int(detected[i]))
        freqs[key] = freqs.get(key, 0.0) + 1.0
    for key in freqs:
        freqs[key] /= trials
    residual = 1.0 - reported.mean()
    return freqs, residual


def total_variation(table, freqs: dict, residual: float) -> float:
    """TV distance between the enumerated table and Monte-Carlo frequencies."""
    keys = set(table.entries) | set(freqs)
    tv = sum(abs(table.entries.get(k, 0.0) - freqs.get(k, 0.0)) for k in keys)
    tv += abs(table.residual_tail - residual)
    return 0.5 * tv


def brute_force_heart_cycles(succ: dict[int, list[int]], heart: int):
    """All simple heart-to-heart cycles as node-id tuples starting at heart."""
    cycles = []

    def walk(nid, path):
        for dst in succ.get(nid, []):
            if dst == heart:
                cycles.append(tuple(path))
            elif dst not in path:
                walk(dst, path + [dst])

    walk(heart, [heart])
    return sorted(cycles)


def brute_force_path_nodes(succ: dict[int, list[int]], start: int, target: int):
    """Union of nodes over all simple directed paths start -> target."""
    nodes: set[int] = set()

    def walk(nid, path):
        if nid == target:
            nodes.update(path)
            return
        for dst in succ.get(nid, []):
            if dst not in path:
                walk(dst, path + [dst])

    walk(start, [start])
    return nodes


def set_algebra_allowed(bits: dict[int, int], covers: dict[int, set],
                        universe: set) -> set:
    """Direct transcription of the four filtering cases."""
    s1 = {a for a, b in bits.items() if b}
    s0 = {a for a, b in bits.items() if not b}
    if not s1 and not s0:
        result = set(universe)
    elif not s1:
        result = set(universe)
        for a in s0:
            result -= covers[a]
    elif not s0:
        result = set(universe)
        for a in s1:
            result &= covers[a]
    else:
        result = set(universe)
        for a in s1:
            result &= covers[a]
        for a in s0:
            result -= covers[a]
    return result if result else set(universe)
