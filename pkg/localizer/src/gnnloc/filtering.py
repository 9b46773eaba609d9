"""Multi-anchor prediction filtering on the consumer side.

The upstream workbench ships per-anchor cover sets (regions lying on some
heart-to-anchor path).  Given binary event-presence bits for the extra
anchors, the allowed region set is the intersection of positive covers minus
the negative covers, falling back to the full region set when the algebra
empties out.  Scores outside the allowed set are clamped below the surviving
minimum so the argmax stays inside.
"""

from __future__ import annotations

from typing import Iterable, Mapping


def allowed_regions(bits: Mapping[int, int], covers: Mapping[int, Iterable[int]],
                    all_regions: Iterable[int]) -> frozenset[int]:
    universe = frozenset(all_regions)
    missing = set(bits) - set(covers)
    if missing:
        raise ValueError(f"missing cover sets for anchors {sorted(missing)}")
    result = set(universe)
    positive = [aid for aid, bit in bits.items() if bit]
    for aid in positive:
        result &= set(covers[aid])
    for aid, bit in bits.items():
        if not bit:
            result -= set(covers[aid])
    return frozenset(result) if result else universe


def clamp_scores(scores: Mapping[int, float], allowed: Iterable[int]) -> dict[int, float]:
    allowed = set(allowed)
    unknown = allowed - set(scores)
    if unknown:
        raise ValueError(f"allowed set names unknown regions {sorted(unknown)}")
    kept = [scores[r] for r in allowed] or list(scores.values())
    floor = min(kept) - 1e6
    return {region: (value if region in allowed else floor)
            for region, value in scores.items()}


def argmax_region(scores: Mapping[int, float]) -> int:
    return max(sorted(scores), key=lambda r: scores[r])
