"""Self-consistency statistics over repeated judge runs.

Inputs are items-by-runs matrices (one row per item); `None` marks a
missing value so published worked examples with gaps remain computable.
The intra-item standard deviation uses the population formula (divide by
the run count): the N runs are the whole set of interest, not a sample.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

Value = float | int | str | None


class ReliabilityError(Exception):
    pass


def avg_intra_item_sd(scores: Sequence[Sequence[float]]) -> float:
    """Mean over items of the population standard deviation across runs."""
    if not scores:
        raise ReliabilityError("no items")
    sds = []
    for row in scores:
        vals = [v for v in row if v is not None]
        if len(vals) < 2:
            raise ReliabilityError("intra-item SD needs at least 2 runs per item")
        mean = sum(vals) / len(vals)
        sds.append(math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals)))
    return sum(sds) / len(sds)


def _coincidences(rows: list[list[Value]]):
    """Coincidence counts o[c][k], category totals n_c and pairable n."""
    o: dict[tuple, float] = {}
    n_c: Counter = Counter()
    n = 0
    for row in rows:
        vals = [v for v in row if v is not None]
        m = len(vals)
        if m < 2:
            continue
        n += m
        counts = Counter(vals)
        n_c.update(counts)
        for c, cnt_c in counts.items():
            for k, cnt_k in counts.items():
                pairs = cnt_c * (cnt_c - 1) if c == k else cnt_c * cnt_k
                if pairs:
                    o[(c, k)] = o.get((c, k), 0.0) + pairs / (m - 1)
    return o, n_c, n


def krippendorff_alpha(
    scores: Sequence[Sequence[Value]], metric: str = "interval"
) -> tuple[float, list[str]]:
    """Agreement coefficient alpha = 1 - D_o/D_e via the coincidence matrix.

    `metric` is "nominal" (disagreement 0/1) or "interval" (squared
    difference). Returns (alpha, flags); when the expected disagreement is
    zero (every pairable value identical) alpha is defined as 1.0 and
    flagged.
    """
    if metric == "nominal":
        delta = lambda a, b: 0.0 if a == b else 1.0
    elif metric == "interval":
        delta = lambda a, b: (float(a) - float(b)) ** 2
    else:
        raise ValueError(f"metric must be nominal or interval, got {metric!r}")

    rows = [list(r) for r in scores]
    if len(rows) < 2:
        raise ReliabilityError("alpha needs at least 2 items")
    o, n_c, n = _coincidences(rows)
    if n < 2:
        raise ReliabilityError("alpha needs at least 2 pairable values")

    d_o = sum(cnt * delta(c, k) for (c, k), cnt in o.items()) / n
    d_e = sum(
        n_c[c] * n_c[k] * delta(c, k) for c in n_c for k in n_c
    ) / (n * (n - 1))
    if d_e == 0.0:
        return 1.0, ["zero_expected_disagreement"]
    return 1.0 - d_o / d_e, []


def fleiss_kappa(categorical: Sequence[Sequence[Value]]) -> float:
    """Chance-corrected agreement over items-by-runs categorical ratings.

    Runs act as raters and ratings as categories; every item must carry the
    same number of non-missing ratings. Raises when chance agreement is 1
    (kappa undefined).
    """
    rows = [[v for v in row if v is not None] for row in categorical]
    if not rows:
        raise ReliabilityError("no items")
    n_raters = len(rows[0])
    if n_raters < 2:
        raise ReliabilityError("kappa needs at least 2 runs")
    if any(len(r) != n_raters for r in rows):
        raise ReliabilityError("every item needs the same number of ratings")

    n_items = len(rows)
    category_totals: Counter = Counter()
    p_bar_sum = 0.0
    for row in rows:
        counts = Counter(row)
        category_totals.update(counts)
        p_bar_sum += (sum(c * c for c in counts.values()) - n_raters) / (
            n_raters * (n_raters - 1)
        )
    p_bar = p_bar_sum / n_items
    total = n_items * n_raters
    p_e = sum((c / total) ** 2 for c in category_totals.values())
    if p_e >= 1.0:
        raise ReliabilityError("chance agreement is 1; kappa undefined")
    return (p_bar - p_e) / (1.0 - p_e)
