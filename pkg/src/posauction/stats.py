"""Blocked means-of-means bootstrap tests and pairwise relation classing.

A directed claim "A beats B" is tested on per-instance differences of
normalized metric values: resample the difference set with replacement,
average, repeat, and call the claim significant at level alpha when the
alpha-quantile of the resampled means is weakly above zero.  Unsolved games
enter as (lower, upper) bound intervals; a claim about A against B always
uses A's lower and B's upper bound, so no claim survives that would not
hold under the worst-case bound assignment.

Pairs are classed, strongest first, as: robustly superior (A's worst case
beats B's best case, printed with a dagger), superior up to equilibrium
selection (best vs best, median vs median, worst vs worst, all in the same
direction), spanning (one range strictly inside the other), or incomparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RELATION_KINDS = ("robust", "selection", "spans", "incomparable")

#: selection criteria order used in the (N, 3, 2) interval arrays
CRITERIA = ("min", "median", "max")


@dataclass(frozen=True)
class BootstrapResult:
    mean_of_means: float
    quantiles: dict[float, float]
    resamples: int
    significant_at: frozenset[float]


@dataclass(frozen=True)
class PairRelation:
    """Classed comparison of mechanisms A and B on one metric.

    ``direction`` is numeric: +1 means A's metric values sit above B's
    (for robust/selection), or A's range contains B's (for spans); -1 the
    opposite; 0 for incomparable.  ``stars`` is the strongest significance
    level that survived (1 = the first alpha, 2 = the second), already
    Bonferroni-adjusted by the caller.
    """

    kind: str
    direction: int
    stars: int

    def symbol(self) -> str:
        if self.kind == "incomparable":
            return "~"
        mark = {"robust": ("&ge;&dagger;", "&le;&dagger;"),
                "selection": ("&ge;", "&le;"),
                "spans": ("&supe;", "&sube;")}
        up, down = mark[self.kind]
        return up if self.direction > 0 else down

    def pretty(self) -> str:
        if self.kind == "incomparable":
            return "~"
        mark = {"robust": ("≥†", "≤†"),
                "selection": ("≥", "≤"),
                "spans": ("⊇", "⊆")}
        up, down = mark[self.kind]
        sym = up if self.direction > 0 else down
        return sym + "★" * self.stars

    def flipped(self) -> "PairRelation":
        return PairRelation(self.kind, -self.direction, self.stars)


def bonferroni(alpha: float, num_tests: int) -> float:
    """Multiple-testing correction: divide the level by the test count."""
    if num_tests < 1:
        raise ValueError("need at least one test")
    return alpha / num_tests


def _quantile(sorted_means: np.ndarray, alpha: float) -> float:
    """Order statistic at the ceiling index of alpha * resamples (1-based)."""
    r = len(sorted_means)
    idx = max(math.ceil(alpha * r), 1) - 1
    return float(sorted_means[idx])


def bootstrap_compare(diffs, resamples: int = 20_000, rng=None,
                      alphas=(0.05, 0.01)) -> BootstrapResult:
    """Means-of-means bootstrap over a per-instance difference set."""
    diffs = np.asarray(diffs, dtype=float)
    if diffs.size == 0:
        raise ValueError("empty difference set")
    if rng is None or not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    idx = rng.integers(0, diffs.size, size=(resamples, diffs.size))
    means = np.sort(diffs[idx].mean(axis=1))
    quantiles = {a: _quantile(means, a) for a in alphas}
    significant = frozenset(a for a, q in quantiles.items() if q >= 0.0)
    return BootstrapResult(float(means.mean()), quantiles, resamples, significant)


def _stars_for(diffs: np.ndarray, idx: np.ndarray, alphas) -> int:
    """0 if not significant at alphas[0]; else 1 + (significant at each
    further, stricter level).  A directed claim needs a strictly positive
    estimated difference: all-zero differences support no direction."""
    if not diffs.mean() > 0.0:
        return 0
    means = np.sort(diffs[idx].mean(axis=1))
    stars = 0
    for a in alphas:
        if _quantile(means, a) >= 0.0:
            stars += 1
        else:
            break
    return stars


def classify_pair(a, b, alphas=(0.05, 0.01), resamples: int = 20_000,
                  rng=None) -> PairRelation:
    """Class one ordered mechanism pair on one metric.

    ``a`` and ``b`` are (N, 3, 2) arrays: per instance, the min/median/max
    selection values as (lower, upper) intervals (equal bounds when the
    game was solved).  ``alphas`` must be ordered loosest first and already
    Bonferroni-adjusted.  One instance-index resample matrix is shared by
    every component test, which keeps the classification antisymmetric
    under swapping A and B.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 3 or a.shape[1:] != (3, 2):
        raise ValueError("expected aligned (N, 3, 2) interval arrays")
    if rng is None or not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n = a.shape[0]
    idx = rng.integers(0, n, size=(resamples, n))

    def beats(x_lo: np.ndarray, y_hi: np.ndarray) -> int:
        return _stars_for(x_lo - y_hi, idx, alphas)

    MIN, MED, MAX = 0, 1, 2
    LO, HI = 0, 1

    for direction, hi_side, lo_side in ((+1, a, b), (-1, b, a)):
        stars = beats(hi_side[:, MIN, LO], lo_side[:, MAX, HI])
        if stars:
            return PairRelation("robust", direction, stars)
    for direction, hi_side, lo_side in ((+1, a, b), (-1, b, a)):
        stars = min(beats(hi_side[:, c, LO], lo_side[:, c, HI])
                    for c in (MIN, MED, MAX))
        if stars:
            return PairRelation("selection", direction, stars)
    # spans: narrow side has the better worst case, wide side the better best
    for direction, wide, narrow in ((+1, a, b), (-1, b, a)):
        stars = min(beats(narrow[:, MIN, LO], wide[:, MIN, HI]),
                    beats(wide[:, MAX, LO], narrow[:, MAX, HI]))
        if stars:
            return PairRelation("spans", direction, stars)
    return PairRelation("incomparable", 0, 0)


def point_intervals(values: np.ndarray) -> np.ndarray:
    """Lift an (N, 3) min/median/max value array to solved (N, 3, 2)
    intervals."""
    values = np.asarray(values, dtype=float)
    return np.stack([values, values], axis=-1)
