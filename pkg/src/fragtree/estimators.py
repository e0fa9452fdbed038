"""Statistical estimators tying simulations to quantitative predictions.

Log-log regressions (covering dimension, Holder exponent, tail index) return a
RegressionReport carrying the fitted window so reports stay reproducible.
Scale windows matter: covering counts saturate below the leaf-resolution
floor and flatten above a quarter of the diameter, so the default window
policy excludes both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .errors import ValidationError
from .genealogy import EdgeTree
from .height import HeightSample

MIN_TAIL_SAMPLES = 10_000


@dataclass(frozen=True)
class RegressionReport:
    slope: float
    intercept: float
    stderr: float
    window: tuple[float, float]
    n_points: int
    flag: str | None = None


def _loglog_fit(x, y, window) -> RegressionReport:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = window
    if lo >= hi:
        raise ValidationError("window must satisfy lo < hi")
    keep = (x >= lo) & (x <= hi) & (y > 0)
    if keep.sum() < 4:
        raise ValidationError(f"need >= 4 usable points in window [{lo}, {hi}], got {int(keep.sum())}")
    res = stats.linregress(np.log(x[keep]), np.log(y[keep]))
    return RegressionReport(slope=float(res.slope), intercept=float(res.intercept),
                            stderr=float(res.stderr), window=(float(lo), float(hi)),
                            n_points=int(keep.sum()))


# ---------------------------------------------------------------------------
# Covering numbers and dimension
# ---------------------------------------------------------------------------


def covering_numbers(tree: EdgeTree, eps_grid) -> list[tuple[float, int]]:
    """Greedy ball-covering counts of the leaf set under the tree metric.

    For each eps: repeatedly pick the lowest-index uncovered leaf and cover
    every leaf within 2*eps.  The count is a 2-approximation of the minimal
    covering (exact counts are sandwiched between the minimal coverings at
    radii 2*eps and eps), which leaves log-log slopes unaffected.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid):
        raise ValidationError("eps grid must be positive")
    if any(a <= b for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValidationError("eps grid must be strictly decreasing")
    if tree.n_leaves() < 2:
        raise ValidationError("need at least 2 leaves")
    _, dmat = tree.distance_matrix()
    return [(e, greedy_ball_count(dmat, 2.0 * e)) for e in eps_grid]


def greedy_ball_count(dmat: np.ndarray, radius: float) -> int:
    n = dmat.shape[0]
    uncovered = np.ones(n, dtype=bool)
    count = 0
    while uncovered.any():
        center = int(np.argmax(uncovered))
        uncovered &= dmat[center] > radius
        count += 1
    return count


def minimal_ball_count(dmat: np.ndarray, radius: float) -> int:
    """Exhaustive minimal leaf-centered covering; only for small leaf sets."""
    n = dmat.shape[0]
    if n > 14:
        raise ValidationError("exhaustive covering limited to <= 14 leaves")
    covers = [frozenset(np.nonzero(dmat[i] <= radius)[0].tolist()) for i in range(n)]
    everything = frozenset(range(n))
    for size in range(1, n + 1):
        for centers in combinations(range(n), size):
            union = frozenset().union(*(covers[c] for c in centers))
            if union == everything:
                return size
    return n


def dimension_estimate(table, window) -> RegressionReport:
    """Least-squares slope of log N(eps) against log(1/eps) on the window."""
    eps = np.array([e for e, _ in table])
    counts = np.array([c for _, c in table], dtype=float)
    rep = _loglog_fit(1.0 / eps, counts, (1.0 / window[1], 1.0 / window[0]))
    return RegressionReport(slope=rep.slope, intercept=rep.intercept, stderr=rep.stderr,
                            window=(float(window[0]), float(window[1])), n_points=rep.n_points)


def default_dimension_window(tree: EdgeTree) -> tuple[float, float]:
    """Leaf-resolution floor (5% quantile of pairwise distance) to diameter/4."""
    _, dmat = tree.distance_matrix()
    iu = np.triu_indices(dmat.shape[0], k=1)
    pair = dmat[iu]
    return float(np.quantile(pair, 0.05)), float(pair.max() / 4.0)


# ---------------------------------------------------------------------------
# Holder exponent of the sampled height function
# ---------------------------------------------------------------------------


def structure_function(hs: HeightSample, scales) -> list[tuple[float, float]]:
    """M(delta) = max over windows of width delta of (max h - min h)."""
    h = np.asarray(hs.h, dtype=float)
    k = len(h)
    out = []
    for delta in scales:
        if not (0.0 < delta <= 1.0):
            raise ValidationError("scales must lie in (0, 1]")
        w = max(2, int(round(delta * k)))
        if w > k:
            w = k
        view = sliding_window_view(h, w)
        m = float((view.max(axis=1) - view.min(axis=1)).max())
        out.append((float(delta), m))
    return out


def holder_estimate(hs: HeightSample, scales) -> RegressionReport:
    """Slope of log M(delta) vs log delta: a Holder-exponent estimate.

    A constant sample has M == 0 at every scale and is flagged with an
    infinite slope.
    """
    if hs.resolution < 100:
        raise ValidationError("need at least 100 sample points")
    table = structure_function(hs, scales)
    ms = np.array([m for _, m in table])
    if np.all(ms == 0.0):
        return RegressionReport(slope=np.inf, intercept=-np.inf, stderr=0.0,
                                window=(min(scales), max(scales)), n_points=len(table),
                                flag="constant-sample")
    ds = np.array([d for d, _ in table])
    return _loglog_fit(ds, ms, (ds.min(), ds.max()))


# ---------------------------------------------------------------------------
# Laplace-transform checks
# ---------------------------------------------------------------------------


def laplace_check(xi: np.ndarray, t_grid, phi, q_grid) -> np.ndarray:
    """z-scores of empirical E[exp(-q xi_t)] against exp(-t Phi(q)).

    ``xi`` has one row per replica and one column per entry of ``t_grid``;
    ``phi`` maps q to the model exponent.  Returns z with shape
    (len(q_grid), len(t_grid)).
    """
    xi = np.asarray(xi, dtype=float)
    t_grid = np.asarray(list(t_grid), dtype=float)
    if xi.ndim != 2 or xi.shape[1] != len(t_grid):
        raise ValidationError("xi must be (replicas, len(t_grid))")
    n = xi.shape[0]
    z = np.empty((len(q_grid), len(t_grid)))
    for iq, q in enumerate(q_grid):
        vals = np.exp(-q * xi)
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(n)
        model = np.exp(-t_grid * phi(q))
        diff = mean - model
        with np.errstate(divide="ignore", invalid="ignore"):
            zrow = np.where(se > 0, diff / np.where(se > 0, se, 1.0),
                            np.where(np.abs(diff) < 1e-12, 0.0, np.inf))
        z[iq] = zrow
    return z


# ---------------------------------------------------------------------------
# Weighted tail regression
# ---------------------------------------------------------------------------


def tail_exponent(values, weights, window, n_x: int = 15,
                  min_samples: int = MIN_TAIL_SAMPLES) -> RegressionReport:
    """Log-log slope of the weighted empirical tail W(x) = sum w 1{v > x}."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ValidationError("values and weights must align")
    if len(values) < min_samples:
        raise ValidationError(f"need >= {min_samples} weighted samples, got {len(values)}")
    lo, hi = window
    if not (0.0 < lo < hi):
        raise ValidationError("window must satisfy 0 < lo < hi")
    if lo < values.min() or hi > values.max():
        raise ValidationError("window outside the sampled range")
    xs = np.logspace(np.log10(lo), np.log10(hi), n_x)
    order = np.argsort(values)
    v_sorted = values[order]
    w_rev_cum = np.concatenate(([0.0], np.cumsum(weights[order][::-1])))[::-1]
    idx = np.searchsorted(v_sorted, xs, side="right")
    tail = w_rev_cum[idx] / len(values)
    return _loglog_fit(xs, tail, (lo, hi))


# ---------------------------------------------------------------------------
# Mass-loss profiles
# ---------------------------------------------------------------------------


def mass_loss_profile(traces, t_grid) -> list[dict]:
    """Averaged dust brackets over traces, with Monte Carlo standard errors."""
    from .engine import dust_mass

    rows = []
    for t in t_grid:
        lows = []
        ups = []
        for tr in traces:
            lo, up = dust_mass(tr, t)
            lows.append(lo)
            ups.append(up)
        lows = np.array(lows)
        ups = np.array(ups)
        n = len(lows)
        rows.append({
            "t": float(t),
            "lower": float(lows.mean()),
            "upper": float(ups.mean()),
            "se_lower": float(lows.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
            "se_upper": float(ups.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        })
    return rows
