"""Verification suites: the quantitative checks behind `fragtree verify`.

Each suite returns a SuiteResult with pass/fail, human-readable detail rows,
and the tables needed to write reports.  The acceptance test module runs the
same code, so CLI runs and CI stay in lockstep.

Statistical parameters (replica counts, windows, brackets) are frozen here;
brackets derived from pilot runs are marked as such in comments and are not
to be adjusted to make a failing run pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import dislocation as dl
from . import estimators as est
from . import genealogy as gen
from . import height as hgt
from .engine import (
    FragmentationTrace,
    simulate_homogeneous,
    simulate_self_similar,
    simulate_tagged_death_times,
    tagged_log_masses,
    time_change,
)
from .errors import ConfigError

HALF_SPLIT = {"family": "discrete-atoms", "atoms": [[1.0, [0.5, 0.5]]]}


@dataclass
class SuiteResult:
    suite: str
    passed: bool
    details: list[str]
    tables: dict = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}: " + "; ".join(self.details)


def _half() -> dl.DiscreteAtoms:
    return dl.DiscreteAtoms([(1.0, (0.5, 0.5))])


# ---------------------------------------------------------------------------
# 1. Exact distance identity
# ---------------------------------------------------------------------------


def suite_distance(seed: int = 1, n_traces: int = 1000, k: int = 8) -> SuiteResult:
    """d(L_i, L_j) == D_i + D_j - 2 D_{i,j} exactly, on every pair of every trace."""
    measure = _half()
    bad = 0
    for r in range(n_traces):
        tr = simulate_self_similar(measure, alpha=-0.5, n=k, seed=seed + r, death_tol=0.01)
        tree = gen.build_marginal_tree(tr, k)
        for i in range(1, k + 1):
            if tree.leaf_height(i) != tr.death_times[i][0]:
                bad += 1
            for j in range(i + 1, k + 1):
                lhs = tree.distance(i, j)
                rhs = tr.death_times[i][0] + tr.death_times[j][0] - 2.0 * tr.pair_death(i, j)
                if lhs != rhs:
                    bad += 1
    total = n_traces * (k * (k - 1) // 2 + k)
    return SuiteResult(
        suite="distance",
        passed=bad == 0,
        details=[f"{total - bad}/{total} exact identities over {n_traces} traces (k={k})"],
    )


# ---------------------------------------------------------------------------
# 2/3. Tagged Laplace exponents (plain and ground process)
# ---------------------------------------------------------------------------


def suite_laplace(seed: int = 2, n_paths: int = 100_000,
                  measure: dl.DislocationMeasure | None = None,
                  q_grid=(0.5, 1.0, 2.0), t_grid=(0.5, 1.0),
                  grind: tuple[int, float] | None = None,
                  eps: float | None = None) -> SuiteResult:
    """Empirical E[exp(-q xi_t)] against the calculator exponent, |z| < 3."""
    if measure is None:
        measure = _half()
    xi = tagged_log_masses(measure, t_grid, n_paths, seed, eps=eps, grind=grind)
    if grind is not None:
        phi = lambda q: dl.phi_xi(measure, grind[0], grind[1], q).value
    else:
        comp = measure.drop_rate(eps) if eps is not None else 0.0
        phi = lambda q: measure.tagged_exponent(q, eps=eps).value + comp * q
    z = est.laplace_check(xi, t_grid, phi, q_grid)
    zmax = float(np.abs(z).max())
    return SuiteResult(
        suite="laplace" if grind is None else "grind",
        passed=zmax < 3.0,
        details=[f"max|z| = {zmax:.2f} over {len(q_grid)}x{len(t_grid)} cells, "
                 f"{n_paths} paths"],
        tables={"q_grid": list(q_grid), "t_grid": list(t_grid), "z": z},
    )


def suite_grind(seed: int = 3, n_paths: int = 100_000) -> SuiteResult:
    """Ground process of nu = delta_(0.6,0.4) with N=2, eps=0.2.

    Checks the calculator value phi_xi(1) = 0.48 (exactly, to float round-off)
    and the Monte Carlo Laplace transform of the surviving line.
    """
    measure = dl.DiscreteAtoms([(1.0, (0.6, 0.4))])
    val = dl.phi_xi(measure, 2, 0.2, 1.0).value
    calc_ok = abs(val - 0.48) < 1e-12
    res = suite_laplace(seed=seed, n_paths=n_paths, measure=measure, grind=(2, 0.2))
    details = [f"phi_xi(1) = {val!r} (expect 0.48)"] + res.details
    res = SuiteResult(suite="grind", passed=calc_ok and res.passed, details=details,
                      tables=res.tables)
    return res


# ---------------------------------------------------------------------------
# 4. Death-time moment
# ---------------------------------------------------------------------------


def suite_death(seed: int = 4, n_runs: int = 100_000, death_tol: float = 0.01) -> SuiteResult:
    """Mean death time for nu = delta_(1/2,1/2), alpha = -1: within 1% + tol of 2."""
    measure = _half()
    d = simulate_tagged_death_times(measure, -1.0, n_runs, death_tol, seed)
    target = 2.0  # 1 / Phi(1) with Phi(1) = 1 - 2^-1 (series brute force agrees; see tests)
    tol = 0.01 * target + death_tol
    err = abs(float(d.mean()) - target)
    return SuiteResult(
        suite="death",
        passed=err < tol,
        details=[f"mean D1 = {d.mean():.4f}, target 2.0, |err| = {err:.4f} < {tol:.4f}"],
    )


# ---------------------------------------------------------------------------
# 5. Two-route equivalence
# ---------------------------------------------------------------------------


def suite_tworoute(seed: int = 5, n_runs: int = 10_000, alpha: float = -1.0,
                   death_tol: float = 0.01) -> SuiteResult:
    """D1 law: time-changed homogeneous trace vs direct self-similar simulation."""
    measure = _half()
    d_change = np.empty(n_runs)
    d_direct = np.empty(n_runs)
    for r in range(n_runs):
        hom = simulate_homogeneous(measure, 1, seed + r, alpha_target=alpha, death_tol=death_tol)
        d_change[r] = time_change(hom, alpha).death_times[1][0]
        tr = simulate_self_similar(measure, alpha, 1, seed + 500_000 + r, death_tol=death_tol)
        d_direct[r] = tr.death_times[1][0]
    ks = stats.ks_2samp(d_change, d_direct)
    return SuiteResult(
        suite="tworoute",
        passed=ks.pvalue > 0.01,
        details=[f"KS p = {ks.pvalue:.3f} (stat {ks.statistic:.4f}) on {n_runs}+{n_runs} runs"],
    )


# ---------------------------------------------------------------------------
# 6. Consistency of marginals
# ---------------------------------------------------------------------------


def suite_consistency(seed: int = 6, n_runs: int = 10_000, death_tol: float = 0.01) -> SuiteResult:
    """Total length of a 2-leaf spanned subtree of R(5) vs total length of R(2)."""
    measure = _half()
    len_sub = np.empty(n_runs)
    len_two = np.empty(n_runs)
    rng = np.random.default_rng(seed)
    for r in range(n_runs):
        tr5 = simulate_self_similar(measure, -0.5, 5, seed + r, death_tol=death_tol)
        t5 = gen.build_marginal_tree(tr5, 5)
        pick = rng.choice(np.arange(1, 6), size=2, replace=False)
        len_sub[r] = gen.spanned_subtree(t5, pick.tolist()).total_length()
        tr2 = simulate_self_similar(measure, -0.5, 2, seed + 500_000 + r, death_tol=death_tol)
        len_two[r] = gen.build_marginal_tree(tr2, 2).total_length()
    ks = stats.ks_2samp(len_sub, len_two)
    return SuiteResult(
        suite="consistency",
        passed=ks.pvalue > 0.01,
        details=[f"KS p = {ks.pvalue:.3f} (stat {ks.statistic:.4f}) on {n_runs}+{n_runs} seeds"],
    )


# ---------------------------------------------------------------------------
# 7. Hausdorff dimension of the leaf set
# ---------------------------------------------------------------------------

# Frozen from pilot runs: scale grids chosen so greedy counts stay between
# ~10 and ~k/5 (saturation excluded); 6 replicate trees pooled.  Pilot pooled
# slopes: alpha=-1/2 -> 1.80..1.85 (bracket 1.7..2.3); alpha=-1 -> 0.96..1.00
# (bracket 0.8..1.2).
DIMENSION_CONFIG = {
    -0.5: {"grid": np.geomspace(1.0, 0.14, 12), "bracket": (1.7, 2.3)},
    -1.0: {"grid": np.geomspace(0.2, 0.012, 12), "bracket": (0.8, 1.2)},
}


def suite_dimension(alpha: float, seed: int = 7, k: int = 2000, reps: int = 6,
                    death_tol: float = 0.003) -> SuiteResult:
    """Covering-number slope of R(k)'s leaf set against the 1/|alpha| target."""
    if alpha not in DIMENSION_CONFIG:
        raise ConfigError(f"no frozen dimension config for alpha={alpha}")
    cfg = DIMENSION_CONFIG[alpha]
    grid = cfg["grid"]
    measure = _half()
    logs = []
    tables = []
    for r in range(reps):
        tr = simulate_self_similar(measure, alpha, k, seed + r, death_tol=death_tol)
        tree = gen.build_marginal_tree(tr, k)
        table = est.covering_numbers(tree, grid)
        tables.append(table)
        logs.append(np.log([c for _, c in table]))
    mean_counts = np.exp(np.mean(logs, axis=0))
    pooled = [(e, c) for e, c in zip(grid, mean_counts)]
    res = stats.linregress(np.log(1.0 / grid), np.mean(logs, axis=0))
    lo, hi = cfg["bracket"]
    slope = float(res.slope)
    return SuiteResult(
        suite="dimension",
        passed=lo <= slope <= hi,
        details=[f"alpha={alpha}: slope {slope:.3f} in [{lo}, {hi}]? "
                 f"(target {1.0 / abs(alpha):.1f}, {reps} trees of {k} leaves)"],
        tables={"pooled": pooled, "slope": slope,
                "stderr": float(res.stderr), "window": (float(grid[-1]), float(grid[0]))},
    )


# ---------------------------------------------------------------------------
# 8. Interval lengths == fragment masses
# ---------------------------------------------------------------------------


def suite_interval(seed: int = 8, n_traces: int = 1000, n_labels: int = 6) -> SuiteResult:
    """Lemma of ranked equality: interval snapshot == tracked masses, exactly."""
    measure = _half()
    bad = 0
    n_levels = 0
    for r in range(n_traces):
        tr = simulate_self_similar(measure, -0.5, n_labels, seed + r, death_tol=0.01)
        tree = gen.build_marginal_tree(tr, n_labels)
        pt = hgt.randomize_orders(tree, np.random.default_rng(seed + 10_000 + r))
        times = sorted(ev.time for ev in tr.events)[:12]
        levels = [0.0]
        for t in times:
            levels += [t - 1e-9, t, t + 1e-9]
        checks = hgt.ranked_lengths_equal_masses(pt, tr, levels)
        n_levels += len(checks)
        bad += sum(0 if c.equal else 1 for c in checks)
    return SuiteResult(
        suite="interval",
        passed=bad == 0,
        details=[f"{n_levels - bad}/{n_levels} exact level checks over {n_traces} traces"],
    )


# ---------------------------------------------------------------------------
# 9. Stable-tree split-measure tail
# ---------------------------------------------------------------------------


def suite_tail(beta: float, seed: int = 9, n_samples: int = 100_000,
               delta: float = 1e-4, window=(1e-3, 1e-1)) -> SuiteResult:
    """Weighted tail slope of 1 - s1 under the stable split sampler: 1/beta - 1 +- 0.1."""
    from .engine import _batch_rng

    m = dl.StableTree(beta, delta)
    vals, wts = [], []
    done, bi = 0, 0
    while done < n_samples:
        bs = min(2000, n_samples - done)
        v, w = m.sample_tail_batch(_batch_rng(seed, 40_000 + bi), bs)
        vals.append(v)
        wts.append(w)
        done += bs
        bi += 1
    values = np.concatenate(vals)
    weights = np.concatenate(wts)
    rep = est.tail_exponent(values, weights, window)
    target = 1.0 / beta - 1.0
    err = abs(rep.slope - target)
    return SuiteResult(
        suite="tail",
        passed=err <= 0.1,
        details=[f"beta={beta}: slope {rep.slope:.4f}, target {target:.4f}, |err| = {err:.4f} <= 0.1"],
        tables={"report": rep, "values": values, "weights": weights},
    )


# ---------------------------------------------------------------------------
# 10. Holder exponent of the height sample
# ---------------------------------------------------------------------------

# Frozen from pilot runs: eps = 0.0025 (readings increase toward the
# Brownian-calibrated value ~0.42 as eps decreases), compensation on, 8
# replicate trees pooled, scales 0.01..0.12.  The max-based structure
# function carries a logarithmic downward bias at desk scales (synthetic
# Brownian paths with true exponent 0.5 read ~0.42 through the same
# estimator), so readings sit in the lower half of the bracket.
HOLDER_CONFIG = {
    "theta": 0.5,
    "alpha": -0.75,
    "k": 10_000,
    "eps": 0.0025,
    "death_tol": 0.005,
    "reps": 8,
    "scales": np.geomspace(0.01, 0.12, 10),
}


def suite_holder(seed: int = 10) -> SuiteResult:
    """Height-sample Holder estimate for theta=0.5, alpha=-0.75: 0.5 +- 0.15."""
    cfg = HOLDER_CONFIG
    measure = dl.BinaryDensity(cfg["theta"])
    target = min(cfg["theta"], abs(cfg["alpha"]))
    logs = []
    for r in range(cfg["reps"]):
        tr = simulate_self_similar(measure, cfg["alpha"], cfg["k"], seed + r,
                                   death_tol=cfg["death_tol"], eps=cfg["eps"])
        tree = gen.build_marginal_tree(tr, cfg["k"])
        pt = hgt.randomize_orders(tree, np.random.default_rng(seed + 5000 + r))
        hs = hgt.leaf_positions(pt)
        logs.append(np.log([m for _, m in est.structure_function(hs, cfg["scales"])]))
    res = stats.linregress(np.log(cfg["scales"]), np.mean(logs, axis=0))
    slope = float(res.slope)
    err = abs(slope - target)
    table = [(float(d), float(m)) for d, m in zip(cfg["scales"], np.exp(np.mean(logs, axis=0)))]
    return SuiteResult(
        suite="holder",
        passed=err <= 0.15,
        details=[f"estimate {slope:.3f}, target {target}, |err| = {err:.3f} <= 0.15 "
                 f"({cfg['reps']} trees of {cfg['k']} leaves, eps={cfg['eps']})"],
        tables={"structure": table, "slope": slope, "stderr": float(res.stderr)},
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def run_suite(name: str, seed: int | None = None, **kwargs) -> SuiteResult:
    registry = {
        "distance": suite_distance,
        "laplace": suite_laplace,
        "grind": suite_grind,
        "death": suite_death,
        "tworoute": suite_tworoute,
        "consistency": suite_consistency,
        "interval": suite_interval,
        "holder": suite_holder,
    }
    if name == "dimension":
        alpha = kwargs.pop("alpha", -0.5)
        return suite_dimension(alpha, **({} if seed is None else {"seed": seed}), **kwargs)
    if name == "tail":
        beta = kwargs.pop("beta", 1.5)
        return suite_tail(beta, **({} if seed is None else {"seed": seed}), **kwargs)
    if name not in registry:
        raise ConfigError(f"unknown suite {name!r}; choose from "
                          f"{sorted(registry) + ['dimension', 'tail']}")
    fn = registry[name]
    if seed is None:
        return fn(**kwargs)
    return fn(seed=seed, **kwargs)


SUITE_NAMES = ["distance", "laplace", "grind", "death", "tworoute", "consistency",
               "dimension", "interval", "tail", "holder"]
