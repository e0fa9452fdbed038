"""Dislocation-measure families and their characteristic exponents.

A dislocation measure nu lives on ranked mass sequences, integrates
(1 - s_1), and governs the instantaneous splits of fragments.  Four families
are provided:

* ``discrete-atoms``   -- finite weighted combination of fixed split vectors;
* ``binary-density``   -- binary splits (1-u, u) with nu(1-s1 in du) =
  u^(-1-theta) du on (0, 1/2], infinite total mass;
* ``stable-tree``      -- the measure whose splits are the normalized ranked
  jumps of a stable(1/beta) subordinator on [0,1], size-biased by the total;
  sampled with a small-jump cutoff delta plus mean compensation, carrying an
  importance weight proportional to the total.  Its overall normalization
  constant is not pinned down here, so absolute rates/exponents are
  unavailable for this family (only normalized draws and tail shapes);
* ``truncated``        -- image of a base measure under the keep-N-largest
  transform (small fragments dusted), possibly non-conservative.

Exponent calculators:

* ``tagged_exponent``: Phi(q) = int (1 - sum_i s_i^(q+1)) nu(ds), the Laplace
  exponent of -log(tagged fragment mass) in homogeneous time;
* ``phi_xi`` / ``phi_sigma``: the exponents of the surviving-line and
  pair-line subordinators of the truncated process, with the kill rate.

Divergent integrals are reported as value -inf with a ``divergent`` flag
rather than raised, since divergence is itself used as information.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError, ValidationError
from .partitions import RankedMassSequence

QUAD_EPSABS = 1e-11
QUAD_EPSREL = 1e-11


@dataclass(frozen=True)
class ExponentReport:
    """Value of a characteristic exponent at one q, with quadrature error."""

    q: float
    value: float
    error: float = 0.0
    divergent: bool = False


@dataclass(frozen=True)
class MeasureConstants:
    """nu-dependent constants controlling dimension bounds and Holder thresholds.

    ``theta_low``/``theta_up`` use the convention 0/0 for finite measures
    (their defining limits assume infinite total mass); ``finite_measure``
    flags when that convention applied.
    """

    varrho: float
    p_lower: float
    A: float
    theta_low: float
    theta_up: float
    finite_measure: bool = False


def _quad(f, lo, hi, weight=None, wvar=None):
    val, err = integrate.quad(
        f, lo, hi, weight=weight, wvar=wvar, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200
    )
    return val, err


class DislocationMeasure:
    """Common interface; families override what they support."""

    family = "abstract"

    # --- mass / rate bookkeeping -------------------------------------------------
    def total_mass(self) -> float:
        raise NotImplementedError

    def restricted_mass(self, eps: float) -> float:
        """nu(s_1 <= 1 - eps); finite for every eps in (0, 1/2) by assumption."""
        raise NotImplementedError

    def is_infinite(self) -> bool:
        return math.isinf(self.total_mass())

    def event_rate(self, eps: float | None) -> float:
        """Total split rate used by the simulation engine."""
        if self.is_infinite():
            if eps is None:
                raise ConfigError(
                    f"{self.family} has infinite total mass; an eps-restriction is required"
                )
            return self.restricted_mass(eps)
        return self.total_mass()

    def drop_rate(self, eps: float | None) -> float:
        """c_eps = int_{s1 > 1-eps} (1 - s1) nu(ds), the compensation rate."""
        raise NotImplementedError

    def frag_integral(self) -> float:
        """int (1 - s1) nu(ds); finite by definition of a dislocation measure."""
        raise NotImplementedError

    def tail(self, x: float) -> float:
        """nu(s_1 < 1 - x) for x in (0, 1)."""
        raise NotImplementedError

    @property
    def is_conservative(self) -> bool:
        raise NotImplementedError

    # --- sampling ----------------------------------------------------------------
    def sample_split(self, rng: np.random.Generator, eps: float | None = None) -> RankedMassSequence:
        """One draw from nu(. | s1 <= 1-eps) (or nu/nu(S) for finite families)."""
        raise NotImplementedError

    # --- exponents ---------------------------------------------------------------
    def tagged_exponent(self, q: float, eps: float | None = None) -> ExponentReport:
        """Phi(q) = int (1 - sum_i s_i^(q+1)) nu(ds), restricted to s1<=1-eps if given."""
        raise NotImplementedError

    # --- serialization -----------------------------------------------------------
    def spec(self) -> dict:
        raise NotImplementedError

    def spec_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.spec()).encode()).hexdigest()[:16]

    def __repr__(self):
        return f"{type(self).__name__}({self.spec()})"

    def __eq__(self, other):
        return isinstance(other, DislocationMeasure) and self.spec() == other.spec()

    def __hash__(self):
        return hash(canonical_json(self.spec()))


class DiscreteAtoms(DislocationMeasure):
    """Finite measure sum_k w_k * delta_{s^k}."""

    family = "discrete-atoms"

    def __init__(self, atoms):
        atoms = [(float(w), s if isinstance(s, RankedMassSequence) else RankedMassSequence(s)) for w, s in atoms]
        if not atoms:
            raise ValidationError("at least one atom required")
        for w, _ in atoms:
            if w <= 0:
                raise ValidationError("atom weights must be positive")
        self.atoms = atoms
        self._weights = np.array([w for w, _ in atoms])
        self._cum = np.cumsum(self._weights)

    def total_mass(self) -> float:
        return float(self._weights.sum())

    def restricted_mass(self, eps: float) -> float:
        return float(sum(w for w, s in self.atoms if s[0] <= 1.0 - eps))

    def drop_rate(self, eps: float | None) -> float:
        if eps is None:
            return 0.0
        return float(sum(w * (1.0 - s[0]) for w, s in self.atoms if s[0] > 1.0 - eps))

    def frag_integral(self) -> float:
        return float(sum(w * (1.0 - s[0]) for w, s in self.atoms))

    def tail(self, x: float) -> float:
        return float(sum(w for w, s in self.atoms if s[0] < 1.0 - x))

    @property
    def is_conservative(self) -> bool:
        return all(s.is_conservative for _, s in self.atoms)

    def max_fragments(self) -> int:
        return max(len(s) for _, s in self.atoms)

    def _eligible(self, eps):
        if eps is None:
            return list(range(len(self.atoms)))
        keep = [k for k, (w, s) in enumerate(self.atoms) if s[0] <= 1.0 - eps]
        if not keep:
            raise ConfigError(f"eps={eps} leaves no atom with s1 <= {1-eps}")
        return keep

    def sample_split(self, rng, eps=None):
        keep = self._eligible(eps)
        w = self._weights[keep]
        k = keep[int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))]
        return self.atoms[k][1]

    def sample_index_batch(self, rng, size, eps=None) -> np.ndarray:
        keep = self._eligible(eps)
        w = self._weights[keep]
        picks = np.searchsorted(np.cumsum(w), rng.random(size) * w.sum(), side="right")
        return np.asarray(keep)[picks]

    def tagged_exponent(self, q, eps=None):
        val = 0.0
        for w, s in self.atoms:
            if eps is not None and s[0] > 1.0 - eps:
                continue
            val += w * (1.0 - sum(m ** (q + 1.0) for m in s.masses))
        return ExponentReport(q=q, value=float(val))

    def spec(self) -> dict:
        return {"family": self.family, "atoms": [[w, list(s.masses)] for w, s in self.atoms]}


class BinaryDensity(DislocationMeasure):
    """Binary splits (1-u, u) with density u^(-1-theta) for the small piece.

    theta in (0, 1): infinite total mass, with nu(s1 <= 1-eps) finite for
    every eps in (0, 1/2).  All splits are conservative.
    """

    family = "binary-density"

    def __init__(self, theta: float):
        theta = float(theta)
        if not (0.0 < theta < 1.0):
            raise ValidationError(f"theta must be in (0,1), got {theta}")
        self.theta = theta

    def total_mass(self) -> float:
        return math.inf

    def restricted_mass(self, eps: float) -> float:
        self._check_eps(eps)
        t = self.theta
        return (eps ** (-t) - 2.0 ** t) / t

    def _check_eps(self, eps):
        if not (0.0 < eps < 0.5):
            raise ConfigError(f"binary-density requires eps in (0, 1/2), got {eps}")

    def drop_rate(self, eps: float | None) -> float:
        if eps is None:
            return 0.0
        self._check_eps(eps)
        t = self.theta
        return eps ** (1.0 - t) / (1.0 - t)

    def frag_integral(self) -> float:
        t = self.theta
        return 0.5 ** (1.0 - t) / (1.0 - t)

    def tail(self, x: float) -> float:
        if x >= 0.5:
            return 0.0
        t = self.theta
        return (x ** (-t) - 2.0 ** t) / t

    @property
    def is_conservative(self) -> bool:
        return True

    def sample_u(self, rng, eps) -> float:
        return float(self.sample_u_batch(rng, 1, eps)[0])

    def sample_u_batch(self, rng, size, eps) -> np.ndarray:
        """Small-piece sizes from nu(. | s1 <= 1-eps): inverse-CDF on [eps, 1/2]."""
        self._check_eps(eps)
        t = self.theta
        a, b = eps ** (-t), 2.0 ** t
        return (a - rng.random(size) * (a - b)) ** (-1.0 / t)

    def sample_split(self, rng, eps=None):
        if eps is None:
            raise ConfigError("binary-density cannot be sampled without an eps-restriction")
        u = self.sample_u(rng, eps)
        return RankedMassSequence((1.0 - u, u))

    def nu_integral(self, h, h_over_u_at_0: float, lo: float = 0.0, hi: float = 0.5):
        """int_lo^hi h(u) u^(-1-theta) du.

        For lo == 0 the integrand is rewritten as (h(u)/u) * u^(-theta) and the
        algebraic endpoint singularity is delegated to the quadrature weight;
        h(u)/u must extend continuously to 0 (value ``h_over_u_at_0``).
        """
        t = self.theta
        if lo > 0.0:
            return _quad(lambda u: h(u) * u ** (-1.0 - t), lo, hi)

        def f(u):
            return h_over_u_at_0 if u == 0.0 else h(u) / u

        return _quad(f, 0.0, hi, weight="alg", wvar=(-t, 0.0))

    def tagged_exponent(self, q, eps=None):
        t = self.theta
        if eps is None and q <= t - 1.0:
            # int u^(q-theta) du diverges at 0
            return ExponentReport(q=q, value=-math.inf, divergent=True)

        def h(u):
            return 1.0 - (1.0 - u) ** (q + 1.0) - u ** (q + 1.0)

        lo = 0.0 if eps is None else eps
        val, err = self.nu_integral(h, h_over_u_at_0=q + 1.0, lo=lo)
        return ExponentReport(q=q, value=val, error=err)

    def spec(self) -> dict:
        return {"family": self.family, "theta": self.theta}


class StableTree(DislocationMeasure):
    """Splits of the fragmentation dual to the stable(beta) tree, beta in (1,2).

    The measure is proportional to the law of the ranked normalized jumps of a
    stable(1/beta) subordinator over [0,1], size-biased by the total jump mass.
    Draws truncate jumps below ``delta`` and add back their exact expected mass
    as one aggregate pseudo-jump; each draw carries an importance weight equal
    to the (compensated) total.  The proportionality constant is not pinned
    down, so absolute rates and exponents are unavailable for this family.
    """

    family = "stable-tree"

    def __init__(self, beta: float, delta: float = 1e-4, bias_tol: float = 0.5):
        beta = float(beta)
        delta = float(delta)
        if not (1.0 < beta < 2.0):
            raise ValidationError(f"beta must be in (1,2), got {beta}")
        if delta <= 0.0:
            raise ValidationError("delta must be positive")
        self.beta = beta
        self.delta = delta
        self.bias_tol = float(bias_tol)
        if self.relative_bias_bound() > self.bias_tol:
            raise ConfigError(
                f"delta={delta} too coarse for beta={beta}: relative truncation bias "
                f"bound {self.relative_bias_bound():.3g} exceeds tolerance {self.bias_tol}"
            )

    # Levy intensity u^(-1-1/beta) du with unit constant.
    def mean_jump_count(self) -> float:
        return self.beta * self.delta ** (-1.0 / self.beta)

    def compensation_mass(self) -> float:
        """Exact expected total of sub-delta jumps over unit time."""
        b = self.beta
        return b / (b - 1.0) * self.delta ** ((b - 1.0) / b)

    def median_largest_jump(self) -> float:
        # P(largest jump < v) = exp(-beta v^(-1/beta))
        return (self.beta / math.log(2.0)) ** self.beta

    def relative_bias_bound(self) -> float:
        """Expected sub-delta mass relative to the typical total, surfaced to callers."""
        comp = self.compensation_mass()
        return comp / (self.median_largest_jump() + comp)

    def total_mass(self) -> float:
        return math.inf

    def restricted_mass(self, eps):
        raise ConfigError(
            "stable-tree normalization constant is not estimated; absolute masses/rates unavailable"
        )

    def drop_rate(self, eps):
        if eps is None:
            return 0.0
        raise ConfigError("stable-tree compensation rate unavailable (unknown normalization)")

    def frag_integral(self):
        raise ConfigError("stable-tree normalization constant is not estimated")

    def tail(self, x):
        raise ConfigError("stable-tree tail mass unavailable (unknown normalization)")

    @property
    def is_conservative(self) -> bool:
        return True  # draws are normalized by construction

    def tagged_exponent(self, q, eps=None):
        raise ConfigError("stable-tree exponents unavailable (unknown normalization)")

    def sample_tail_batch(self, rng, size) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized draws of (1 - s1, importance weight) for tail estimation."""
        counts = rng.poisson(self.mean_jump_count(), size)
        jumps = self.delta * rng.random(int(counts.sum())) ** (-self.beta)
        offsets = np.concatenate(([0], np.cumsum(counts)))[:-1].astype(np.intp)
        sums = np.add.reduceat(jumps, offsets) if len(jumps) else np.zeros(size)
        maxs = np.maximum.reduceat(jumps, offsets) if len(jumps) else np.zeros(size)
        empty = counts == 0
        sums[empty] = 0.0
        maxs[empty] = 0.0
        comp = self.compensation_mass()
        total = sums + comp
        s1 = np.maximum(maxs, comp) / total
        return 1.0 - s1, total

    def sample_weighted(self, rng) -> tuple[RankedMassSequence, float]:
        """One full ranked draw with its importance weight (the compensated total)."""
        count = int(rng.poisson(self.mean_jump_count()))
        jumps = self.delta * rng.random(count) ** (-self.beta)
        comp = self.compensation_mass()
        all_j = np.sort(np.append(jumps, comp))[::-1]
        total = float(all_j.sum())
        return RankedMassSequence(tuple(all_j / total)), total

    def sample_split(self, rng, eps=None, pool: int = 64):
        """Draw from the normalized conditional law given s1 <= 1-eps.

        Implemented by weighted resampling from a rejection pool; the pool
        size trades bias O(1/pool) for cost.  Exact w.r.t. the eps-restriction
        indicator, approximate w.r.t. the size-bias weight.
        """
        seqs: list[RankedMassSequence] = []
        weights: list[float] = []
        attempts = 0
        while len(seqs) < pool:
            attempts += 1
            if attempts > 200 * pool:
                raise ConfigError(f"eps={eps} restriction rejected nearly all stable-tree draws")
            s, w = self.sample_weighted(rng)
            if eps is not None and s[0] > 1.0 - eps:
                continue
            seqs.append(s)
            weights.append(w)
        w = np.asarray(weights)
        k = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
        return seqs[k]

    def spec(self) -> dict:
        return {"family": self.family, "beta": self.beta, "delta": self.delta}


def grind(s: RankedMassSequence, N: int, eps: float) -> RankedMassSequence:
    """Keep the N largest fragments, or only the largest when s1 > 1-eps.

    The discarded mass is dusted: the result may be non-conservative (check
    ``dust_fraction``).  Idempotent.
    """
    if not isinstance(s, RankedMassSequence):
        s = RankedMassSequence(s)
    if N < 1:
        raise ValidationError("N must be >= 1")
    if not (0.0 < eps < 1.0):
        raise ValidationError("eps must be in (0,1)")
    if s[0] > 1.0 - eps:
        return RankedMassSequence((s[0],))
    return RankedMassSequence(s.masses[:N])


class Truncated(DislocationMeasure):
    """Image of a base measure under the grind map (keep N largest / largest only).

    Non-conservative in general: the dusted mass shows up as a positive
    singleton-isolation rate, which is exactly ``tagged_exponent(0)``.
    """

    family = "truncated"

    def __init__(self, base: DislocationMeasure, N: int, eps: float):
        if isinstance(base, (Truncated, StableTree)):
            raise ConfigError(f"truncated wrapper does not support a {base.family} base")
        if N < 1:
            raise ValidationError("N must be >= 1")
        if not (0.0 < eps < 1.0):
            raise ValidationError("eps must be in (0,1)")
        self.base = base
        self.N = int(N)
        self.eps = float(eps)

    def total_mass(self):
        return self.base.total_mass()

    def restricted_mass(self, eps):
        return self.base.restricted_mass(eps)  # the grind map leaves s1 unchanged

    def drop_rate(self, eps):
        return self.base.drop_rate(eps)

    def frag_integral(self):
        return self.base.frag_integral()

    def tail(self, x):
        return self.base.tail(x)

    @property
    def is_conservative(self) -> bool:
        if isinstance(self.base, DiscreteAtoms):
            return all(grind(s, self.N, self.eps).is_conservative for _, s in self.base.atoms)
        return False  # density bases put mass on {s1 > 1-eps}, which gets dusted

    def sample_split(self, rng, eps=None):
        return grind(self.base.sample_split(rng, eps), self.N, self.eps)

    def tagged_exponent(self, q, eps=None):
        """Phi of the ground measure: int (1 - sum_{kept} s_i^(q+1)) nu(ds).

        At q = 0 this is the dusted-mass rate, i.e. the exponential rate at
        which a tagged line is isolated by the ground process.
        """
        N, e = self.N, self.eps
        if isinstance(self.base, DiscreteAtoms):
            val = 0.0
            for w, s in self.base.atoms:
                if eps is not None and s[0] > 1.0 - eps:
                    continue
                kept = grind(s, N, e)
                val += w * (1.0 - sum(m ** (q + 1.0) for m in kept.masses))
            return ExponentReport(q=q, value=float(val))
        b: BinaryDensity = self.base
        t = b.theta
        lo = 0.0 if eps is None else eps
        if N >= 2:
            if eps is None and q <= t - 1.0:
                return ExponentReport(q=q, value=-math.inf, divergent=True)

            def h(u):  # both pieces kept on {u >= eps0}, big piece only below
                if u >= e:
                    return 1.0 - (1.0 - u) ** (q + 1.0) - u ** (q + 1.0)
                return 1.0 - (1.0 - u) ** (q + 1.0)

            val, err = b.nu_integral(h, h_over_u_at_0=q + 1.0, lo=lo)
        else:

            def h(u):
                return 1.0 - (1.0 - u) ** (q + 1.0)

            val, err = b.nu_integral(h, h_over_u_at_0=q + 1.0, lo=lo)
        return ExponentReport(q=q, value=val, error=err)

    def spec(self) -> dict:
        return {"family": self.family, "base": self.base.spec(), "N": self.N, "eps": self.eps}


# ---------------------------------------------------------------------------
# Exponents of the surviving-line / pair-line subordinators of the truncated
# process.
# ---------------------------------------------------------------------------


def _kept_sum(s: RankedMassSequence, N: int) -> float:
    return sum(s.masses[:N])


def phi_xi(m: DislocationMeasure, N: int, eps: float, q: float) -> ExponentReport:
    """Laplace exponent of the surviving tagged line under keep-N truncation.

    phi_xi(q) = int [ (1-s1^q) 1{s1>1-eps}
                      + sum_{i<=N} (1-s_i^q) s_i/(s_1+..+s_N) 1{s1<=1-eps} ] nu(ds)
    """
    if N < 1 or not (0.0 < eps < 1.0):
        raise ValidationError("need N >= 1 and eps in (0,1)")
    if isinstance(m, Truncated):
        raise ConfigError("pass the base measure; N and eps define the truncation")
    if isinstance(m, DiscreteAtoms):
        val = 0.0
        for w, s in m.atoms:
            if s[0] > 1.0 - eps:
                val += w * (1.0 - s[0] ** q)
            else:
                sn = _kept_sum(s, N)
                val += w * sum((1.0 - si ** q) * si / sn for si in s.masses[:N])
        if not math.isfinite(val):
            return ExponentReport(q=q, value=-math.inf, divergent=True)
        return ExponentReport(q=q, value=float(val))
    if isinstance(m, BinaryDensity):
        # head {u < eps}: forced into the big piece, jump factor (1-u)
        def h_head(u):
            return 1.0 - (1.0 - u) ** q

        v1, e1 = m.nu_integral(h_head, h_over_u_at_0=q, lo=0.0, hi=eps)

        if N >= 2:

            def h_tail(u):  # size-biased between both kept pieces (s1+s2 = 1)
                return (1.0 - (1.0 - u) ** q) * (1.0 - u) + (1.0 - u ** q) * u

        else:

            def h_tail(u):
                return 1.0 - (1.0 - u) ** q

        v2, e2 = _quad(lambda u: h_tail(u) * u ** (-1.0 - m.theta), eps, 0.5)
        val = v1 + v2
        if not math.isfinite(val):
            return ExponentReport(q=q, value=-math.inf, divergent=True)
        return ExponentReport(q=q, value=val, error=e1 + e2)
    raise ConfigError(f"phi_xi unsupported for family {m.family}")


def phi_sigma(m: DislocationMeasure, N: int, eps: float, q: float) -> tuple[ExponentReport, float]:
    """Laplace exponent of the pair line, plus its killing rate.

    kill = int sum_{i != j <= N} s_i s_j / (s_1+..+s_N)^2 1{s1<=1-eps} nu(ds)
    phi_sigma(q) = kill + int [ (1-s1^q) 1{s1>1-eps}
                   + sum_{i<=N} (1-s_i^q) s_i^2/(s_1+..+s_N)^2 1{s1<=1-eps} ] nu(ds)
    """
    if N < 1 or not (0.0 < eps < 1.0):
        raise ValidationError("need N >= 1 and eps in (0,1)")
    if isinstance(m, Truncated):
        raise ConfigError("pass the base measure; N and eps define the truncation")
    if isinstance(m, DiscreteAtoms):
        kill = 0.0
        val = 0.0
        for w, s in m.atoms:
            if s[0] > 1.0 - eps:
                val += w * (1.0 - s[0] ** q)
            else:
                sn = _kept_sum(s, N)
                kept = s.masses[:N]
                kill += w * sum(
                    si * sj for i, si in enumerate(kept) for j, sj in enumerate(kept) if i != j
                ) / sn ** 2
                val += w * sum((1.0 - si ** q) * si ** 2 for si in kept) / sn ** 2
        rep = ExponentReport(q=q, value=float(val + kill))
        return rep, float(kill)
    if isinstance(m, BinaryDensity):
        t = m.theta
        if N >= 2:
            # kill = int_eps^{1/2} 2u(1-u) u^(-1-t) du, in closed form
            def prim(u):
                return 2.0 * (u ** (1.0 - t) / (1.0 - t) - u ** (2.0 - t) / (2.0 - t))

            kill = prim(0.5) - prim(eps)

            def h_tail(u):
                return (1.0 - (1.0 - u) ** q) * (1.0 - u) ** 2 + (1.0 - u ** q) * u ** 2

        else:
            kill = 0.0

            def h_tail(u):
                return 1.0 - (1.0 - u) ** q

        def h_head(u):
            return 1.0 - (1.0 - u) ** q

        v1, e1 = m.nu_integral(h_head, h_over_u_at_0=q, lo=0.0, hi=eps)
        v2, e2 = _quad(lambda u: h_tail(u) * u ** (-1.0 - t), eps, 0.5)
        rep = ExponentReport(q=q, value=v1 + v2 + kill, error=e1 + e2)
        return rep, float(kill)
    raise ConfigError(f"phi_sigma unsupported for family {m.family}")


def tagged_exponent(m: DislocationMeasure, q: float, eps: float | None = None) -> ExponentReport:
    """Module-level alias for the measure method (spec surface)."""
    if q < -1.0:
        raise ValidationError("q must be >= -1")
    return m.tagged_exponent(q, eps=eps)


# ---------------------------------------------------------------------------
# Constants: varrho, p_lower, A, theta_low / theta_up
# ---------------------------------------------------------------------------


def scan_theta_limits(tail, b_grid=None, xs=None, factor: float = 10.0) -> tuple[float, float]:
    """Classify lim_{x->0} x^b nu(s1 < 1-x) on a b-grid by monotone trend.

    A limit counts as infinity (resp. zero) when the values grow (resp.
    shrink) monotonically by more than ``factor`` across the x-grid.
    Returns (theta_low, theta_up) = (sup of b giving infinity, inf of b
    giving zero), with 0 conventions when no b qualifies.
    """
    if b_grid is None:
        b_grid = np.round(np.arange(0.02, 2.0001, 0.02), 10)
    if xs is None:
        xs = np.logspace(-6, -1, 26)
    xs = np.asarray(xs, dtype=float)
    tails = np.array([tail(float(x)) for x in xs])
    if np.all(tails <= 0.0):
        return 0.0, 0.0
    inf_bs: list[float] = []
    zero_bs: list[float] = []
    for b in b_grid:
        v = xs ** b * tails
        small_end, large_end = v[0], v[-1]  # xs increasing: v[0] is the x->0 end
        if large_end <= 0.0:
            continue
        if small_end / large_end > factor:
            inf_bs.append(float(b))
        elif large_end / max(small_end, 1e-300) > factor:
            zero_bs.append(float(b))
    theta_low = max(inf_bs) if inf_bs else 0.0
    if zero_bs:
        tu = min(zero_bs)
        # vanishing already at the smallest probed b means the true infimum is 0
        theta_up = 0.0 if tu <= b_grid[0] + 1e-12 else tu
    else:
        theta_up = float(b_grid[-1]) if inf_bs else 0.0
    return theta_low, theta_up


def constants(m: DislocationMeasure) -> MeasureConstants:
    """Closed-form constants per family (numeric scans only where needed).

    * varrho = sup{p <= 1 : int (s1^-p - 1) nu < inf}
    * p_lower = -inf{q : Phi(q) > -inf}, clipped to [0, 1]
    * A = sup{a <= 1 : int sum_{i<j} s_i^(1-a) s_j nu < inf}; equals 1 whenever
      the fragment count is bounded
    * theta_low / theta_up: thresholds of x^b nu(s1 < 1-x); 0/0 for finite
      measures (flagged), since their defining limits assume nu(S) = inf.
    """
    if isinstance(m, DiscreteAtoms):
        return MeasureConstants(varrho=1.0, p_lower=1.0, A=1.0, theta_low=0.0, theta_up=0.0,
                                finite_measure=True)
    if isinstance(m, BinaryDensity):
        t = m.theta
        return MeasureConstants(varrho=1.0, p_lower=1.0 - t, A=1.0, theta_low=t, theta_up=t)
    if isinstance(m, StableTree):
        b = m.beta
        # tail nu(1-s1 > x) ~ C x^(1/b - 1)  =>  both thresholds at 1 - 1/b;
        # s1 >= 1/2 is violated only with finite mass, largest piece dominates:
        # varrho = 1; Phi(q) finite iff sum s_i^(q+1) < inf a.s. iff q > 1/b - 1;
        # A is the a.s.-convergence threshold of sum_{i<j} s_i^(1-a) s_j.
        return MeasureConstants(varrho=1.0, p_lower=1.0 - 1.0 / b, A=1.0 - 1.0 / b,
                                theta_low=1.0 - 1.0 / b, theta_up=1.0 - 1.0 / b)
    if isinstance(m, Truncated):
        base_c = constants(m.base)
        if isinstance(m.base, DiscreteAtoms):
            return base_c
        # s1 is untouched by the grind map: varrho and the theta thresholds carry
        # over; at most N fragments survive, so A = 1; dropping the small piece
        # (N = 1) removes the divergence driving p_lower.
        p_lower = base_c.p_lower if m.N >= 2 else 1.0
        return MeasureConstants(varrho=base_c.varrho, p_lower=p_lower, A=1.0,
                                theta_low=base_c.theta_low, theta_up=base_c.theta_up)
    raise ConfigError(f"constants unsupported for family {m.family}")


def sample_stable_split(beta: float, delta: float, rng: np.random.Generator):
    """One weighted draw from the stable-tree split law (spec surface)."""
    return StableTree(beta, delta).sample_weighted(rng)


# ---------------------------------------------------------------------------
# Measure specification files
# ---------------------------------------------------------------------------


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def measure_from_spec(spec: dict) -> DislocationMeasure:
    try:
        family = spec["family"]
    except (TypeError, KeyError):
        raise ConfigError("measure spec must be an object with a 'family' key")
    if family == "discrete-atoms":
        return DiscreteAtoms([(w, RankedMassSequence(s)) for w, s in spec["atoms"]])
    if family == "binary-density":
        return BinaryDensity(spec["theta"])
    if family == "stable-tree":
        return StableTree(spec["beta"], spec.get("delta", 1e-4))
    if family == "truncated":
        return Truncated(measure_from_spec(spec["base"]), spec["N"], spec["eps"])
    raise ConfigError(f"unknown measure family {family!r}")


def load_measure(path) -> DislocationMeasure:
    with open(path) as f:
        try:
            spec = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed measure spec {path}: {exc}")
    return measure_from_spec(spec)


def save_measure(m: DislocationMeasure, path) -> None:
    with open(path, "w") as f:
        f.write(canonical_json(m.spec()))
        f.write("\n")
