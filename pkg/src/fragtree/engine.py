"""Event-driven exact-mass simulation of partition-valued fragmentations.

A trace tracks the fragments containing n tagged labels (tree mode), or every
fragment above a mass floor (full mode).  Each live fragment carries an
exponential clock: rate nu(S) in the homogeneous case, mass^alpha * nu(S) in
the self-similar case.  At a split the engine draws one mass sequence from the
measure and colors each tagged label independently with probabilities given
by the masses; labels sharing a color share a child.  Child masses are exact
products of the drawn factors.

Death times: once a fragment holds a single tagged label, the chain continues
until the expected remaining death time mass^|alpha| / Phi(|alpha|) drops
below ``death_tol``.  The reported death time adds that conditional mean back
(so sample means of death times are unbiased) and carries it as the
truncation-error bound.

Infinite measures are simulated through the restriction {s1 <= 1-eps}; when
``compensate`` is on, the discarded small dislocations are absorbed into a
deterministic mass decay exp(-c_eps * t) in homogeneous time, with
c_eps = int_{s1 > 1-eps} (1-s1) nu(ds).

Randomness: every fragment draws from its own counter-based stream keyed by
(seed, fragment id), so a trace is reproducible independent of event
interleaving.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dislocation import (
    BinaryDensity,
    DiscreteAtoms,
    DislocationMeasure,
    canonical_json,
    measure_from_spec,
)
from .errors import ConfigError, ValidationError
from .partitions import RankedMassSequence

TRACE_MAGIC = "#fragtrace 1 "
_PILOT_SEED = 977  # fixed: dust-lifetime pilot must not depend on the trace seed


@dataclass(slots=True)
class FragmentRecord:
    """One tracked fragment: constant mass between its birth and end events."""

    fid: int
    parent: int
    birth: float
    mass: float
    labels: tuple[int, ...]
    end: float = math.inf
    end_kind: str = "open"  # split | death | truncated | dropped | horizon
    err: float = 0.0


@dataclass(slots=True)
class SplitEvent:
    time: float
    parent: int
    split: tuple[float, ...]
    children: tuple[tuple[int, int], ...]  # (child fid, index into split)


@dataclass
class FragmentationTrace:
    alpha: float
    n: int
    seed: int
    mode: str
    measure_spec: dict
    eps: float | None
    comp_rate: float
    death_tol: float | None
    mass_floor: float
    horizon: float | None
    alpha_target: float | None
    dust_bound_factor: float
    fragments: list[FragmentRecord]
    events: list[SplitEvent]
    death_times: dict[int, tuple[float, float]] = field(default_factory=dict)

    # --- structure lookups -----------------------------------------------------

    def label_terminal(self, label: int) -> int:
        if not 1 <= label <= self.n:
            raise ValidationError(f"label {label} outside 1..{self.n}")
        if not hasattr(self, "_terminal"):
            term: dict[int, int] = {}
            for fr in self.fragments:
                if fr.end_kind in ("death", "truncated", "horizon", "open"):
                    for lab in fr.labels:
                        term[lab] = fr.fid
            self._terminal = term
        return self._terminal[label]

    def _depth(self, fid: int) -> int:
        if not hasattr(self, "_depths"):
            depths = [0] * len(self.fragments)
            for fr in self.fragments:
                if fr.parent >= 0:
                    depths[fr.fid] = depths[fr.parent] + 1
            self._depths = depths
        return self._depths[fid]

    def _lca(self, fa: int, fb: int) -> int:
        da, db = self._depth(fa), self._depth(fb)
        while da > db:
            fa = self.fragments[fa].parent
            da -= 1
        while db > da:
            fb = self.fragments[fb].parent
            db -= 1
        while fa != fb:
            fa = self.fragments[fa].parent
            fb = self.fragments[fb].parent
        return fa

    def pair_death(self, i: int, j: int) -> float:
        """First time labels i and j sit in different blocks (exact event time)."""
        if i == j:
            raise ValidationError("pair death needs two distinct labels")
        lca = self._lca(self.label_terminal(i), self.label_terminal(j))
        fr = self.fragments[lca]
        if fr.end_kind != "split":
            raise ValidationError(f"labels {i},{j} never separate in this trace")
        return fr.end

    @property
    def pair_death_times(self) -> dict[frozenset, float]:
        if self.n > 2048:
            raise ValidationError("pair_death_times map too large; use pair_death(i, j)")
        out = {}
        for i in range(1, self.n + 1):
            for j in range(i + 1, self.n + 1):
                out[frozenset((i, j))] = self.pair_death(i, j)
        return out

    def set_death(self, label: int, value: float, err: float) -> None:
        self.death_times[label] = (value, err)

    # --- mass bookkeeping --------------------------------------------------------

    def fragment_mass_at(self, fid: int, t: float) -> float:
        """Mass of fragment fid at time t (within its lifetime)."""
        fr = self.fragments[fid]
        return self.segment_mass(fr.mass, fr.birth, t)

    def segment_mass(self, m0: float, t0: float, t: float) -> float:
        """Decayed mass at t for a fragment born at t0 with mass m0."""
        c = self.comp_rate
        if c == 0.0 or t <= t0:
            return m0
        if self.alpha == 0.0:
            return m0 * math.exp(-c * (t - t0))
        aa = -self.alpha
        inner = 1.0 - aa * c * (t - t0) / m0 ** aa
        return m0 * max(inner, 0.0) ** (1.0 / aa)

    def _alive(self, fr: FragmentRecord, t: float) -> bool:
        return fr.birth <= t < fr.end

    def tracked_masses_at(self, t: float) -> np.ndarray:
        """Masses of live tracked fragments at t (unsorted)."""
        if t < 0:
            raise ValidationError("t must be >= 0")
        if self.horizon is not None and t > self.horizon:
            raise ValidationError(f"t={t} beyond simulated horizon {self.horizon}")
        out = [self.fragment_mass_at(fr.fid, t) for fr in self.fragments
               if fr.end_kind != "dropped" and self._alive(fr, t)]
        return np.array(out) if out else np.empty(0)

    def dust_lifetime_bound(self, mass: float) -> float:
        if self.alpha == 0.0:
            return math.inf
        return mass ** (-self.alpha) * self.dust_bound_factor

    # --- persistence ---------------------------------------------------------------

    def header(self) -> dict:
        from .dislocation import measure_from_spec

        return {
            "alpha": self.alpha,
            "n": self.n,
            "seed": self.seed,
            "mode": self.mode,
            "measure": self.measure_spec,
            "measure_hash": measure_from_spec(self.measure_spec).spec_hash(),
            "eps": self.eps,
            "comp_rate": self.comp_rate,
            "death_tol": self.death_tol,
            "mass_floor": self.mass_floor,
            "horizon": self.horizon,
            "alpha_target": self.alpha_target,
            "dust_bound_factor": self.dust_bound_factor,
        }

    def dumps(self) -> str:
        lines = [TRACE_MAGIC + canonical_json(self.header())]
        for fr in self.fragments:
            labs = ",".join(map(str, fr.labels)) if fr.labels else "-"
            end = "inf" if math.isinf(fr.end) else repr(fr.end)
            lines.append(
                f"F {fr.fid} {fr.parent} {fr.birth!r} {fr.mass!r} {end} {fr.end_kind} {fr.err!r} {labs}"
            )
        for ev in self.events:
            s = ",".join(repr(x) for x in ev.split)
            ch = ",".join(f"{fid}:{idx}" for fid, idx in ev.children)
            lines.append(f"E {ev.time!r} {ev.parent} {s} {ch}")
        for lab in sorted(self.death_times):
            v, e = self.death_times[lab]
            lines.append(f"D {lab} {v!r} {e!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "FragmentationTrace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(TRACE_MAGIC):
            raise ValidationError("not a fragtrace file")
        hdr = json.loads(lines[0][len(TRACE_MAGIC):])
        trace = cls(
            alpha=hdr["alpha"], n=hdr["n"], seed=hdr["seed"], mode=hdr["mode"],
            measure_spec=hdr["measure"], eps=hdr["eps"], comp_rate=hdr["comp_rate"],
            death_tol=hdr["death_tol"], mass_floor=hdr["mass_floor"],
            horizon=hdr["horizon"], alpha_target=hdr["alpha_target"],
            dust_bound_factor=hdr["dust_bound_factor"], fragments=[], events=[],
        )
        for line in lines[1:]:
            if not line:
                continue
            kind, rest = line[0], line[2:]
            if kind == "F":
                fid_s, parent_s, birth_s, mass_s, end_s, ekind, err_s, labs = rest.split(" ")
                labels = () if labs == "-" else tuple(int(x) for x in labs.split(","))
                trace.fragments.append(FragmentRecord(
                    fid=int(fid_s), parent=int(parent_s), birth=float(birth_s),
                    mass=float(mass_s), labels=labels,
                    end=math.inf if end_s == "inf" else float(end_s),
                    end_kind=ekind, err=float(err_s),
                ))
            elif kind == "E":
                time_s, parent_s, s_s, ch_s = rest.split(" ")
                split = tuple(float(x) for x in s_s.split(","))
                children = tuple(
                    (int(a), int(b)) for a, b in (p.split(":") for p in ch_s.split(","))
                )
                trace.events.append(SplitEvent(float(time_s), int(parent_s), split, children))
            elif kind == "D":
                lab_s, v_s, e_s = rest.split(" ")
                trace.death_times[int(lab_s)] = (float(v_s), float(e_s))
            else:
                raise ValidationError(f"unknown trace record {line[:20]!r}")
        return trace


def save_trace(trace: FragmentationTrace, path) -> None:
    with open(path, "w") as f:
        f.write(trace.dumps())


def load_trace(path) -> FragmentationTrace:
    with open(path) as f:
        return FragmentationTrace.loads(f.read())


# ---------------------------------------------------------------------------
# Core simulation
# ---------------------------------------------------------------------------


def _frag_rng(seed: int, fid: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed & (2 ** 64 - 1), fid], dtype=np.uint64)))


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    # separate keyspace from per-fragment streams
    return np.random.Generator(np.random.Philox(key=np.array([seed & (2 ** 64 - 1), 2 ** 63 + batch], dtype=np.uint64)))


def _effective_phi(measure: DislocationMeasure, q: float, eps: float | None, comp: float) -> float:
    rep = measure.tagged_exponent(q, eps=eps)
    if rep.divergent or not math.isfinite(rep.value):
        raise ConfigError(f"tagged exponent at q={q} is divergent; cannot bound death times")
    val = rep.value + comp * q
    if val <= 0.0:
        raise ConfigError(f"tagged exponent at q={q} is zero; cannot bound death times")
    return val


def _simulate(measure: DislocationMeasure, n: int, seed: int, *, alpha: float,
              horizon: float | None, alpha_target: float | None, death_tol: float | None,
              mode: str, mass_floor: float, eps: float | None, compensate: bool,
              ) -> FragmentationTrace:
    if n < 1:
        raise ValidationError("n must be >= 1")
    if mode not in ("tree", "full"):
        raise ValidationError(f"mode must be 'tree' or 'full', not {mode!r}")
    if alpha > 0:
        raise ValidationError("alpha must be <= 0")
    rate = measure.event_rate(eps)
    if rate <= 0:
        raise ConfigError("measure has zero split rate under this restriction")
    comp = measure.drop_rate(eps) if (compensate and eps is not None) else 0.0

    a_t = alpha if alpha < 0 else alpha_target
    phi_abs = None
    if a_t is not None:
        if death_tol is None or death_tol <= 0:
            raise ValidationError("death_tol > 0 required when a death truncation applies")
        aa = -a_t
        phi_abs = _effective_phi(measure, aa, eps, comp)
    if alpha == 0.0 and horizon is None and a_t is None:
        raise ValidationError("homogeneous simulation needs a horizon or an alpha_target")
    if alpha < 0 and horizon is not None:
        raise ValidationError("self-similar traces run to extinction; horizon unsupported")

    dust_factor = 0.0
    if alpha < 0 and mode == "full":
        dust_factor = _pilot_dust_factor(measure, alpha, eps, compensate)

    fragments: list[FragmentRecord] = []
    events: list[SplitEvent] = []
    death: dict[int, tuple[float, float]] = {}
    heap: list[tuple[float, int]] = []

    def holding(gen: np.random.Generator, mass: float, birth: float) -> float:
        e = gen.exponential()
        if alpha == 0.0:
            return e / rate
        aa = -alpha
        r0 = rate * mass ** alpha
        if comp == 0.0:
            return e / r0
        # split rate grows as the compensated mass decays: invert the hazard
        return math.log1p(aa * comp * e / r0) / (aa * comp)

    def new_fragment(parent: int, birth: float, mass: float, labels: tuple[int, ...]) -> int:
        fid = len(fragments)
        rec = FragmentRecord(fid=fid, parent=parent, birth=birth, mass=mass, labels=labels)
        fragments.append(rec)
        if len(labels) == 1 and phi_abs is not None:
            rem = mass ** (-a_t) / phi_abs
            if rem <= death_tol:
                if alpha < 0:
                    rec.end = birth + rem
                    rec.end_kind = "death"
                    rec.err = rem
                    death[labels[0]] = (rec.end, rem)
                else:
                    rec.end = birth
                    rec.end_kind = "truncated"
                    rec.err = rem  # remainder in target self-similar time
                return fid
        if not labels:
            if mode != "full":
                raise ValidationError("untagged fragments only exist in full mode")
            if mass < mass_floor:
                rec.end = birth
                rec.end_kind = "dropped"
                return fid
        gen = _frag_rng(seed, fid)
        heapq.heappush(heap, (birth + holding(gen, mass, birth), fid))
        return fid

    new_fragment(-1, 0.0, 1.0, tuple(range(1, n + 1)))

    while heap:
        t, fid = heapq.heappop(heap)
        fr = fragments[fid]
        if horizon is not None and t > horizon:
            fr.end = horizon
            fr.end_kind = "horizon"
            continue
        gen = _frag_rng(seed, fid)
        gen.exponential()  # replay the holding-time draw consumed at scheduling
        s = measure.sample_split(gen, eps)
        if not s.is_conservative:
            raise ValidationError(
                f"dust-producing split (sum={s.total!r}) — the engine only accepts conservative measures"
            )
        masses = s.masses
        parent_mass = fr.mass if comp == 0.0 else trace_stub_mass(fr, t, alpha, comp)

        groups: dict[int, list[int]] = {}
        if fr.labels:
            cum = np.cumsum(masses)
            colors = np.minimum(
                np.searchsorted(cum, gen.random(len(fr.labels)), side="right"),
                len(masses) - 1,
            )
            for color, lab in zip(colors, fr.labels):
                groups.setdefault(int(color), []).append(lab)

        child_indices = range(len(masses)) if mode == "full" else sorted(groups)
        children = []
        for idx in child_indices:
            labs = tuple(sorted(groups.get(idx, ())))
            cfid = new_fragment(fid, t, parent_mass * masses[idx], labs)
            children.append((cfid, idx))
        fr.end = t
        fr.end_kind = "split"
        events.append(SplitEvent(time=t, parent=fid, split=masses, children=tuple(children)))

    return FragmentationTrace(
        alpha=alpha, n=n, seed=seed, mode=mode, measure_spec=measure.spec(), eps=eps,
        comp_rate=comp, death_tol=death_tol, mass_floor=mass_floor, horizon=horizon,
        alpha_target=alpha_target, dust_bound_factor=dust_factor,
        fragments=fragments, events=events, death_times=death,
    )


def trace_stub_mass(fr: FragmentRecord, t: float, alpha: float, comp: float) -> float:
    """Compensated mass of a live fragment at t (used while simulating)."""
    if comp == 0.0 or t <= fr.birth:
        return fr.mass
    if alpha == 0.0:
        return fr.mass * math.exp(-comp * (t - fr.birth))
    aa = -alpha
    inner = 1.0 - aa * comp * (t - fr.birth) / fr.mass ** aa
    return fr.mass * max(inner, 0.0) ** (1.0 / aa)


def simulate_homogeneous(measure: DislocationMeasure, n: int, seed: int, *,
                         horizon: float | None = None, alpha_target: float | None = None,
                         death_tol: float | None = None, mode: str = "tree",
                         mass_floor: float = 1e-6, eps: float | None = None,
                         compensate: bool = True) -> FragmentationTrace:
    """Homogeneous (index 0) trace; give either a horizon or an alpha_target.

    With ``alpha_target`` the tagged chains are extended far enough that a
    later ``time_change`` to that index can report death times below
    ``death_tol``.
    """
    if horizon is not None and alpha_target is not None:
        raise ValidationError("horizon and alpha_target are mutually exclusive")
    if alpha_target is not None and alpha_target >= 0:
        raise ValidationError("alpha_target must be < 0")
    return _simulate(measure, n, seed, alpha=0.0, horizon=horizon, alpha_target=alpha_target,
                     death_tol=death_tol, mode=mode, mass_floor=mass_floor, eps=eps,
                     compensate=compensate)


def simulate_self_similar(measure: DislocationMeasure, alpha: float, n: int, seed: int, *,
                          death_tol: float = 0.01, mode: str = "tree",
                          mass_floor: float = 1e-6, eps: float | None = None,
                          compensate: bool = True) -> FragmentationTrace:
    """Self-similar trace with index alpha < 0, run to (truncated) extinction."""
    if alpha >= 0:
        raise ValidationError("alpha must be < 0")
    return _simulate(measure, n, seed, alpha=alpha, horizon=None, alpha_target=None,
                     death_tol=death_tol, mode=mode, mass_floor=mass_floor, eps=eps,
                     compensate=compensate)


def time_change(trace: FragmentationTrace, alpha: float) -> FragmentationTrace:
    """Map a homogeneous trace to the self-similar index alpha.

    Per tagged line the new clock is the inverse of u -> int_0^u mass(r)^|alpha| dr,
    evaluated in closed form on the piecewise-constant (or compensated) mass
    path; partitions are unchanged, only times move.
    """
    if trace.alpha != 0.0:
        raise ValidationError("time_change expects a homogeneous trace")
    if alpha >= 0:
        raise ValidationError("alpha must be < 0")
    if trace.alpha_target is not None and trace.alpha_target != alpha:
        raise ValidationError(
            f"trace was truncated for alpha={trace.alpha_target}, not {alpha}"
        )
    aa = -alpha
    c = trace.comp_rate
    measure = measure_from_spec(trace.measure_spec)
    phi_abs = None
    if trace.alpha_target is not None:
        phi_abs = _effective_phi(measure, aa, trace.eps, c)

    def interval(mass: float, du: float) -> float:
        if du <= 0.0:
            return 0.0
        if c == 0.0:
            return mass ** aa * du
        return mass ** aa * (1.0 - math.exp(-aa * c * du)) / (aa * c)

    kids: dict[int, list[int]] = {}
    for ev in trace.events:
        kids[ev.parent] = [cfid for cfid, _ in ev.children]

    n_frag = len(trace.fragments)
    new_birth = [0.0] * n_frag
    new_fragments: list[FragmentRecord] = []
    death: dict[int, tuple[float, float]] = {}
    split_time: dict[int, float] = {}
    for fr in trace.fragments:  # fid order: parents precede children
        b = new_birth[fr.fid]
        rec = FragmentRecord(fid=fr.fid, parent=fr.parent, birth=b, mass=fr.mass,
                             labels=fr.labels, end_kind=fr.end_kind, err=fr.err)
        if fr.end_kind == "split":
            rec.end = b + interval(fr.mass, fr.end - fr.birth)
            split_time[fr.fid] = rec.end
            for cfid in kids[fr.fid]:
                new_birth[cfid] = rec.end
        elif fr.end_kind == "truncated":
            if phi_abs is None:
                raise ValidationError("trace has truncated chains but no alpha_target")
            rem = fr.mass ** aa / phi_abs
            rec.end = b + rem
            rec.end_kind = "death"
            rec.err = rem
            death[fr.labels[0]] = (rec.end, rem)
        elif fr.end_kind == "dropped":
            rec.end = b
        elif fr.end_kind == "horizon":
            rec.end = b + interval(fr.mass, fr.end - fr.birth)
        new_fragments.append(rec)

    new_events = [SplitEvent(time=split_time[ev.parent], parent=ev.parent, split=ev.split,
                             children=ev.children) for ev in trace.events]
    new_events.sort(key=lambda e: (e.time, e.parent))

    dust_factor = 0.0
    if trace.mode == "full":
        dust_factor = _pilot_dust_factor(measure, alpha, trace.eps, c > 0)

    return FragmentationTrace(
        alpha=alpha, n=trace.n, seed=trace.seed, mode=trace.mode,
        measure_spec=trace.measure_spec, eps=trace.eps, comp_rate=c,
        death_tol=trace.death_tol, mass_floor=trace.mass_floor, horizon=None,
        alpha_target=None, dust_bound_factor=dust_factor,
        fragments=new_fragments, events=new_events, death_times=death,
    )


# ---------------------------------------------------------------------------
# Ranked masses and dust brackets (full mode)
# ---------------------------------------------------------------------------


def ranked_masses(trace: FragmentationTrace, t: float, mass_floor: float | None = None
                  ) -> tuple[tuple[float, ...], float]:
    """Ranked live tracked masses at t plus an unaccounted-mass bound.

    The bound covers mass lost to the floor that may still be alive at t:
    1 - sum(tracked) - dust-confirmed.
    """
    if trace.mode != "full":
        raise ValidationError("ranked_masses requires a full-mode trace")
    floor = trace.mass_floor if mass_floor is None else mass_floor
    masses = sorted((m for m in trace.tracked_masses_at(t) if m >= floor), reverse=True)
    lower, upper = dust_mass(trace, t)
    small_alive = sum(m for m in trace.tracked_masses_at(t) if m < floor)
    unaccounted = (upper - lower) + small_alive
    return tuple(masses), unaccounted


def dust_mass(trace: FragmentationTrace, t: float) -> tuple[float, float]:
    """Bracket [lower, upper] for the dust mass at t.

    upper = 1 - sum(live tracked); lower additionally treats every sub-floor
    or truncated fragment as possibly alive until its pilot lifetime bound.
    """
    if trace.mode != "full":
        raise ValidationError("dust_mass requires a full-mode trace")
    if t < 0:
        raise ValidationError("t must be >= 0")
    alive = 0.0
    possibly_alive = 0.0
    for fr in trace.fragments:
        if fr.end_kind == "dropped":
            if fr.birth <= t < fr.birth + trace.dust_lifetime_bound(fr.mass):
                possibly_alive += fr.mass
        elif trace._alive(fr, t):
            alive += trace.fragment_mass_at(fr.fid, t)
    upper = max(0.0, 1.0 - alive)
    lower = max(0.0, upper - possibly_alive)
    return lower, upper


def _pilot_dust_factor(measure: DislocationMeasure, alpha: float, eps: float | None,
                       compensate: bool, n_pilot: int = 256, quantile: float = 0.999,
                       margin: float = 3.0) -> float:
    """Empirical bound on the unit-mass extinction time used for dust brackets.

    Whole-tree extinction only has exponential tail bounds with unknown
    constants, so the factor is calibrated from tagged-line death times:
    margin * (high quantile of D for unit mass).  Heuristic by construction.
    """
    d = simulate_tagged_death_times(measure, alpha, n_pilot, death_tol=1e-3,
                                    seed=_PILOT_SEED, eps=eps)
    return margin * float(np.quantile(d, quantile))


# ---------------------------------------------------------------------------
# Tagged-line fast paths
# ---------------------------------------------------------------------------


def _size_biased_factor_batch(measure: DislocationMeasure, gen: np.random.Generator,
                              size: int, eps: float | None,
                              grind: tuple[int, float] | None) -> np.ndarray:
    """Mass factors picked up by the tagged/surviving line at split events.

    Plain mode: child chosen with probability equal to its mass (paintbox).
    Grind mode (N, eps_g): size-biased among the kept blocks only; a split
    with s1 > 1-eps_g forces the line into the largest block.
    """
    if isinstance(measure, BinaryDensity):
        u = measure.sample_u_batch(gen, size, eps)
        if grind is not None and grind[0] == 1:
            return 1.0 - u
        pick_small = gen.random(size) < u
        out = np.where(pick_small, u, 1.0 - u)
        if grind is not None:
            eps_g = grind[1]
            out = np.where(1.0 - u > 1.0 - eps_g, 1.0 - u, out)
        return out
    if isinstance(measure, DiscreteAtoms):
        idx = measure.sample_index_batch(gen, size, eps)
        max_len = measure.max_fragments()
        table = np.zeros((len(measure.atoms), max_len))
        masses = np.zeros((len(measure.atoms), max_len))
        for k, (_, s) in enumerate(measure.atoms):
            probs = np.array(s.masses)
            if grind is not None:
                n_keep, eps_g = grind
                if s[0] > 1.0 - eps_g:
                    probs = np.array([s[0]])
                else:
                    probs = probs[:n_keep]
            table[k, : len(probs)] = np.cumsum(probs / probs.sum())
            table[k, len(probs):] = 1.0
            masses[k, : len(s.masses)] = s.masses
        u = gen.random(size)
        child = (u[:, None] > table[idx]).sum(axis=1)
        return masses[idx, child]
    raise ConfigError(f"tagged-line sampling unsupported for family {measure.family}")


@dataclass
class TaggedPath:
    """Piecewise-constant path of xi_t = -log(tagged mass), homogeneous time."""

    times: np.ndarray
    jumps: np.ndarray
    drift: float
    horizon: float

    def xi_at(self, t: float) -> float:
        if not 0.0 <= t <= self.horizon:
            raise ValidationError(f"t={t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right"))
        return float(self.jumps[:k].sum()) + self.drift * t

    def mass_at(self, t: float) -> float:
        return math.exp(-self.xi_at(t))


def tagged_subordinator_path(measure: DislocationMeasure, horizon: float,
                             rng: np.random.Generator, *, eps: float | None = None,
                             grind: tuple[int, float] | None = None,
                             compensate: bool = True) -> TaggedPath:
    """Simulate the tagged-fragment subordinator over [0, horizon].

    Includes the eps-compensation drift when active.  With ``grind=(N, e)``
    the line follows the keep-N truncated process instead (size-biased among
    kept blocks).
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    rate = measure.event_rate(eps)
    drift = measure.drop_rate(eps) if (compensate and eps is not None) else 0.0
    n = int(rng.poisson(rate * horizon))
    times = np.sort(rng.random(n) * horizon)
    factors = _size_biased_factor_batch(measure, rng, n, eps, grind)
    return TaggedPath(times=times, jumps=-np.log(factors), drift=drift, horizon=horizon)


def tagged_log_masses(measure: DislocationMeasure, t_grid, n_paths: int, seed: int, *,
                      eps: float | None = None, grind: tuple[int, float] | None = None,
                      compensate: bool = True, batch: int = 50000) -> np.ndarray:
    """xi_t sampled on t_grid for n_paths independent tagged lines.

    Vectorized batches; deterministic given (seed, t_grid, n_paths).
    Returns an (n_paths, len(t_grid)) array.
    """
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    horizon = float(t_grid[-1])
    rate = measure.event_rate(eps)
    drift = measure.drop_rate(eps) if (compensate and eps is not None) else 0.0
    out = np.empty((n_paths, len(t_grid)))
    done = 0
    b = 0
    while done < n_paths:
        bs = min(batch, n_paths - done)
        gen = _batch_rng(seed, b)
        counts = gen.poisson(rate * horizon, bs)
        tot = int(counts.sum())
        path_idx = np.repeat(np.arange(bs), counts)
        times = gen.random(tot) * horizon
        loglam = -np.log(_size_biased_factor_batch(measure, gen, tot, eps, grind))
        for k, t in enumerate(t_grid):
            mask = times <= t
            out[done:done + bs, k] = np.bincount(path_idx[mask], weights=loglam[mask],
                                                 minlength=bs) + drift * t
        done += bs
        b += 1
    return out


def simulate_tagged_death_times(measure: DislocationMeasure, alpha: float, n_runs: int,
                                death_tol: float, seed: int, *, eps: float | None = None,
                                batch: int = 50000) -> np.ndarray:
    """Vectorized death times of a single tagged line at index alpha < 0.

    Same chain law and truncation rule as the engine's n=1 path: the chain
    stops once mass^|alpha| / Phi(|alpha|) <= death_tol and the conditional
    mean remainder is added back.  Uncompensated (comp drift unsupported here).
    """
    if alpha >= 0:
        raise ValidationError("alpha must be < 0")
    if death_tol <= 0:
        raise ValidationError("death_tol must be > 0")
    aa = -alpha
    rate = measure.event_rate(eps)
    phi_abs = _effective_phi(measure, aa, eps, 0.0)
    out = np.empty(n_runs)
    done = 0
    b = 0
    while done < n_runs:
        bs = min(batch, n_runs - done)
        gen = _batch_rng(seed, 2 ** 32 + b)
        mass = np.ones(bs)
        d = np.zeros(bs)
        active = mass ** aa / phi_abs > death_tol
        while active.any():
            na = int(active.sum())
            hold = gen.exponential(size=na) / (rate * mass[active] ** (-aa))
            d[active] += hold
            mass[active] *= _size_biased_factor_batch(measure, gen, na, eps, None)
            active[active] = mass[active] ** aa / phi_abs > death_tol
        d += mass ** aa / phi_abs  # unbiased mean remainder
        out[done:done + bs] = d
        done += bs
        b += 1
    return out
