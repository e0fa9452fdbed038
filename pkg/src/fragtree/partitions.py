"""Exchangeable-partition primitives.

Partitions of {1..n} are kept in the least-element indexing convention: a
block's id is the smallest label it contains.  Mass sequences are ranked
(non-increasing) with an implicit zero tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

MASS_SUM_SLACK = 1e-12
CONSERVATIVE_TOL = 1e-9


@dataclass(frozen=True)
class RankedMassSequence:
    """Non-increasing masses in (0, 1] summing to at most 1 (zero tail implied)."""

    masses: tuple[float, ...]

    def __init__(self, masses):
        masses = tuple(float(m) for m in masses if m != 0.0)
        if not masses:
            raise ValidationError("mass sequence must contain at least one positive mass")
        for m in masses:
            if not (0.0 < m <= 1.0):
                raise ValidationError(f"mass {m!r} outside (0, 1]")
        for a, b in zip(masses, masses[1:]):
            if a < b:
                raise ValidationError("masses must be non-increasing")
        if sum(masses) > 1.0 + MASS_SUM_SLACK:
            raise ValidationError(f"masses sum to {sum(masses)!r} > 1")
        object.__setattr__(self, "masses", masses)

    def __len__(self) -> int:
        return len(self.masses)

    def __getitem__(self, i: int) -> float:
        return self.masses[i] if i < len(self.masses) else 0.0

    def __iter__(self):
        return iter(self.masses)

    @property
    def total(self) -> float:
        return sum(self.masses)

    @property
    def is_conservative(self) -> bool:
        return abs(self.total - 1.0) <= CONSERVATIVE_TOL

    @property
    def dust_fraction(self) -> float:
        """Mass missing from the sequence (sent to dust)."""
        return max(0.0, 1.0 - self.total)


class RestrictedPartition:
    """A partition of {1..n}; block ids equal the least member of each block."""

    __slots__ = ("n", "block_of")

    def __init__(self, n: int, block_of: dict[int, int]):
        if n < 1:
            raise ValidationError("ground set size must be >= 1")
        if set(block_of) != set(range(1, n + 1)):
            raise ValidationError("block_of must be total on 1..n")
        members: dict[int, list[int]] = {}
        for i, b in block_of.items():
            members.setdefault(b, []).append(i)
        for b, mem in members.items():
            if b != min(mem):
                raise ValidationError(f"block id {b} is not the least member of {sorted(mem)}")
        self.n = n
        self.block_of = dict(block_of)

    @classmethod
    def from_blocks(cls, blocks) -> "RestrictedPartition":
        block_of: dict[int, int] = {}
        labels: list[int] = []
        for block in blocks:
            block = sorted(block)
            for i in block:
                block_of[i] = block[0]
            labels.extend(block)
        if not labels:
            raise ValidationError("empty partition")
        return cls(max(labels), block_of)

    def blocks(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for i in range(1, self.n + 1):
            out.setdefault(self.block_of[i], []).append(i)
        return {b: tuple(v) for b, v in sorted(out.items())}

    def block_sizes(self) -> tuple[int, ...]:
        """Block sizes sorted decreasingly (the shape of the partition)."""
        sizes = [len(v) for v in self.blocks().values()]
        return tuple(sorted(sizes, reverse=True))

    def frequencies(self) -> tuple[float, ...]:
        return tuple(s / self.n for s in self.block_sizes())

    def same_block(self, i: int, j: int) -> bool:
        return self.block_of[i] == self.block_of[j]

    def n_blocks(self) -> int:
        return len(set(self.block_of.values()))

    def canonical(self) -> tuple[int, ...]:
        """Block id of each label in order; a hashable exact encoding."""
        return tuple(self.block_of[i] for i in range(1, self.n + 1))

    def apply_permutation(self, perm: dict[int, int]) -> "RestrictedPartition":
        """Relabel by i -> perm[i]; blocks re-indexed by least element."""
        groups: dict[int, list[int]] = {}
        for i in range(1, self.n + 1):
            groups.setdefault(self.block_of[i], []).append(perm[i])
        return RestrictedPartition.from_blocks(groups.values())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RestrictedPartition)
            and self.n == other.n
            and self.block_of == other.block_of
        )

    def __hash__(self):
        return hash((self.n, self.canonical()))

    def __repr__(self):
        bl = ["{" + ",".join(map(str, b)) + "}" for b in self.blocks().values()]
        return f"RestrictedPartition({'|'.join(bl)})"


def paintbox_restricted(s: RankedMassSequence, n: int, rng: np.random.Generator) -> RestrictedPartition:
    """Color 1..n i.i.d. with P(color j) = s_j; same color => same block.

    The colorless event (probability 1 - sum(s)) isolates the label as a
    singleton.  Returned partition uses least-element indexing.
    """
    if not isinstance(s, RankedMassSequence):
        s = RankedMassSequence(s)
    if n < 1:
        raise ValidationError("n must be >= 1")
    cum = np.cumsum(s.masses)
    u = rng.random(n)
    colors = np.searchsorted(cum, u, side="right")  # == len(s) means colorless
    return partition_from_colors(colors, n_colors=len(s.masses))


def partition_from_colors(colors: np.ndarray, n_colors: int) -> RestrictedPartition:
    """Build the least-element partition from a color assignment of 1..n.

    A color index >= n_colors marks a colorless (singleton) label.
    """
    n = len(colors)
    block_of: dict[int, int] = {}
    first_seen: dict[int, int] = {}
    for i in range(1, n + 1):
        c = int(colors[i - 1])
        if c >= n_colors:
            block_of[i] = i
        elif c in first_seen:
            block_of[i] = first_seen[c]
        else:
            first_seen[c] = i
            block_of[i] = i
    return RestrictedPartition(n, block_of)


def restrict(p: RestrictedPartition, B) -> RestrictedPartition:
    """Restriction of p to B, positions renumbered 1..|B| by increasing label."""
    B = sorted(set(B))
    if not B:
        raise ValidationError("cannot restrict to the empty set")
    if B[0] < 1 or B[-1] > p.n:
        raise ValidationError(f"subset {B} not within 1..{p.n}")
    relabel = {orig: i + 1 for i, orig in enumerate(B)}
    groups: dict[int, list[int]] = {}
    for orig in B:
        groups.setdefault(p.block_of[orig], []).append(relabel[orig])
    return RestrictedPartition.from_blocks(groups.values())


def intersect(p1: RestrictedPartition, p2: RestrictedPartition) -> RestrictedPartition:
    """Common refinement: i ~ j iff i ~ j in both inputs."""
    if p1.n != p2.n:
        raise ValidationError(f"ground sets differ: {p1.n} vs {p2.n}")
    first_seen: dict[tuple[int, int], int] = {}
    block_of: dict[int, int] = {}
    for i in range(1, p1.n + 1):
        key = (p1.block_of[i], p2.block_of[i])
        if key in first_seen:
            block_of[i] = first_seen[key]
        else:
            first_seen[key] = i
            block_of[i] = i
    return RestrictedPartition(p1.n, block_of)


def size_biased_block(freqs, rng: np.random.Generator) -> int:
    """Index k with probability freqs[k] / sum(freqs)."""
    freqs = np.asarray(freqs, dtype=float)
    if len(freqs) == 0 or np.any(freqs < 0):
        raise ValidationError("freqs must be non-negative and non-empty")
    total = freqs.sum()
    if total <= 0:
        raise ValidationError("all frequencies are zero")
    cum = np.cumsum(freqs)
    return int(np.searchsorted(cum, rng.random() * total, side="right"))


def enumerate_paintbox_law(s: RankedMassSequence, n: int) -> dict[tuple[int, ...], float]:
    """Exact paintbox law on partitions of [n] by enumerating color assignments.

    Intended as a brute-force oracle for small n and few atoms; the colorless
    branch is included.  Keys are canonical block-id tuples.
    """
    k = len(s.masses)
    probs = list(s.masses) + [max(0.0, 1.0 - s.total)]
    law: dict[tuple[int, ...], float] = {}
    assignment = [0] * n

    def rec(pos: int, acc: float):
        if pos == n:
            part = partition_from_colors(np.array(assignment), n_colors=k)
            key = part.canonical()
            law[key] = law.get(key, 0.0) + acc
            return
        for c, pc in enumerate(probs):
            if pc == 0.0:
                continue
            assignment[pos] = c if c < k else k + pos  # distinct colorless ids
            rec(pos + 1, acc * pc)

    rec(0, 1.0)
    return law
