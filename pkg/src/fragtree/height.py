"""Planar orderings, sampled height functions, and interval snapshots.

A planar tree is a marginal tree whose child lists carry a left-to-right
order.  Listing its leaves in planar order at positions (rank - 1/2)/k and
plotting their heights gives a finite sample of the height function encoding
the genealogy: super-level cuts of the tree reproduce the fragmentation's
interval representation, with interval lengths equal to exact fragment
masses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import FragmentationTrace
from .errors import ValidationError
from .genealogy import EdgeTree, TreeNode, relink_parents


class PlanarTree(EdgeTree):
    """An EdgeTree whose child lists are read as the planar order."""


def randomize_orders(tree: EdgeTree, rng: np.random.Generator) -> PlanarTree:
    """Independent uniform random order on each vertex's children."""
    root = tree.root.copy_subtree()
    stack = [root]
    while stack:
        node = stack.pop()
        if len(node.children) > 1:
            perm = rng.permutation(len(node.children))
            node.children = [node.children[i] for i in perm]
        stack.extend(node.children)
    return PlanarTree(root, alpha=tree.alpha, comp_rate=tree.comp_rate)


def reverse_orders(tree: PlanarTree) -> PlanarTree:
    """Mirror image: every child list reversed."""
    root = tree.root.copy_subtree()
    stack = [root]
    while stack:
        node = stack.pop()
        node.children = node.children[::-1]
        stack.extend(node.children)
    return PlanarTree(root, alpha=tree.alpha, comp_rate=tree.comp_rate)


@dataclass
class HeightSample:
    """Finite sample of the height function at planar leaf positions.

    ``u`` is strictly increasing (midpoint ranks (i - 1/2)/k); ``h`` the leaf
    heights; ``mass`` the terminal lineage masses; ``gap_lower`` the height of
    the branchpoint between consecutive planar leaves (the lower envelope of
    the height function between samples).  ``resolution`` records k.
    """

    u: np.ndarray
    h: np.ndarray
    mass: np.ndarray
    gap_lower: np.ndarray
    labels: list[int]
    resolution: int

    def export_text(self) -> str:
        lines = ["# u\th\tmass"]
        for u, h, m in zip(self.u, self.h, self.mass):
            lines.append(f"{u:.17g}\t{h:.17g}\t{m:.17g}")
        return "\n".join(lines) + "\n"


def _planar_walk(tree: EdgeTree):
    """Yield ('leaf', node) and ('gap', height) records in planar order."""
    stack = [(tree.root, 0)]
    while stack:
        node, i = stack.pop()
        if node.is_leaf():
            yield "leaf", node
            continue
        if i < len(node.children):
            if i > 0:
                yield "gap", node.height
            stack.append((node, i + 1))
            stack.append((node.children[i], 0))


def leaf_positions(tree: PlanarTree) -> HeightSample:
    """Midpoint-rank positions: u_i = (rank - 1/2)/k, h_i = leaf height.

    Ranks stand in for the almost-sure limiting positions of the leaves; the
    approximation error at finite k is not quantified, so the resolution is
    attached to the sample.
    """
    leaves: list[TreeNode] = []
    gaps: list[float] = []
    for kind, val in _planar_walk(tree):
        if kind == "leaf":
            leaves.append(val)
        else:
            gaps.append(val)
    k = len(leaves)
    u = (np.arange(1, k + 1) - 0.5) / k
    h = np.array([lf.height for lf in leaves])
    mass = np.array([lf.segments[-1][1] if lf.segments else np.nan for lf in leaves])
    return HeightSample(u=u, h=h, mass=mass, gap_lower=np.array(gaps),
                        labels=[lf.label for lf in leaves], resolution=k)


def mass_weighted_positions(tree: PlanarTree, rng: np.random.Generator) -> HeightSample:
    """Alternative placement: u_i from the exact nested interval structure.

    Each subtree occupies a slot of width equal to its exact birth mass inside
    its parent's slot (planar order); mass dropped at a split opens a gap,
    interleaved at a uniformly random slot boundary.  Leaves sit at the
    midpoint of their terminal interval, so window widths in u are exact
    masses rather than leaf counts.
    """
    if tree.root.children[0].segments is None:
        raise ValidationError("tree carries no mass paths")
    us: list[float] = []
    hs: list[float] = []
    masses: list[float] = []
    labels: list[int] = []
    gaps: list[float] = []
    for kind, val in _planar_walk(tree):
        if kind == "gap":
            gaps.append(val)
    stack: list[tuple[TreeNode, float]] = [(tree.root.children[0], 0.0)]
    while stack:
        node, left = stack.pop()
        if node.is_leaf():
            term = node.segments[-1][1]
            us.append(left + 0.5 * term)
            hs.append(node.height)
            masses.append(term)
            labels.append(node.label)
            continue
        kids = node.children
        widths = [c.segments[0][1] for c in kids]
        gap = max(0.0, node.segments[0][1] - sum(widths))
        gap_at = int(rng.integers(0, len(kids) + 1))
        x = left
        entries = []
        for idx, c in enumerate(kids):
            if idx == gap_at:
                x += gap
            entries.append((c, x))
            x += widths[idx]
        stack.extend(reversed(entries))
    u = np.array(us)
    if np.any(np.diff(u) <= 0):
        raise ValidationError("internal: mass-weighted positions not increasing")
    return HeightSample(u=u, h=np.array(hs), mass=np.array(masses),
                        gap_lower=np.array(gaps), labels=labels, resolution=len(us))


def _min_leaf_labels(tree: EdgeTree) -> dict[int, int]:
    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children)
    out: dict[int, int] = {}
    for node in reversed(order):
        if node.is_leaf():
            out[id(node)] = node.label
        else:
            out[id(node)] = min(out[id(ch)] for ch in node.children)
    return out


def interval_fragmentation(tree: PlanarTree, level: float) -> list[tuple[float, int]]:
    """Interval lengths of the open set {height > level}, in planar order.

    One interval per subtree crossing the level; its length is the exact mass
    of that subtree's lineage at the level.  Component ids are the least leaf
    label of the subtree.
    """
    if level < 0:
        raise ValidationError("level must be >= 0")
    min_leaf = _min_leaf_labels(tree)
    out: list[tuple[float, int]] = []
    stack = [(tree.root, 0)]
    while stack:
        node, i = stack.pop()
        if node is not tree.root and node.parent.height <= level < node.height:
            out.append((tree.edge_mass_at(node, level), min_leaf[id(node)]))
            continue  # whole subtree is above the level: exactly one interval
        if node.is_leaf():
            continue
        if i < len(node.children):
            stack.append((node, i + 1))
            stack.append((node.children[i], 0))
    return out


@dataclass(frozen=True)
class LevelCheck:
    level: float
    equal: bool
    n_intervals: int
    n_fragments: int


def ranked_lengths_equal_masses(tree: PlanarTree, trace: FragmentationTrace,
                                levels) -> list[LevelCheck]:
    """Assert ranked interval lengths == ranked tracked fragment masses, exactly.

    The tree must span all of the trace's labels (k = n) so that the tracked
    lineages coincide with the tree's edges.  Returns one check per level;
    ``equal`` is exact float equality of the sorted multisets.
    """
    if sorted(tree.leaves()) != list(range(1, trace.n + 1)):
        raise ValidationError("tree must span all labels 1..n of the trace")
    checks = []
    for level in levels:
        lengths = np.sort(np.array([ln for ln, _ in interval_fragmentation(tree, level)]))
        masses = np.sort(trace.tracked_masses_at(level))
        equal = lengths.shape == masses.shape and bool(np.all(lengths == masses))
        checks.append(LevelCheck(level=float(level), equal=equal,
                                 n_intervals=len(lengths), n_fragments=len(masses)))
    return checks
