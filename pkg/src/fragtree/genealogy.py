"""Marginal genealogy trees with edge lengths.

A marginal tree spans the root and the leaves L_1..L_k of a trace: the leaf
L_i sits at height D_i (the death time of label i) and the branchpoint of
L_i and L_j at height D_{i,j} (their separation time), so path distances
equal D_i + D_j - 2 D_{i,j} exactly.  The root is the only vertex of
out-degree 1.

Vertices store exact heights copied verbatim from the trace; explicit edge
lengths are kept alongside for serialization (17-significant-digit decimal,
exact round trip).  Edges also carry the piecewise mass path of the tracked
lineage, which the height module uses to cut exact interval snapshots.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right

import numpy as np

from .engine import FragmentationTrace
from .errors import ParseError, ValidationError


class TreeNode:
    __slots__ = ("height", "length", "label", "children", "segments", "death_err", "parent")

    def __init__(self, height: float, length: float = 0.0, label: int | None = None,
                 children: list["TreeNode"] | None = None, segments=None, death_err: float = 0.0):
        self.height = height
        self.length = length
        self.label = label
        self.children = children if children is not None else []
        self.segments = segments  # [(birth_time, mass), ...] along the edge into this node
        self.death_err = death_err
        self.parent: TreeNode | None = None

    def is_leaf(self) -> bool:
        return not self.children

    def copy_subtree(self) -> "TreeNode":
        stack = [(self, None)]
        out = None
        while stack:
            node, par = stack.pop()
            cp = TreeNode(node.height, node.length, node.label, [],
                          None if node.segments is None else list(node.segments), node.death_err)
            cp.parent = par
            if par is None:
                out = cp
            else:
                par.children.append(cp)
            for ch in reversed(node.children):
                stack.append((ch, cp))
        return out


class EdgeTree:
    """Rooted tree with positive edge lengths; root has out-degree 1."""

    def __init__(self, root: TreeNode, alpha: float = 0.0, comp_rate: float = 0.0):
        if len(root.children) != 1:
            raise ValidationError("root must have out-degree 1")
        self.root = root
        self.alpha = alpha
        self.comp_rate = comp_rate
        relink_parents(root)
        self._check()

    def _check(self):
        for node in self.iter_nodes():
            if node is not self.root and node.length <= 0.0:
                raise ValidationError(f"edge length {node.length!r} must be positive")

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def leaves(self) -> dict[int, TreeNode]:
        out = {}
        for node in self.iter_nodes():
            if node.is_leaf():
                if node.label is None:
                    raise ValidationError("leaf without a label")
                out[node.label] = node
        return out

    def labels(self) -> list[int]:
        return sorted(self.leaves())

    def n_leaves(self) -> int:
        return sum(1 for n in self.iter_nodes() if n.is_leaf())

    def leaf_height(self, label: int) -> float:
        return self._leaf(label).height

    def _leaf(self, label: int) -> TreeNode:
        for node in self.iter_nodes():
            if node.is_leaf() and node.label == label:
                return node
        raise ValidationError(f"unknown leaf label {label}")

    def total_length(self) -> float:
        return sum(n.length for n in self.iter_nodes() if n is not self.root)

    def depths(self) -> dict[int, int]:
        d = {id(self.root): 0}
        for node in self.iter_nodes():
            for ch in node.children:
                d[id(ch)] = d[id(node)] + 1
        return d

    def lca(self, a: TreeNode, b: TreeNode) -> TreeNode:
        seen = set()
        while a is not None:
            seen.add(id(a))
            a = a.parent
        while b is not None:
            if id(b) in seen:
                return b
            b = b.parent
        raise ValidationError("nodes not in the same tree")

    def branch_height(self, i: int, j: int) -> float:
        leaves = self.leaves()
        return self.lca(leaves[i], leaves[j]).height

    def distance(self, i: int, j: int) -> float:
        """d(L_i, L_j) = ht(L_i) + ht(L_j) - 2 ht(branchpoint), exact."""
        if i == j:
            return 0.0
        leaves = self.leaves()
        return leaves[i].height + leaves[j].height - 2.0 * self.lca(leaves[i], leaves[j]).height

    def distance_matrix(self) -> tuple[list[int], np.ndarray]:
        """Pairwise leaf distances, rows/cols ordered by sorted label."""
        labels = self.labels()
        index = {lab: k for k, lab in enumerate(labels)}
        n = len(labels)
        h = np.zeros(n)
        branch = np.zeros((n, n))
        # iterative post-order collecting leaf index groups
        order = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(node.children)
        groups: dict[int, np.ndarray] = {}
        for node in reversed(order):
            if node.is_leaf():
                k = index[node.label]
                h[k] = node.height
                groups[id(node)] = np.array([k], dtype=np.intp)
            else:
                kid_groups = [groups.pop(id(ch)) for ch in node.children]
                for a in range(len(kid_groups)):
                    for b in range(a + 1, len(kid_groups)):
                        branch[np.ix_(kid_groups[a], kid_groups[b])] = node.height
                        branch[np.ix_(kid_groups[b], kid_groups[a])] = node.height
                groups[id(node)] = np.concatenate(kid_groups)
        d = h[:, None] + h[None, :] - 2.0 * branch
        np.fill_diagonal(d, 0.0)
        return labels, d

    def edge_mass_at(self, node: TreeNode, level: float) -> float:
        """Mass of the lineage along the edge into ``node`` at the given height."""
        if node.segments is None:
            raise ValidationError("tree carries no mass paths")
        starts = [t for t, _ in node.segments]
        k = bisect_right(starts, level) - 1
        if k < 0:
            raise ValidationError(f"level {level} below the edge into this node")
        t0, m0 = node.segments[k]
        return _segment_mass(m0, t0, level, self.alpha, self.comp_rate)

    def equals(self, other: "EdgeTree") -> bool:
        """Exact structural equality: topology, labels, heights, lengths."""

        def eq(a: TreeNode, b: TreeNode) -> bool:
            if (a.height != b.height or a.length != b.length or a.label != b.label
                    or len(a.children) != len(b.children)):
                return False
            return all(eq(x, y) for x, y in zip(a.children, b.children))

        return eq(self.root, other.root)

    # --- serialization ---------------------------------------------------------

    def to_newick(self) -> str:
        def fmt(node: TreeNode) -> str:
            if node.is_leaf():
                return f"L{node.label}:{node.length:.17g}"
            inner = ",".join(fmt(ch) for ch in node.children)
            return f"({inner}):{node.length:.17g}"

        inner = ",".join(fmt(ch) for ch in self.root.children)
        return f"({inner})root;"

    def to_dict(self) -> dict:
        def enc(node: TreeNode) -> dict:
            d = {"height": node.height, "length": node.length}
            if node.label is not None:
                d["label"] = node.label
            if node.death_err:
                d["death_err"] = node.death_err
            if node.segments is not None:
                d["mass_path"] = [[t, m] for t, m in node.segments]
            if node.children:
                d["children"] = [enc(ch) for ch in node.children]
            return d

        return {"format": "fragtree-edge-tree", "alpha": self.alpha,
                "comp_rate": self.comp_rate, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, d: dict) -> "EdgeTree":
        if d.get("format") != "fragtree-edge-tree":
            raise ParseError("not a fragtree edge-tree object")

        def dec(obj: dict) -> TreeNode:
            node = TreeNode(obj["height"], obj.get("length", 0.0), obj.get("label"),
                            [dec(ch) for ch in obj.get("children", [])],
                            None if "mass_path" not in obj
                            else [(t, m) for t, m in obj["mass_path"]],
                            obj.get("death_err", 0.0))
            return node

        return cls(dec(d["root"]), alpha=d.get("alpha", 0.0), comp_rate=d.get("comp_rate", 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EdgeTree":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad tree JSON: {exc.msg}", position=exc.pos)


def relink_parents(root: TreeNode) -> None:
    stack = [root]
    root.parent = None
    while stack:
        node = stack.pop()
        for ch in node.children:
            ch.parent = node
            stack.append(ch)


def _segment_mass(m0: float, t0: float, t: float, alpha: float, comp: float) -> float:
    if comp == 0.0 or t <= t0:
        return m0
    if alpha == 0.0:
        return m0 * math.exp(-comp * (t - t0))
    aa = -alpha
    inner = 1.0 - aa * comp * (t - t0) / m0 ** aa
    return m0 * max(inner, 0.0) ** (1.0 / aa)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def merge(trees: list[EdgeTree], e: float) -> EdgeTree:
    """Fuse the roots of the given trees into one vertex hung below a new root.

    The fused vertex sits at height e (the new root edge length); every height
    inside the inputs shifts up by e.  Leaf labels are preserved and must be
    disjoint.
    """
    if not trees:
        raise ValidationError("merge needs at least one tree")
    if e <= 0.0:
        raise ValidationError("merge edge length must be positive")
    seen: set[int] = set()
    for t in trees:
        labs = set(t.leaves())
        if labs & seen:
            raise ValidationError(f"duplicate leaf labels {sorted(labs & seen)}")
        seen |= labs
    hub = TreeNode(height=e, length=e)
    for t in trees:
        sub = t.root.copy_subtree()
        shift_heights(sub, e)
        for ch in sub.children:
            hub.children.append(ch)
    root = TreeNode(height=0.0, children=[hub])
    return EdgeTree(root, alpha=trees[0].alpha, comp_rate=trees[0].comp_rate)


def shift_heights(node: TreeNode, delta: float) -> None:
    stack = [node]
    while stack:
        cur = stack.pop()
        cur.height += delta
        if cur.segments is not None:
            cur.segments = [(t + delta, m) for t, m in cur.segments]
        stack.extend(cur.children)


def rebase_root_edge(tree: EdgeTree, e: float) -> EdgeTree:
    """The '- e' operation: shorten the root edge by e (shift the tree down)."""
    first = tree.root.children[0]
    if e >= first.length:
        raise ValidationError(f"e={e} not smaller than the root edge length {first.length}")
    cp = tree.root.copy_subtree()
    shift_heights(cp, -e)
    cp.height = 0.0
    cp.children[0].length = first.length - e
    return EdgeTree(cp, alpha=tree.alpha, comp_rate=tree.comp_rate)


def build_marginal_tree(trace: FragmentationTrace, k: int) -> EdgeTree:
    """The marginal tree spanned by the root and leaves 1..k of a trace.

    Equivalent to the recursive construction that merges the subtrees of the
    blocks separating at each branchpoint (children ordered by least label),
    but assembled directly from the event log so that every stored height is
    the verbatim trace time.
    """
    if not 1 <= k <= trace.n:
        raise ValidationError(f"k must be in 1..{trace.n}")
    if trace.alpha >= 0:
        raise ValidationError("marginal trees need a self-similar trace (death times)")
    for lab in range(1, k + 1):
        if lab not in trace.death_times:
            raise ValidationError(f"trace lacks a death time for label {lab}")

    kids: dict[int, list[int]] = {}
    for ev in trace.events:
        kids[ev.parent] = [cfid for cfid, _ in ev.children]

    frs = trace.fragments

    def k_labels(fid: int) -> list[int]:
        return [lab for lab in frs[fid].labels if lab <= k]

    # heads of chain segments: the root plus every child created at an event
    # that scattered the tracked labels over >= 2 children
    heads: list[int] = [0]
    for ev in trace.events:
        tracked = [cfid for cfid, _ in ev.children if k_labels(cfid)]
        if len(tracked) >= 2:
            heads.extend(tracked)

    nodes: dict[int, TreeNode] = {}
    for head in sorted(heads, reverse=True):  # children heads come before parents
        segments: list[tuple[float, float]] = []
        fid = head
        while True:
            fr = frs[fid]
            segments.append((fr.birth, fr.mass))
            if fr.end_kind == "death":
                lab = k_labels(fid)[0]
                node = TreeNode(height=fr.end, label=lab, segments=segments,
                                death_err=fr.err)
                break
            if fr.end_kind != "split":
                raise ValidationError(f"lineage of labels {k_labels(fid)} is incomplete "
                                      f"({fr.end_kind})")
            tracked = [cfid for cfid in kids[fid] if k_labels(cfid)]
            if len(tracked) == 1:
                fid = tracked[0]
                continue
            ordered = sorted(tracked, key=lambda cf: min(k_labels(cf)))
            node = TreeNode(height=fr.end, segments=segments,
                            children=[nodes.pop(cf) for cf in ordered])
            break
        nodes[head] = node

    _assign_lengths(nodes[0], parent_height=0.0)
    root = TreeNode(height=0.0, children=[nodes[0]])
    return EdgeTree(root, alpha=trace.alpha, comp_rate=trace.comp_rate)


def _assign_lengths(node: TreeNode, parent_height: float) -> None:
    stack = [(node, parent_height)]
    while stack:
        cur, ph = stack.pop()
        cur.length = cur.height - ph
        for ch in cur.children:
            stack.append((ch, cur.height))


def spanned_subtree(tree: EdgeTree, leaf_labels) -> EdgeTree:
    """Subtree spanned by the root and the selected leaves.

    Non-root vertices of out-degree 1 are suppressed; the surviving edges
    concatenate the mass paths they absorb.
    """
    keep = set(leaf_labels)
    if not keep:
        raise ValidationError("need at least one leaf")
    known = set(tree.leaves())
    if not keep <= known:
        raise ValidationError(f"unknown leaf labels {sorted(keep - known)}")

    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        order.append(node)
        stack.extend(node.children)
    pruned: dict[int, TreeNode | None] = {}
    for node in reversed(order):
        if node.is_leaf():
            if node.label in keep:
                pruned[id(node)] = TreeNode(node.height, node.length, node.label, [],
                                            None if node.segments is None else list(node.segments),
                                            node.death_err)
            else:
                pruned[id(node)] = None
            continue
        kids = [pruned.pop(id(ch)) for ch in node.children]
        kids = [kkk for kkk in kids if kkk is not None]
        if node is tree.root:
            if len(kids) != 1:
                raise ValidationError("internal: root pruning failed")
            root = TreeNode(0.0, children=kids)
            pruned[id(node)] = root
            continue
        if not kids:
            pruned[id(node)] = None
        elif len(kids) == 1:
            # splice this degree-2 vertex out: absorb its edge into the child's
            child = kids[0]
            child.length = child.length + node.length
            if node.segments is not None and child.segments is not None:
                child.segments = list(node.segments) + child.segments
            pruned[id(node)] = child
        else:
            pruned[id(node)] = TreeNode(node.height, node.length, None, kids,
                                        None if node.segments is None else list(node.segments))
    return EdgeTree(pruned[id(tree.root)], alpha=tree.alpha, comp_rate=tree.comp_rate)


def stick_breaking_extend(tree: EdgeTree, trace: FragmentationTrace, new_label: int) -> EdgeTree:
    """Grow R(k) into R(k+1) by branching one new segment.

    The new leaf attaches at the height where label k+1 last shared a block
    with some label <= k, and the added segment has length D_{k+1} minus that
    height.  The result equals a fresh build for k+1 exactly.
    """
    k = max(tree.leaves())
    if new_label != k + 1:
        raise ValidationError(f"tree spans 1..{k}; the next label must be {k + 1}")
    if new_label > trace.n or new_label not in trace.death_times:
        raise ValidationError(f"trace does not cover label {new_label}")

    frs = trace.fragments
    kids: dict[int, list[int]] = {}
    for ev in trace.events:
        kids[ev.parent] = [cfid for cfid, _ in ev.children]

    # walk the lineage of the new label; remember the last fragment that still
    # held a companion <= k, and the chain the new label follows afterwards
    fid = 0
    last_shared = 0
    while True:
        fr = frs[fid]
        if fr.end_kind != "split":
            break
        fid = next(cf for cf in kids[fid] if new_label in frs[cf].labels)
        if any(lab <= k for lab in frs[fid].labels):
            last_shared = fid
    shared = frs[last_shared]
    attach_height = shared.end
    companions = [lab for lab in shared.labels if lab <= k]
    if not companions or shared.end_kind != "split":
        raise ValidationError(f"label {new_label} never separates from 1..{k} in this trace")

    # chain of the new label from the split of the shared fragment to death
    segments: list[tuple[float, float]] = []
    fid = next(cf for cf in kids[shared.fid] if new_label in frs[cf].labels)
    while True:
        fr = frs[fid]
        segments.append((fr.birth, fr.mass))
        if fr.end_kind == "death":
            death_height, death_err = fr.end, fr.err
            break
        fid = next(cf for cf in kids[fid] if new_label in frs[cf].labels)
    new_leaf = TreeNode(height=death_height, length=death_height - attach_height,
                        label=new_label, segments=segments, death_err=death_err)

    out = EdgeTree(tree.root.copy_subtree(), alpha=tree.alpha, comp_rate=tree.comp_rate)
    target = out._leaf(min(companions))
    # descend from the root toward the target leaf to the edge containing the height
    path = [target]
    while path[-1].parent is not None:
        path.append(path[-1].parent)
    path.reverse()  # root ... target
    hit = None
    for node in path:
        if node.height == attach_height:
            hit = node
            break
        if node.height > attach_height:
            hit = node
            break
    if hit is None:
        raise ValidationError("attachment height beyond the target leaf")
    if hit.height == attach_height:
        hit.children.append(new_leaf)
        new_leaf.parent = hit
    else:
        parent = hit.parent
        upper_segs = lower_segs = None
        if hit.segments is not None:
            upper_segs = [(t, m) for t, m in hit.segments if t < attach_height]
            lower_segs = [(t, m) for t, m in hit.segments if t >= attach_height]
        mid = TreeNode(height=attach_height, length=attach_height - parent.height,
                       segments=upper_segs)
        parent.children[parent.children.index(hit)] = mid
        mid.parent = parent
        hit.length = hit.height - attach_height
        hit.segments = lower_segs
        mid.children = [hit, new_leaf]
        hit.parent = mid
        new_leaf.parent = mid
    return EdgeTree(out.root, alpha=out.alpha, comp_rate=out.comp_rate)


def parse_newick(text: str) -> EdgeTree:
    """Parse the nested-parenthesis format emitted by ``to_newick``."""
    s = text.strip()
    if not s:
        raise ParseError("empty input", position=0)
    pos = 0

    def fail(msg):
        raise ParseError(msg, position=pos)

    def parse_node() -> TreeNode:
        nonlocal pos
        if pos >= len(s):
            fail("unexpected end of input")
        if s[pos] == "(":
            pos += 1
            children = [parse_node()]
            while pos < len(s) and s[pos] == ",":
                pos += 1
                children.append(parse_node())
            if pos >= len(s) or s[pos] != ")":
                fail("expected ')' or ','")
            pos += 1
            node = TreeNode(0.0, children=children)
        else:
            start = pos
            while pos < len(s) and s[pos] not in ":,();":
                pos += 1
            name = s[start:pos]
            if not (name.startswith("L") and name[1:].isdigit()):
                raise ParseError(f"bad leaf label {name!r}", position=start)
            node = TreeNode(0.0, label=int(name[1:]))
        if pos < len(s) and s[pos] == ":":
            pos += 1
            start = pos
            while pos < len(s) and s[pos] not in ",();":
                pos += 1
            try:
                node.length = float(s[start:pos])
            except ValueError:
                raise ParseError(f"bad branch length {s[start:pos]!r}", position=start)
            if node.length <= 0:
                raise ParseError("branch length must be positive", position=start)
        return node

    if s[pos] != "(":
        fail("tree must start with '('")
    pos += 1
    children = [parse_node()]
    while pos < len(s) and s[pos] == ",":
        pos += 1
        children.append(parse_node())
    if pos >= len(s) or s[pos] != ")":
        fail("expected ')'")
    pos += 1
    start = pos
    while pos < len(s) and s[pos] not in ";":
        pos += 1
    if s[start:pos] != "root":
        raise ParseError(f"expected root name 'root', got {s[start:pos]!r}", position=start)
    if pos >= len(s) or s[pos] != ";":
        fail("expected trailing ';'")
    if s[pos + 1:].strip():
        raise ParseError("trailing characters after ';'", position=pos + 1)
    root = TreeNode(0.0, children=children)

    def set_heights(node: TreeNode, h: float):
        stack = [(node, h)]
        while stack:
            cur, base = stack.pop()
            cur.height = base + cur.length
            for ch in cur.children:
                stack.append((ch, cur.height))

    for ch in root.children:
        set_heights(ch, 0.0)
    return EdgeTree(root)
