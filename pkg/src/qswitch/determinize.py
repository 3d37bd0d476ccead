"""Determinization of set-valued controllers into axis-aligned decision trees.

An internal node splits the current integer cell box on one axis at an
integer threshold (left subtree: k_axis <= t); each leaf fixes one mode for
its whole region.  A region may take mode p only if no cell in it forbids p;
cells with no constraint (empty mode set under safety; unreachable or
wholly-in-target cells under reachability) accept every mode, which is what
makes the trees small.  The split rule is fixed: widest axis, lowest axis on
ties, median cell, lowest accepting mode for leaves — identical inputs give
identical trees.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError, VerificationError
from .lattice import CellRange
from .synthesis import INF_TIME, RefinedController

NODE = "N"
LEAF = "L"


@dataclass(eq=False)
class DecisionTree:
    """Preorder node list over a cell range; see module docstring for semantics."""

    cells: CellRange
    n_modes: int
    nodes: list
    _end: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("tree must have at least one node")
        if self._end is None:
            self._end = _subtree_ends(self.nodes)

    def __eq__(self, other):
        return (
            isinstance(other, DecisionTree)
            and self.cells == other.cells
            and self.n_modes == other.n_modes
            and self.nodes == other.nodes
        )

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def depth(self) -> int:
        """Longest root-to-leaf path, in internal nodes traversed."""
        best = 0
        stack = [(0, 0)]
        while stack:
            i, d = stack.pop()
            if self.nodes[i][0] == LEAF:
                best = max(best, d)
            else:
                left = i + 1
                stack.append((left, d + 1))
                stack.append((int(self._end[left]), d + 1))
        return best


def _subtree_ends(nodes) -> np.ndarray:
    """end[i] = index one past the subtree rooted at i (right child = end[i+1])."""
    end = np.empty(len(nodes), dtype=np.int64)
    for i in range(len(nodes) - 1, -1, -1):
        if nodes[i][0] == LEAF:
            end[i] = i + 1
        else:
            end[i] = end[end[i + 1]]
    return end


def lookup(tree: DecisionTree, q) -> int:
    """Mode assigned to cell q: descend comparing integer coordinates."""
    q = np.asarray(q, dtype=np.int64)
    if not tree.cells.contains(q):
        raise DomainError(f"cell {tuple(q)} outside the tree's cell range")
    i = 0
    nodes = tree.nodes
    while True:
        node = nodes[i]
        if node[0] == LEAF:
            return node[1]
        _, axis, t = node
        i = i + 1 if q[axis] <= t else int(tree._end[i + 1])


def _integral(counts: np.ndarray) -> np.ndarray:
    """Zero-padded inclusive prefix sums along every axis."""
    ii = counts.astype(np.int64)
    for ax in range(counts.ndim):
        ii = ii.cumsum(axis=ax)
    return np.pad(ii, [(1, 0)] * counts.ndim)


def _box_count(ii: np.ndarray, lo, hi) -> int:
    """Sum of the source array over the inclusive box [lo, hi] (relative coords)."""
    total = 0
    for corner in itertools.product(*[((l, -1), (h + 1, 1)) for l, h in zip(lo, hi)]):
        idx = tuple(c[0] for c in corner)
        sign = 1
        for c in corner:
            sign *= c[1]
        total += sign * int(ii[idx])
    return total


def _build_tree(forbid: np.ndarray, cells: CellRange, n_modes: int) -> DecisionTree:
    """Recursive split; forbid[p] counts cells where mode p is not acceptable."""
    iis = [_integral(forbid[p]) for p in range(n_modes)]
    nodes: list = []

    def walk(lo: np.ndarray, hi: np.ndarray) -> None:
        for p in range(n_modes):
            if _box_count(iis[p], lo, hi) == 0:
                nodes.append((LEAF, p))
                return
        ext = hi - lo
        if not ext.any():
            raise VerificationError(
                f"cell {tuple((lo + cells.kmin).tolist())} admits no mode"
            )
        axis = int(np.argmax(ext))
        t = (int(lo[axis]) + int(hi[axis])) // 2
        nodes.append((NODE, axis, t + int(cells.kmin[axis])))
        left_hi = hi.copy()
        left_hi[axis] = t
        walk(lo, left_hi)
        right_lo = lo.copy()
        right_lo[axis] = t + 1
        walk(right_lo, hi)

    walk(np.zeros(cells.n, dtype=np.int64), np.array(cells.shape, dtype=np.int64) - 1)
    return DecisionTree(cells=cells, n_modes=n_modes, nodes=nodes)


def _forbid_safety(ctrl: RefinedController) -> np.ndarray:
    grid = ctrl.k_grid()
    constrained = grid != 0
    forbid = np.empty((ctrl.n_modes,) + grid.shape, dtype=np.uint8)
    for p in range(ctrl.n_modes):
        forbid[p] = constrained & ((grid >> p) & 1 == 0)
    return forbid


def _forbid_reach(ctrl: RefinedController, target_cells) -> np.ndarray:
    grid = ctrl.k_grid()
    constrained = ctrl.j_grid() != INF_TIME
    if target_cells is not None:
        if not target_cells.issubset(ctrl.cells):
            raise ValueError("target range must lie inside the spec range")
        off = target_cells.kmin - ctrl.cells.kmin
        sl = tuple(slice(int(o), int(o + s)) for o, s in zip(off, target_cells.shape))
        constrained[sl] = False
    forbid = np.empty((ctrl.n_modes,) + grid.shape, dtype=np.uint8)
    for p in range(ctrl.n_modes):
        forbid[p] = constrained & ((grid >> p) & 1 == 0)
    return forbid


def determinize_safety(ctrl: RefinedController, spec_cells: CellRange | None = None) -> DecisionTree:
    """Decision tree selecting a member of K(q) wherever K(q) is nonempty.

    Region acceptance: mode p fits iff every cell has K = {} or p in K.
    Single cells always accept some mode, so the recursion terminates.
    """
    if ctrl.kind != "safety":
        raise ValueError("safety determinization needs a safety controller")
    if spec_cells is not None and spec_cells != ctrl.cells:
        raise ValueError("controller is not defined on the requested cell range")
    return _build_tree(_forbid_safety(ctrl), ctrl.cells, ctrl.n_modes)


def determinize_reach(
    ctrl: RefinedController,
    spec_cells: CellRange | None = None,
    target_cells: CellRange | None = None,
) -> DecisionTree:
    """Decision tree for reach controllers.

    Region acceptance: mode p fits iff every cell is unconstrained (infinite
    entry bound, or inside the target range) or has p in K.  `target_cells`
    should be the cells wholly inside the target box: exactly those are
    exempt from the membership requirement.
    """
    if ctrl.kind != "reach":
        raise ValueError("reach determinization needs a reach controller")
    if spec_cells is not None and spec_cells != ctrl.cells:
        raise ValueError("controller is not defined on the requested cell range")
    return _build_tree(_forbid_reach(ctrl, target_cells), ctrl.cells, ctrl.n_modes)


def evaluate_tree(tree: DecisionTree) -> np.ndarray:
    """Assigned mode for every cell in the range (row-major grid)."""
    out = np.full(tree.cells.shape, 255, dtype=np.uint8)
    kmin = tree.cells.kmin

    def walk(i: int, lo, hi) -> None:
        node = tree.nodes[i]
        if node[0] == LEAF:
            out[tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))] = node[1]
            return
        _, axis, t = node
        t_rel = t - int(kmin[axis])
        left_hi = hi.copy()
        left_hi[axis] = t_rel
        walk(i + 1, lo, left_hi)
        right_lo = lo.copy()
        right_lo[axis] = t_rel + 1
        walk(int(tree._end[i + 1]), right_lo, hi)

    walk(0, np.zeros(tree.cells.n, dtype=np.int64), np.array(tree.cells.shape, dtype=np.int64) - 1)
    return out


@dataclass(frozen=True)
class DeterminizationReport:
    total: int
    violations: int
    examples: tuple  # first few violating cells, absolute coordinates

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_determinization(
    tree: DecisionTree,
    ctrl: RefinedController,
    target_cells: CellRange | None = None,
) -> DeterminizationReport:
    """Exhaustive membership check of a tree against its set-valued controller.

    Safety clause: K(q) nonempty implies leaf(q) in K(q).  Reach clause: a
    finite entry bound outside the target cells implies leaf(q) in K(q).
    """
    if tree.cells != ctrl.cells:
        raise ValueError("tree and controller cover different cell ranges")
    assigned = evaluate_tree(tree)
    grid = ctrl.k_grid()
    member = (grid >> assigned) & 1 != 0
    if ctrl.kind == "safety":
        bad = (grid != 0) & ~member
    else:
        constrained = ctrl.j_grid() != INF_TIME
        if target_cells is not None:
            off = target_cells.kmin - ctrl.cells.kmin
            sl = tuple(slice(int(o), int(o + s)) for o, s in zip(off, target_cells.shape))
            constrained[sl] = False
        bad = constrained & ~member
    coords = np.argwhere(bad)[:10] + ctrl.cells.kmin
    return DeterminizationReport(
        total=int(grid.size),
        violations=int(bad.sum()),
        examples=tuple(map(tuple, coords.tolist())),
    )


# ---------------------------------------------------------------------------
# tree file, version "QST1"


@dataclass(frozen=True)
class TreeMeta:
    """Header strings carried alongside a serialized tree."""

    kind: str
    eta: str
    ys: tuple
    yt: tuple | None = None


def write_qst1(path, tree: DecisionTree, meta: TreeMeta) -> None:
    lines = [
        "QST1",
        f"kind {meta.kind}",
        f"n {tree.cells.n}",
        f"modes {tree.n_modes}",
        f"eta {meta.eta}",
        "ys " + " ".join(meta.ys),
    ]
    if meta.yt is not None:
        lines.append("yt " + " ".join(meta.yt))
    lines.append(
        "cells "
        + " ".join(f"{a} {b}" for a, b in zip(tree.cells.kmin.tolist(), tree.cells.kmax.tolist()))
    )
    lines.append(f"nodes {tree.node_count}")
    for node in tree.nodes:
        if node[0] == LEAF:
            lines.append(f"L {node[1]}")
        else:
            lines.append(f"N {node[1]} {node[2]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_qst1(path):
    """Parse a QST1 file; returns (DecisionTree, TreeMeta)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "QST1":
        raise FormatError("not a QST1 file")
    head = {}
    body_at = None
    for i, line in enumerate(lines[1:], start=1):
        key, _, rest = line.partition(" ")
        if key in (NODE, LEAF):
            body_at = i
            break
        head[key] = rest
    try:
        n = int(head["n"])
        n_modes = int(head["modes"])
        n_nodes = int(head["nodes"])
        cvals = list(map(int, head["cells"].split()))
        meta = TreeMeta(
            kind=head["kind"],
            eta=head["eta"],
            ys=tuple(head["ys"].split()),
            yt=tuple(head["yt"].split()) if "yt" in head else None,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad QST1 header: {exc}") from None
    if body_at is None or len(lines) - body_at != n_nodes:
        raise FormatError("QST1 node count inconsistent with body")
    nodes = []
    for line in lines[body_at:]:
        parts = line.split()
        try:
            if parts[0] == LEAF and len(parts) == 2:
                nodes.append((LEAF, int(parts[1])))
            elif parts[0] == NODE and len(parts) == 3:
                nodes.append((NODE, int(parts[1]), int(parts[2])))
            else:
                raise ValueError(line)
        except (ValueError, IndexError):
            raise FormatError(f"bad QST1 node line: {line!r}") from None
    cells = CellRange(cvals[0::2], cvals[1::2])
    if cells.n != n:
        raise FormatError("QST1 header dimensions inconsistent")
    tree = DecisionTree(cells=cells, n_modes=n_modes, nodes=nodes)
    if int(tree._end[0]) != len(nodes):
        raise FormatError("QST1 node list is not a single preorder tree")
    return tree, meta
