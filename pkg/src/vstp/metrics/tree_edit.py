"""Ordered-tree edit distance (Zhang-Shasha keyroot dynamic program)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence


def levenshtein(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_levenshtein(a: Sequence, b: Sequence) -> float:
    """Levenshtein distance divided by the longer length; 0 for two empty inputs."""
    longest = max(len(a), len(b))
    return levenshtein(a, b) / longest if longest else 0.0


@dataclass
class TreeNode:
    tag: str
    children: list = field(default_factory=list)
    content: str | None = None
    rowspan: int = 1
    colspan: int = 1

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def iter(self):
        """Pre-order traversal."""
        stack = [self]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))


@dataclass
class TedsTree(TreeNode):
    """HTML table tree; only ``td`` nodes may carry cell content."""

    def __post_init__(self):
        if self.content is not None and self.tag != "td":
            raise ValueError(f"content is only allowed on td nodes, not <{self.tag}>")


def teds_rename_cost(a: TreeNode, b: TreeNode) -> float:
    """0 for matching nodes, 1 for different tags or spans, normalized Levenshtein on contents."""
    if a.tag != b.tag or a.rowspan != b.rowspan or a.colspan != b.colspan:
        return 1.0
    if a.content is None and b.content is None:
        return 0.0
    return normalized_levenshtein(a.content or "", b.content or "")


def _unit(_node) -> float:
    return 1.0


def _annotate(root: TreeNode):
    """Post-order nodes, leftmost-leaf index of each node, and the keyroots."""
    nodes = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            nodes.append(node)
            continue
        stack.append((node, True))
        for child in reversed(node.children):
            stack.append((child, False))
    pos = {id(n): i for i, n in enumerate(nodes)}
    leftmost = []
    for i, n in enumerate(nodes):
        # children precede their parent in post-order, so the first child's entry exists
        leftmost.append(leftmost[pos[id(n.children[0])]] if n.children else i)
    last_with = {}
    for i, lm in enumerate(leftmost):
        last_with[lm] = i
    return nodes, leftmost, sorted(last_with.values())


def tree_edit_distance(a: TreeNode, b: TreeNode,
                       rename: Callable[[TreeNode, TreeNode], float] = teds_rename_cost,
                       insert: Callable[[TreeNode], float] = _unit,
                       delete: Callable[[TreeNode], float] = _unit) -> float:
    """Minimal cost of an ordered edit script turning ``a`` into ``b``."""
    A, la, kra = _annotate(a)
    B, lb, krb = _annotate(b)
    n, m = len(A), len(B)
    ren = [[rename(x, y) for y in B] for x in A]
    dele = [delete(x) for x in A]
    ins = [insert(y) for y in B]
    td = [[0.0] * m for _ in range(n)]
    for i in kra:
        li = la[i]
        for j in krb:
            lj = lb[j]
            rows, cols = i - li + 2, j - lj + 2
            fd = [[0.0] * cols for _ in range(rows)]
            for x in range(1, rows):
                fd[x][0] = fd[x - 1][0] + dele[li + x - 1]
            for y in range(1, cols):
                fd[0][y] = fd[0][y - 1] + ins[lj + y - 1]
            for x in range(1, rows):
                ia = li + x - 1
                row, prev = fd[x], fd[x - 1]
                for y in range(1, cols):
                    jb = lj + y - 1
                    best = min(prev[y] + dele[ia], row[y - 1] + ins[jb])
                    if la[ia] == li and lb[jb] == lj:
                        best = min(best, prev[y - 1] + ren[ia][jb])
                        td[ia][jb] = best
                    else:
                        best = min(best, fd[la[ia] - li][lb[jb] - lj] + td[ia][jb])
                    row[y] = best
    return td[n - 1][m - 1]
