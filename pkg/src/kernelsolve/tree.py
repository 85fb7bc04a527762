"""Balanced binary spatial partition tree and exact nearest neighbors.

The tree induces the hierarchical block structure: each node owns a
contiguous slice [begin, end) of the permutation `perm`, siblings split
their parent's slice, and leaves hold at most `leaf_size` points. Splits
cut the coordinate of maximum spread at the exact median (stable order, so
duplicate points are fine), which makes sibling sizes differ by at most one
and keeps the tree full binary with leaves on at most two adjacent depths.

Construction is deterministic; the tree is read-only afterwards and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .points import PointSet

# elements per distance chunk in the kNN sweep (memory cap, not a tunable)
_CHUNK_ELEMS = 1 << 23


@dataclass
class TreeNode:
    id: int
    level: int
    begin: int
    end: int
    children: tuple[int, int] | None = None
    split_axis: int | None = None
    split_threshold: float | None = None

    @property
    def size(self) -> int:
        return self.end - self.begin

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def split_direction(self, d: int) -> np.ndarray:
        """One-hot split direction vector (axis-aligned splits only)."""
        direction = np.zeros(d)
        if self.split_axis is not None:
            direction[self.split_axis] = 1.0
        return direction


@dataclass
class PartitionTree:
    nodes: list[TreeNode]
    perm: np.ndarray
    leaf_size: int
    depth: int

    @property
    def n(self) -> int:
        return self.perm.size

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def node_points(self, node_id: int) -> np.ndarray:
        """Global ids owned by a node, in perm order."""
        node = self.nodes[node_id]
        return self.perm[node.begin : node.end]

    def leaves(self) -> list[TreeNode]:
        return [nd for nd in self.nodes if nd.is_leaf]

    def levels_bottom_up(self) -> list[list[int]]:
        """Node ids grouped by level, deepest level first."""
        by_level: list[list[int]] = [[] for _ in range(self.depth)]
        for nd in self.nodes:
            by_level[nd.level].append(nd.id)
        return by_level[::-1]


def build_tree(points: PointSet, leaf_size: int, seed: int = 0) -> PartitionTree:
    """Build the spatial tree by recursive maximum-spread median splits.

    `seed` is reserved for future randomized split rules; the median rule
    used here is fully deterministic. Level-order node ids: node 0 is the
    root and children always carry larger ids than their parent.
    """
    if leaf_size < 2:
        raise InvalidArgumentError(f"leaf_size must be >= 2, got {leaf_size}")
    n = points.n
    coords = points.coords
    perm = np.arange(n, dtype=np.int64)

    nodes: list[TreeNode] = []
    # queue entries: (begin, end, level, parent id); FIFO order gives
    # breadth-first ids
    queue: list[tuple[int, int, int, int | None]] = [(0, n, 0, None)]
    head = 0
    while head < len(queue):
        begin, end, level, parent = queue[head]
        head += 1
        node = TreeNode(id=len(nodes), level=level, begin=begin, end=end)
        nodes.append(node)
        if parent is not None:
            pnode = nodes[parent]
            if pnode.children is None:
                pnode.children = (node.id, node.id)
            else:
                pnode.children = (pnode.children[0], node.id)

        size = end - begin
        if size <= leaf_size:
            continue
        local = coords[perm[begin:end]]
        spans = local.max(axis=0) - local.min(axis=0)
        axis = int(np.argmax(spans))  # argmax takes the lowest index on ties
        proj = local[:, axis]
        order = np.argsort(proj, kind="stable")
        perm[begin:end] = perm[begin:end][order]
        mid = (size + 1) // 2
        node.split_axis = axis
        node.split_threshold = float((proj[order[mid - 1]] + proj[order[mid]]) / 2.0)
        queue.append((begin, begin + mid, level + 1, node.id))
        queue.append((begin + mid, end, level + 1, node.id))

    depth = max(nd.level for nd in nodes) + 1
    return PartitionTree(nodes=nodes, perm=perm, leaf_size=leaf_size, depth=depth)


@dataclass
class NeighborLists:
    """Exact k-nearest-neighbor table: per point, ids and distances.

    Rows are sorted by distance, ties broken toward the smaller id; a point
    never lists itself.
    """

    k: int
    nbr: np.ndarray
    dist: np.ndarray


def knn(points: PointSet, k: int) -> NeighborLists:
    """Exact brute-force k nearest neighbors of every point."""
    n = points.n
    if k < 1 or k >= n:
        raise InvalidArgumentError(f"need 1 <= k < n, got k={k}, n={n}")
    coords = points.coords
    sq_norms = np.einsum("id,id->i", coords, coords)
    nbr = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))

    chunk = max(1, _CHUNK_ELEMS // n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        # ||x-y||^2 via the inner-product identity; tiny negatives from
        # cancellation are clipped
        sq = sq_norms[lo:hi, None] + sq_norms[None, :] - 2.0 * (coords[lo:hi] @ coords.T)
        np.maximum(sq, 0.0, out=sq)
        sq[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        kth = np.partition(sq, k - 1, axis=1)[:, k - 1]
        mask = sq <= kth[:, None]
        for i in range(hi - lo):
            cand = np.flatnonzero(mask[i])
            order = np.lexsort((cand, sq[i, cand]))[:k]
            sel = cand[order]
            nbr[lo + i] = sel
            dist[lo + i] = np.sqrt(sq[i, sel])
    return NeighborLists(k=k, nbr=nbr, dist=dist)


def node_exterior(tree: PartitionTree, node_id: int) -> np.ndarray:
    """All global ids not owned by the node, in perm order."""
    if node_id < 0 or node_id >= len(tree.nodes):
        raise InvalidArgumentError(f"node id {node_id} out of range")
    node = tree.nodes[node_id]
    return np.concatenate([tree.perm[: node.begin], tree.perm[node.end :]])


def tree_to_json(tree: PartitionTree, d: int) -> dict:
    """Debug dump of the tree structure; not a stability-guaranteed format."""
    return {
        "schema": 1,
        "n": int(tree.n),
        "leaf_size": int(tree.leaf_size),
        "depth": int(tree.depth),
        "perm": [int(i) for i in tree.perm],
        "nodes": [
            {
                "id": nd.id,
                "level": nd.level,
                "begin": nd.begin,
                "end": nd.end,
                "children": list(nd.children) if nd.children else None,
                "split_axis": nd.split_axis,
                "split_threshold": nd.split_threshold,
                "split_direction": list(nd.split_direction(d)) if not nd.is_leaf else None,
            }
            for nd in tree.nodes
        ],
    }
