"""Nested skeletonization of the kernel matrix and the induced fast matvec.

The compressed operator keeps dense diagonal blocks at the leaves and, for
every sibling pair (l, r), a low-rank coupling through skeleton points:

    K~ = sum_leaves K(X_leaf, X_leaf)
       + sum_pairs  U_l B_lr U_r^T + U_r B_lr^T U_l^T,   B_lr = K(S_l, S_r)

where U_a is the telescoped tall basis of node a: at a leaf it is P^T for
that leaf's interpolation matrix, and at an internal node it factors
through the children's bases (the skeleton of an internal node is chosen
among its children's skeletons, which is what makes the basis nested).

Skeletons are computed bottom-up, each node running an interpolative
decomposition of the kernel block between sampled exterior rows and the
node's candidate columns. Sampling is neighbor-guided: exterior neighbors
of the node's points come first (closest first), then a seeded uniform
draw over the remaining exterior fills up. Per-node sample streams are
derived from (seed, node id), so a level sweep gives bit-identical results
no matter how many threads execute it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, KernelSolveError
from .kernels import KernelSpec, kernel_block
from .linalg import pivoted_qr_id
from .points import PointSet
from .rng import generator
from .tree import NeighborLists, PartitionTree, knn

# flag (not fail) interpolation coefficients above this magnitude
_COEFF_GUARD = 1e3


@dataclass
class CompressParams:
    """Knobs of the compression sweep.

    sample_size defaults to max(2 * max_rank, 4 * n_neighbors) when left
    unset.
    """

    tol: float = 1e-5
    max_rank: int = 256
    sample_size: int | None = None
    n_neighbors: int = 32
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise InvalidArgumentError(f"need 0 < tol < 1, got {self.tol}")
        if self.max_rank < 1:
            raise InvalidArgumentError(f"need max_rank >= 1, got {self.max_rank}")
        if self.n_neighbors < 1:
            raise InvalidArgumentError(f"need n_neighbors >= 1, got {self.n_neighbors}")
        if self.sample_size is not None and self.sample_size < 1:
            raise InvalidArgumentError(f"need sample_size >= 1, got {self.sample_size}")

    @property
    def resolved_sample_size(self) -> int:
        if self.sample_size is not None:
            return self.sample_size
        return max(2 * self.max_rank, 4 * self.n_neighbors)


@dataclass
class Skeleton:
    """Skeleton of one tree node.

    cand holds the candidate column ids (the node's points at a leaf, the
    children's skeleton ids concatenated at an internal node); skel is the
    selected subset, and coeff maps skeleton space back onto cand space
    with an exact identity on the skeleton positions.
    """

    node_id: int
    cand: np.ndarray
    skel: np.ndarray
    coeff: np.ndarray
    degenerate: bool = False

    @property
    def rank(self) -> int:
        return self.skel.size


@dataclass
class CompressedKernel:
    """The compressed symmetric operator K~ plus everything needed to apply it."""

    points: PointSet
    tree: PartitionTree
    spec: KernelSpec
    params: CompressParams
    skeletons: list[Skeleton | None]
    leaf_diag: dict[int, np.ndarray]
    couplings: dict[int, np.ndarray]
    neighbors: NeighborLists | None
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.tree.n

    def rank_stats(self) -> dict[int, dict[str, float]]:
        """Skeleton-rank summary per tree level."""
        by_level: dict[int, list[int]] = {}
        for sk in self.skeletons:
            if sk is None:
                continue
            level = self.tree.nodes[sk.node_id].level
            by_level.setdefault(level, []).append(sk.rank)
        return {
            level: {
                "min": int(min(ranks)),
                "max": int(max(ranks)),
                "mean": float(np.mean(ranks)),
                "count": len(ranks),
            }
            for level, ranks in sorted(by_level.items())
        }

    def memory_bytes(self) -> int:
        total = sum(b.nbytes for b in self.leaf_diag.values())
        total += sum(b.nbytes for b in self.couplings.values())
        total += sum(s.coeff.nbytes for s in self.skeletons if s is not None)
        return int(total)

    def degenerate_count(self) -> int:
        return sum(1 for s in self.skeletons if s is not None and s.degenerate)

    def max_coeff(self) -> float:
        vals = [
            float(np.abs(s.coeff).max()) for s in self.skeletons if s is not None
        ]
        return max(vals) if vals else 0.0


def sample_rows(
    tree: PartitionTree,
    node_id: int,
    neighbors: NeighborLists,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """Exterior row ids used to probe a node's far field.

    Neighbor ids of the node's points that fall outside the node come
    first, deduplicated in order of increasing neighbor distance; a seeded
    uniform draw (without replacement, stream derived from (seed, node id))
    over the remaining exterior tops the list up to
    min(n_samples, n - node size). The root has no exterior and gets an
    empty list.
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"need n_samples >= 1, got {n_samples}")
    node = tree.nodes[node_id]
    n = tree.n
    if node.size >= n:
        return np.empty(0, dtype=np.int64)
    owned = tree.perm[node.begin : node.end]
    inside = np.zeros(n, dtype=bool)
    inside[owned] = True

    cand_ids = neighbors.nbr[owned].ravel()
    cand_dist = neighbors.dist[owned].ravel()
    keep = ~inside[cand_ids]
    cand_ids = cand_ids[keep]
    cand_dist = cand_dist[keep]
    # sort by distance (ties toward the smaller id), then drop duplicate ids
    # keeping each id's closest occurrence
    order = np.lexsort((cand_ids, cand_dist))
    cand_ids = cand_ids[order]
    _, first = np.unique(cand_ids, return_index=True)
    chosen = cand_ids[np.sort(first)]

    budget = min(n_samples, n - node.size)
    chosen = chosen[:budget]
    need = budget - chosen.size
    if need > 0:
        pool_mask = ~inside
        pool_mask[chosen] = False
        pool = np.flatnonzero(pool_mask)
        rng = generator(seed, 0x726F77, node_id)
        extra = rng.choice(pool, size=need, replace=False)
        chosen = np.concatenate([chosen, extra.astype(np.int64)])
    return chosen


def skeletonize_node(ck: CompressedKernel, node_id: int) -> Skeleton:
    """Run the sampled-row interpolative decomposition for one node.

    Children must already be skeletonized; the root (empty exterior) is
    never skeletonized.
    """
    tree = ck.tree
    node = tree.nodes[node_id]
    if node.size >= tree.n:
        raise InvalidArgumentError("the root has no exterior and no skeleton")
    if node.is_leaf:
        cand = tree.node_points(node_id).copy()
    else:
        left, right = node.children
        sk_l, sk_r = ck.skeletons[left], ck.skeletons[right]
        if sk_l is None or sk_r is None:
            raise KernelSolveError(f"children of node {node_id} not yet skeletonized")
        cand = np.concatenate([sk_l.skel, sk_r.skel])

    rows = sample_rows(
        tree, node_id, ck.neighbors, ck.params.resolved_sample_size, ck.params.seed
    )
    if rows.size == 0:
        raise KernelSolveError(f"empty sample list at non-root node {node_id}")
    block = kernel_block(ck.spec, ck.points, rows, cand)
    result = pivoted_qr_id(block, ck.params.tol, ck.params.max_rank)
    return Skeleton(
        node_id=node_id,
        cand=cand,
        skel=cand[result.skel],
        coeff=result.coeff,
        degenerate=result.degenerate,
    )


def compress(
    points: PointSet,
    tree: PartitionTree,
    spec: KernelSpec,
    params: CompressParams,
    neighbors: NeighborLists | None = None,
    threads: int = 1,
) -> CompressedKernel:
    """Level-by-level bottom-up compression of the kernel matrix.

    Fills every non-root skeleton, every leaf diagonal block, and one
    coupling block per sibling pair. Deterministic for a fixed seed,
    including under multi-threaded level sweeps.
    """
    notes: list[str] = []
    if neighbors is None and len(tree.nodes) > 1:
        kappa = params.n_neighbors
        if kappa >= points.n:
            kappa = points.n - 1
            notes.append(
                f"neighbor count clamped to n-1 = {kappa} (requested {params.n_neighbors})"
            )
        neighbors = knn(points, kappa)

    ck = CompressedKernel(
        points=points,
        tree=tree,
        spec=spec,
        params=params,
        skeletons=[None] * len(tree.nodes),
        leaf_diag={},
        couplings={},
        neighbors=neighbors,
        notes=notes,
    )
    n = tree.n

    def process(node_id: int) -> None:
        node = tree.nodes[node_id]
        if node.is_leaf:
            ids = tree.node_points(node_id)
            ck.leaf_diag[node_id] = kernel_block(spec, points, ids, ids)
        if node.size < n:
            ck.skeletons[node_id] = skeletonize_node(ck, node_id)

    def couple(node_id: int) -> None:
        node = tree.nodes[node_id]
        if node.is_leaf:
            return
        left, right = node.children
        ck.couplings[node_id] = kernel_block(
            spec, points, ck.skeletons[left].skel, ck.skeletons[right].skel
        )

    for level_nodes in tree.levels_bottom_up():
        _run_level(process, level_nodes, threads)
        _run_level(couple, level_nodes, threads)

    if ck.max_coeff() > _COEFF_GUARD:
        notes.append(
            f"interpolation coefficient magnitude {ck.max_coeff():.3e} exceeds {_COEFF_GUARD:.0e}"
        )
    return ck


def _run_level(fn, node_ids: list[int], threads: int) -> None:
    if threads > 1 and len(node_ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fn, node_ids))
    else:
        for node_id in node_ids:
            fn(node_id)


def apply_prolongation(ck: CompressedKernel, node_id: int, c: np.ndarray) -> np.ndarray:
    """Apply the telescoped tall basis: U_node @ c, over the node's points.

    At a leaf this is P^T c; at an internal node P^T c splits into the
    children's skeleton blocks and recurses.
    """
    sk = ck.skeletons[node_id]
    if sk is None:
        raise InvalidArgumentError(f"node {node_id} has no skeleton")
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != sk.rank:
        raise InvalidArgumentError(
            f"coefficient length {c.shape[0]} != skeleton rank {sk.rank}"
        )
    t = sk.coeff.T @ c
    node = ck.tree.nodes[node_id]
    if node.is_leaf:
        return t
    left, right = node.children
    s_l = ck.skeletons[left].rank
    return np.concatenate(
        [
            apply_prolongation(ck, left, t[:s_l]),
            apply_prolongation(ck, right, t[s_l:]),
        ]
    )


def skel_project(ck: CompressedKernel, node_id: int, y: np.ndarray) -> np.ndarray:
    """Transpose action of apply_prolongation: U_node^T @ y."""
    sk = ck.skeletons[node_id]
    if sk is None:
        raise InvalidArgumentError(f"node {node_id} has no skeleton")
    y = np.asarray(y, dtype=np.float64)
    node = ck.tree.nodes[node_id]
    if y.shape[0] != node.size:
        raise InvalidArgumentError(f"vector length {y.shape[0]} != node size {node.size}")
    if node.is_leaf:
        return sk.coeff @ y
    left, right = node.children
    n_l = ck.tree.nodes[left].size
    stacked = np.concatenate(
        [skel_project(ck, left, y[:n_l]), skel_project(ck, right, y[n_l:])]
    )
    return sk.coeff @ stacked


def hss_matvec(ck: CompressedKernel, w: np.ndarray) -> np.ndarray:
    """Apply the compressed operator: K~ @ w.

    Accepts a vector of length n or an n x q matrix, in tree (perm) order.
    Runs an upward skeleton-weight pass, one small coupling product per
    sibling pair, and a downward prolongation pass.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != ck.n:
        raise InvalidArgumentError(f"vector length {w.shape[0]} != n = {ck.n}")
    tree = ck.tree
    if len(tree.nodes) == 1:
        return ck.leaf_diag[0] @ w

    # upward: skeleton weights c = U^T w per skeletonized node
    weights: dict[int, np.ndarray] = {}
    for level_nodes in tree.levels_bottom_up():
        for node_id in level_nodes:
            sk = ck.skeletons[node_id]
            if sk is None:
                continue
            node = tree.nodes[node_id]
            if node.is_leaf:
                weights[node_id] = sk.coeff @ w[node.begin : node.end]
            else:
                left, right = node.children
                weights[node_id] = sk.coeff @ np.concatenate(
                    [weights[left], weights[right]]
                )

    # sibling exchange through the coupling blocks
    incoming: dict[int, np.ndarray] = {}
    for node_id, coupling in ck.couplings.items():
        left, right = tree.nodes[node_id].children
        incoming[left] = coupling @ weights[right]
        incoming[right] = coupling.T @ weights[left]

    # downward: push accumulated skeleton contributions to child skeletons
    totals: dict[int, np.ndarray] = {}
    for level_nodes in reversed(tree.levels_bottom_up()):
        for node_id in level_nodes:
            node = tree.nodes[node_id]
            if node.is_leaf:
                continue
            left, right = node.children
            if node_id in totals:
                t = ck.skeletons[node_id].coeff.T @ totals[node_id]
                s_l = ck.skeletons[left].rank
                totals[left] = incoming[left] + t[:s_l]
                totals[right] = incoming[right] + t[s_l:]
            else:
                totals[left] = incoming[left]
                totals[right] = incoming[right]

    out = np.empty_like(w)
    for leaf in tree.leaves():
        seg = slice(leaf.begin, leaf.end)
        out[seg] = ck.leaf_diag[leaf.id] @ w[seg]
        out[seg] += ck.skeletons[leaf.id].coeff.T @ totals[leaf.id]
    return out
