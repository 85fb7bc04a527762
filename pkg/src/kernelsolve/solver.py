"""Fast direct factorization of the compressed operator plus lambda*I.

The factorization runs bottom-up over the tree. Each leaf stores a dense
factor of its diagonal block K_leaf + lambda*I. Each internal node alpha
with children l, r realizes

    (D + U W U^T)^-1 = D^-1 - D^-1 U Z^-1 W U^T D^-1,
    D = blkdiag(M_l, M_r),  W = [[0, B_lr], [B_lr^T, 0]],
    Z = I + W G,            G = U^T D^-1 U = blkdiag(H_l, H_r),

where M_c = K~_c + lambda*I is the subtree operator already factored at
the children and U = blkdiag(U_l, U_r) stacks their telescoped bases. The
variant through Z = I + W G never inverts W, which is singular by
construction (zero diagonal blocks). Each non-root node hands its parent
the reduced matrix H_alpha = P_alpha (G - G Z^-1 W G) P_alpha^T, so every
per-node system is small and dense.

The solve recurses the same way: child solves, a skeleton-space correction
through Zf, and child solves again on the prolonged correction. It inverts
the compressed operator exactly (up to roundoff); the distance to the true
kernel matrix is the compression model error, measured separately.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compress import (
    CompressedKernel,
    CompressParams,
    apply_prolongation,
    compress,
    skel_project,
)
from .errors import IllConditionedError, InvalidArgumentError, NotSPDError
from .kernels import KernelSpec, kernel_block
from .linalg import (
    DenseFactor,
    cond1_estimate,
    dense_factor,
    dense_solve,
    solve_transposed,
)
from .points import PointSet
from .tree import build_tree

_COND_HARD = 1e14
_COND_WARN = 1e10


@dataclass
class LeafFactor:
    node_id: int
    factor: DenseFactor
    fallback: bool = False

    @property
    def size(self) -> int:
        return self.factor.size


@dataclass
class NodeFactor:
    node_id: int
    s_l: int
    s_r: int
    W: np.ndarray
    G: np.ndarray
    Zf: DenseFactor
    cond_estimate: float
    H: np.ndarray | None = None


@dataclass
class HierFactor:
    """Immutable result of factorize; shared, concurrent solves are safe."""

    ck: CompressedKernel
    lam: float
    leaf_factors: dict[int, LeafFactor]
    node_factors: dict[int, NodeFactor]
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.ck.n


def factorize(ck: CompressedKernel, lam: float, threads: int = 1) -> HierFactor:
    """Bottom-up recursive Woodbury factorization of K~ + lam*I.

    lam >= 0; lam = 0 is permitted but ill-conditioned instances may then
    fail with not-SPD or singularity errors. Cholesky is tried first on
    each leaf block, with an LU fallback recorded in the diagnostics. A Z
    condition estimate above 1e14 raises; above 1e10 it is recorded as a
    warning.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0.0:
        raise InvalidArgumentError(f"need lambda >= 0 and finite, got {lam}")

    tree = ck.tree
    hf = HierFactor(
        ck=ck,
        lam=lam,
        leaf_factors={},
        node_factors={},
        diagnostics={
            "cholesky_fallbacks": 0,
            "fallback_nodes": [],
            "z_cond": {},
            "warnings": [],
        },
    )
    n = tree.n
    reduced: dict[int, np.ndarray] = {}

    def process(node_id: int) -> None:
        node = tree.nodes[node_id]
        if node.is_leaf:
            block = ck.leaf_diag[node_id] + lam * np.eye(node.size)
            try:
                f = dense_factor(block, "cholesky")
                fallback = False
            except NotSPDError:
                f = dense_factor(block, "lu-partial-pivot")
                fallback = True
            hf.leaf_factors[node_id] = LeafFactor(node_id, f, fallback)
            if node.size < n:
                P = ck.skeletons[node_id].coeff
                H = P @ dense_solve(f, P.T)
                reduced[node_id] = 0.5 * (H + H.T)
            return

        left, right = node.children
        B = ck.couplings[node_id]
        s_l, s_r = B.shape
        m = s_l + s_r
        W = np.zeros((m, m))
        W[:s_l, s_l:] = B
        W[s_l:, :s_l] = B.T
        G = np.zeros((m, m))
        G[:s_l, :s_l] = reduced[left]
        G[s_l:, s_l:] = reduced[right]
        Z = np.eye(m) + W @ G
        Zf = dense_factor(Z, "lu-partial-pivot")
        cond = cond1_estimate(Zf)
        if cond > _COND_HARD:
            raise IllConditionedError(node_id, cond)
        nf = NodeFactor(node_id, s_l, s_r, W, G, Zf, cond)
        if node.size < n:
            P = ck.skeletons[node_id].coeff
            # G - G Z^-1 W G collapses to G Z^-1 exactly (I - Z^-1 W G =
            # Z^-1 (Z - W G) = Z^-1); the direct form avoids the severe
            # cancellation of the subtraction when ||W G|| is large. One
            # refinement step knocks the Z-conditioning error out of H.
            M = solve_transposed(Zf, G).T
            M = M + solve_transposed(Zf, (G - M @ Z).T).T
            H = P @ M @ P.T
            nf.H = 0.5 * (H + H.T)
            reduced[node_id] = nf.H
        hf.node_factors[node_id] = nf

    for level_nodes in tree.levels_bottom_up():
        if threads > 1 and len(level_nodes) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(process, level_nodes))
        else:
            for node_id in level_nodes:
                process(node_id)

    fallback_nodes = sorted(
        lid for lid, lf in hf.leaf_factors.items() if lf.fallback
    )
    hf.diagnostics["cholesky_fallbacks"] = len(fallback_nodes)
    hf.diagnostics["fallback_nodes"] = fallback_nodes
    hf.diagnostics["z_cond"] = {
        nid: nf.cond_estimate for nid, nf in sorted(hf.node_factors.items())
    }
    for nid, nf in sorted(hf.node_factors.items()):
        if nf.cond_estimate > _COND_WARN:
            hf.diagnostics["warnings"].append(
                f"node {nid}: Z condition estimate {nf.cond_estimate:.3e} exceeds "
                f"{_COND_WARN:.0e}; results may lose accuracy"
            )
    return hf


def solve(hf: HierFactor, b: np.ndarray) -> np.ndarray:
    """Apply (K~ + lam*I)^-1 to one vector in tree (perm) order."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise InvalidArgumentError(f"expected a vector, got shape {b.shape}")
    return solve_many(hf, b[:, None])[:, 0]


def solve_many(hf: HierFactor, B: np.ndarray) -> np.ndarray:
    """Apply (K~ + lam*I)^-1 to q right-hand sides at once.

    Column-equivalent to q independent solves; the recursion is shared
    across columns so the tree is walked once.
    """
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise InvalidArgumentError(f"expected an n x q matrix, got shape {B.shape}")
    if B.shape[0] != hf.n:
        raise InvalidArgumentError(f"right-hand side has {B.shape[0]} rows, need {hf.n}")
    if B.shape[1] == 0:
        return np.empty_like(B)
    return _solve_node(hf, hf.ck.tree.root.id, B)


def _solve_node(hf: HierFactor, node_id: int, B: np.ndarray) -> np.ndarray:
    node = hf.ck.tree.nodes[node_id]
    if node.is_leaf:
        return dense_solve(hf.leaf_factors[node_id].factor, B)
    left, right = node.children
    n_l = hf.ck.tree.nodes[left].size
    y_l = _solve_node(hf, left, B[:n_l])
    y_r = _solve_node(hf, right, B[n_l:])

    nf = hf.node_factors[node_id]
    c = np.concatenate(
        [skel_project(hf.ck, left, y_l), skel_project(hf.ck, right, y_r)]
    )
    rhs = nf.W @ c
    d = dense_solve(nf.Zf, rhs)
    # refine the Z system once (Z d = W c, with Z d = d + W G d): the Z
    # blocks carry most of the hierarchy's conditioning, and the extra
    # triangular solve is cheap next to the child solves
    d = d + dense_solve(nf.Zf, rhs - d - nf.W @ (nf.G @ d))
    e_l = _solve_node(hf, left, apply_prolongation(hf.ck, left, d[: nf.s_l]))
    e_r = _solve_node(hf, right, apply_prolongation(hf.ck, right, d[nf.s_l :]))
    return np.concatenate([y_l - e_l, y_r - e_r])


def krr_fit(
    points: PointSet,
    spec: KernelSpec,
    lam: float,
    y: np.ndarray,
    *,
    leaf_size: int = 256,
    params: CompressParams | None = None,
    threads: int = 1,
) -> np.ndarray:
    """Kernel ridge regression weights w = (K~ + lam*I)^-1 y.

    Labels come in original point order and the returned weights are in
    original point order too; the permutation the tree applies internally
    is hidden from the caller.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != points.n:
        raise InvalidArgumentError(
            f"labels must be a length-{points.n} vector, got shape {y.shape}"
        )
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("labels must be finite")
    if params is None:
        params = CompressParams()
    tree = build_tree(points, leaf_size)
    ck = compress(points, tree, spec, params, threads=threads)
    hf = factorize(ck, lam, threads=threads)
    w_perm = solve(hf, y[tree.perm])
    w = np.empty_like(w_perm)
    w[tree.perm] = w_perm
    return w


def krr_predict(
    points_train: PointSet,
    w: np.ndarray,
    spec: KernelSpec,
    points_test: PointSet,
) -> np.ndarray:
    """Evaluate sum_i k(x_test_j, x_train_i) w_i, dense and exact."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != points_train.n:
        raise InvalidArgumentError(
            f"weights must be a length-{points_train.n} vector, got shape {w.shape}"
        )
    if points_test.d != points_train.d:
        raise InvalidArgumentError(
            f"dimension mismatch: train d={points_train.d}, test d={points_test.d}"
        )
    if points_test.n == 0:
        return np.empty(0)
    merged = PointSet(np.vstack([points_test.coords, points_train.coords]))
    train_cols = points_test.n + np.arange(points_train.n)
    out = np.empty(points_test.n)
    # block over test rows so the cross-kernel block stays modest
    step = max(1, (1 << 24) // max(points_train.n, 1))
    for start in range(0, points_test.n, step):
        stop = min(start + step, points_test.n)
        block = kernel_block(spec, merged, np.arange(start, stop), train_cols)
        out[start:stop] = block @ w
    return out
