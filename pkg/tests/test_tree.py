import numpy as np
import pytest

from kernelsolve import (
    InvalidArgumentError,
    PointSet,
    build_tree,
    gen_synthetic,
    knn,
    node_exterior,
    tree_to_json,
)


def test_below_capacity_single_leaf():
    pts = PointSet(np.arange(10.0).reshape(5, 2))
    tree = build_tree(pts, 8)
    assert len(tree.nodes) == 1
    assert tree.root.is_leaf
    assert np.array_equal(tree.perm, np.arange(5))


def test_leaf_capacity_validation():
    pts = PointSet(np.zeros((4, 1)))
    with pytest.raises(InvalidArgumentError):
        build_tree(pts, 1)


def test_collinear_median_threshold():
    # 8 points on the x axis, capacity 2: depth-3 tree, root threshold at
    # the median x
    xs = np.array([7.0, 0.0, 3.0, 5.0, 1.0, 6.0, 2.0, 4.0])
    pts = PointSet(np.stack([xs, np.zeros(8)], axis=1))
    tree = build_tree(pts, 2)
    assert tree.depth == 3
    root = tree.root
    assert root.split_axis == 0
    assert root.split_threshold == pytest.approx(3.5)
    left = tree.perm[: tree.nodes[root.children[0]].size]
    assert sorted(xs[left]) == [0.0, 1.0, 2.0, 3.0]


def test_structure_random_instance():
    pts = gen_synthetic("gaussian-mixture", 1000, 3, seed=2)
    tree = build_tree(pts, 50)
    assert np.array_equal(np.sort(tree.perm), np.arange(1000))
    for node in tree.nodes:
        if node.is_leaf:
            assert 25 <= node.size <= 50
            continue
        left, right = (tree.nodes[c] for c in node.children)
        assert left.begin == node.begin
        assert left.end == right.begin
        assert right.end == node.end
        assert left.size - right.size in (0, 1)
        assert left.level == node.level + 1 == right.level
        # split planes separate the children along the chosen axis
        proj_l = pts.coords[tree.node_points(left.id), node.split_axis]
        proj_r = pts.coords[tree.node_points(right.id), node.split_axis]
        assert np.max(proj_l) <= node.split_threshold <= np.min(proj_r)


def test_max_spread_axis_with_tie_break():
    coords = np.zeros((6, 3))
    coords[:, 2] = [0, 1, 2, 3, 4, 5]  # largest spread on axis 2
    pts = PointSet(coords)
    tree = build_tree(pts, 3)
    assert tree.root.split_axis == 2

    # equal spread on axes 0 and 1: ties resolve to the lowest index
    coords = np.zeros((6, 2))
    coords[:, 0] = [0, 1, 2, 3, 4, 5]
    coords[:, 1] = [5, 4, 3, 2, 1, 0]
    tree = build_tree(PointSet(coords), 3)
    assert tree.root.split_axis == 0


def test_duplicate_points_allowed_and_stable():
    coords = np.zeros((9, 2))
    pts = PointSet(coords)
    tree = build_tree(pts, 4)
    assert np.array_equal(np.sort(tree.perm), np.arange(9))
    # the stable median rule keeps duplicates in input order
    assert np.array_equal(tree.perm, np.arange(9))


def test_split_direction_one_hot():
    pts = gen_synthetic("uniform-cube", 32, 3, seed=0)
    tree = build_tree(pts, 8)
    vec = tree.root.split_direction(3)
    assert vec.shape == (3,)
    assert vec.sum() == 1.0
    assert vec[tree.root.split_axis] == 1.0


def test_knn_hand_case():
    pts = PointSet(np.array([[0.0], [1.0], [3.0]]))
    nl = knn(pts, 2)
    assert list(nl.nbr[1]) == [0, 2]
    assert nl.dist[1] == pytest.approx([1.0, 2.0])


def test_knn_matches_bruteforce_loop():
    rng = np.random.default_rng(3)
    pts = PointSet(rng.standard_normal((60, 3)))
    k = 7
    nl = knn(pts, k)
    for i in range(pts.n):
        dists = np.linalg.norm(pts.coords - pts.coords[i], axis=1)
        dists[i] = np.inf
        order = np.lexsort((np.arange(pts.n), dists))[:k]
        assert np.array_equal(nl.nbr[i], order)
        assert np.allclose(nl.dist[i], dists[order], rtol=1e-12)
        assert np.all(np.diff(nl.dist[i]) >= 0)


def test_knn_tie_break_smaller_id():
    # three points equidistant from the query resolve by id
    pts = PointSet(np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]]))
    nl = knn(pts, 3)
    assert list(nl.nbr[0]) == [1, 2, 3]


def test_knn_permutation_equivariance():
    rng = np.random.default_rng(8)
    coords = rng.standard_normal((50, 2))
    perm = rng.permutation(50)
    nl_a = knn(PointSet(coords), 5)
    nl_b = knn(PointSet(coords[perm]), 5)
    # relabel: position j in the permuted set is original id perm[j]
    inv = np.empty(50, dtype=np.int64)
    inv[perm] = np.arange(50)
    for j in range(50):
        assert np.array_equal(perm[nl_b.nbr[j]], nl_a.nbr[perm[j]])


def test_knn_mutual_neighbor_consistency():
    rng = np.random.default_rng(10)
    pts = PointSet(rng.standard_normal((80, 3)))
    nl = knn(pts, 10)
    for i in range(pts.n):
        j = int(nl.nbr[i, 0])
        # with distinct pairwise distances, i appears in its own nearest
        # neighbor's list whenever d(i,j) ranks within j's k closest
        dj = np.linalg.norm(pts.coords - pts.coords[j], axis=1)
        dj[j] = np.inf
        rank = int(np.sum(dj < dj[i]))
        if rank < 10:
            assert i in nl.nbr[j]


def test_knn_validation():
    pts = PointSet(np.zeros((5, 2)))
    with pytest.raises(InvalidArgumentError):
        knn(pts, 5)
    with pytest.raises(InvalidArgumentError):
        knn(pts, 0)


def test_node_exterior():
    pts = gen_synthetic("uniform-cube", 10, 2, seed=1)
    tree = build_tree(pts, 2)
    assert node_exterior(tree, 0).size == 0
    for node in tree.nodes:
        ext = node_exterior(tree, node.id)
        owned = tree.node_points(node.id)
        assert np.intersect1d(ext, owned).size == 0
        assert np.array_equal(
            np.sort(np.concatenate([ext, owned])), np.arange(10)
        )


def test_tree_json_dump():
    pts = gen_synthetic("uniform-cube", 33, 3, seed=9)
    tree = build_tree(pts, 8)
    obj = tree_to_json(tree, pts.d)
    assert obj["schema"] == 1
    assert obj["n"] == 33
    assert len(obj["nodes"]) == len(tree.nodes)
    assert sorted(obj["perm"]) == list(range(33))
    for entry, node in zip(obj["nodes"], tree.nodes):
        assert entry["id"] == node.id
        assert entry["range"] == [node.begin, node.end]
