"""Command line front end.

Subcommands: build, solve, matvec, krr, verify, bench. Each consumes one
JSON config (schema 1) and emits one JSON report with a fixed key set,
either to stdout or to --out. Vectors cross the CLI boundary in original
point order; the permutation the tree applies internally never leaks.

Exit codes: 0 success, 1 verification check failure, 2 config or input
error, 3 numerical failure (ill-conditioned or singular systems).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .compress import CompressedKernel, CompressParams, compress, hss_matvec
from .errors import (
    ConfigError,
    DataFormatError,
    IllConditionedError,
    InvalidArgumentError,
    NotSPDError,
    SingularMatrixError,
)
from .kernels import KernelSpec, median_pairwise_distance
from .oracle import dense_matvec, dense_oracle
from .points import PointSet, gen_synthetic, load_points
from .report import DatasetSpec, RunConfig, dump_report, new_report
from .rng import generator
from .solver import HierFactor, factorize, krr_predict, solve, solve_many
from .tree import PartitionTree, build_tree, knn, tree_to_json

_TAG_RHS = 0x726873
_TAG_MATVEC = 0x6D7476
_TAG_BENCH = 0x626E63
_TAG_VERIFY = 0x766679


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        if args.threads is not None:
            cfg.threads = args.threads
        if args.seed is not None:
            cfg.seed = args.seed
        report, code = _COMMANDS[args.command](cfg, args)
    except (ConfigError, InvalidArgumentError, DataFormatError) as exc:
        _emit_error(exc, args)
        return 2
    except (IllConditionedError, NotSPDError, SingularMatrixError) as exc:
        _emit_error(exc, args)
        return 3
    _emit(report, args)
    return code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelsolve",
        description="Hierarchical kernel matrix compression and fast direct solves",
    )
    parser.add_argument(
        "command",
        choices=("build", "solve", "matvec", "krr", "verify", "bench"),
    )
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="write the JSON report here instead of stdout")
    parser.add_argument("--dump-tree", help="write a JSON dump of the partition tree")
    parser.add_argument("--threads", type=int, help="override config threads")
    parser.add_argument("--seed", type=int, help="override config seed")
    return parser


def _emit(report: dict, args) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            dump_report(report, fh)
    else:
        dump_report(report, sys.stdout)


def _emit_error(exc: Exception, args) -> None:
    obj = {"schema": 1, "error": {"type": type(exc).__name__, "message": str(exc)}}
    print(f"kernelsolve: {exc}", file=sys.stderr)
    try:
        _emit(obj, args)
    except OSError:
        json.dump(obj, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _load_dataset(ds: DatasetSpec, seed: int) -> PointSet:
    if ds.is_synthetic:
        return gen_synthetic(ds.kind, ds.n, ds.d, seed)
    return load_points(ds.path, ds.format)


def _resolve_spec(cfg: RunConfig, points: PointSet) -> KernelSpec:
    if cfg.family == "polynomial":
        return KernelSpec(family="polynomial", degree=cfg.degree, shift=cfg.shift)
    if cfg.bandwidth == "median":
        h = median_pairwise_distance(points)
        if h <= 0.0:
            raise InvalidArgumentError(
                "median pairwise distance is zero; set the bandwidth explicitly"
            )
    else:
        h = float(cfg.bandwidth)
    return KernelSpec(family=cfg.family, bandwidth=h)


class _Pipeline:
    """Dataset through compression, with per-phase wall times."""

    def __init__(self, cfg: RunConfig, points: PointSet | None = None):
        t0 = time.perf_counter()
        self.points = points if points is not None else _load_dataset(cfg.dataset, cfg.seed)
        self.spec = _resolve_spec(cfg, self.points)
        t1 = time.perf_counter()
        self.tree = build_tree(self.points, cfg.leaf_size)
        t2 = time.perf_counter()
        if len(self.tree.nodes) > 1:
            kappa = min(cfg.n_neighbors, self.points.n - 1)
            self.neighbors = knn(self.points, kappa)
        else:
            self.neighbors = None
        t3 = time.perf_counter()
        params = CompressParams(
            tol=cfg.tol,
            max_rank=cfg.max_rank,
            sample_size=cfg.sample_size,
            n_neighbors=cfg.n_neighbors,
            seed=cfg.seed,
        )
        self.ck = compress(
            self.points, self.tree, self.spec, params,
            neighbors=self.neighbors, threads=cfg.threads,
        )
        t4 = time.perf_counter()
        self.tree_s = t2 - t1
        self.knn_s = t3 - t2
        self.compress_s = t4 - t3
        self.load_s = t1 - t0
        self.factorize_s: float | None = None
        self.hf: HierFactor | None = None

    def factorized(self, cfg: RunConfig) -> HierFactor:
        if self.hf is None:
            t0 = time.perf_counter()
            self.hf = factorize(self.ck, cfg.lam, threads=cfg.threads)
            self.factorize_s = time.perf_counter() - t0
        return self.hf

    def fill_report(self, report: dict) -> None:
        tree, ck = self.tree, self.ck
        report["structure"] = {
            "levels": tree.depth,
            "leaf_count": len(tree.leaves()),
            "ranks_per_level": ck.rank_stats(),
            "memory_bytes": ck.memory_bytes(),
        }
        report["timings"]["tree_s"] = self.tree_s
        report["timings"]["knn_s"] = self.knn_s
        report["timings"]["compress_s"] = self.compress_s
        diagnostics = {
            "notes": list(ck.notes),
            "degenerate_skeletons": ck.degenerate_count(),
            "max_interp_coeff": ck.max_coeff(),
        }
        if self.hf is not None:
            diagnostics.update(self.hf.diagnostics)
            report["timings"]["factorize_s"] = self.factorize_s
        report["diagnostics"] = diagnostics


def _maybe_dump_tree(pipe: _Pipeline, args) -> None:
    if getattr(args, "dump_tree", None):
        obj = tree_to_json(pipe.tree, pipe.points.d)
        with open(args.dump_tree, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")


def _load_column(path: str, expected_len: int) -> np.ndarray:
    try:
        vec = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except OSError as exc:
        raise DataFormatError(f"cannot read vector file {path}: {exc}") from exc
    except ValueError as exc:
        raise DataFormatError(f"vector file {path} is not numeric CSV: {exc}") from exc
    if vec.ndim != 1:
        raise DataFormatError(
            f"vector file {path} must hold one value per line, got shape {vec.shape}"
        )
    if vec.size != expected_len:
        raise DataFormatError(
            f"vector file {path} has {vec.size} entries, need {expected_len}"
        )
    if not np.all(np.isfinite(vec)):
        raise DataFormatError(f"vector file {path} contains non-finite values")
    return vec


def _save_column(path: str, vec: np.ndarray) -> None:
    np.savetxt(path, np.asarray(vec, dtype=np.float64), fmt="%.17g")


def _rel_err(got: np.ndarray, want: np.ndarray) -> float:
    denom = float(np.linalg.norm(want))
    if denom == 0.0:
        return float(np.linalg.norm(got))
    return float(np.linalg.norm(got - want) / denom)


def _finish(report: dict, t_start: float) -> None:
    report["timings"]["total_s"] = time.perf_counter() - t_start


def cmd_build(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("build", cfg)
    pipe = _Pipeline(cfg)
    pipe.fill_report(report)
    _maybe_dump_tree(pipe, args)
    _finish(report, t_start)
    return report, 0


def cmd_matvec(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("matvec", cfg)
    pipe = _Pipeline(cfg)
    n = pipe.points.n
    if cfg.rhs:
        w = _load_column(cfg.rhs, n)
    else:
        w = generator(cfg.seed, _TAG_MATVEC).standard_normal(n)
    t0 = time.perf_counter()
    u_perm = hss_matvec(pipe.ck, w[pipe.tree.perm])
    report["timings"]["solve_s"] = time.perf_counter() - t0
    u = np.empty_like(u_perm)
    u[pipe.tree.perm] = u_perm
    if n <= cfg.oracle_cap:
        exact = dense_matvec(pipe.points, pipe.spec, w, cap=cfg.oracle_cap)
        report["accuracy"]["matvec_rel_err"] = _rel_err(u, exact)
        report["accuracy"]["max_elem_err"] = float(np.max(np.abs(u - exact)))
    if cfg.output_vector:
        _save_column(cfg.output_vector, u)
    pipe.fill_report(report)
    _maybe_dump_tree(pipe, args)
    _finish(report, t_start)
    return report, 0


def cmd_solve(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("solve", cfg)
    pipe = _Pipeline(cfg)
    n = pipe.points.n
    if cfg.rhs:
        b = _load_column(cfg.rhs, n)
    else:
        b = generator(cfg.seed, _TAG_RHS).standard_normal(n)
    hf = pipe.factorized(cfg)
    b_perm = b[pipe.tree.perm]
    t0 = time.perf_counter()
    x_perm = solve(hf, b_perm)
    report["timings"]["solve_s"] = time.perf_counter() - t0
    x = np.empty_like(x_perm)
    x[pipe.tree.perm] = x_perm
    resid = hss_matvec(pipe.ck, x_perm) + cfg.lam * x_perm - b_perm
    report["accuracy"]["roundtrip_rel_err"] = float(
        np.linalg.norm(resid) / max(np.linalg.norm(b_perm), np.finfo(float).tiny)
    )
    if cfg.output_vector:
        _save_column(cfg.output_vector, x)
    pipe.fill_report(report)
    _maybe_dump_tree(pipe, args)
    _finish(report, t_start)
    return report, 0


def cmd_krr(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("krr", cfg)
    if not cfg.labels:
        raise ConfigError("krr requires config.labels (CSV column file)")
    pipe = _Pipeline(cfg)
    n = pipe.points.n
    y = _load_column(cfg.labels, n)
    hf = pipe.factorized(cfg)
    t0 = time.perf_counter()
    w_perm = solve(hf, y[pipe.tree.perm])
    report["timings"]["solve_s"] = time.perf_counter() - t0
    w = np.empty_like(w_perm)
    w[pipe.tree.perm] = w_perm

    signed = bool(np.all(np.isin(y, (-1.0, 1.0))))
    if signed:
        pred_train_perm = hss_matvec(pipe.ck, w_perm)
        pred_train = np.empty_like(pred_train_perm)
        pred_train[pipe.tree.perm] = pred_train_perm
        report["accuracy"]["train_accuracy"] = float(
            np.mean(np.sign(pred_train) == y)
        )
    if cfg.test_dataset is not None:
        test_points = _load_dataset(cfg.test_dataset, cfg.seed + 1)
        pred_test = krr_predict(pipe.points, w, pipe.spec, test_points)
        if cfg.test_labels:
            y_test = _load_column(cfg.test_labels, test_points.n)
            if signed and np.all(np.isin(y_test, (-1.0, 1.0))):
                report["accuracy"]["test_accuracy"] = float(
                    np.mean(np.sign(pred_test) == y_test)
                )
        if cfg.output_vector:
            _save_column(cfg.output_vector, pred_test)
    elif cfg.output_vector:
        _save_column(cfg.output_vector, w)
    pipe.fill_report(report)
    _maybe_dump_tree(pipe, args)
    _finish(report, t_start)
    return report, 0


def cmd_verify(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("verify", cfg)
    pipe = _Pipeline(cfg)
    hf = pipe.factorized(cfg)
    checks: list[dict] = []

    def check(name: str, passed: bool, detail: str) -> None:
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    tree, ck = pipe.tree, pipe.ck
    n = pipe.points.n

    perm_ok = np.array_equal(np.sort(tree.perm), np.arange(n))
    check("perm_bijection", perm_ok, f"perm is a bijection on 0..{n - 1}")

    part_ok, part_detail = _check_partition(tree, cfg.leaf_size)
    check("sibling_partition", part_ok, part_detail)

    nest_ok, nest_detail = _check_nestedness(ck)
    check("skeleton_nestedness", nest_ok, nest_detail)

    ranks = [sk.rank for sk in ck.skeletons if sk is not None]
    rank_ok = all(1 <= r <= cfg.max_rank for r in ranks) if ranks else True
    check(
        "rank_bounds",
        rank_ok,
        f"{len(ranks)} skeletons, ranks within [1, {cfg.max_rank}]",
    )

    ident_ok = _check_identity_on_skeleton(ck)
    check("identity_on_skeleton", ident_ok, "P restricted to skeleton columns is exactly I")

    rng = generator(cfg.seed, _TAG_VERIFY)
    sym_ok, sym_detail = _check_symmetry(ck, hf, rng)
    check("operator_symmetry", sym_ok, sym_detail)

    w = rng.standard_normal((n, 3))
    u = hss_matvec(ck, w) + cfg.lam * w
    w_back = solve_many(hf, u)
    rt_err = max(_rel_err(w_back[:, j], w[:, j]) for j in range(w.shape[1]))
    check(
        "solve_roundtrip",
        rt_err <= cfg.roundtrip_tol,
        f"max relative round-trip error {rt_err:.3e} (tol {cfg.roundtrip_tol:.1e})",
    )

    if n <= cfg.oracle_cap:
        w1 = rng.standard_normal(n)
        exact = dense_matvec(pipe.points, pipe.spec, w1, cap=cfg.oracle_cap)
        got_perm = hss_matvec(ck, w1[tree.perm])
        got = np.empty_like(got_perm)
        got[tree.perm] = got_perm
        mv_err = _rel_err(got, exact)
        check(
            "matvec_vs_dense",
            mv_err <= cfg.matvec_tol,
            f"relative error {mv_err:.3e} (tol {cfg.matvec_tol:.1e})",
        )

        b = rng.standard_normal(n)
        x_dense, _ = dense_oracle(pipe.points, pipe.spec, cfg.lam, b, cap=cfg.oracle_cap)
        x_perm = solve(hf, b[tree.perm])
        x = np.empty_like(x_perm)
        x[tree.perm] = x_perm
        sv_err = _rel_err(x, x_dense)
        check(
            "solve_vs_dense",
            sv_err <= cfg.solve_tol,
            f"relative error {sv_err:.3e} (tol {cfg.solve_tol:.1e})",
        )
    else:
        check("matvec_vs_dense", True, f"skipped: n = {n} exceeds oracle cap {cfg.oracle_cap}")
        check("solve_vs_dense", True, f"skipped: n = {n} exceeds oracle cap {cfg.oracle_cap}")

    det_ok, det_detail = _check_determinism(pipe, cfg)
    check("determinism", det_ok, det_detail)

    pipe.fill_report(report)
    report["checks"] = checks
    _maybe_dump_tree(pipe, args)
    _finish(report, t_start)
    all_ok = all(c["passed"] for c in checks)
    return report, 0 if all_ok else 1


def _check_partition(tree: PartitionTree, leaf_size: int) -> tuple[bool, str]:
    ok = True
    for node in tree.nodes:
        if node.is_leaf:
            if len(tree.nodes) > 1:
                lo = (leaf_size + 1) // 2
                ok &= lo <= node.size <= leaf_size
            continue
        left, right = (tree.nodes[c] for c in node.children)
        ok &= left.begin == node.begin
        ok &= left.end == right.begin
        ok &= right.end == node.end
        ok &= abs(left.size - right.size) <= 1
    return bool(ok), f"{len(tree.nodes)} nodes partition cleanly, balanced within 1"


def _check_nestedness(ck: CompressedKernel) -> tuple[bool, str]:
    tree = ck.tree
    ok = True
    for sk in ck.skeletons:
        if sk is None:
            continue
        node = tree.nodes[sk.node_id]
        ok &= bool(np.all(np.isin(sk.skel, sk.cand)))
        if node.is_leaf:
            ok &= bool(np.all(np.isin(sk.cand, tree.node_points(sk.node_id))))
        else:
            left, right = node.children
            pool = np.concatenate([ck.skeletons[left].skel, ck.skeletons[right].skel])
            ok &= bool(np.all(np.isin(sk.skel, pool)))
    return bool(ok), "internal skeletons drawn from children skeletons"


def _check_identity_on_skeleton(ck: CompressedKernel) -> bool:
    for sk in ck.skeletons:
        if sk is None:
            continue
        pos = _skel_positions(sk)
        if not np.array_equal(sk.coeff[:, pos], np.eye(sk.rank)):
            return False
    return True


def _skel_positions(sk) -> np.ndarray:
    lookup = {int(g): i for i, g in enumerate(sk.cand)}
    return np.array([lookup[int(g)] for g in sk.skel], dtype=np.int64)


def _check_symmetry(ck, hf, rng) -> tuple[bool, str]:
    n = ck.n
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    op_norm = 1.0
    for _ in range(5):
        x = hss_matvec(ck, x)
        op_norm = float(np.linalg.norm(x))
        if op_norm == 0.0:
            break
        x /= op_norm
    worst = 0.0
    for _ in range(3):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        gap = abs(float(u @ hss_matvec(ck, v)) - float(v @ hss_matvec(ck, u)))
        scale = float(np.linalg.norm(u) * np.linalg.norm(v)) * max(op_norm, 1e-300)
        worst = max(worst, gap / scale)
    ok = worst <= 1e-10
    return ok, f"max scaled asymmetry {worst:.3e} (tol 1e-10)"


def _check_determinism(pipe: _Pipeline, cfg: RunConfig) -> tuple[bool, str]:
    other_threads = 4 if cfg.threads == 1 else 1
    params = CompressParams(
        tol=cfg.tol,
        max_rank=cfg.max_rank,
        sample_size=cfg.sample_size,
        n_neighbors=cfg.n_neighbors,
        seed=cfg.seed,
    )
    ck2 = compress(
        pipe.points, pipe.tree, pipe.spec, params,
        neighbors=pipe.neighbors, threads=other_threads,
    )
    ok = _compressed_equal(pipe.ck, ck2)
    hf2 = factorize(ck2, cfg.lam, threads=other_threads)
    b = generator(cfg.seed, _TAG_VERIFY, 1).standard_normal(pipe.points.n)
    x1 = solve(pipe.factorized(cfg), b[pipe.tree.perm])
    x2 = solve(hf2, b[pipe.tree.perm])
    ok &= x1.tobytes() == x2.tobytes()
    return bool(ok), (
        f"threads {cfg.threads} vs {other_threads}: compress/factorize/solve bit-identical"
        if ok
        else f"threads {cfg.threads} vs {other_threads}: outputs differ"
    )


def _compressed_equal(a: CompressedKernel, b: CompressedKernel) -> bool:
    if len(a.skeletons) != len(b.skeletons):
        return False
    for sa, sb in zip(a.skeletons, b.skeletons):
        if (sa is None) != (sb is None):
            return False
        if sa is None:
            continue
        if sa.skel.tobytes() != sb.skel.tobytes():
            return False
        if sa.coeff.tobytes() != sb.coeff.tobytes():
            return False
    if set(a.couplings) != set(b.couplings):
        return False
    for key, block in a.couplings.items():
        if block.tobytes() != b.couplings[key].tobytes():
            return False
    for key, block in a.leaf_diag.items():
        if block.tobytes() != b.leaf_diag[key].tobytes():
            return False
    return True


def cmd_bench(cfg: RunConfig, args) -> tuple[dict, int]:
    t_start = time.perf_counter()
    report = new_report("bench", cfg)
    if not cfg.dataset.is_synthetic:
        raise ConfigError("bench requires a synthetic dataset spec")
    rows = []
    for size in cfg.bench_schedule:
        sub = RunConfig.from_json(cfg.echo())
        sub.dataset.n = size
        sub.threads = cfg.threads
        reps = {key: [] for key in ("tree_s", "knn_s", "compress_s", "factorize_s", "solve_s")}
        for _ in range(cfg.bench_repetitions):
            pipe = _Pipeline(sub)
            hf = pipe.factorized(sub)
            b = generator(cfg.seed, _TAG_BENCH, size).standard_normal(size)
            t0 = time.perf_counter()
            solve(hf, b[pipe.tree.perm])
            solve_s = time.perf_counter() - t0
            reps["tree_s"].append(pipe.tree_s)
            reps["knn_s"].append(pipe.knn_s)
            reps["compress_s"].append(pipe.compress_s)
            reps["factorize_s"].append(pipe.factorize_s)
            reps["solve_s"].append(solve_s)
        row = {"n": size}
        row.update({key: float(np.median(vals)) for key, vals in reps.items()})
        row["total_s"] = sum(row[key] for key in reps)
        rows.append(row)

    sizes = np.array([row["n"] for row in rows], dtype=np.float64)
    log_n = np.log(sizes)

    def slope(key) -> float:
        if callable(key):
            times = np.array([key(row) for row in rows])
        else:
            times = np.array([row[key] for row in rows])
        return float(np.polyfit(log_n, np.log(np.maximum(times, 1e-9)), 1)[0])

    exponents = {
        "compress_factorize": slope(lambda r: r["compress_s"] + r["factorize_s"]),
        "compress": slope("compress_s"),
        "factorize": slope("factorize_s"),
        "solve": slope("solve_s"),
        "knn": slope("knn_s"),
    }
    report["bench"] = {"rows": rows, "exponents": exponents}
    last = rows[-1]
    for key in ("tree_s", "knn_s", "compress_s", "factorize_s", "solve_s"):
        report["timings"][key] = last[key]
    _finish(report, t_start)
    return report, 0


_COMMANDS = {
    "build": cmd_build,
    "solve": cmd_solve,
    "matvec": cmd_matvec,
    "krr": cmd_krr,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


if __name__ == "__main__":
    sys.exit(main())
