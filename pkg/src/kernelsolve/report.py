"""Run configuration parsing and report assembly for the command line.

A run is described by a single JSON document (schema 1). Parsing is
strict: unknown keys, wrong types, and out-of-range values raise
ConfigError with the offending key path, which the command line maps to
exit code 2. Reports are plain dicts with a fixed key set so that every
command emits the same shape; metrics that a command does not compute are
present with value null.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1

_SYNTH_KINDS = ("gaussian-mixture", "uniform-cube", "helix")
_FORMATS = ("csv", "f64-binary")
_FAMILIES = ("gaussian", "laplace", "polynomial")


def _expect_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _expect_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _expect_num(value, path: str, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{path}: must be finite, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _expect_str(value, path: str, choices: tuple[str, ...] | None = None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{path}: expected one of {list(choices)}, got {value!r}")
    return value


def _reject_unknown(mapping: dict, known: tuple[str, ...], path: str) -> None:
    extra = sorted(set(mapping) - set(known))
    if extra:
        raise ConfigError(f"{path}: unknown keys {extra}")


@dataclass
class DatasetSpec:
    """Either a synthetic generator spec or a file reference."""

    kind: str | None = None
    n: int | None = None
    d: int | None = None
    path: str | None = None
    format: str | None = None

    @property
    def is_synthetic(self) -> bool:
        return self.kind is not None

    @classmethod
    def from_json(cls, obj, path: str) -> "DatasetSpec":
        obj = _expect_map(obj, path)
        if "synthetic" in obj:
            _reject_unknown(obj, ("synthetic",), path)
            syn = _expect_map(obj["synthetic"], f"{path}.synthetic")
            _reject_unknown(syn, ("kind", "n", "d"), f"{path}.synthetic")
            for key in ("kind", "n", "d"):
                if key not in syn:
                    raise ConfigError(f"{path}.synthetic: missing key {key!r}")
            return cls(
                kind=_expect_str(syn["kind"], f"{path}.synthetic.kind", _SYNTH_KINDS),
                n=_expect_int(syn["n"], f"{path}.synthetic.n", 1),
                d=_expect_int(syn["d"], f"{path}.synthetic.d", 1),
            )
        _reject_unknown(obj, ("path", "format"), path)
        for key in ("path", "format"):
            if key not in obj:
                raise ConfigError(f"{path}: missing key {key!r}")
        return cls(
            path=_expect_str(obj["path"], f"{path}.path"),
            format=_expect_str(obj["format"], f"{path}.format", _FORMATS),
        )

    def echo(self) -> dict:
        if self.is_synthetic:
            return {"synthetic": {"kind": self.kind, "n": self.n, "d": self.d}}
        return {"path": self.path, "format": self.format}


@dataclass
class RunConfig:
    dataset: DatasetSpec
    family: str = "gaussian"
    bandwidth: float | str = "median"
    degree: int = 2
    shift: float = 1.0
    leaf_size: int = 256
    tol: float = 1e-5
    max_rank: int = 256
    sample_size: int | None = None
    n_neighbors: int = 32
    lam: float = 1.0
    seed: int = 0
    threads: int = 1
    rhs: str | None = None
    labels: str | None = None
    test_dataset: DatasetSpec | None = None
    test_labels: str | None = None
    output_vector: str | None = None
    bench_schedule: list[int] = field(default_factory=lambda: [4096, 8192, 16384, 32768])
    bench_repetitions: int = 3
    roundtrip_tol: float = 1e-8
    matvec_tol: float = 1e-4
    solve_tol: float = 1e-4
    oracle_cap: int = 8192

    _TOP_KEYS = (
        "schema",
        "dataset",
        "kernel",
        "tree",
        "compression",
        "solver",
        "seed",
        "threads",
        "rhs",
        "labels",
        "test_dataset",
        "test_labels",
        "output_vector",
        "bench",
        "verify",
        "oracle_cap",
    )

    @classmethod
    def from_json(cls, obj) -> "RunConfig":
        obj = _expect_map(obj, "config")
        _reject_unknown(obj, cls._TOP_KEYS, "config")
        if "schema" not in obj:
            raise ConfigError("config: missing key 'schema'")
        if _expect_int(obj["schema"], "config.schema") != SCHEMA_VERSION:
            raise ConfigError(
                f"config.schema: unsupported version {obj['schema']}, expected {SCHEMA_VERSION}"
            )
        if "dataset" not in obj:
            raise ConfigError("config: missing key 'dataset'")
        cfg = cls(dataset=DatasetSpec.from_json(obj["dataset"], "config.dataset"))

        if "kernel" in obj:
            ker = _expect_map(obj["kernel"], "config.kernel")
            _reject_unknown(ker, ("family", "bandwidth", "degree", "shift"), "config.kernel")
            if "family" in ker:
                cfg.family = _expect_str(ker["family"], "config.kernel.family", _FAMILIES)
            if "bandwidth" in ker:
                bw = ker["bandwidth"]
                if isinstance(bw, str):
                    if bw != "median":
                        raise ConfigError(
                            f"config.kernel.bandwidth: expected a number or 'median', got {bw!r}"
                        )
                    cfg.bandwidth = "median"
                else:
                    cfg.bandwidth = _expect_num(bw, "config.kernel.bandwidth")
                    if cfg.bandwidth <= 0:
                        raise ConfigError(
                            f"config.kernel.bandwidth: must be > 0, got {cfg.bandwidth}"
                        )
            if "degree" in ker:
                cfg.degree = _expect_int(ker["degree"], "config.kernel.degree", 1)
            if "shift" in ker:
                cfg.shift = _expect_num(ker["shift"], "config.kernel.shift", 0.0)

        if "tree" in obj:
            tr = _expect_map(obj["tree"], "config.tree")
            _reject_unknown(tr, ("leaf_size",), "config.tree")
            if "leaf_size" in tr:
                cfg.leaf_size = _expect_int(tr["leaf_size"], "config.tree.leaf_size", 2)

        if "compression" in obj:
            comp = _expect_map(obj["compression"], "config.compression")
            _reject_unknown(
                comp, ("tol", "max_rank", "sample_size", "neighbors"), "config.compression"
            )
            if "tol" in comp:
                cfg.tol = _expect_num(comp["tol"], "config.compression.tol")
                if not (0.0 < cfg.tol < 1.0):
                    raise ConfigError(
                        f"config.compression.tol: need 0 < tol < 1, got {cfg.tol}"
                    )
            if "max_rank" in comp:
                cfg.max_rank = _expect_int(comp["max_rank"], "config.compression.max_rank", 1)
            if "sample_size" in comp and comp["sample_size"] is not None:
                cfg.sample_size = _expect_int(
                    comp["sample_size"], "config.compression.sample_size", 1
                )
            if "neighbors" in comp:
                cfg.n_neighbors = _expect_int(
                    comp["neighbors"], "config.compression.neighbors", 1
                )

        if "solver" in obj:
            sol = _expect_map(obj["solver"], "config.solver")
            _reject_unknown(sol, ("lambda",), "config.solver")
            if "lambda" in sol:
                cfg.lam = _expect_num(sol["lambda"], "config.solver.lambda", 0.0)

        if "seed" in obj:
            cfg.seed = _expect_int(obj["seed"], "config.seed", 0)
        if "threads" in obj:
            cfg.threads = _expect_int(obj["threads"], "config.threads", 1)
        for key in ("rhs", "labels", "test_labels", "output_vector"):
            if key in obj and obj[key] is not None:
                setattr(cfg, key, _expect_str(obj[key], f"config.{key}"))
        if "test_dataset" in obj and obj["test_dataset"] is not None:
            cfg.test_dataset = DatasetSpec.from_json(obj["test_dataset"], "config.test_dataset")

        if "bench" in obj:
            ben = _expect_map(obj["bench"], "config.bench")
            _reject_unknown(ben, ("schedule", "repetitions"), "config.bench")
            if "schedule" in ben:
                sched = ben["schedule"]
                if not isinstance(sched, list) or len(sched) < 2:
                    raise ConfigError(
                        "config.bench.schedule: expected a list of at least 2 sizes"
                    )
                cfg.bench_schedule = [
                    _expect_int(v, f"config.bench.schedule[{i}]", 2)
                    for i, v in enumerate(sched)
                ]
            if "repetitions" in ben:
                cfg.bench_repetitions = _expect_int(
                    ben["repetitions"], "config.bench.repetitions", 1
                )

        if "verify" in obj:
            ver = _expect_map(obj["verify"], "config.verify")
            _reject_unknown(
                ver, ("roundtrip_tol", "matvec_tol", "solve_tol"), "config.verify"
            )
            for key in ("roundtrip_tol", "matvec_tol", "solve_tol"):
                if key in ver:
                    setattr(cfg, key, _expect_num(ver[key], f"config.verify.{key}", 0.0))

        if "oracle_cap" in obj:
            cfg.oracle_cap = _expect_int(obj["oracle_cap"], "config.oracle_cap", 1)
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json(obj)

    def echo(self) -> dict:
        """The configuration as it applies after defaults, for the report."""
        out = {
            "schema": SCHEMA_VERSION,
            "dataset": self.dataset.echo(),
            "kernel": {
                "family": self.family,
                "bandwidth": self.bandwidth,
                "degree": self.degree,
                "shift": self.shift,
            },
            "tree": {"leaf_size": self.leaf_size},
            "compression": {
                "tol": self.tol,
                "max_rank": self.max_rank,
                "sample_size": self.sample_size,
                "neighbors": self.n_neighbors,
            },
            "solver": {"lambda": self.lam},
            "seed": self.seed,
            "threads": self.threads,
            "rhs": self.rhs,
            "labels": self.labels,
            "test_dataset": self.test_dataset.echo() if self.test_dataset else None,
            "test_labels": self.test_labels,
            "output_vector": self.output_vector,
            "bench": {
                "schedule": list(self.bench_schedule),
                "repetitions": self.bench_repetitions,
            },
            "verify": {
                "roundtrip_tol": self.roundtrip_tol,
                "matvec_tol": self.matvec_tol,
                "solve_tol": self.solve_tol,
            },
            "oracle_cap": self.oracle_cap,
        }
        return out


_ACCURACY_KEYS = (
    "matvec_rel_err",
    "solve_rel_err",
    "roundtrip_rel_err",
    "max_elem_err",
    "train_accuracy",
    "test_accuracy",
    "sign_agreement",
)
_TIMING_KEYS = ("tree_s", "knn_s", "compress_s", "factorize_s", "solve_s", "total_s")


def new_report(command: str, config: RunConfig) -> dict:
    """Fresh report with the full fixed key set; metrics start as null."""
    return {
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config.echo(),
        "accuracy": {key: None for key in _ACCURACY_KEYS},
        "structure": {
            "levels": None,
            "leaf_count": None,
            "ranks_per_level": None,
            "memory_bytes": None,
        },
        "timings": {key: None for key in _TIMING_KEYS},
        "diagnostics": None,
        "bench": None,
        "checks": None,
    }


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    return value


def dump_report(report: dict, stream) -> None:
    json.dump(_to_jsonable(report), stream, indent=2)
    stream.write("\n")
