"""Experiment configuration: YAML schema, validation, seed derivation.

A config is one YAML document with ``problem``, ``methods``, ``trials``,
``base_seed`` and ``outputs`` sections (docs/formats.md shows the full
schema).  Validation errors carry the offending key path so the CLI can
print line-anchored messages like ``problem.n: must be a positive integer``.

Seeds: sweep point m, trial j and method name derive deterministic 64-bit
seeds from ``base_seed`` by XOR with the first 8 bytes of
``blake2b(f"{tag}:{m}:{j}:...")`` -- stable across processes and platforms.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .kernels import ParameterError, RobustKernel, kernel_from_dict
from .problems import BlobClassification, LinearRegression


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def stable_hash64(*parts) -> int:
    digest = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def instance_seed(base_seed: int, sweep_index: int, trial: int) -> int:
    return (base_seed ^ stable_hash64("instance", sweep_index, trial)) % 2**64


def run_seed(base_seed: int, sweep_index: int, trial: int, method: str) -> int:
    return (base_seed ^ stable_hash64("run", sweep_index, trial, method)) % 2**64


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class MethodSpec:
    name: str
    mode: str                     # sgd | gd | momentum | clip | normalized | aaa
    eta: float
    batch_size: int = 1
    max_iters: int = 10_000
    momentum: float = 0.9
    clip_tau: float = 1.0
    kernel: RobustKernel | None = None
    T: int = 1
    zeta: float = 0.9
    c0: float | None = None
    param_update_period: int | None = None
    bisection_tol: float = 1e-6
    stop_epsilon: float = 0.0
    stop_patience: int = 5
    loss_buffer: str = "full"
    buffer_size: int = 4096


@dataclass
class ExperimentConfig:
    problem: dict
    lambdas: list[float]
    methods: list[MethodSpec]
    trials: int
    base_seed: int
    outdir: str
    logging_period: int = 500
    workers: int = 1
    diagnostics: bool = True
    raw: dict = field(default_factory=dict)

    def semantic_dict(self) -> dict:
        """Experiment-defining content only; output directory and worker
        count are execution knobs and must not change the hash."""
        methods = []
        for m in self.methods:
            d = {k: v for k, v in vars(m).items() if v is not None}
            if m.kernel is not None:
                d["kernel"] = m.kernel.to_dict()
            methods.append(d)
        return {
            "problem": self.problem,
            "lambdas": self.lambdas,
            "methods": methods,
            "trials": self.trials,
            "base_seed": self.base_seed,
            "logging_period": self.logging_period,
            "diagnostics": self.diagnostics,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.semantic_dict())


_PROBLEM_KINDS = (LinearRegression, BlobClassification)
_MODES = ("sgd", "gd", "momentum", "clip", "normalized", "aaa")


def _as_positive_int(value, path) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
             path, f"must be a positive integer, got {value!r}")
    return value


def _as_number(value, path) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             path, f"must be a number, got {value!r}")
    return float(value)


def _validate_problem(section, path="problem") -> tuple[dict, list[float]]:
    _require(isinstance(section, dict), path, "must be a mapping")
    kind = section.get("kind")
    _require(kind in _PROBLEM_KINDS, f"{path}.kind",
             f"must be one of {list(_PROBLEM_KINDS)}, got {kind!r}")
    out = {"kind": kind}
    out["n"] = _as_positive_int(section.get("n", 1000), f"{path}.n")
    out["k"] = _as_positive_int(section.get("k", 10 if kind == LinearRegression else 5), f"{path}.k")
    tf = _as_number(section.get("test_fraction", 0.2), f"{path}.test_fraction")
    _require(0.0 < tf < 1.0, f"{path}.test_fraction", f"must lie in (0, 1), got {tf}")
    out["test_fraction"] = tf

    if "lambda_sweep" in section:
        sweep = section["lambda_sweep"]
        _require(isinstance(sweep, list) and sweep, f"{path}.lambda_sweep", "must be a nonempty list")
        lambdas = [_as_number(v, f"{path}.lambda_sweep[{i}]") for i, v in enumerate(sweep)]
    else:
        lambdas = [_as_number(section.get("lambda", 0.0), f"{path}.lambda")]
    for i, lam in enumerate(lambdas):
        _require(0.0 <= lam < 1.0, f"{path}.lambda[{i}]", f"must lie in [0, 1), got {lam}")

    if kind == LinearRegression:
        out["noise_sd"] = _as_number(section.get("noise_sd", 0.1), f"{path}.noise_sd")
        out["outlier_sd"] = _as_number(section.get("outlier_sd", 5.0), f"{path}.outlier_sd")
    else:
        out["K"] = _as_positive_int(section.get("K", 3), f"{path}.K")
        _require(out["K"] >= 2, f"{path}.K", "needs at least 2 classes")
        _require(out["k"] >= out["K"], f"{path}.k", f"blob placement needs k >= K (K={out['K']})")
        out["separation"] = _as_number(section.get("separation", 3.0), f"{path}.separation")
    return out, lambdas


def _validate_method(section, index: int) -> MethodSpec:
    path = f"methods[{index}]"
    _require(isinstance(section, dict), path, "must be a mapping")
    mode = section.get("mode")
    _require(mode in _MODES, f"{path}.mode", f"must be one of {list(_MODES)}, got {mode!r}")
    name = section.get("name", mode)
    _require(isinstance(name, str) and name, f"{path}.name", "must be a nonempty string")
    eta = _as_number(section.get("eta", 1e-3), f"{path}.eta")
    _require(eta > 0, f"{path}.eta", f"must be positive, got {eta}")

    kwargs = {
        "name": name,
        "mode": mode,
        "eta": eta,
        "batch_size": _as_positive_int(section.get("batch_size", 1), f"{path}.batch_size"),
        "max_iters": _as_positive_int(section.get("max_iters", 10_000), f"{path}.max_iters"),
        "stop_epsilon": _as_number(section.get("stop_epsilon", 0.0), f"{path}.stop_epsilon"),
        "stop_patience": _as_positive_int(section.get("stop_patience", 5), f"{path}.stop_patience"),
    }
    if mode == "momentum":
        kwargs["momentum"] = _as_number(section.get("momentum", 0.9), f"{path}.momentum")
    if mode == "clip":
        kwargs["clip_tau"] = _as_number(section.get("clip_tau", 1.0), f"{path}.clip_tau")
    if mode == "aaa":
        _require("kernel" in section, f"{path}.kernel", "aaa methods need a kernel spec")
        try:
            kernel = kernel_from_dict(section["kernel"])
        except ParameterError as exc:
            raise ConfigError(f"{path}.kernel", str(exc)) from exc
        zeta = _as_number(section.get("zeta", 0.9), f"{path}.zeta")
        _require(0.0 < zeta <= 1.0, f"{path}.zeta", f"must lie in (0, 1], got {zeta}")
        buffer_mode = section.get("loss_buffer", "full")
        _require(buffer_mode in ("full", "recent"), f"{path}.loss_buffer",
                 f"must be 'full' or 'recent', got {buffer_mode!r}")
        kwargs.update(
            kernel=kernel,
            T=_as_positive_int(section.get("T", 1), f"{path}.T"),
            zeta=zeta,
            c0=None if section.get("c0") is None else _as_number(section["c0"], f"{path}.c0"),
            param_update_period=None
            if section.get("param_update_period") is None
            else _as_positive_int(section["param_update_period"], f"{path}.param_update_period"),
            bisection_tol=_as_number(section.get("bisection_tol", 1e-6), f"{path}.bisection_tol"),
            loss_buffer=buffer_mode,
            buffer_size=_as_positive_int(section.get("buffer_size", 4096), f"{path}.buffer_size"),
        )
    return MethodSpec(**kwargs)


def validate_config(raw: dict) -> ExperimentConfig:
    _require(isinstance(raw, dict), "config", "top level must be a mapping")
    problem, lambdas = _validate_problem(raw.get("problem"))
    methods_raw = raw.get("methods")
    _require(isinstance(methods_raw, list) and methods_raw, "methods", "must be a nonempty list")
    methods = [_validate_method(m, i) for i, m in enumerate(methods_raw)]
    names = [m.name for m in methods]
    _require(len(set(names)) == len(names), "methods", f"method names must be unique, got {names}")

    trials = _as_positive_int(raw.get("trials", 1), "trials")
    base_seed = raw.get("base_seed", 0)
    _require(isinstance(base_seed, int) and not isinstance(base_seed, bool) and 0 <= base_seed < 2**64,
             "base_seed", f"must be a 64-bit unsigned integer, got {base_seed!r}")

    outputs = raw.get("outputs", {})
    _require(isinstance(outputs, dict), "outputs", "must be a mapping")
    outdir = outputs.get("directory", "out")
    _require(isinstance(outdir, str) and outdir, "outputs.directory", "must be a nonempty string")
    return ExperimentConfig(
        problem=problem,
        lambdas=lambdas,
        methods=methods,
        trials=trials,
        base_seed=base_seed,
        outdir=outdir,
        logging_period=_as_positive_int(outputs.get("logging_period", 500), "outputs.logging_period"),
        workers=_as_positive_int(outputs.get("workers", 1), "outputs.workers"),
        diagnostics=bool(outputs.get("diagnostics", True)),
        raw=raw,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(where, f"not valid YAML ({exc})") from exc
    return validate_config(raw)


def preset_path(name: str) -> Path | None:
    candidate = Path(__file__).parent / "presets" / f"{name}.yaml"
    return candidate if candidate.is_file() else None
