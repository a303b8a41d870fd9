"""Experiment configuration: JSON with unit-suffixed field names.

All energies are ``*_meV``, times ``*_ns``; complex-valued couplings accept a
plain number or a ``[re, im]`` pair.  ``parse`` and ``emit`` round-trip:
``parse(emit(cfg)) == cfg``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Sequence

from .model import DotParams


class ConfigError(ValueError):
    """Malformed configuration; message names the offending field."""


def _complex_in(value, where: str) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) for v in value)
    ):
        return complex(value[0], value[1])
    raise ConfigError(f"{where}: expected number or [re, im], got {value!r}")


def _complex_out(z: complex):
    return z.real if z.imag == 0 else [z.real, z.imag]


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return data[key]


@dataclass(frozen=True)
class DotConfig:
    g_meV: complex
    omega_meV: complex
    delta_meV: float
    delta_cav_meV: float | None = None  # None: calibrated to the schedule
    omega_prime_meV: complex | None = None
    delta_prime_meV: float | None = None

    @classmethod
    def parse(cls, data: dict, where: str) -> "DotConfig":
        return cls(
            g_meV=_complex_in(_require(data, "g_meV", where), f"{where}.g_meV"),
            omega_meV=_complex_in(
                _require(data, "omega_meV", where), f"{where}.omega_meV"
            ),
            delta_meV=float(_require(data, "delta_meV", where)),
            delta_cav_meV=(
                float(data["delta_cav_meV"]) if data.get("delta_cav_meV") is not None else None
            ),
            omega_prime_meV=(
                _complex_in(data["omega_prime_meV"], f"{where}.omega_prime_meV")
                if data.get("omega_prime_meV") is not None
                else None
            ),
            delta_prime_meV=(
                float(data["delta_prime_meV"]) if data.get("delta_prime_meV") is not None else None
            ),
        )

    def emit(self) -> dict:
        out: dict[str, Any] = {
            "g_meV": _complex_out(self.g_meV),
            "omega_meV": _complex_out(self.omega_meV),
            "delta_meV": self.delta_meV,
        }
        if self.delta_cav_meV is not None:
            out["delta_cav_meV"] = self.delta_cav_meV
        if self.omega_prime_meV is not None:
            out["omega_prime_meV"] = _complex_out(self.omega_prime_meV)
        if self.delta_prime_meV is not None:
            out["delta_prime_meV"] = self.delta_prime_meV
        return out

    def to_dot_params(self, delta_cav: float | None = None) -> DotParams:
        dcav = self.delta_cav_meV if delta_cav is None else delta_cav
        if dcav is None:
            raise ConfigError("delta_cav_meV unset and no calibrated value supplied")
        return DotParams(
            g=self.g_meV,
            omega=self.omega_meV,
            delta=self.delta_meV,
            delta_cav=dcav,
            omega_prime=self.omega_prime_meV,
            delta_prime=self.delta_prime_meV,
        )


@dataclass(frozen=True)
class SchedulerConfig:
    lambda0_meV: float | None = None  # None: geometric mean of the dot drives
    ratio_min: float = 100.0

    @classmethod
    def parse(cls, data: dict, where: str) -> "SchedulerConfig":
        return cls(
            lambda0_meV=(
                float(data["lambda0_meV"]) if data.get("lambda0_meV") is not None else None
            ),
            ratio_min=float(data.get("ratio_min", 100.0)),
        )

    def emit(self) -> dict:
        out: dict[str, Any] = {"ratio_min": self.ratio_min}
        if self.lambda0_meV is not None:
            out["lambda0_meV"] = self.lambda0_meV
        return out


@dataclass(frozen=True)
class SweepConfig:
    tau_ratio_start: float = 0.0
    tau_ratio_stop: float = 2.0
    num_points: int = 20
    # Each variant overrides the per-dot laser detunings (delta' follows).
    variants: tuple[tuple[float, ...], ...] = ()

    @classmethod
    def parse(cls, data: dict, where: str) -> "SweepConfig":
        variants = tuple(
            tuple(float(x) for x in v) for v in data.get("variants", [])
        )
        return cls(
            tau_ratio_start=float(data.get("tau_ratio_start", 0.0)),
            tau_ratio_stop=float(data.get("tau_ratio_stop", 2.0)),
            num_points=int(data.get("num_points", 20)),
            variants=variants,
        )

    def emit(self) -> dict:
        out: dict[str, Any] = {
            "tau_ratio_start": self.tau_ratio_start,
            "tau_ratio_stop": self.tau_ratio_stop,
            "num_points": self.num_points,
        }
        if self.variants:
            out["variants"] = [list(v) for v in self.variants]
        return out

    def ratios(self) -> list[float]:
        if self.num_points < 2:
            raise ConfigError("sweep.num_points must be >= 2")
        step = (self.tau_ratio_stop - self.tau_ratio_start) / (self.num_points - 1)
        return [self.tau_ratio_start + i * step for i in range(self.num_points)]


@dataclass(frozen=True)
class ScalingConfig:
    shapes: tuple[tuple[int, int], ...] = ((1, 12), (2, 6), (3, 4))
    include_transposes: bool = True
    graph_sizes: tuple[int, ...] = ()
    ncz_sizes: tuple[int, ...] = ()

    @classmethod
    def parse(cls, data: dict, where: str) -> "ScalingConfig":
        shapes = tuple(
            (int(s[0]), int(s[1])) for s in data.get("shapes", [[1, 12], [2, 6], [3, 4]])
        )
        return cls(
            shapes=shapes,
            include_transposes=bool(data.get("include_transposes", True)),
            graph_sizes=tuple(int(x) for x in data.get("graph_sizes", [])),
            ncz_sizes=tuple(int(x) for x in data.get("ncz_sizes", [])),
        )

    def emit(self) -> dict:
        return {
            "shapes": [list(s) for s in self.shapes],
            "include_transposes": self.include_transposes,
            "graph_sizes": list(self.graph_sizes),
            "ncz_sizes": list(self.ncz_sizes),
        }


@dataclass(frozen=True)
class GraphConfig:
    num_qubits: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def parse(cls, data: dict, where: str) -> "GraphConfig":
        return cls(
            num_qubits=int(_require(data, "num_qubits", where)),
            edges=tuple((int(e[0]), int(e[1])) for e in _require(data, "edges", where)),
        )

    def emit(self) -> dict:
        return {"num_qubits": self.num_qubits, "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True)
class ClusterConfig:
    rows: int
    cols: int

    @classmethod
    def parse(cls, data: dict, where: str) -> "ClusterConfig":
        return cls(rows=int(_require(data, "rows", where)), cols=int(_require(data, "cols", where)))

    def emit(self) -> dict:
        return {"rows": self.rows, "cols": self.cols}


@dataclass(frozen=True)
class NullGateConfig:
    m: int = 2
    n: int = 1
    k_values: tuple[int, ...] = (1, 2, 3)

    @classmethod
    def parse(cls, data: dict, where: str) -> "NullGateConfig":
        return cls(
            m=int(data.get("m", 2)),
            n=int(data.get("n", 1)),
            k_values=tuple(int(k) for k in data.get("k_values", [1, 2, 3])),
        )

    def emit(self) -> dict:
        return {"m": self.m, "n": self.n, "k_values": list(self.k_values)}


@dataclass(frozen=True)
class NczConfig:
    num_controls: int = 2

    @classmethod
    def parse(cls, data: dict, where: str) -> "NczConfig":
        return cls(num_controls=int(data.get("num_controls", 2)))

    def emit(self) -> dict:
        return {"num_controls": self.num_controls}


@dataclass(frozen=True)
class FockCheckConfig:
    cutoffs: tuple[int, ...] = (2, 3, 4, 5)

    @classmethod
    def parse(cls, data: dict, where: str) -> "FockCheckConfig":
        return cls(cutoffs=tuple(int(c) for c in data.get("cutoffs", [2, 3, 4, 5])))

    def emit(self) -> dict:
        return {"cutoffs": list(self.cutoffs)}


_OPTIONAL_BLOCKS = {
    "sweep": SweepConfig,
    "scaling": ScalingConfig,
    "graph": GraphConfig,
    "cluster": ClusterConfig,
    "null_gate": NullGateConfig,
    "ncz": NczConfig,
    "fock_check": FockCheckConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    dots: tuple[DotConfig, ...]
    tau_w_ns: float = 1.0
    tier: str = "eff"
    fock_cutoff: int = 4
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    sweep: SweepConfig | None = None
    scaling: ScalingConfig | None = None
    graph: GraphConfig | None = None
    cluster: ClusterConfig | None = None
    null_gate: NullGateConfig | None = None
    ncz: NczConfig | None = None
    fock_check: FockCheckConfig | None = None
    rng_seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.tier not in ("full", "eff1", "eff"):
            raise ConfigError(f"tier must be full|eff1|eff, got {self.tier!r}")
        if self.fock_cutoff < 1:
            raise ConfigError("fock_cutoff must be >= 1")
        if self.tau_w_ns <= 0:
            raise ConfigError("decay.tau_w_ns must be > 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def parse(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object")
        dots_raw = _require(data, "dots", "config")
        if not isinstance(dots_raw, list) or not dots_raw:
            raise ConfigError("config.dots: need a non-empty list")
        dots = tuple(
            DotConfig.parse(d, f"config.dots[{i}]") for i, d in enumerate(dots_raw)
        )
        decay = data.get("decay", {})
        kwargs: dict[str, Any] = {}
        for name, block_cls in _OPTIONAL_BLOCKS.items():
            if name in data and data[name] is not None:
                kwargs[name] = block_cls.parse(data[name], f"config.{name}")
        try:
            return cls(
                dots=dots,
                tau_w_ns=float(decay.get("tau_w_ns", 1.0)),
                tier=str(data.get("tier", "eff")),
                fock_cutoff=int(data.get("fock_cutoff", 4)),
                scheduler=SchedulerConfig.parse(
                    data.get("scheduler", {}), "config.scheduler"
                ),
                rng_seed=int(data.get("rng_seed", 0)),
                workers=int(data.get("workers", 1)),
                output_dir=str(data.get("output_dir", "out")),
                **kwargs,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def emit(self) -> dict:
        out: dict[str, Any] = {
            "dots": [d.emit() for d in self.dots],
            "decay": {"tau_w_ns": self.tau_w_ns},
            "tier": self.tier,
            "fock_cutoff": self.fock_cutoff,
            "scheduler": self.scheduler.emit(),
            "rng_seed": self.rng_seed,
            "workers": self.workers,
            "output_dir": self.output_dir,
        }
        for name in _OPTIONAL_BLOCKS:
            block = getattr(self, name)
            if block is not None:
                out[name] = block.emit()
        return out

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        return cls.parse(data)

    def sha256(self) -> str:
        canonical = json.dumps(self.emit(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
