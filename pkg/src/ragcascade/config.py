"""Service configuration: one YAML file, env overrides, fail-fast validation.

Precedence is environment > file > defaults. Unknown keys anywhere in the
file are rejected so typos fail at startup instead of silently using a
default. Environment overrides exist for the listen address and the
snapshot directory only.

Schema (all sections optional)::

    listen_address: "127.0.0.1:8077"
    snapshot_dir: "snapshots"
    max_in_flight: 64
    reset_clears_adaptive_memory: true
    embedder:
      kind: builtin            # builtin | remote
      endpoint: null           # required for remote
    backend:
      kind: stub               # stub | remote
      table_path: null         # optional training-triple JSONL for stub
      endpoint: null           # required for remote
    router:
      semantic_threshold: 0.85
      akm_threshold: 0.85
      recall_threshold: 0.5
      retrieval_k: 3
      akm_seed_k: 10
      deterministic_settle: true
      disabled_layers: []      # wire names, e.g. [adaptive_memory]
    simulation:
      n_sessions: 9
      queries_per_session: 1000
      replay_split: 0.5
      ramp: linear
      perturber: composite
      seed: 0
      latency_sigma: 0.25
    cost_model:
      gpu_seconds_per_query: {naive_rag: 0.53866, ...}   # partial override
      qps: {fixed_kv: 419430, ...}                       # partial override
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .metrics import DEFAULT_GPU_SECONDS_PER_QUERY, DEFAULT_QPS, LayerCostModel
from .model import LayerTag
from .router import RouterConfig
from .simulation import SimulationConfig

ENV_LISTEN_ADDRESS = "RAGCASCADE_LISTEN_ADDRESS"
ENV_SNAPSHOT_DIR = "RAGCASCADE_SNAPSHOT_DIR"


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "builtin"
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("builtin", "remote"):
            raise ConfigError(f"embedder.kind must be builtin or remote, got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("embedder.endpoint is required when kind is remote")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "stub"
    table_path: str | None = None
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("stub", "remote"):
            raise ConfigError(f"backend.kind must be stub or remote, got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("backend.endpoint is required when kind is remote")


@dataclass(frozen=True)
class ServiceConfig:
    listen_address: str = "127.0.0.1:8077"
    snapshot_dir: str | None = None
    max_in_flight: int = 64
    reset_clears_adaptive_memory: bool = True
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    cost_model: LayerCostModel = field(default_factory=LayerCostModel)

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(
                f"listen_address must look like host:port, got {self.listen_address!r}"
            )


def _require_known_keys(section: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _build_layer_table(
    overrides: Mapping[str, Any] | None, defaults: Mapping[LayerTag, float], where: str
) -> dict[LayerTag, float]:
    table = dict(defaults)
    if overrides:
        for name, value in overrides.items():
            try:
                tag = LayerTag.from_wire(str(name))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            table[tag] = float(value)
    return table


def _parse_router(section: Mapping[str, Any]) -> RouterConfig:
    allowed = {
        "semantic_threshold",
        "akm_threshold",
        "recall_threshold",
        "retrieval_k",
        "akm_seed_k",
        "deterministic_settle",
        "disabled_layers",
    }
    _require_known_keys(section, allowed, "router")
    kwargs: dict[str, Any] = {k: v for k, v in section.items() if k != "disabled_layers"}
    if "disabled_layers" in section:
        try:
            kwargs["disabled_layers"] = frozenset(
                LayerTag.from_wire(str(name)) for name in section["disabled_layers"]
            )
        except ValueError as exc:
            raise ConfigError(f"router.disabled_layers: {exc}") from exc
    try:
        return RouterConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"router: {exc}") from exc


def _parse_simulation(section: Mapping[str, Any]) -> SimulationConfig:
    allowed = {
        "n_sessions",
        "queries_per_session",
        "replay_split",
        "ramp",
        "perturber",
        "seed",
        "latency_sigma",
    }
    _require_known_keys(section, allowed, "simulation")
    try:
        return SimulationConfig(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation: {exc}") from exc


def load_config(path: str | Path | None = None) -> ServiceConfig:
    """Load configuration with env > file > defaults precedence."""
    raw: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
        raw = loaded

    allowed = {
        "listen_address",
        "snapshot_dir",
        "max_in_flight",
        "reset_clears_adaptive_memory",
        "embedder",
        "backend",
        "router",
        "simulation",
        "cost_model",
    }
    _require_known_keys(raw, allowed, "config root")

    embedder_raw = raw.get("embedder", {}) or {}
    _require_known_keys(embedder_raw, {"kind", "endpoint"}, "embedder")
    backend_raw = raw.get("backend", {}) or {}
    _require_known_keys(backend_raw, {"kind", "table_path", "endpoint"}, "backend")
    cost_raw = raw.get("cost_model", {}) or {}
    _require_known_keys(cost_raw, {"gpu_seconds_per_query", "qps"}, "cost_model")

    listen = os.environ.get(ENV_LISTEN_ADDRESS) or raw.get("listen_address", "127.0.0.1:8077")
    snapshot_dir = os.environ.get(ENV_SNAPSHOT_DIR) or raw.get("snapshot_dir")

    try:
        cost_model = LayerCostModel(
            gpu_seconds_per_query=_build_layer_table(
                cost_raw.get("gpu_seconds_per_query"),
                DEFAULT_GPU_SECONDS_PER_QUERY,
                "cost_model.gpu_seconds_per_query",
            ),
            qps=_build_layer_table(cost_raw.get("qps"), DEFAULT_QPS, "cost_model.qps"),
        )
        return ServiceConfig(
            listen_address=str(listen),
            snapshot_dir=str(snapshot_dir) if snapshot_dir else None,
            max_in_flight=int(raw.get("max_in_flight", 64)),
            reset_clears_adaptive_memory=bool(raw.get("reset_clears_adaptive_memory", True)),
            embedder=EmbedderConfig(**embedder_raw),
            backend=BackendConfig(**backend_raw),
            router=_parse_router(raw.get("router", {}) or {}),
            simulation=_parse_simulation(raw.get("simulation", {}) or {}),
            cost_model=cost_model,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def build_embedder(config: ServiceConfig):
    from .embedding import HashEmbedder, RemoteEmbedder

    if config.embedder.kind == "remote":
        return RemoteEmbedder(config.embedder.endpoint)
    return HashEmbedder()


def build_backend(config: ServiceConfig):
    from .generation import RemoteBackend, StubBackend, StubKnowledgeTable

    if config.backend.kind == "remote":
        return RemoteBackend(config.backend.endpoint)
    table = None
    if config.backend.table_path:
        table = StubKnowledgeTable.from_triples_jsonl(config.backend.table_path)
    return StubBackend(knowledge=table)


def kb_snapshot_path(config: ServiceConfig) -> Path | None:
    if not config.snapshot_dir:
        return None
    return Path(config.snapshot_dir) / "knowledge_base.idx"


def build_router(config: ServiceConfig, knowledge_base=None):
    """Assemble the full cascade from configuration.

    Loads the knowledge base from the snapshot directory when one exists
    and no explicit ``knowledge_base`` is supplied.
    """
    from .knowledge import AdaptiveKnowledgeMemory, MainKnowledgeBase
    from .router import CascadeRouter

    embedder = build_embedder(config)
    backend = build_backend(config)
    if knowledge_base is None:
        snapshot = kb_snapshot_path(config)
        if snapshot is not None and snapshot.exists():
            knowledge_base = MainKnowledgeBase.restore(snapshot.read_bytes())
        else:
            knowledge_base = MainKnowledgeBase()
    adaptive = AdaptiveKnowledgeMemory(
        threshold=config.router.akm_threshold,
        deterministic=config.router.deterministic_settle,
    )
    return CascadeRouter(
        embedder=embedder,
        backend=backend,
        knowledge_base=knowledge_base,
        config=config.router,
        adaptive_memory=adaptive,
    )
