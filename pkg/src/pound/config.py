"""Experiment configuration: YAML files mapped onto dataclasses.

Every key is checked against the dataclass fields, so a typo is an error
naming the file line rather than a silently ignored setting.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .control import PlantParams
from .core import SessionConfig
from .flows import FlowSpec
from .netsim import TRANSPORTS, LinkModel, Outage, Topology, TransportParams

KINDS = ("bench", "bandwidth-sweep", "resilience", "control")


class ConfigError(ValueError):
    def __init__(self, msg: str, source: str = "<config>", line: int | None = None,
                 field: str | None = None):
        self.source, self.line, self.field = source, line, field
        where = source if line is None else f"{source}:{line}"
        what = f"{field}: " if field else ""
        super().__init__(f"{where}: {what}{msg}")


@dataclass
class TopologySection:
    nodes: int = 2
    rate_bps: float = 6e6
    loss_prob: float = 0.0
    max_retries: int = 7
    overhead_us: int = 200
    propagation_us: int = 0
    shared_medium: bool = True
    os_queue_frames: int = 1000


@dataclass
class SessionSection:
    mtu: int = 1500
    header_overhead: int = 52
    # rate the sender paces at; usually a bit under the raw link rate
    pacing_rate_bps: float = 6e6
    queue_capacity_bytes: int = 1 << 20
    reassembly_timeout_us: int = 500_000


@dataclass
class ReliableSection:
    window_bytes: int = 65535
    delayed_ack_us: int = 40_000
    min_rto_us: int = 200_000
    max_rto_us: int = 3_200_000
    handshake_us: int = 0


@dataclass
class FlowSection:
    name: str
    message_size: int
    period_us: int
    count: int
    priority: int = 0
    transport: str = "pound"
    src: int = 0
    dst: int = 1
    flow_id: int | None = None
    start_us: int = 0


@dataclass
class OutageSection:
    node: int
    start_us: int
    duration_us: int = 5_000_000
    rejoin_us: int = 0
    relay_extra_us: int = 0


@dataclass
class SweepSection:
    sizes: list[int] = field(default_factory=lambda: [1024, 4096, 16384, 65536])
    offered_bps: float = 6.5e6
    transport: str = "pound"


@dataclass
class ControlSection:
    R: float = 1.0
    L: float = 0.1
    C: float = 0.1
    period_us: int = 20_000
    vi: float = 1.0
    gain: float = 1.0
    transport: str = "pound"
    # name of a flow in `flows` that competes with the loop, if any
    perturbing: str | None = None


@dataclass
class ScenarioConfig:
    kind: str = "bench"
    seed: int = 0
    duration_us: int = 20_000_000
    drain_us: int = 5_000_000
    output: str = "out"
    topology: TopologySection = field(default_factory=TopologySection)
    session: SessionSection = field(default_factory=SessionSection)
    reliable: ReliableSection = field(default_factory=ReliableSection)
    flows: list[FlowSection] = field(default_factory=list)
    outage: OutageSection | None = None
    sweep: SweepSection | None = None
    control: ControlSection | None = None

    # -- builders for the runtime objects --------------------------------------

    def link_model(self) -> LinkModel:
        t = self.topology
        return LinkModel(t.rate_bps, t.loss_prob, t.max_retries, t.overhead_us, t.propagation_us)

    def topology_model(self) -> Topology:
        return Topology.chain(self.topology.nodes, self.link_model(), self.topology.shared_medium)

    def session_config(self) -> SessionConfig:
        s = self.session
        return SessionConfig(s.mtu, s.header_overhead, s.pacing_rate_bps,
                             s.reassembly_timeout_us, s.queue_capacity_bytes)

    def transport_params(self) -> TransportParams:
        r = self.reliable
        return TransportParams(self.session_config(), r.window_bytes, r.delayed_ack_us,
                               r.min_rto_us, r.max_rto_us, r.handshake_us)

    def flow_spec(self, i: int) -> FlowSpec:
        """Flow `i`; flows without an explicit id are numbered from 1 by position."""
        f = self.flows[i]
        return FlowSpec(f.name, f.message_size, f.period_us, f.count, f.priority, f.transport,
                        f.src, f.dst, i + 1 if f.flow_id is None else f.flow_id, f.start_us)

    def flow_specs(self) -> list[FlowSpec]:
        return [self.flow_spec(i) for i in range(len(self.flows))]

    def outage_model(self) -> Outage | None:
        o = self.outage
        if o is None:
            return None
        return Outage(o.node, o.start_us, o.duration_us, o.rejoin_us, o.relay_extra_us)

    def plant_params(self) -> PlantParams:
        c = self.control or ControlSection()
        return PlantParams(c.R, c.L, c.C, c.period_us, c.vi)


# -- parsing -------------------------------------------------------------------

Path_ = tuple  # (key, index, key, ...) into the document


def _marks(node: yaml.Node, path: Path_, out: dict[Path_, int]) -> None:
    """Record the 1-based source line of every key and list item."""
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _marks(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _marks(v, path + (i,), out)


def _dotted(path: Path_) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s


class _Builder:
    def __init__(self, source: str, marks: dict[Path_, int]):
        self.source = source
        self.marks = marks

    def error(self, path: Path_, msg: str) -> ConfigError:
        line = None
        for i in range(len(path), -1, -1):
            if path[:i] in self.marks:
                line = self.marks[path[:i]]
                break
        return ConfigError(msg, self.source, line, _dotted(path) or None)

    def build(self, cls: type, data: Any, path: Path_) -> Any:
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise self.error(path, f"expected a mapping, got {type(data).__name__}")
        hints = typing.get_type_hints(cls)
        names = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise self.error(path + (key,), f"unknown key (allowed: {', '.join(sorted(names))})")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in data:
                kwargs[f.name] = self.convert(hints[f.name], data[f.name], path + (f.name,))
            elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise self.error(path, f"missing required key {f.name!r}")
        return cls(**kwargs)

    def convert(self, tp: Any, value: Any, path: Path_) -> Any:
        origin, args = typing.get_origin(tp), typing.get_args(tp)
        if origin is typing.Union or (origin is not None and type(None) in args):
            if value is None:
                return None
            inner = [a for a in args if a is not type(None)]
            return self.convert(inner[0], value, path)
        if origin is list:
            if not isinstance(value, list):
                raise self.error(path, "expected a list")
            return [self.convert(args[0], v, path + (i,)) for i, v in enumerate(value)]
        if dataclasses.is_dataclass(tp):
            return self.build(tp, value, path)
        if tp is bool:
            if not isinstance(value, bool):
                raise self.error(path, f"expected true/false, got {value!r}")
            return value
        if tp is int:
            return self._number(value, path, integral=True)
        if tp is float:
            return self._number(value, path, integral=False)
        if tp is str:
            if not isinstance(value, str):
                raise self.error(path, f"expected a string, got {value!r}")
            return value
        raise TypeError(f"unsupported config type {tp!r}")

    def _number(self, value: Any, path: Path_, integral: bool) -> int | float:
        # YAML 1.1 reads "6e6" as a string, so numeric strings are accepted too
        if isinstance(value, bool):
            raise self.error(path, f"expected a number, got {value!r}")
        if isinstance(value, str):
            try:
                value = float(value.replace("_", ""))
            except ValueError:
                raise self.error(path, f"expected a number, got {value!r}") from None
        if not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        if integral:
            if isinstance(value, float):
                if not value.is_integer():
                    raise self.error(path, f"expected an integer, got {value!r}")
                value = int(value)
            return value
        return float(value)


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and validate a scenario. Raises ConfigError with file line and key."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(str(getattr(exc, "problem", None) or exc), source,
                          None if mark is None else mark.line + 1) from None
    marks: dict[Path_, int] = {}
    if node is not None:
        _marks(node, (), marks)
    b = _Builder(source, marks)
    cfg = b.build(ScenarioConfig, data, ())
    _check(cfg, b)
    return cfg


def _check(cfg: ScenarioConfig, b: _Builder) -> None:
    if cfg.kind not in KINDS:
        raise b.error(("kind",), f"must be one of {', '.join(KINDS)}")
    if cfg.duration_us < 0 or cfg.drain_us < 0:
        raise b.error(("duration_us",), "durations must be >= 0")
    if cfg.seed < 0:
        raise b.error(("seed",), "must be >= 0")
    for section, build in (("topology", cfg.topology_model), ("session", cfg.session_config)):
        try:
            build()
        except ValueError as exc:
            raise b.error((section,), str(exc)) from None
    if cfg.topology.os_queue_frames < 1:
        raise b.error(("topology", "os_queue_frames"), "must be >= 1")
    n = cfg.topology.nodes
    names, ids = set(), set()
    for i, (f, spec) in enumerate(zip(cfg.flows, _flow_specs(cfg, b))):
        if f.transport not in TRANSPORTS:
            raise b.error(("flows", i, "transport"), f"must be one of {', '.join(TRANSPORTS)}")
        for key in ("src", "dst"):
            if not 0 <= getattr(f, key) < n:
                raise b.error(("flows", i, key), f"no node {getattr(f, key)} in a {n}-node chain")
        if f.src == f.dst:
            raise b.error(("flows", i, "dst"), "src and dst must differ")
        if spec.name in names:
            raise b.error(("flows", i, "name"), f"duplicate flow name {spec.name!r}")
        if spec.flow_id in ids:
            raise b.error(("flows", i, "flow_id"), f"duplicate flow_id {spec.flow_id}")
        names.add(spec.name)
        ids.add(spec.flow_id)
    if cfg.kind == "bench" and not cfg.flows:
        raise b.error(("flows",), "a bench run needs at least one flow")
    if cfg.kind == "resilience":
        if cfg.outage is None:
            raise b.error(("outage",), "required for a resilience run")
        if not 0 <= cfg.outage.node < cfg.topology.nodes:
            raise b.error(("outage", "node"), f"no node {cfg.outage.node}")
    if cfg.sweep is not None:
        if cfg.sweep.transport not in TRANSPORTS:
            raise b.error(("sweep", "transport"), f"must be one of {', '.join(TRANSPORTS)}")
        if any(s <= 0 for s in cfg.sweep.sizes):
            raise b.error(("sweep", "sizes"), "sizes must be positive")
    if cfg.control is not None:
        c = cfg.control
        if c.transport not in TRANSPORTS:
            raise b.error(("control", "transport"), f"must be one of {', '.join(TRANSPORTS)}")
        if c.perturbing is not None and c.perturbing not in {f.name for f in cfg.flows}:
            raise b.error(("control", "perturbing"), f"no flow named {c.perturbing!r}")
        try:
            cfg.plant_params()
        except ValueError as exc:
            raise b.error(("control",), str(exc)) from None
    if cfg.kind == "control" and cfg.topology.nodes != 2:
        raise b.error(("topology", "nodes"), "the control loop runs on 2 nodes")


def _flow_specs(cfg: ScenarioConfig, b: _Builder) -> list[FlowSpec]:
    out = []
    for i in range(len(cfg.flows)):
        try:
            out.append(cfg.flow_spec(i))
        except ValueError as exc:
            raise b.error(("flows", i), str(exc)) from None
    return out


def _prune(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_prune(v) for v in obj]
    return obj


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(_prune(asdict(cfg)), sort_keys=False)


# -- files and presets ---------------------------------------------------------

def preset_names() -> list[str]:
    d = resources.files("pound") / "presets"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".yaml"))


def load_config(ref: str | Path) -> ScenarioConfig:
    """Load a config file, or a bundled preset by name."""
    p = Path(ref)
    if p.is_file():
        return parse_config(p.read_text(), str(p))
    name = str(ref)
    if name in preset_names():
        text = (resources.files("pound") / "presets" / f"{name}.yaml").read_text()
        return parse_config(text, f"preset:{name}")
    raise ConfigError(f"no such file or preset (presets: {', '.join(preset_names())})", str(ref))
