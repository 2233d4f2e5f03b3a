"""Deterministic discrete-event harness for a single OpenFlow/ICN domain.

Virtual time is an integer count of microseconds.  Frames carry real encoded
bytes, switches match them with a generic layer 2-4 extractor, and all
control traffic goes through the experimenter-message codec.  Identical
inputs always produce identical traces.

Link bytes are booked in the sampling bucket in which a frame is put on the
link, at both ends, so per-bucket tx on one end equals rx on the other.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import random
import threading
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from .cache import CacheServer, Nack, SegmentOutOfRange
from .control import ControlMessage, MessageKind, decode_control, encode_control
from .ictp import segment as segment_content
from .naming import ContentName, NamingError, parse_name
from .node import (
    DEFAULT_FIB_CAPACITY,
    DEFAULT_LOOKUP_TIMEOUT_US,
    DEFAULT_QUEUE_LIMIT,
    Deliver,
    Drop,
    EdgeNode,
    Forward,
    Frame,
    PacketIn,
    PacketOut,
    SendControl,
    Switch,
    TableFull,
)
from .nrs import Controller, HostInfo, Mode, NetworkView, ToSwitch, is_content_cookie
from .wire import ConetHeader, ConetPacket, PacketFormat, WireError, decode_packet, encode_packet

US = 1_000_000
DEFAULT_LINK_LATENCY_US = 1000
DEFAULT_CONTROL_LATENCY_US = 100
ROLES = ("client", "server", "cache")
MODE_NAMES = {"mac_learning": Mode.MAC_LEARNING, "caching": Mode.ICN_CACHING}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


@dataclass
class SwitchConfig:
    id: str
    ports: List[int]
    no_flood: List[int] = field(default_factory=list)
    capacity: int = 4096


@dataclass
class HostConfig:
    id: str
    role: str
    mac: str
    ip: str
    conet_ip: Optional[str] = None
    prefixes: List[str] = field(default_factory=list)
    capacity: int = 1024
    fib_capacity: int = DEFAULT_FIB_CAPACITY
    queue_limit: int = DEFAULT_QUEUE_LIMIT
    lookup_timeout_us: int = DEFAULT_LOOKUP_TIMEOUT_US


@dataclass
class LinkConfig:
    a: Tuple[str, str]
    b: Tuple[str, str]
    latency_us: int = DEFAULT_LINK_LATENCY_US
    capacity_bps: Optional[int] = None  # recorded, not enforced


@dataclass
class Topology:
    switches: List[SwitchConfig]
    hosts: List[HostConfig]
    links: List[LinkConfig]
    controller_id: str = "controller"
    control_latency_us: int = DEFAULT_CONTROL_LATENCY_US
    name: str = "topology"
    doc: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "Topology":
        try:
            return cls._parse(doc)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad topology: {exc!r}") from None

    @classmethod
    def _parse(cls, doc: Dict[str, Any]) -> "Topology":
        controllers = doc.get("controllers")
        if controllers is None:
            controllers = [doc["controller"]] if "controller" in doc else []
        if len(controllers) != 1:
            raise ConfigError(f"need exactly one controller, found {len(controllers)}")
        ctrl = controllers[0]
        default_latency = doc.get("defaults", {}).get("link_latency_us", DEFAULT_LINK_LATENCY_US)
        switches = [
            SwitchConfig(s["id"], list(s["ports"]), list(s.get("no_flood", [])), s.get("capacity", 4096))
            for s in doc["switches"]
        ]
        hosts = []
        for h in doc["hosts"]:
            known = {f for f in HostConfig.__dataclass_fields__}
            extra = set(h) - known
            if extra:
                raise ConfigError(f"host {h.get('id')!r}: unknown keys {sorted(extra)}")
            hosts.append(HostConfig(**h))
        links = []
        for ln in doc["links"]:
            links.append(
                LinkConfig(
                    _endpoint(ln["a"]),
                    _endpoint(ln["b"]),
                    ln.get("latency_us", default_latency),
                    ln.get("capacity_bps"),
                )
            )
        topo = cls(
            switches,
            hosts,
            links,
            ctrl.get("id", "controller"),
            ctrl.get("control_latency_us", DEFAULT_CONTROL_LATENCY_US),
            doc.get("name", "topology"),
            doc,
        )
        topo.validate()
        return topo

    def validate(self) -> None:
        ids = [s.id for s in self.switches] + [h.id for h in self.hosts] + [self.controller_id]
        dup = [i for i, n in Counter(ids).items() if n > 1]
        if dup:
            raise ConfigError(f"duplicate node ids {dup}")
        sw = {s.id: s for s in self.switches}
        hosts = {h.id: h for h in self.hosts}
        for s in self.switches:
            if len(set(s.ports)) != len(s.ports):
                raise ConfigError(f"{s.id}: duplicate ports")
            if not set(s.no_flood) <= set(s.ports):
                raise ConfigError(f"{s.id}: no_flood names unknown ports")
        for h in self.hosts:
            if h.role not in ROLES:
                raise ConfigError(f"{h.id}: unknown role {h.role!r}")
            if h.role in ("client", "server") and not h.conet_ip:
                raise ConfigError(f"{h.id}: {h.role} needs a conet_ip")
            for p in h.prefixes:
                try:
                    parse_name(p)
                except NamingError as exc:
                    raise ConfigError(f"{h.id}: bad prefix {p!r}: {exc}") from None
        addrs = [h.ip for h in self.hosts] + [h.conet_ip for h in self.hosts if h.conet_ip]
        dup = [a for a, n in Counter(addrs).items() if n > 1]
        if dup:
            raise ConfigError(f"duplicate addresses {dup}")
        macs = [h.mac for h in self.hosts]
        if len(set(macs)) != len(macs):
            raise ConfigError("duplicate MAC addresses")
        used = set()
        for ln in self.links:
            for node, iface in (ln.a, ln.b):
                if node in sw:
                    if not iface.isdigit() or int(iface) not in sw[node].ports:
                        raise ConfigError(f"link endpoint {node}:{iface} is not a port of {node}")
                elif node in hosts:
                    if iface != "eth0":
                        raise ConfigError(f"hosts have a single interface eth0, got {node}:{iface}")
                else:
                    raise ConfigError(f"link endpoint {node}:{iface} names an unknown node")
                if (node, iface) in used:
                    raise ConfigError(f"{node}:{iface} is wired twice")
                used.add((node, iface))
            if ln.a[0] in hosts and ln.b[0] in hosts:
                raise ConfigError("hosts must attach to a switch")
            if ln.latency_us < 0:
                raise ConfigError("negative link latency")
        for h in self.hosts:
            if (h.id, "eth0") not in used:
                raise ConfigError(f"host {h.id} is not attached")

    def attachment(self, host_id: str) -> Tuple[str, int]:
        for ln in self.links:
            for (n, i), (m, j) in ((ln.a, ln.b), (ln.b, ln.a)):
                if n == host_id:
                    return m, int(j)
        raise ConfigError(f"host {host_id} is not attached")

    def network_view(self) -> NetworkView:
        host_ids = {h.id for h in self.hosts}
        trunks = [
            (ln.a[0], int(ln.a[1]), ln.b[0], int(ln.b[1]))
            for ln in self.links
            if ln.a[0] not in host_ids and ln.b[0] not in host_ids
        ]
        infos = []
        for h in self.hosts:
            s, p = self.attachment(h.id)
            infos.append(HostInfo(h.id, h.role, h.mac, h.ip, s, p, h.conet_ip))
        return NetworkView({s.id: s.ports for s in self.switches}, trunks, infos)


def _endpoint(text: str) -> Tuple[str, str]:
    node, sep, iface = str(text).partition(":")
    if not sep or not node or not iface:
        raise ConfigError(f"link endpoint {text!r} must look like node:iface")
    return node, iface


@dataclass
class Phase:
    start_us: int
    mode: Mode


@dataclass
class Workload:
    principal: str = "foo.com"
    files: int = 208
    chunks_per_file: int = 1
    segments_per_chunk: int = 4
    segment_bytes: int = 1024
    interval_us: int = 50_000
    order: str = "round_robin"
    start_us: int = 0
    seed: int = 1
    count: Optional[int] = None  # cap on the number of requests

    @property
    def chunk_bytes(self) -> int:
        return self.segments_per_chunk * self.segment_bytes


@dataclass
class Action:
    at_us: int
    op: str
    args: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentScript:
    phases: List[Phase]
    duration_us: int
    workload: Workload
    sample_us: int = US
    actions: List[Action] = field(default_factory=list)
    report_us: int = US

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "ExperimentScript":
        try:
            phases = []
            for ph in doc.get("phases", []):
                mode = ph["mode"]
                if mode not in MODE_NAMES:
                    raise ConfigError(f"unknown mode {mode!r}")
                phases.append(Phase(_us(ph["start_s"]), MODE_NAMES[mode]))
            wl_doc = dict(doc.get("workload", {}))
            if "interval_ms" in wl_doc:
                wl_doc["interval_us"] = int(round(wl_doc.pop("interval_ms") * 1000))
            if "start_s" in wl_doc:
                wl_doc["start_us"] = _us(wl_doc.pop("start_s"))
            extra = set(wl_doc) - set(Workload.__dataclass_fields__)
            if extra:
                raise ConfigError(f"workload: unknown keys {sorted(extra)}")
            actions = [
                Action(_us(a["at_s"]), a["op"], {k: v for k, v in a.items() if k not in ("at_s", "op")})
                for a in doc.get("actions", [])
            ]
            script = cls(
                phases,
                _us(doc["duration_s"]),
                Workload(**wl_doc),
                _us(doc.get("sample_interval_s", 1)),
                actions,
                _us(doc.get("report_interval_s", 1)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad script: {exc!r}") from None
        script.validate()
        return script

    def validate(self) -> None:
        if self.duration_us <= 0:
            raise ConfigError("duration must be positive")
        if self.sample_us <= 0 or self.report_us <= 0:
            raise ConfigError("sampling and report intervals must be positive")
        starts = [p.start_us for p in self.phases]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("phases overlap or are out of order")
        if starts and (starts[0] < 0 or starts[-1] >= self.duration_us):
            raise ConfigError("phase starts must lie inside the run")
        wl = self.workload
        if wl.files < 1 or wl.chunks_per_file < 1 or wl.segments_per_chunk < 1 or wl.segment_bytes < 1:
            raise ConfigError("empty catalog")
        if wl.count is not None and wl.count < 0:
            raise ConfigError("request count must be non-negative")
        if wl.interval_us <= 0:
            raise ConfigError("request interval must be positive")
        if wl.order not in ("round_robin", "random"):
            raise ConfigError(f"unknown request order {wl.order!r}")
        for a in self.actions:
            if a.op not in ("push_all", "set_mode", "push"):
                raise ConfigError(f"unknown action {a.op!r}")
            if a.op == "set_mode" and a.args.get("mode") not in MODE_NAMES:
                raise ConfigError(f"unknown mode {a.args.get('mode')!r}")

    def phase_bounds(self) -> List[Tuple[int, int, Mode]]:
        ends = [p.start_us for p in self.phases[1:]] + [self.duration_us]
        return [(p.start_us, end, p.mode) for p, end in zip(self.phases, ends)]


def _us(seconds) -> int:
    return int(round(float(seconds) * US))


def _load_json(source) -> Dict[str, Any]:
    if isinstance(source, dict):
        return source
    with open(source, encoding="utf-8") as fh:
        return json.load(fh)


def default_topology_doc() -> Dict[str, Any]:
    return json.loads(resources.files("conet").joinpath("data/testbed_topology.json").read_text())


def default_script_doc() -> Dict[str, Any]:
    return json.loads(resources.files("conet").joinpath("data/three_phase_script.json").read_text())


def load_topology(source=None) -> Topology:
    return Topology.from_json(default_topology_doc() if source is None else _load_json(source))


def load_script(source=None) -> ExperimentScript:
    return ExperimentScript.from_json(default_script_doc() if source is None else _load_json(source))


# --------------------------------------------------------------------------
# catalog and workload


class Catalog:
    """Published content: ``files`` names, each cut into chunks and segments."""

    def __init__(self, workload: Workload):
        self.workload = workload
        rng = random.Random(workload.seed)
        size = workload.chunk_bytes * workload.chunks_per_file
        width = max(3, len(str(workload.files - 1)))
        self._data: Dict[Tuple[str, int], List[ConetHeader]] = {}
        self.names: List[ContentName] = []
        for i in range(workload.files):
            name = parse_name(f"{workload.principal}/file{i:0{width}d}")
            self.names.append(name)
            content = rng.randbytes(size)
            for hdr in segment_content(name, content, workload.chunk_bytes, workload.segment_bytes):
                self._data.setdefault((str(hdr.name), hdr.csn), []).append(hdr)

    def chunks(self) -> List[Tuple[ContentName, int, int]]:
        return [(parse_name(n), csn, len(segs)) for (n, csn), segs in self._data.items()]

    def data(self, name, csn: int, segment: int) -> Optional[ConetHeader]:
        segs = self._data.get((str(name), csn))
        if segs is None or not 1 <= segment <= len(segs):
            return None
        return segs[segment - 1]

    def chunk_bytes(self, name, csn: int) -> bytes:
        return b"".join(h.payload for h in self._data[(str(name), csn)])


@dataclass(frozen=True)
class Request:
    time_us: int
    name: ContentName
    csn: int
    segment: int


def gen_requests(
    catalog: Iterable[Tuple[ContentName, int, int]],
    count: int,
    interval_us: int = 50_000,
    seed: int = 0,
    order: str = "round_robin",
    start_us: int = 0,
) -> List[Request]:
    """Request schedule over every (name, csn, segment) of ``catalog``.

    ``round_robin`` cycles through the tuples in catalog order; ``random``
    draws uniformly with a generator seeded by ``seed``.
    """
    tuples = [(n, c, s) for n, c, total in catalog for s in range(1, total + 1)]
    if not tuples:
        raise ConfigError("empty catalog")
    if order == "round_robin":
        picks = (tuples[i % len(tuples)] for i in range(count))
    elif order == "random":
        rng = random.Random(seed)
        picks = (rng.choice(tuples) for _ in range(count))
    else:
        raise ConfigError(f"unknown request order {order!r}")
    return [Request(start_us + i * interval_us, *t) for i, t in enumerate(picks)]


# --------------------------------------------------------------------------
# hosts


class Host:
    def __init__(self, sim: "Simulation", config: HostConfig):
        self.sim = sim
        self.config = config
        self.id = config.id
        self.mac = config.mac
        self.counters: Counter = Counter()

    def send_ip(self, packet: ConetPacket) -> None:
        mac = self.sim.arp.get(str(packet.ip_dst))
        if mac is None:
            self.counters["no_arp"] += 1
            return
        self.sim.transmit(self.id, "eth0", Frame(mac, self.mac, encode_packet(packet)))

    def _decode(self, frame: Frame) -> Optional[ConetPacket]:
        try:
            return decode_packet(frame.payload, PacketFormat.F6)
        except WireError:
            self.counters["malformed"] += 1
            return None

    def receive(self, frame: Frame, iface: str) -> None:
        raise NotImplementedError


class EdgeHost(Host):
    """Terminal with its co-located edge node."""

    def __init__(self, sim, config: HostConfig):
        super().__init__(sim, config)
        self.edge = EdgeNode(
            config.id,
            fib_capacity=config.fib_capacity,
            queue_limit=config.queue_limit,
            lookup_timeout_us=config.lookup_timeout_us,
        )

    def run_effects(self, effects) -> None:
        for eff in effects:
            if isinstance(eff, Forward):
                self.send_ip(eff.packet)
            elif isinstance(eff, SendControl):
                if eff.message.kind is MessageKind.NAME_LOOKUP:
                    self.sim.log("lookup", node=self.id, name=eff.message["name"])
                    self.sim.after(self.edge.lookup_timeout_us, self._expire)
                self.sim.to_controller(self.id, eff.message)
            elif isinstance(eff, Drop):
                self.sim.log("drop", node=self.id, name=str(eff.packet.header.name), reason=eff.reason)
            elif isinstance(eff, Deliver):
                self.deliver(eff.packet)

    def _expire(self) -> None:
        self.run_effects(self.edge.expire(self.sim.now))

    def on_control(self, msg: ControlMessage) -> None:
        if msg.kind is MessageKind.NAME_LOOKUP_REPLY:
            self.sim.log("lookup_reply", node=self.id, name=msg["name"], status=msg["status"])
            self.run_effects(self.edge.handle_lookup_reply(msg, self.sim.now))
        elif msg.kind is MessageKind.FIB_EXPORT_REQUEST:
            self.sim.to_controller(self.id, self.edge.fib_export())

    def receive(self, frame: Frame, iface: str) -> None:
        packet = self._decode(frame)
        if packet is not None:
            self.run_effects(self.edge.from_domain(packet, self.sim.now))

    def deliver(self, packet: ConetPacket) -> None:
        raise NotImplementedError

    def report(self) -> None:
        msg = self.edge.interest_report()
        if msg is not None:
            self.sim.to_controller(self.id, msg)


@dataclass(frozen=True)
class Delivery:
    time_us: int
    name: str
    csn: int
    segment: int
    source: str
    intact: bool


class ClientHost(EdgeHost):
    def __init__(self, sim, config: HostConfig):
        super().__init__(sim, config)
        self.deliveries: List[Delivery] = []

    def request(self, req: Request) -> None:
        self.counters["requests"] += 1
        hdr = ConetHeader.interest(req.name, req.csn, req.segment)
        packet = ConetPacket(PacketFormat.F2, self.config.conet_ip, "0.0.0.0", hdr)
        before = self.edge.counters["fib_hits"]
        effects = self.edge.handle_interest(packet, self.sim.now)
        hit = self.edge.counters["fib_hits"] > before
        self.sim.log("interest", node=self.id, name=str(req.name), fib="hit" if hit else "miss")
        self.run_effects(effects)

    def deliver(self, packet: ConetPacket) -> None:
        hdr = packet.header
        if hdr.is_interest:
            self.counters["stray_interests"] += 1
            return
        expected = self.sim.catalog.data(hdr.name, hdr.csn, hdr.segment)
        intact = expected is not None and expected.payload == hdr.payload
        source = self.sim.host_of_address(str(packet.ip_src))
        self.counters["data_received"] += 1
        if not intact:
            self.counters["corrupt"] += 1
        self.deliveries.append(Delivery(self.sim.now, str(hdr.name), hdr.csn, hdr.segment, source, intact))


class ServerHost(EdgeHost):
    def deliver(self, packet: ConetPacket) -> None:
        hdr = packet.header
        if not hdr.is_interest:
            self.counters["stray_data"] += 1
            return
        data = self.sim.catalog.data(hdr.name, hdr.csn, hdr.segment)
        if data is None:
            self.counters["unknown_content"] += 1
            return
        self.counters["served"] += 1
        reply = ConetPacket(PacketFormat.F2, self.config.conet_ip, packet.ip_src, data)
        self.run_effects(self.edge.handle_data(reply, self.sim.now))

    def publish(self) -> None:
        for p in self.config.prefixes:
            msg = ControlMessage.make(
                MessageKind.CONTENT_REGISTER, origin=self.id, address=self.config.conet_ip, prefix=p
            )
            self.sim.to_controller(self.id, msg)


class CacheHost(Host):
    def __init__(self, sim, config: HostConfig):
        super().__init__(sim, config)
        self.server = CacheServer(config.id, config.ip, config.capacity, sim.script.workload.segment_bytes)

    def receive(self, frame: Frame, iface: str) -> None:
        packet = self._decode(frame)
        if packet is None:
            return
        if packet.header.is_interest:
            try:
                reply = self.server.serve(packet)
            except SegmentOutOfRange:
                self.counters["out_of_range"] += 1
                return
            if isinstance(reply, Nack):
                # miss on a redirected interest: relay it toward the origin
                self.sim.log("nack", node=self.id, name=str(packet.header.name), csn=packet.header.csn)
                self.sim.transmit(self.id, "eth0", Frame(frame.eth_dst, self.mac, frame.payload))
                return
            self.send_ip(reply)
            return
        note = self.server.ingest(packet)
        if note is not None:
            self.sim.log("notification", node=self.id, name=note["name"], csn=note["csn"])
            self.sim.to_controller(self.id, note)

    def on_control(self, msg: ControlMessage) -> None:
        pass


# --------------------------------------------------------------------------
# simulation


@dataclass
class TraceRow:
    time_s: int
    node: str
    iface: str
    rx_bytes: int
    tx_bytes: int
    cached_items: Optional[int] = None


TRACE_HEADER = ("time_s", "node", "iface", "rx_bytes", "tx_bytes", "cached_items")


class Simulation:
    def __init__(self, topology: Topology, script: ExperimentScript, seed: Optional[int] = None):
        self.topology = topology
        self.script = script
        if seed is not None:
            script.workload.seed = seed
        self.catalog = Catalog(script.workload)
        self.now = 0
        self.lock = threading.RLock()
        self._queue: List[Tuple[int, int, Callable, tuple]] = []
        self._seq = 0
        self.events: List[Dict[str, Any]] = []
        self.view = topology.network_view()
        self.controller = Controller(self.view)
        self.switches: Dict[str, Switch] = {
            s.id: Switch(s.id, s.ports, s.no_flood, s.capacity) for s in topology.switches
        }
        self.hosts: Dict[str, Host] = {}
        for h in topology.hosts:
            cls = {"client": ClientHost, "server": ServerHost, "cache": CacheHost}[h.role]
            self.hosts[h.id] = cls(self, h)
        self.caches: Dict[str, CacheServer] = {}
        for h in topology.hosts:
            if h.role == "cache":
                s, p = topology.attachment(h.id)
                server = self.hosts[h.id].server
                self.caches[h.id] = server
                self.controller.attach_cache(h.id, s, p, h.ip, server)
        self.arp: Dict[str, str] = {}
        self._addr_owner: Dict[str, str] = {}
        for h in topology.hosts:
            for addr in (h.ip, h.conet_ip):
                if addr:
                    self.arp[addr] = h.mac
                    self._addr_owner[addr] = h.id
        self.wires: Dict[Tuple[str, str], Tuple[str, str, int]] = {}
        for ln in topology.links:
            self.wires[ln.a] = (ln.b[0], ln.b[1], ln.latency_us)
            self.wires[ln.b] = (ln.a[0], ln.a[1], ln.latency_us)
        self.ifaces = sorted(self.wires)
        self._bytes: Dict[Tuple[int, str, str], List[int]] = {}
        self._cached_marks: Dict[str, List[Tuple[int, int]]] = {c: [(0, 0)] for c in self.caches}
        self.hooks: Dict[str, List[Callable[..., None]]] = {}
        self._started = False

    # -- event loop

    def at(self, time_us: int, fn: Callable, *args) -> None:
        if time_us < self.now:
            raise ValueError("cannot schedule in the past")
        self._seq += 1
        heapq.heappush(self._queue, (time_us, self._seq, fn, args))

    def after(self, delay_us: int, fn: Callable, *args) -> None:
        self.at(self.now + delay_us, fn, *args)

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for host in self.hosts.values():
            role = host.config.role
            msg = ControlMessage.make(MessageKind.CONNECTION_SETUP, node=host.id, role=role)
            self.to_controller(host.id, msg)
            if isinstance(host, ServerHost):
                host.publish()
        for ph in self.script.phases:
            self.at(ph.start_us, self._phase, ph.mode)
        for act in self.script.actions:
            self.at(act.at_us, self._action, act)
        clients = [h for h in self.hosts.values() if isinstance(h, ClientHost)]
        wl = self.script.workload
        count = max(0, -(-(self.script.duration_us - wl.start_us) // wl.interval_us))
        if wl.count is not None:
            count = min(count, wl.count)
        schedule = gen_requests(self.catalog.chunks(), count, wl.interval_us, wl.seed, wl.order, wl.start_us)
        for client in clients:
            for req in schedule:
                if req.time_us < self.script.duration_us:
                    self.at(req.time_us, client.request, req)
        t = self.script.report_us
        while t <= self.script.duration_us:
            self.at(t, self._reports)
            t += self.script.report_us

    def run_until(self, time_us: int) -> None:
        self.start()
        while self._queue and self._queue[0][0] < time_us:
            with self.lock:
                t, _, fn, args = heapq.heappop(self._queue)
                self.now = t
                fn(*args)
        with self.lock:
            self.now = max(self.now, time_us)

    def run(self) -> "RunResult":
        self.run_until(self.script.duration_us)
        return RunResult(self.trace(), self.events, self)

    # -- plumbing

    def log(self, kind: str, **fields: Any) -> None:
        event = {"t_us": self.now, "kind": kind, **fields}
        self.events.append(event)
        for hook in self.hooks.get(kind, ()):
            hook(event)

    def on(self, kind: str, hook: Callable[[Dict[str, Any]], None]) -> None:
        self.hooks.setdefault(kind, []).append(hook)

    def host_of_address(self, addr: str) -> Optional[str]:
        return self._addr_owner.get(addr)

    def _book(self, node: str, iface: str, rx: int, tx: int) -> None:
        key = (self.now // self.script.sample_us, node, iface)
        slot = self._bytes.get(key)
        if slot is None:
            slot = self._bytes[key] = [0, 0]
        slot[0] += rx
        slot[1] += tx

    def transmit(self, node: str, iface: str, frame: Frame) -> None:
        peer = self.wires.get((node, iface))
        if peer is None:
            return
        pnode, piface, latency = peer
        self._book(node, iface, 0, frame.size)
        self._book(pnode, piface, frame.size, 0)
        self.after(latency, self._arrive, pnode, piface, frame)

    def _arrive(self, node: str, iface: str, frame: Frame) -> None:
        sw = self.switches.get(node)
        if sw is None:
            self.hosts[node].receive(frame, iface)
            self._mark_cache(node)
            return
        result = sw.process(frame, int(iface))
        if isinstance(result, PacketIn):
            self.after(self.topology.control_latency_us, self._packet_in, result)
        else:
            self._switch_out(sw, result)

    def _switch_out(self, sw: Switch, outputs) -> None:
        for item in outputs:
            if isinstance(item, PacketIn):
                self.after(self.topology.control_latency_us, self._packet_in, item)
            else:
                port, frame = item
                self.transmit(sw.dpid, str(port), frame)

    def _packet_in(self, pi: PacketIn) -> None:
        self.log("packet_in", switch=pi.switch, in_port=pi.in_port)
        self.apply(self.controller.handle_packet_in(pi, self.now))

    def apply(self, commands: Iterable[ToSwitch]) -> None:
        """Execute controller output on the switches at the current instant."""
        for cmd in commands:
            sw = self.switches[cmd.switch]
            msg = cmd.message
            if isinstance(msg, PacketOut):
                self._switch_out(sw, sw.packet_out(msg))
                continue
            if msg.op == "add":
                try:
                    sw.flow_mod(msg)
                except TableFull:
                    self.log("flow_mod_error", switch=sw.dpid, error="table_full")
                    continue
                self.log("flow_mod", switch=sw.dpid, op="add", entry=msg.entry.to_json())
            else:
                removed = sw.flow_mod(msg)
                self.log("flow_mod", switch=sw.dpid, op="delete_by_cookie", cookie=msg.cookie, removed=removed)

    def to_controller(self, sender: str, msg: ControlMessage) -> None:
        self.after(self.topology.control_latency_us, self._controller_rx, sender, encode_control(msg))

    def _controller_rx(self, sender: str, raw: bytes) -> None:
        msg = decode_control(raw)
        replies = []
        for item in self.controller.handle_control(msg, self.now):
            if isinstance(item, ToSwitch):
                self.apply([item])
            else:
                replies.append(item.message)
        if msg.kind is MessageKind.CHUNK_CACHED:
            self.log("notification_processed", cache=msg["cache"], name=msg["name"], csn=msg["csn"])
        for reply in replies:
            self.after(self.topology.control_latency_us, self._node_rx, sender, encode_control(reply))

    def _node_rx(self, node: str, raw: bytes) -> None:
        self.hosts[node].on_control(decode_control(raw))

    def _mark_cache(self, node: str) -> None:
        server = self.caches.get(node)
        if server is None:
            return
        marks = self._cached_marks[node]
        if marks[-1][1] != len(server.content):
            marks.append((self.now, len(server.content)))

    def _reports(self) -> None:
        for host in self.hosts.values():
            if isinstance(host, EdgeHost):
                host.report()

    # -- commands (phases, script actions, northbound)

    def set_mode(self, mode: Mode) -> Tuple[Mode, Mode]:
        with self.lock:
            previous = self.controller.mode
            commands = self.controller.set_mode(mode, self.now)
            if previous is not mode:
                self.log("mode_change", previous=previous.value, mode=mode.value)
            self.apply(commands)
            return previous, self.controller.mode

    def push(self, cache_id: str, name, csn: int, data: bytes) -> None:
        with self.lock:
            self.log("push", cache=cache_id, name=str(name), csn=csn)
            self.apply(self.controller.proactive_push(cache_id, name, csn, data))
            self._mark_cache(cache_id)

    def _phase(self, mode: Mode) -> None:
        self.set_mode(mode)

    def _action(self, act: Action) -> None:
        if act.op == "set_mode":
            self.set_mode(MODE_NAMES[act.args["mode"]])
        elif act.op == "push_all":
            cache_id = act.args.get("cache") or next(iter(self.caches))
            for name, csn, _ in self.catalog.chunks():
                self.push(cache_id, name, csn, self.catalog.chunk_bytes(name, csn))
        elif act.op == "push":
            name = parse_name(act.args["name"])
            csn = int(act.args.get("csn", 0))
            self.push(act.args["cache"], name, csn, self.catalog.chunk_bytes(name, csn))

    # -- results

    def content_rule_count(self, switch: Optional[str] = None) -> int:
        targets = [self.switches[switch]] if switch else self.switches.values()
        return sum(1 for sw in targets for e in sw.table.entries() if is_content_cookie(e.cookie))

    def cached_items_at(self, cache_id: str, time_us: int) -> int:
        value = 0
        for t, n in self._cached_marks[cache_id]:
            if t >= time_us:
                break
            value = n
        return value

    def trace(self, until_us: Optional[int] = None) -> List[TraceRow]:
        end = self.now if until_us is None else until_us
        buckets = -(-end // self.script.sample_us)
        rows = []
        for b in range(buckets):
            for node, iface in self.ifaces:
                rx, tx = self._bytes.get((b, node, iface), (0, 0))
                cached = None
                if node in self.caches:
                    cached = self.cached_items_at(node, (b + 1) * self.script.sample_us)
                rows.append(TraceRow(b * self.script.sample_us // US, node, iface, rx, tx, cached))
        return rows

    def state_digest(self) -> Dict[str, Any]:
        return {
            "controller": self.controller.state_digest(),
            "switches": {s: sw.flows_json() for s, sw in sorted(self.switches.items())},
            "caches": {c: srv.inventory() for c, srv in sorted(self.caches.items())},
        }


@dataclass
class RunResult:
    trace: List[TraceRow]
    events: List[Dict[str, Any]]
    sim: Simulation

    def series(self, node: str, iface: str = "eth0") -> List[TraceRow]:
        return [r for r in self.trace if r.node == node and r.iface == iface]


def run(topology: Topology, script: ExperimentScript, seed: Optional[int] = None) -> RunResult:
    return Simulation(topology, script, seed).run()


def trace_csv(rows: Iterable[TraceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in rows:
        writer.writerow(
            (r.time_s, r.node, r.iface, r.rx_bytes, r.tx_bytes, "" if r.cached_items is None else r.cached_items)
        )
    return buf.getvalue()


def write_trace(rows: Iterable[TraceRow], path) -> None:
    Path(path).write_text(trace_csv(rows), encoding="utf-8")


def write_events(events: Iterable[Dict[str, Any]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
