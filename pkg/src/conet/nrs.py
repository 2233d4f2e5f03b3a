"""Name Routing System: the controller of one OpenFlow domain.

Holds the full routing base (RIB) that edge nodes consult on FIB misses,
allocates the domain tags that stand in for names on the wire, and programs
switches.  Two control logics are available:

* ``MAC_LEARNING`` - switches act as plain learning Ethernet switches.
* ``ICN_CACHING`` - tagged interests and data get per-tag flow entries; data
  is duplicated toward the cache server, and once a chunk is cached its
  interests are redirected there.

All methods return the messages to emit instead of sending them, so the
controller can be driven by the simulator, a test, or the northbound API.
"""

from __future__ import annotations

import base64
import enum
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Set, Tuple, Union

from .control import (
    ControlMessage,
    MessageKind,
    UnknownOp,
    decode_control,
    encode_control,
)
from .naming import ContentName, PrefixTable, as_name, parse_name
from .node import (
    ETH_IPV4,
    Flood,
    FlowMod,
    Match,
    Output,
    PacketIn,
    PacketOut,
    extract_match_fields,
)
from .wire import UDP_PROTO, DomainTag, PacketFormat, WireError, decode_packet

MAC_PRIORITY = 10
ORIGIN_PRIORITY = 100
REDIRECT_BOOST = 10

_CONTENT_COOKIE = 1 << 32
_MAC_COOKIE = 2 << 32


class NrsError(Exception):
    pass


class NoRoute(NrsError, LookupError):
    pass


class UnknownCache(NrsError, KeyError):
    pass


class TagSpaceExhausted(NrsError):
    pass


class Mode(enum.Enum):
    MAC_LEARNING = "mac_learning"
    ICN_CACHING = "caching"


def is_content_cookie(cookie: int) -> bool:
    return cookie >> 32 == _CONTENT_COOKIE >> 32


def is_mac_cookie(cookie: int) -> bool:
    return cookie >> 32 == _MAC_COOKIE >> 32


# --------------------------------------------------------------------------
# routing base and tags


@dataclass(frozen=True)
class RibEntry:
    origin: str
    next_hop: str


class Rib:
    def __init__(self) -> None:
        self._table: PrefixTable[RibEntry] = PrefixTable()
        self.version = 0

    def __len__(self) -> int:
        return len(self._table)

    def register(self, origin: str, prefix: ContentName, next_hop: str) -> None:
        self._table.insert(prefix, RibEntry(origin, next_hop))
        self.version += 1

    def unregister(self, origin: str, prefix: ContentName) -> bool:
        """Remove ``prefix`` if ``origin`` owns it; absent prefixes are a no-op."""
        current = self._table.get(prefix)
        removed = current is not None and current.origin == origin and self._table.remove(prefix)
        self.version += 1
        return removed

    def lookup(self, name: ContentName) -> Tuple[ContentName, RibEntry]:
        hit = self._table.longest_match(name)
        if hit is None:
            raise NoRoute(str(name))
        return hit

    def entries(self) -> List[Tuple[ContentName, RibEntry]]:
        return sorted(self._table.items(), key=lambda kv: str(kv[0]))


class TagMap:
    """Injective, stable name -> tag mapping.

    Tag ``n`` puts the counter in the first four bytes (the part that fits
    the fictitious UDP ports) and zeroes the rest.
    """

    def __init__(self, counter_bits: int = 32):
        if not 1 <= counter_bits <= 32:
            raise ValueError("counter width must be 1..32 bits")
        self.limit = (1 << counter_bits) - 1
        self.next_counter = 0
        self._by_name: Dict[str, DomainTag] = {}
        self._by_tag: Dict[DomainTag, str] = {}

    def __len__(self) -> int:
        return len(self._by_name)

    def allocate(self, name: ContentName) -> DomainTag:
        key = str(name)
        tag = self._by_name.get(key)
        if tag is not None:
            return tag
        if self.next_counter >= self.limit:
            raise TagSpaceExhausted(f"all {self.limit} tags are in use")
        self.next_counter += 1
        tag = DomainTag(self.next_counter.to_bytes(4, "big") + bytes(4))
        self._by_name[key] = tag
        self._by_tag[tag] = key
        return tag

    def get(self, name: ContentName) -> Optional[DomainTag]:
        return self._by_name.get(str(name))

    def name_of(self, tag: DomainTag) -> Optional[str]:
        return self._by_tag.get(tag)


# --------------------------------------------------------------------------
# static view of the domain


@dataclass(frozen=True)
class HostInfo:
    id: str
    role: str
    mac: str
    ip: str
    switch: str
    port: int
    conet_ip: Optional[str] = None


class NetworkView:
    """Switch graph plus host attachment points, with shortest-path ports."""

    def __init__(
        self,
        switches: Dict[str, Iterable[int]],
        trunks: Iterable[Tuple[str, int, str, int]],
        hosts: Iterable[HostInfo],
    ):
        self.switches = {s: sorted(p) for s, p in switches.items()}
        self.trunks = list(trunks)
        self.hosts = {h.id: h for h in hosts}
        self._by_addr: Dict[str, HostInfo] = {}
        for h in self.hosts.values():
            self._by_addr[h.ip] = h
            if h.conet_ip:
                self._by_addr[h.conet_ip] = h
        self._routes: Dict[str, Dict[str, int]] = {}

    def host_by_address(self, addr: str) -> Optional[HostInfo]:
        return self._by_addr.get(str(addr))

    def port_toward(self, switch: str, host_id: str) -> Optional[int]:
        table = self._routes.get(host_id)
        if table is None:
            table = self._routes[host_id] = self._bfs(self.hosts[host_id])
        return table.get(switch)

    def _bfs(self, host: HostInfo) -> Dict[str, int]:
        ports = {host.switch: host.port}
        frontier = deque([host.switch])
        while frontier:
            cur = frontier.popleft()
            for nbr, nbr_port in self._neighbours(cur):
                if nbr not in ports:
                    ports[nbr] = nbr_port
                    frontier.append(nbr)
        return ports

    def _neighbours(self, switch: str):
        """(neighbour switch, neighbour's port facing ``switch``)."""
        for a, ap, b, bp in self.trunks:
            if a == switch:
                yield b, bp
            elif b == switch:
                yield a, ap

    def conet_data_addresses(self) -> Set[str]:
        return {h.conet_ip for h in self.hosts.values() if h.conet_ip and h.role == "client"}

    def to_json(self) -> Dict[str, Any]:
        return {
            "switches": [{"id": s, "ports": p} for s, p in sorted(self.switches.items())],
            "links": [
                {"a": f"{a}:{ap}", "b": f"{b}:{bp}"} for a, ap, b, bp in self.trunks
            ]
            + [
                {"a": f"{h.id}:eth0", "b": f"{h.switch}:{h.port}"}
                for h in sorted(self.hosts.values(), key=lambda h: h.id)
            ],
            "hosts": [
                {"id": h.id, "role": h.role, "mac": h.mac, "ip": h.ip, "conet_ip": h.conet_ip}
                for h in sorted(self.hosts.values(), key=lambda h: h.id)
            ],
        }


# --------------------------------------------------------------------------
# controller


@dataclass(frozen=True)
class ToSwitch:
    switch: str
    message: Union[FlowMod, PacketOut]


@dataclass(frozen=True)
class Reply:
    """Control message addressed to the node that sent the request."""

    message: ControlMessage


@dataclass
class CacheRecord:
    cache_id: str
    switch: str
    port: int
    address: str
    server: Any = None
    chunks: Dict[Tuple[str, int], None] = field(default_factory=dict)


class Controller:
    def __init__(
        self,
        view: NetworkView,
        *,
        mode: Mode = Mode.MAC_LEARNING,
        cache_policy: Callable[[ContentName, int], bool] = lambda name, csn: True,
        tag_bits: int = 32,
    ):
        self.view = view
        self.mode = mode
        self.cache_policy = cache_policy
        self.rib = Rib()
        self.tags = TagMap(tag_bits)
        self.caches: Dict[str, CacheRecord] = {}
        self.macs: Dict[str, Dict[str, int]] = {s: {} for s in view.switches}
        self.interest_counts: Counter = Counter()
        self.fib_snapshots: Dict[str, List[Dict[str, Any]]] = {}
        self.connections: Dict[str, str] = {}
        self.mode_log: List[Tuple[int, str, str]] = []
        self.counters: Counter = Counter()
        self.epoch = 0
        self._issued: Set[int] = set()

    # -- cookies

    def content_cookie(self) -> int:
        cookie = _CONTENT_COOKIE | self.epoch
        self._issued.add(cookie)
        return cookie

    def mac_cookie(self) -> int:
        cookie = _MAC_COOKIE | self.epoch
        self._issued.add(cookie)
        return cookie

    # -- iS: publication

    def register_content(self, origin: str, prefix, address: Optional[str] = None) -> None:
        prefix = as_name(prefix)
        if address is None:
            host = self.view.hosts.get(origin)
            if host is None or not host.conet_ip:
                raise NrsError(f"no CONET address known for origin {origin!r}")
            address = host.conet_ip
        self.rib.register(origin, prefix, address)

    def unregister_content(self, origin: str, prefix) -> bool:
        removed = self.rib.unregister(origin, as_name(prefix))
        if not removed:
            self.counters["unregister_noop"] += 1
        return removed

    # -- iN: lookups and tags

    def resolve(self, name) -> Tuple[str, DomainTag]:
        name = as_name(name)
        _, entry = self.rib.lookup(name)
        return entry.next_hop, self.tags.allocate(name)

    def allocate_tag(self, name) -> DomainTag:
        return self.tags.allocate(as_name(name))

    def handle_control(self, msg: ControlMessage, now: int = 0) -> List[Union[Reply, ToSwitch]]:
        kind = msg.kind
        if kind is MessageKind.NAME_LOOKUP:
            self.counters["lookups"] += 1
            try:
                next_hop, tag = self.resolve(msg["name"])
            except NoRoute:
                body = dict(status="no_route", prefix=None, next_hop=None, tag=None)
            else:
                body = dict(status="ok", prefix=msg["name"], next_hop=next_hop, tag=tag.hex())
            reply = ControlMessage.make(
                MessageKind.NAME_LOOKUP_REPLY, name=msg["name"], csn=msg["csn"], **body
            )
            return [Reply(reply)]
        if kind is MessageKind.TAG_REQUEST:
            tag = self.allocate_tag(msg["name"])
            return [Reply(ControlMessage.make(MessageKind.TAG_REPLY, name=msg["name"], tag=tag.hex()))]
        if kind is MessageKind.CONTENT_REGISTER:
            self.register_content(msg["origin"], msg["prefix"], msg["address"])
            return []
        if kind is MessageKind.CONTENT_UNREGISTER:
            self.unregister_content(msg["origin"], msg["prefix"])
            return []
        if kind is MessageKind.CHUNK_CACHED:
            return self.handle_chunk_cached(msg["cache"], msg["name"], msg["csn"])
        if kind is MessageKind.INTEREST_SUMMARY:
            self.ingest_interest_summary(msg)
            return []
        if kind is MessageKind.FIB_EXPORT_REPLY:
            self.fib_snapshots[msg["node"]] = list(msg["entries"])
            return []
        if kind is MessageKind.CONNECTION_SETUP:
            self.connections[msg["node"]] = msg["role"]
            return []
        if kind is MessageKind.PROACTIVE_PUSH:
            data = base64.b64decode(msg["content_b64"])
            return self.proactive_push(msg["cache"], msg["name"], msg["csn"], data)
        raise UnknownOp(f"controller does not accept {kind.value}")

    def handle_control_bytes(self, raw: bytes, now: int = 0) -> List[Union[bytes, ToSwitch]]:
        out: List[Union[bytes, ToSwitch]] = []
        for item in self.handle_control(decode_control(raw), now):
            out.append(encode_control(item.message) if isinstance(item, Reply) else item)
        return out

    def ingest_interest_summary(self, msg: ControlMessage) -> None:
        for name, count in msg["counts"].items():
            if count:
                self.interest_counts[name] += int(count)

    # -- caches

    def attach_cache(self, cache_id: str, switch: str, port: int, address: str, server=None) -> CacheRecord:
        rec = CacheRecord(cache_id, switch, port, address, server)
        self.caches[cache_id] = rec
        return rec

    def _cache_on(self, switch: str) -> Optional[CacheRecord]:
        for rec in self.caches.values():
            if rec.switch == switch:
                return rec
        return None

    def cached_contents(self, cache_id: str) -> List[Tuple[str, int]]:
        rec = self.caches.get(cache_id)
        if rec is None:
            raise UnknownCache(cache_id)
        return sorted(rec.chunks)

    def _holder(self, name: str, csn: int) -> Optional[CacheRecord]:
        for rec in self.caches.values():
            if (name, csn) in rec.chunks:
                return rec
        return None

    def handle_chunk_cached(self, cache_id: str, name, csn: int) -> List[ToSwitch]:
        rec = self.caches.get(cache_id)
        if rec is None:
            raise UnknownCache(cache_id)
        key = (str(name), csn)
        self.counters["notifications"] += 1
        rec.chunks[key] = None
        if self.mode is not Mode.ICN_CACHING:
            return []
        return self._redirect_rules(rec, as_name(name))

    def _redirect_rules(self, rec: CacheRecord, name: ContentName) -> List[ToSwitch]:
        """Higher-priority interest rules at the cache's switch pointing at the cache.

        One rule per ingress port other than the cache's own, so interests
        the cache relays upstream on a miss still reach the origin.
        """
        try:
            next_hop, tag = self.resolve(name)
        except NoRoute:
            return []
        src, dst = tag.ports
        cookie = self.content_cookie()
        out = []
        for port in self.view.switches[rec.switch]:
            if port == rec.port:
                continue
            match = Match(
                in_port=port, eth_type=ETH_IPV4, nw_proto=UDP_PROTO, nw_dst=next_hop, tp_src=src, tp_dst=dst
            )
            fm = FlowMod.add(ORIGIN_PRIORITY + REDIRECT_BOOST, match, [Output(rec.port)], cookie)
            out.append(ToSwitch(rec.switch, fm))
        return out

    def proactive_push(self, cache_id: str, name, csn: int, data: bytes) -> List[ToSwitch]:
        rec = self.caches.get(cache_id)
        if rec is None:
            raise UnknownCache(cache_id)
        name = as_name(name)
        self.counters["pushes"] += 1
        if rec.server is not None:
            note = rec.server.push(name, csn, data)
            if note is None:
                return []
        return self.handle_chunk_cached(cache_id, name, csn)

    # -- mode changes

    def set_mode(self, mode: Mode, now: int = 0) -> List[ToSwitch]:
        mode = Mode(mode)
        if mode is self.mode:
            return []
        previous, self.mode = self.mode, mode
        self.mode_log.append((now, previous.value, mode.value))
        self.epoch += 1
        doomed = is_content_cookie if mode is Mode.MAC_LEARNING else is_mac_cookie
        cookies = sorted(c for c in self._issued if doomed(c))
        self._issued.difference_update(cookies)
        out = [ToSwitch(s, FlowMod.delete_by_cookie(c)) for s in sorted(self.view.switches) for c in cookies]
        if mode is Mode.ICN_CACHING:
            for s in self.macs:
                self.macs[s].clear()
            for rec in self.caches.values():
                for name, _ in sorted(rec.chunks):
                    out += self._redirect_rules(rec, parse_name(name))
        return out

    # -- packet-in

    def handle_packet_in(self, pi: PacketIn, now: int = 0) -> List[ToSwitch]:
        self.counters["packet_in"] += 1
        fields = extract_match_fields(pi.frame, pi.in_port)
        self.macs.setdefault(pi.switch, {})[fields["eth_src"]] = pi.in_port
        if self.mode is Mode.ICN_CACHING and fields["nw_proto"] == UDP_PROTO:
            out = self._conet_packet_in(pi, fields)
            if out is not None:
                return out
        return self._learning_packet_in(pi, fields)

    def _learning_packet_in(self, pi: PacketIn, fields: Dict[str, Any]) -> List[ToSwitch]:
        port = self.macs[pi.switch].get(fields["eth_dst"])
        if port is None or port == pi.in_port:
            return [ToSwitch(pi.switch, PacketOut(pi.frame, pi.in_port, (Flood(),)))]
        actions = (Output(port),)
        fm = FlowMod.add(MAC_PRIORITY, Match(eth_dst=fields["eth_dst"]), actions, self.mac_cookie())
        return [ToSwitch(pi.switch, fm), ToSwitch(pi.switch, PacketOut(pi.frame, pi.in_port, actions))]

    def _conet_packet_in(self, pi: PacketIn, fields: Dict[str, Any]) -> Optional[List[ToSwitch]]:
        try:
            packet = decode_packet(pi.frame.payload, PacketFormat.F6)
        except WireError:
            return None
        hdr = packet.header
        dst = fields["nw_dst"]
        target = self.view.host_by_address(dst)
        if target is None:
            return None
        cache_here = self._cache_on(pi.switch)
        from_cache = cache_here is not None and pi.in_port == cache_here.port
        if hdr.is_interest:
            self.counters["interest_packet_in"] += 1
            holder = None if from_cache else self._holder(str(hdr.name), hdr.csn)
            if holder is not None:
                port = self.view.port_toward(pi.switch, holder.cache_id)
                out = self._redirect_rules(holder, hdr.name) if holder.switch == pi.switch else []
                return out + [ToSwitch(pi.switch, PacketOut(pi.frame, pi.in_port, (Output(port),)))]
            port = self.view.port_toward(pi.switch, target.id)
            match = Match(
                eth_type=ETH_IPV4,
                nw_proto=UDP_PROTO,
                nw_dst=dst,
                tp_src=fields["tp_src"],
                tp_dst=fields["tp_dst"],
            )
            actions: Tuple[Any, ...] = (Output(port),)
        else:
            self.counters["data_packet_in"] += 1
            port = self.view.port_toward(pi.switch, target.id)
            actions = (Output(port),)
            if cache_here is not None and not from_cache and self.cache_policy(hdr.name, hdr.csn):
                actions += (Output(cache_here.port),)
            match = Match(
                in_port=pi.in_port,
                eth_type=ETH_IPV4,
                nw_proto=UDP_PROTO,
                nw_dst=dst,
                tp_src=fields["tp_src"],
                tp_dst=fields["tp_dst"],
            )
        fm = FlowMod.add(ORIGIN_PRIORITY, match, actions, self.content_cookie())
        return [ToSwitch(pi.switch, fm), ToSwitch(pi.switch, PacketOut(pi.frame, pi.in_port, actions))]

    # -- northbound helpers

    def interest_stats(self) -> Dict[str, int]:
        return dict(sorted(self.interest_counts.items()))

    def state_digest(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "epoch": self.epoch,
            "rib_version": self.rib.version,
            "rib": [(str(p), e.origin, e.next_hop) for p, e in self.rib.entries()],
            "tags": self.tags.next_counter,
            "caches": {c: sorted(r.chunks) for c, r in sorted(self.caches.items())},
            "interests": self.interest_stats(),
            "macs": {s: dict(sorted(m.items())) for s, m in sorted(self.macs.items())},
            "mode_log": list(self.mode_log),
        }
