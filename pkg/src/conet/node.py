"""Data-plane elements: the ICN edge node and an OpenFlow 1.0 style switch.

The edge node owns a Lookup-and-Cache FIB: a bounded, LRU-managed cache of
routes that is filled on demand from the NRS.  Interests that miss the FIB
wait in a bounded queue until the lookup reply arrives.

The switch knows nothing about CONET.  It matches on the usual layer 2-4
fields, which is enough because tagged packets carry the tag where a UDP
header would carry its ports.
"""

from __future__ import annotations

import struct
from collections import Counter, OrderedDict, deque
from dataclasses import dataclass, replace
from typing import Any, Deque, Dict, Iterable, List, Optional, Tuple, Union

from .control import ControlMessage, MessageKind
from .naming import ContentName, parse_name
from .wire import (
    ConetPacket,
    DomainTag,
    PacketFormat,
    tag_packet,
    untag_packet,
)

DEFAULT_FIB_CAPACITY = 1024
DEFAULT_QUEUE_LIMIT = 256
DEFAULT_LOOKUP_TIMEOUT_US = 500_000
ETH_IPV4 = 0x0800


# --------------------------------------------------------------------------
# FIB


@dataclass
class FibEntry:
    prefix: ContentName
    next_hop: str
    tag: Optional[DomainTag] = None
    last_used: int = 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "prefix": str(self.prefix),
            "next_hop": self.next_hop,
            "tag": self.tag.hex() if self.tag else None,
            "last_used": self.last_used,
        }

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "FibEntry":
        tag = DomainTag.from_hex(obj["tag"]) if obj.get("tag") else None
        return cls(parse_name(obj["prefix"]), obj["next_hop"], tag, obj.get("last_used", 0))


class Fib:
    """Name-prefix forwarding table with LRU eviction."""

    def __init__(self, capacity: int = DEFAULT_FIB_CAPACITY):
        if capacity < 1:
            raise ValueError("FIB capacity must be positive")
        self.capacity = capacity
        self._table: "OrderedDict[Tuple[str, ...], FibEntry]" = OrderedDict()

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, prefix: ContentName) -> bool:
        return prefix.components in self._table

    def lookup(self, name: ContentName, now: int = 0) -> Optional[FibEntry]:
        comps = name.components
        for depth in range(len(comps), 0, -1):
            key = comps[:depth]
            entry = self._table.get(key)
            if entry is not None:
                entry.last_used = now
                self._table.move_to_end(key)
                return entry
        return None

    def install(self, entry: FibEntry) -> Optional[ContentName]:
        """Insert or overwrite ``entry``; return the evicted prefix, if any."""
        key = entry.prefix.components
        evicted = None
        if key in self._table:
            self._table[key] = entry
            self._table.move_to_end(key)
            return None
        if len(self._table) >= self.capacity:
            evicted = self.evict()
        self._table[key] = entry
        return evicted

    def evict(self) -> Optional[ContentName]:
        if not self._table:
            return None
        _, entry = self._table.popitem(last=False)
        return entry.prefix

    def remove(self, prefix: ContentName) -> bool:
        return self._table.pop(prefix.components, None) is not None

    def export(self) -> List[FibEntry]:
        return [replace(e) for e in self._table.values()]


# --------------------------------------------------------------------------
# edge node (IWE)


@dataclass
class PendingInterest:
    packet: ConetPacket
    enqueue_time: int


@dataclass(frozen=True)
class Forward:
    """Send a packet into the SDN domain."""

    packet: ConetPacket


@dataclass(frozen=True)
class Deliver:
    """Hand a packet to the co-located terminal."""

    packet: ConetPacket


@dataclass(frozen=True)
class SendControl:
    message: ControlMessage


@dataclass(frozen=True)
class Drop:
    packet: ConetPacket
    reason: str


Effect = Union[Forward, Deliver, SendControl, Drop]


class EdgeNode:
    """InterWorking Element at the border of the OpenFlow domain.

    Outbound interests are resolved through the FIB and tagged; inbound
    tagged packets are stripped back to their native form.  The (name, csn)
    to tag association seen on interests is remembered so that data going
    the other way can be tagged the same way.
    """

    def __init__(
        self,
        node_id: str,
        *,
        fib_capacity: int = DEFAULT_FIB_CAPACITY,
        queue_limit: int = DEFAULT_QUEUE_LIMIT,
        lookup_timeout_us: int = DEFAULT_LOOKUP_TIMEOUT_US,
        tag_format: PacketFormat = PacketFormat.F6,
        association_limit: int = 4096,
    ):
        self.node_id = node_id
        self.fib = Fib(fib_capacity)
        self.queue_limit = queue_limit
        self.lookup_timeout_us = lookup_timeout_us
        self.tag_format = tag_format
        self.association_limit = association_limit
        self.queue: Deque[PendingInterest] = deque()
        self.inflight: Dict[ContentName, int] = {}
        self._assoc: "OrderedDict[Tuple[ContentName, int], DomainTag]" = OrderedDict()
        self._requests: Counter = Counter()
        self.counters: Counter = Counter()

    # -- interests leaving toward the domain

    def handle_interest(self, packet: ConetPacket, now: int) -> List[Effect]:
        self.counters["interests_in"] += 1
        name = packet.header.name
        self._requests[str(name)] += 1
        entry = self.fib.lookup(name, now)
        if entry is not None and entry.tag is not None:
            self.counters["fib_hits"] += 1
            return [self._forward(packet, entry)]
        self.counters["fib_misses"] += 1
        if len(self.queue) >= self.queue_limit:
            self.counters["drops"] += 1
            self.counters["queue_full"] += 1
            return [Drop(packet, "queue_full")]
        self.queue.append(PendingInterest(packet, now))
        if name in self.inflight:
            return []
        self.inflight[name] = now
        self.counters["lookups"] += 1
        msg = ControlMessage.make(MessageKind.NAME_LOOKUP, name=str(name), csn=packet.header.csn)
        return [SendControl(msg)]

    def _forward(self, packet: ConetPacket, entry: FibEntry) -> Forward:
        self._remember(packet.header.name, packet.header.csn, entry.tag)
        routed = replace(packet, ip_dst=entry.next_hop)
        self.counters["interests_out"] += 1
        return Forward(tag_packet(routed, entry.tag, self.tag_format))

    def handle_lookup_reply(self, msg: ControlMessage, now: int) -> List[Effect]:
        name = parse_name(msg["name"])
        self.inflight.pop(name, None)
        if msg["status"] != "ok":
            return self._drop_queued(lambda p: p.packet.header.name == name, "no_route")
        entry = FibEntry(parse_name(msg["prefix"]), msg["next_hop"], DomainTag.from_hex(msg["tag"]), now)
        self.fib_install(entry)
        return self._release(now)

    def fib_install(self, entry: FibEntry) -> Optional[ContentName]:
        evicted = self.fib.install(entry)
        if evicted is not None:
            self.counters["fib_evictions"] += 1
        return evicted

    def _release(self, now: int) -> List[Effect]:
        out: List[Effect] = []
        waiting: Deque[PendingInterest] = deque()
        for pending in self.queue:
            hdr = pending.packet.header
            entry = self.fib.lookup(hdr.name, now)
            if entry is not None and entry.tag is not None:
                out.append(self._forward(pending.packet, entry))
            else:
                waiting.append(pending)
        self.queue = waiting
        return out

    def _drop_queued(self, pred, reason: str) -> List[Effect]:
        out: List[Effect] = []
        keep: Deque[PendingInterest] = deque()
        for pending in self.queue:
            if pred(pending):
                self.counters["drops"] += 1
                self.counters[reason] += 1
                out.append(Drop(pending.packet, reason))
            else:
                keep.append(pending)
        self.queue = keep
        return out

    def expire(self, now: int) -> List[Effect]:
        """Drop interests whose lookup has been outstanding too long."""
        deadline = now - self.lookup_timeout_us
        stale = {n for n, t in self.inflight.items() if t <= deadline}
        for n in stale:
            del self.inflight[n]
        return self._drop_queued(lambda p: p.enqueue_time <= deadline, "lookup_timeout")

    # -- packets arriving from the domain

    def from_domain(self, packet: ConetPacket, now: int) -> List[Effect]:
        if not packet.tagged:
            self.counters["drops"] += 1
            return [Drop(packet, "untagged")]
        native, tag = untag_packet(packet)
        hdr = native.header
        if hdr.is_interest:
            self._remember(hdr.name, hdr.csn, tag)
        else:
            self.counters["data_in"] += len(hdr.payload)
        return [Deliver(native)]

    def handle_data(self, packet: ConetPacket, now: int) -> List[Effect]:
        """Tag native data from the local terminal for the trip back."""
        hdr = packet.header
        tag = self._assoc.get((hdr.name, hdr.csn))
        if tag is None:
            self.counters["drops"] += 1
            return [Drop(packet, "no_tag_association")]
        self.counters["data_out"] += len(hdr.payload)
        return [Forward(tag_packet(packet, tag, self.tag_format))]

    def _remember(self, name: ContentName, csn: int, tag: DomainTag) -> None:
        key = (name, csn)
        self._assoc[key] = tag
        self._assoc.move_to_end(key)
        while len(self._assoc) > self.association_limit:
            self._assoc.popitem(last=False)

    def interest_report(self) -> Optional[ControlMessage]:
        if not self._requests:
            return None
        counts = dict(sorted(self._requests.items()))
        self._requests.clear()
        return ControlMessage.make(MessageKind.INTEREST_SUMMARY, node=self.node_id, counts=counts)

    def fib_export(self) -> ControlMessage:
        return ControlMessage.make(
            MessageKind.FIB_EXPORT_REPLY,
            node=self.node_id,
            entries=[e.to_json() for e in self.fib.export()],
        )


# --------------------------------------------------------------------------
# OpenFlow 1.0 style switch


@dataclass(frozen=True)
class Frame:
    eth_dst: str
    eth_src: str
    payload: bytes
    eth_type: int = ETH_IPV4

    @property
    def size(self) -> int:
        return 14 + len(self.payload)


MATCH_FIELDS = (
    "in_port",
    "eth_src",
    "eth_dst",
    "eth_type",
    "nw_proto",
    "nw_src",
    "nw_dst",
    "tp_src",
    "tp_dst",
)


def extract_match_fields(frame: Frame, in_port: int) -> Dict[str, Any]:
    """Plain layer 2-4 field extraction, as an OpenFlow 1.0 switch does it."""
    fields: Dict[str, Any] = dict.fromkeys(MATCH_FIELDS)
    fields.update(in_port=in_port, eth_src=frame.eth_src, eth_dst=frame.eth_dst, eth_type=frame.eth_type)
    ip = frame.payload
    if frame.eth_type != ETH_IPV4 or len(ip) < 20 or ip[0] >> 4 != 4:
        return fields
    fields["nw_proto"] = ip[9]
    fields["nw_src"] = ".".join(map(str, ip[12:16]))
    fields["nw_dst"] = ".".join(map(str, ip[16:20]))
    ihl = (ip[0] & 0x0F) * 4
    if ip[9] in (6, 17) and len(ip) >= ihl + 4:
        fields["tp_src"], fields["tp_dst"] = struct.unpack_from("!HH", ip, ihl)
    return fields


@dataclass(frozen=True)
class Match:
    in_port: Optional[int] = None
    eth_src: Optional[str] = None
    eth_dst: Optional[str] = None
    eth_type: Optional[int] = None
    nw_proto: Optional[int] = None
    nw_src: Optional[str] = None
    nw_dst: Optional[str] = None
    tp_src: Optional[int] = None
    tp_dst: Optional[int] = None

    @property
    def shape(self) -> Tuple[str, ...]:
        return tuple(f for f in MATCH_FIELDS if getattr(self, f) is not None)

    @property
    def key(self) -> Tuple[Any, ...]:
        return tuple(getattr(self, f) for f in self.shape)

    def matches(self, fields: Dict[str, Any]) -> bool:
        return all(fields.get(f) == getattr(self, f) for f in self.shape)

    def to_json(self) -> Dict[str, Any]:
        return {f: getattr(self, f) for f in self.shape}

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "Match":
        return cls(**obj)


@dataclass(frozen=True)
class Output:
    port: int

    def to_json(self):
        return {"type": "output", "port": self.port}


@dataclass(frozen=True)
class Flood:
    def to_json(self):
        return {"type": "flood"}


@dataclass(frozen=True)
class ToController:
    def to_json(self):
        return {"type": "controller"}


Action = Union[Output, Flood, ToController]


def action_from_json(obj: Dict[str, Any]) -> Action:
    kind = obj["type"]
    if kind == "output":
        return Output(obj["port"])
    if kind == "flood":
        return Flood()
    if kind == "controller":
        return ToController()
    raise ValueError(f"unknown action {kind!r}")


@dataclass
class FlowTableEntry:
    priority: int
    match: Match
    actions: Tuple[Action, ...]
    cookie: int = 0
    seq: int = 0
    packet_count: int = 0
    byte_count: int = 0

    def to_json(self) -> Dict[str, Any]:
        return {
            "priority": self.priority,
            "match": self.match.to_json(),
            "actions": [a.to_json() for a in self.actions],
            "cookie": self.cookie,
        }


class TableFull(Exception):
    pass


@dataclass(frozen=True)
class FlowMod:
    op: str  # "add" | "delete_by_cookie"
    entry: Optional[FlowTableEntry] = None
    cookie: Optional[int] = None

    @classmethod
    def add(cls, priority: int, match: Match, actions: Iterable[Action], cookie: int = 0) -> "FlowMod":
        return cls("add", FlowTableEntry(priority, match, tuple(actions), cookie))

    @classmethod
    def delete_by_cookie(cls, cookie: int) -> "FlowMod":
        return cls("delete_by_cookie", cookie=cookie)


@dataclass(frozen=True)
class PacketIn:
    switch: str
    in_port: int
    frame: Frame


@dataclass(frozen=True)
class PacketOut:
    frame: Frame
    in_port: int
    actions: Tuple[Action, ...]


class FlowTable:
    """Wildcard flow table.  Highest priority wins, ties go to the older entry.

    Entries are grouped by (priority, set of matched fields) so a lookup is a
    handful of dict probes instead of a scan.
    """

    def __init__(self, capacity: int = 4096):
        self.capacity = capacity
        self._groups: Dict[Tuple[int, Tuple[str, ...]], Dict[Tuple[Any, ...], FlowTableEntry]] = {}
        self._order: List[Tuple[int, Tuple[str, ...]]] = []
        self._seq = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def add(self, entry: FlowTableEntry) -> FlowTableEntry:
        gkey = (entry.priority, entry.match.shape)
        group = self._groups.get(gkey)
        existing = group.get(entry.match.key) if group else None
        if existing is not None:
            existing.actions = tuple(entry.actions)
            existing.cookie = entry.cookie
            return existing
        if self._count >= self.capacity:
            raise TableFull(f"flow table holds {self.capacity} entries")
        if group is None:
            group = self._groups[gkey] = {}
            self._order.append(gkey)
            self._order.sort(key=lambda g: -g[0])
        self._seq += 1
        stored = replace(entry, actions=tuple(entry.actions), seq=self._seq)
        group[entry.match.key] = stored
        self._count += 1
        return stored

    def delete_by_cookie(self, cookie: int) -> int:
        removed = 0
        for gkey in list(self._order):
            group = self._groups[gkey]
            for k in [k for k, e in group.items() if e.cookie == cookie]:
                del group[k]
                removed += 1
            if not group:
                del self._groups[gkey]
                self._order.remove(gkey)
        self._count -= removed
        return removed

    def lookup(self, fields: Dict[str, Any]) -> Optional[FlowTableEntry]:
        best: Optional[FlowTableEntry] = None
        for gkey in self._order:
            priority, shape = gkey
            if best is not None and priority < best.priority:
                break
            entry = self._groups[gkey].get(tuple(fields[f] for f in shape))
            if entry is not None and (best is None or entry.seq < best.seq):
                best = entry
        return best

    def entries(self) -> List[FlowTableEntry]:
        out = [e for g in self._groups.values() for e in g.values()]
        out.sort(key=lambda e: (-e.priority, e.seq))
        return out


class Switch:
    def __init__(self, dpid: str, ports: Iterable[int], no_flood: Iterable[int] = (), capacity: int = 4096):
        self.dpid = dpid
        self.ports = sorted(ports)
        self.no_flood = set(no_flood)
        self.table = FlowTable(capacity)
        self.counters: Counter = Counter()

    def _apply(self, frame: Frame, in_port: int, actions: Iterable[Action]) -> List[Any]:
        out: List[Any] = []
        for action in actions:
            if isinstance(action, Output):
                if action.port != in_port:
                    out.append((action.port, frame))
            elif isinstance(action, Flood):
                out += [(p, frame) for p in self.ports if p != in_port and p not in self.no_flood]
            elif isinstance(action, ToController):
                out.append(PacketIn(self.dpid, in_port, frame))
        return out

    def process(self, frame: Frame, in_port: int) -> Union[List[Any], PacketIn]:
        """Forward ``frame``; a table miss yields a :class:`PacketIn`."""
        entry = self.table.lookup(extract_match_fields(frame, in_port))
        if entry is None:
            self.counters["packet_in"] += 1
            return PacketIn(self.dpid, in_port, frame)
        entry.packet_count += 1
        entry.byte_count += frame.size
        return self._apply(frame, in_port, entry.actions)

    def flow_mod(self, fm: FlowMod) -> int:
        if fm.op == "add":
            self.table.add(fm.entry)
            return 1
        if fm.op == "delete_by_cookie":
            return self.table.delete_by_cookie(fm.cookie)
        raise ValueError(f"unknown flow-mod op {fm.op!r}")

    def packet_out(self, po: PacketOut) -> List[Any]:
        return self._apply(po.frame, po.in_port, po.actions)

    def flows_json(self) -> List[Dict[str, Any]]:
        return [e.to_json() for e in self.table.entries()]
