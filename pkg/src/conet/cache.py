"""External cache server fed with duplicated data packets."""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

from .control import ControlMessage, MessageKind
from .ictp import DEFAULT_CP_PAYLOAD_SIZE, Chunk, IctpError, Reassembler
from .naming import ContentName, as_name
from .wire import ConetHeader, ConetPacket, PacketType

ChunkKey = Tuple[ContentName, int]


class SegmentOutOfRange(IndexError):
    pass


@dataclass(frozen=True)
class Nack:
    interest: ConetPacket
    reason: str = "not_cached"


class ContentStore:
    """Complete chunks only, LRU by chunk."""

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError("store capacity must be positive")
        self.capacity = capacity
        self._chunks: "OrderedDict[ChunkKey, Chunk]" = OrderedDict()

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, key: ChunkKey) -> bool:
        return key in self._chunks

    def put(self, chunk: Chunk) -> Optional[ChunkKey]:
        """Store ``chunk``; return the key evicted to make room, if any."""
        key = (chunk.name, chunk.csn)
        evicted = None
        if key not in self._chunks and len(self._chunks) >= self.capacity:
            evicted, _ = self._chunks.popitem(last=False)
        self._chunks[key] = chunk
        self._chunks.move_to_end(key)
        return evicted

    def get(self, name: ContentName, csn: int) -> Optional[Chunk]:
        chunk = self._chunks.get((name, csn))
        if chunk is not None:
            self._chunks.move_to_end((name, csn))
        return chunk

    def keys(self) -> List[ChunkKey]:
        return sorted(self._chunks, key=lambda k: (str(k[0]), k[1]))


class CacheServer:
    """Assembles chunks from copies of data packets and serves interests.

    A completed chunk produces exactly one ``chunk_cached`` notification for
    the controller.  Evictions are silent: the controller keeps its redirect
    and later interests for the evicted chunk get a :class:`Nack`.
    """

    def __init__(
        self,
        cache_id: str,
        address: str,
        capacity: int = 1024,
        segment_size: int = DEFAULT_CP_PAYLOAD_SIZE,
    ):
        self.cache_id = cache_id
        self.address = address
        self.segment_size = segment_size
        self.content = ContentStore(capacity)
        self.assembly = Reassembler()
        self.counters: Counter = Counter()

    def _notify(self, name: ContentName, csn: int) -> ControlMessage:
        self.counters["notifications"] += 1
        return ControlMessage.make(MessageKind.CHUNK_CACHED, cache=self.cache_id, name=str(name), csn=csn)

    def _complete(self, chunk: Chunk) -> ControlMessage:
        if self.content.put(chunk) is not None:
            self.counters["evictions"] += 1
        return self._notify(chunk.name, chunk.csn)

    def ingest(self, packet: ConetPacket) -> Optional[ControlMessage]:
        hdr = packet.header
        if hdr.ptype is not PacketType.DATA:
            self.counters["malformed"] += 1
            return None
        self.counters["data_in"] += 1
        if (hdr.name, hdr.csn) in self.content:
            self.counters["duplicates"] += 1
            return None
        try:
            chunk = self.assembly.add(hdr)
        except IctpError:
            self.counters["malformed"] += 1
            self.assembly.discard(hdr.name, hdr.csn)
            return None
        return None if chunk is None else self._complete(chunk)

    def push(self, name, csn: int, data: bytes) -> Optional[ControlMessage]:
        """Store a chunk handed over by the controller ahead of any request."""
        name = as_name(name)
        if (name, csn) in self.content:
            return None
        total = max(1, -(-len(data) // self.segment_size))
        self.assembly.discard(name, csn)
        return self._complete(Chunk(name, csn, bytes(data), True, total, self.segment_size))

    def serve(self, interest: ConetPacket) -> Union[ConetPacket, Nack]:
        hdr = interest.header
        chunk = self.content.get(hdr.name, hdr.csn)
        if chunk is None:
            self.counters["nacks"] += 1
            return Nack(interest)
        if hdr.segment > chunk.total_segments:
            raise SegmentOutOfRange(f"segment {hdr.segment} of {chunk.total_segments}")
        self.counters["served"] += 1
        data = ConetHeader(
            PacketType.DATA,
            hdr.name,
            hdr.csn,
            hdr.segment,
            chunk.total_segments,
            chunk.segment_payload(hdr.segment),
            hdr.diffserv_type,
        )
        return replace(interest, ip_src=self.address, ip_dst=interest.ip_src, header=data)

    def inventory(self) -> List[Tuple[str, int]]:
        return [(str(n), c) for n, c in self.content.keys()]
