"""Two-level content segmentation: content -> chunks -> carrier packets.

Chunks are numbered from 0 and are the caching unit; carrier packets inside
a chunk are numbered from 1.  Only framing lives here, ICTP reliability and
congestion control do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

from .naming import ContentName
from .wire import ConetHeader, PacketType

DEFAULT_CHUNK_SIZE = 4096
DEFAULT_CP_PAYLOAD_SIZE = 1024


class IctpError(ValueError):
    pass


class EmptyContent(IctpError):
    pass


class InconsistentTotals(IctpError):
    pass


class MixedIdentity(IctpError):
    pass


@dataclass(frozen=True)
class Chunk:
    name: ContentName
    csn: int
    data: bytes
    complete: bool
    total_segments: int = 0
    segment_size: int = 0

    def segment_payload(self, segment: int) -> bytes:
        if not 1 <= segment <= self.total_segments:
            raise IndexError(f"segment {segment} not in 1..{self.total_segments}")
        start = (segment - 1) * self.segment_size
        return self.data[start : start + self.segment_size]


def split_chunk(name, csn, chunk: bytes, cp_payload_size, diffserv_type=0) -> List[ConetHeader]:
    total = -(-len(chunk) // cp_payload_size)
    if total > 0xFFFF:
        raise IctpError(f"chunk needs {total} carrier packets, limit is 65535")
    return [
        ConetHeader(
            PacketType.DATA,
            name,
            csn,
            seg + 1,
            total,
            chunk[seg * cp_payload_size : (seg + 1) * cp_payload_size],
            diffserv_type,
        )
        for seg in range(total)
    ]


def segment(
    name: ContentName,
    content: bytes,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    cp_payload_size: int = DEFAULT_CP_PAYLOAD_SIZE,
    diffserv_type: int = 0,
) -> List[ConetHeader]:
    """Cut ``content`` into data headers ordered by (csn, segment)."""
    if not content:
        raise EmptyContent("cannot segment empty content")
    if not chunk_size >= cp_payload_size >= 1:
        raise IctpError("need chunk_size >= cp_payload_size >= 1")
    out: List[ConetHeader] = []
    for csn, start in enumerate(range(0, len(content), chunk_size)):
        out += split_chunk(name, csn, content[start : start + chunk_size], cp_payload_size, diffserv_type)
    return out


def reassemble(parts: Iterable[ConetHeader]) -> Chunk:
    """Join the carrier packets of one chunk.

    Duplicates are ignored.  The chunk is complete only when every segment
    from 1 to the declared total is present.
    """
    parts = list(parts)
    if not parts:
        raise IctpError("no parts to reassemble")
    first = parts[0]
    seen: Dict[int, bytes] = {}
    for p in parts:
        if p.ptype is not PacketType.DATA:
            raise MixedIdentity("interest mixed into data parts")
        if (p.name, p.csn) != (first.name, first.csn):
            raise MixedIdentity(f"parts of {first.name}#{first.csn} and {p.name}#{p.csn}")
        if p.total_segments != first.total_segments:
            raise InconsistentTotals(f"totals {first.total_segments} and {p.total_segments}")
        seen.setdefault(p.segment, p.payload)
    total = first.total_segments
    data = b"".join(seen[s] for s in sorted(seen))
    complete = len(seen) == total
    seg_size = len(seen[1]) if 1 in seen else 0
    return Chunk(first.name, first.csn, data, complete, total, seg_size)


class Reassembler:
    """Per-(name, csn) accumulator fed one carrier packet at a time."""

    def __init__(self) -> None:
        self._buffers: Dict[Tuple[ContentName, int], Dict[int, ConetHeader]] = {}

    def __len__(self) -> int:
        return len(self._buffers)

    def add(self, part: ConetHeader) -> Chunk | None:
        """Return the chunk when ``part`` completes it, else None."""
        key = (part.name, part.csn)
        buf = self._buffers.setdefault(key, {})
        if buf:
            other = next(iter(buf.values()))
            if other.total_segments != part.total_segments:
                raise InconsistentTotals(
                    f"{part.name}#{part.csn}: totals {other.total_segments} and {part.total_segments}"
                )
        buf.setdefault(part.segment, part)
        if len(buf) < part.total_segments:
            return None
        del self._buffers[key]
        return reassemble(buf.values())

    def discard(self, name: ContentName, csn: int) -> None:
        self._buffers.pop((name, csn), None)
