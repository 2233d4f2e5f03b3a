"""Byte-level codecs for CONET carrier packets.

Header layout (all multi-byte integers big-endian)::

    byte 0      version (1) << 4 | type (1 = interest, 2 = data)
    byte 1      diffserv-and-type
    byte 2      name length L, 1..128
    3 .. 3+L    name, UTF-8
    varint      chunk sequence number, LEB128, at most 8 bytes
    u16         segment number
    u16         total segments          (data only)
    u16         payload length          (data only)
    payload                             (data only)

Packets are IPv4.  Six placements of the header are supported, see
:class:`PacketFormat`.
"""

from __future__ import annotations

import enum
import ipaddress
import struct
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .naming import MAX_NAME_BYTES, ContentName, NamingError, parse_name

VERSION = 1
CONET_PROTO = 252
UDP_PROTO = 17
CONET_OPTION = 0x9E
MAX_OPTION_CONTENT = 38
MAX_VARINT_BYTES = 8
MAX_CSN = (1 << (7 * MAX_VARINT_BYTES)) - 1
TAG_BYTES = 8
SHORT_TAG_BYTES = 4
IP_TTL = 64


class WireError(ValueError):
    """Base class for encoding and decoding failures."""


class Truncated(WireError):
    pass


class BadVersion(WireError):
    pass


class BadType(WireError):
    pass


class NameTooLong(WireError):
    pass


class BadName(WireError):
    pass


class VarintOverflow(WireError):
    pass


class TrailingGarbage(WireError):
    pass


class OptionOverflow(WireError):
    pass


class ChecksumMismatch(WireError):
    pass


class UnknownProtocol(WireError):
    pass


class MalformedPacket(WireError):
    pass


class AlreadyTagged(WireError):
    pass


class NotTagged(WireError):
    pass


class PacketType(enum.IntEnum):
    INTEREST = 1
    DATA = 2


class PacketFormat(enum.Enum):
    F1 = 1  # header in an IPv4 option
    F2 = 2  # header as IP payload
    F3 = 3  # 8-byte tag + header in an IPv4 option
    F4 = 4  # 8-byte tag + header as IP payload
    F5 = 5  # 4-byte tag in fictitious UDP ports, header at payload offset 4
    F6 = 6  # same bytes as F5, the OpenFlow 1.0 testbed form

    @property
    def tag_width(self) -> int:
        return _TAG_WIDTH[self]

    @property
    def uses_option(self) -> bool:
        return self in (PacketFormat.F1, PacketFormat.F3)

    @property
    def protocol(self) -> int:
        return UDP_PROTO if self in (PacketFormat.F5, PacketFormat.F6) else CONET_PROTO


_TAG_WIDTH = {
    PacketFormat.F1: 0,
    PacketFormat.F2: 0,
    PacketFormat.F3: TAG_BYTES,
    PacketFormat.F4: TAG_BYTES,
    PacketFormat.F5: SHORT_TAG_BYTES,
    PacketFormat.F6: SHORT_TAG_BYTES,
}

# untagged form of every tagged format
_UNTAGGED = {
    PacketFormat.F3: PacketFormat.F1,
    PacketFormat.F4: PacketFormat.F2,
    PacketFormat.F5: PacketFormat.F2,
    PacketFormat.F6: PacketFormat.F2,
}


@dataclass(frozen=True)
class DomainTag:
    """Fixed-length stand-in for a content name inside one SDN domain.

    Only the first four bytes survive the UDP-port formats, so they are the
    ones that must discriminate between names.
    """

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != TAG_BYTES:
            raise ValueError(f"tag must be {TAG_BYTES} bytes, got {len(self.value)}")
        if not any(self.value):
            raise ValueError("the all-zero tag is reserved")

    @classmethod
    def from_ports(cls, src_port: int, dst_port: int) -> "DomainTag":
        return cls(struct.pack("!HH", src_port, dst_port) + bytes(4))

    @classmethod
    def from_hex(cls, text: str) -> "DomainTag":
        return cls(bytes.fromhex(text))

    @property
    def ports(self) -> Tuple[int, int]:
        return struct.unpack("!HH", self.value[:4])

    def truncated(self, width: int) -> "DomainTag":
        if width >= TAG_BYTES:
            return self
        return DomainTag(self.value[:width] + bytes(TAG_BYTES - width))

    def hex(self) -> str:
        return self.value.hex()

    def __repr__(self) -> str:
        return f"DomainTag({self.value.hex()})"


@dataclass(frozen=True)
class ConetHeader:
    ptype: PacketType
    name: ContentName
    csn: int = 0
    segment: int = 1
    total_segments: Optional[int] = None
    payload: bytes = b""
    diffserv_type: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ptype", PacketType(self.ptype))
        if not 0 <= self.diffserv_type <= 0xFF:
            raise ValueError("diffserv_type must fit one byte")
        if not 0 <= self.csn <= MAX_CSN:
            raise ValueError(f"csn must be in 0..{MAX_CSN}")
        if not 1 <= self.segment <= 0xFFFF:
            raise ValueError("segment must be in 1..65535")
        if self.ptype is PacketType.INTEREST:
            if self.payload or self.total_segments is not None:
                raise ValueError("interests carry no payload and no segment total")
        else:
            if self.total_segments is None or not self.segment <= self.total_segments <= 0xFFFF:
                raise ValueError("data needs segment <= total_segments <= 65535")
            if len(self.payload) > 0xFFFF:
                raise ValueError("payload longer than 65535 bytes")

    @property
    def is_interest(self) -> bool:
        return self.ptype is PacketType.INTEREST

    @classmethod
    def interest(cls, name, csn=0, segment=1, diffserv_type=0) -> "ConetHeader":
        if isinstance(name, str):
            name = parse_name(name)
        return cls(PacketType.INTEREST, name, csn, segment, diffserv_type=diffserv_type)

    @classmethod
    def data(cls, name, csn, segment, total_segments, payload, diffserv_type=0) -> "ConetHeader":
        if isinstance(name, str):
            name = parse_name(name)
        return cls(PacketType.DATA, name, csn, segment, total_segments, bytes(payload), diffserv_type)


def encode_varint(n: int) -> bytes:
    if not 0 <= n <= MAX_CSN:
        raise VarintOverflow(f"{n} does not fit {MAX_VARINT_BYTES} varint bytes")
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, pos: int) -> Tuple[int, int]:
    value = 0
    for i in range(MAX_VARINT_BYTES):
        if pos + i >= len(buf):
            raise Truncated("varint runs past end of buffer")
        byte = buf[pos + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            if i and byte == 0:
                raise VarintOverflow("non-minimal varint encoding")
            return value, pos + i + 1
    raise VarintOverflow(f"varint longer than {MAX_VARINT_BYTES} bytes")


def _encode_fixed(h: ConetHeader) -> bytes:
    """Everything up to (not including) the payload bytes."""
    name = h.name.encode()
    out = bytearray((VERSION << 4 | int(h.ptype), h.diffserv_type, len(name)))
    out += name
    out += encode_varint(h.csn)
    out += struct.pack("!H", h.segment)
    if h.ptype is PacketType.DATA:
        out += struct.pack("!HH", h.total_segments, len(h.payload))
    return bytes(out)


def encode_header(h: ConetHeader) -> bytes:
    return _encode_fixed(h) + h.payload


def decode_header(b: bytes) -> ConetHeader:
    b = bytes(b)
    if len(b) < 3:
        raise Truncated("header shorter than 3 bytes")
    if b[0] >> 4 != VERSION:
        raise BadVersion(f"version {b[0] >> 4}")
    try:
        ptype = PacketType(b[0] & 0x0F)
    except ValueError:
        raise BadType(f"packet type {b[0] & 0x0F}") from None
    ds = b[1]
    nlen = b[2]
    if nlen == 0 or nlen > MAX_NAME_BYTES:
        raise NameTooLong(f"name length {nlen}")
    pos = 3 + nlen
    if pos > len(b):
        raise Truncated("name runs past end of buffer")
    try:
        name = parse_name(b[3:pos].decode("utf-8"))
    except (UnicodeDecodeError, NamingError) as exc:
        raise BadName(str(exc)) from None
    csn, pos = decode_varint(b, pos)
    if pos + 2 > len(b):
        raise Truncated("missing segment number")
    (segment,) = struct.unpack_from("!H", b, pos)
    pos += 2
    if segment == 0:
        raise MalformedPacket("segment number 0")
    if ptype is PacketType.INTEREST:
        if pos != len(b):
            raise TrailingGarbage(f"{len(b) - pos} bytes after interest header")
        return ConetHeader(ptype, name, csn, segment, diffserv_type=ds)
    if pos + 4 > len(b):
        raise Truncated("missing data length fields")
    total, plen = struct.unpack_from("!HH", b, pos)
    pos += 4
    if total < segment:
        raise MalformedPacket(f"segment {segment} of {total}")
    if pos + plen > len(b):
        raise Truncated("payload runs past end of buffer")
    if pos + plen != len(b):
        raise TrailingGarbage(f"{len(b) - pos - plen} bytes after payload")
    return ConetHeader(ptype, name, csn, segment, total, b[pos:], ds)


@dataclass(frozen=True)
class ConetPacket:
    format: PacketFormat
    ip_src: ipaddress.IPv4Address
    ip_dst: ipaddress.IPv4Address
    header: ConetHeader
    tag: Optional[DomainTag] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ip_src", ipaddress.IPv4Address(self.ip_src))
        object.__setattr__(self, "ip_dst", ipaddress.IPv4Address(self.ip_dst))
        width = self.format.tag_width
        if width == 0 and self.tag is not None:
            raise ValueError(f"{self.format.name} carries no tag")
        if width and self.tag is None:
            raise ValueError(f"{self.format.name} requires a tag")
        if width and self.tag.truncated(width) != self.tag:
            raise ValueError(f"{self.format.name} tags use only the first {width} bytes")

    @property
    def protocol(self) -> int:
        return self.format.protocol

    @property
    def tagged(self) -> bool:
        return self.tag is not None


def ipv4_checksum(header: bytes) -> int:
    if len(header) % 2:
        header += b"\x00"
    total = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _ip_header(p: ConetPacket, options: bytes, payload_len: int) -> bytes:
    ihl = 5 + len(options) // 4
    total = ihl * 4 + payload_len
    if total > 0xFFFF:
        raise MalformedPacket("packet exceeds 65535 bytes")
    hdr = bytearray(
        struct.pack(
            "!BBHHHBBH4s4s",
            4 << 4 | ihl,
            0,
            total,
            0,
            0,
            IP_TTL,
            p.protocol,
            0,
            p.ip_src.packed,
            p.ip_dst.packed,
        )
    )
    hdr += options
    struct.pack_into("!H", hdr, 10, ipv4_checksum(bytes(hdr)))
    return bytes(hdr)


def encode_packet(p: ConetPacket) -> bytes:
    h = p.header
    width = p.format.tag_width
    tag = p.tag.value[:width] if width else b""
    if p.format.uses_option:
        content = tag + _encode_fixed(h)
        if len(content) > MAX_OPTION_CONTENT:
            raise OptionOverflow(
                f"option content is {len(content)} bytes, capacity {MAX_OPTION_CONTENT}"
            )
        option = bytes((CONET_OPTION, len(content) + 2)) + content
        option += bytes(-len(option) % 4)  # pad with end-of-options
        return _ip_header(p, option, len(h.payload)) + h.payload
    payload = tag + encode_header(h)
    return _ip_header(p, b"", len(payload)) + payload


def _find_option(options: bytes) -> Optional[bytes]:
    i = 0
    while i < len(options):
        kind = options[i]
        if kind == 0:
            break
        if kind == 1:
            i += 1
            continue
        if i + 1 >= len(options):
            raise MalformedPacket("option length byte missing")
        olen = options[i + 1]
        if olen < 2 or i + olen > len(options):
            raise MalformedPacket(f"bad option length {olen}")
        if kind == CONET_OPTION:
            return options[i + 2 : i + olen]
        i += olen
    return None


def parse_ipv4(b: bytes) -> Tuple[int, bytes, bytes, bytes, bytes]:
    """Validate an IPv4 header; return (protocol, src, dst, options, payload)."""
    if len(b) < 20:
        raise Truncated("shorter than an IPv4 header")
    if b[0] >> 4 != 4:
        raise MalformedPacket("not IPv4")
    ihl = (b[0] & 0x0F) * 4
    if ihl < 20 or len(b) < ihl:
        raise Truncated("IPv4 header length past end of buffer")
    (total,) = struct.unpack_from("!H", b, 2)
    if total != len(b):
        raise MalformedPacket(f"total length {total} but {len(b)} bytes present")
    if ipv4_checksum(b[:ihl]) != 0:
        raise ChecksumMismatch("IPv4 header checksum mismatch")
    return b[9], b[12:16], b[16:20], b[20:ihl], b[ihl:]


def decode_packet(b: bytes, hint: Optional[PacketFormat] = None) -> ConetPacket:
    """Decode an IPv4 CONET packet.

    Tags are not self-describing, so ``hint`` picks between the formats that
    share a byte layout (F1/F3, F2/F4, F5/F6).  Without a hint the untagged
    form is assumed, and F6 for UDP packets.
    """
    b = bytes(b)
    proto, src, dst, options, payload = parse_ipv4(b)
    src = ipaddress.IPv4Address(src)
    dst = ipaddress.IPv4Address(dst)
    if proto == UDP_PROTO:
        fmt = hint if hint in (PacketFormat.F5, PacketFormat.F6) else PacketFormat.F6
        if hint is not None and hint is not fmt:
            raise MalformedPacket(f"UDP packet cannot be {hint.name}")
        if len(payload) < SHORT_TAG_BYTES:
            raise Truncated("missing port tag")
        tag = DomainTag(payload[:4] + bytes(4)) if any(payload[:4]) else None
        if tag is None:
            raise MalformedPacket("zero tag")
        return ConetPacket(fmt, src, dst, decode_header(payload[4:]), tag)
    if proto != CONET_PROTO:
        raise UnknownProtocol(f"IP protocol {proto}")
    content = _find_option(options) if options else None
    if content is not None:
        fmt = hint or PacketFormat.F1
        if not fmt.uses_option:
            raise MalformedPacket(f"option-carried header cannot be {fmt.name}")
        width = fmt.tag_width
        if len(content) < width:
            raise Truncated("option shorter than tag")
        tag = _tag_or_none(content[:width]) if width else None
        if width and tag is None:
            raise MalformedPacket("zero tag")
        return ConetPacket(fmt, src, dst, decode_header(content[width:] + payload), tag)
    fmt = hint or PacketFormat.F2
    if fmt not in (PacketFormat.F2, PacketFormat.F4):
        raise MalformedPacket(f"payload-carried header cannot be {fmt.name}")
    width = fmt.tag_width
    if len(payload) < width:
        raise Truncated("payload shorter than tag")
    tag = _tag_or_none(payload[:width]) if width else None
    if width and tag is None:
        raise MalformedPacket("zero tag")
    return ConetPacket(fmt, src, dst, decode_header(payload[width:]), tag)


def _tag_or_none(raw: bytes) -> Optional[DomainTag]:
    if not any(raw):
        return None
    return DomainTag(raw + bytes(TAG_BYTES - len(raw)))


_TAGGED = {
    (PacketFormat.F1, PacketFormat.F3),
    (PacketFormat.F2, PacketFormat.F4),
    (PacketFormat.F2, PacketFormat.F5),
    (PacketFormat.F2, PacketFormat.F6),
}


def tag_packet(p: ConetPacket, t: DomainTag, target: PacketFormat = PacketFormat.F6) -> ConetPacket:
    """Push a domain tag onto an untagged packet at an ingress edge."""
    if p.tagged:
        raise AlreadyTagged(f"packet is already {p.format.name}")
    if (p.format, target) not in _TAGGED:
        raise WireError(f"cannot tag {p.format.name} into {target.name}")
    return replace(p, format=target, tag=t.truncated(target.tag_width))


def untag_packet(p: ConetPacket) -> Tuple[ConetPacket, DomainTag]:
    """Strip the domain tag at an egress edge."""
    if not p.tagged:
        raise NotTagged(f"{p.format.name} packets carry no tag")
    return replace(p, format=_UNTAGGED[p.format], tag=None), p.tag
