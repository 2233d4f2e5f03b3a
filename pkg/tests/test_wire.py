import ipaddress
import struct

import pytest
from hypothesis import assume, given, settings, strategies as st

from conet.naming import parse_name
from conet.wire import (
    AlreadyTagged,
    BadType,
    BadVersion,
    ChecksumMismatch,
    ConetHeader,
    ConetPacket,
    DomainTag,
    NameTooLong,
    NotTagged,
    OptionOverflow,
    PacketFormat as F,
    Truncated,
    TrailingGarbage,
    UnknownProtocol,
    VarintOverflow,
    WireError,
    decode_header,
    decode_packet,
    decode_varint,
    encode_header,
    encode_packet,
    encode_varint,
    ipv4_checksum,
    tag_packet,
    untag_packet,
)

names = st.lists(
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789.-_", min_size=1, max_size=10), min_size=1, max_size=4
).map(lambda c: parse_name("/".join(c)[:128].rstrip("/") or "x"))


@st.composite
def headers(draw, name_strategy=names):
    name = draw(name_strategy)
    csn = draw(st.integers(0, (1 << 56) - 1))
    ds = draw(st.integers(0, 255))
    if draw(st.booleans()):
        return ConetHeader.interest(name, csn, draw(st.integers(1, 0xFFFF)), ds)
    total = draw(st.integers(1, 0xFFFF))
    seg = draw(st.integers(1, total))
    payload = draw(st.binary(max_size=64))
    return ConetHeader.data(name, csn, seg, total, payload, ds)


tags = st.binary(min_size=8, max_size=8).filter(any).map(DomainTag)
addrs = st.integers(1, 2**32 - 2).map(ipaddress.IPv4Address)


def _oracle_checksum(hdr: bytes) -> int:
    # RFC 1071 one's-complement sum, written independently of the library
    words = struct.unpack(f"!{len(hdr) // 2}H", hdr)
    s = sum(words)
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return ~s & 0xFFFF


def _oracle_ip(b: bytes):
    vihl, _, total, _, _, ttl, proto, csum = struct.unpack("!BBHHHBBH", b[:12])
    ihl = (vihl & 0x0F) * 4
    return {
        "version": vihl >> 4,
        "ihl": ihl,
        "total": total,
        "proto": proto,
        "src": ipaddress.IPv4Address(b[12:16]),
        "dst": ipaddress.IPv4Address(b[16:20]),
        "options": b[20:ihl],
        "payload": b[ihl:],
        "checksum_ok": _oracle_checksum(b[:ihl]) == 0,
    }


# -- header


def test_golden_fixtures(wire_golden):
    i = ConetHeader.interest("a", 0, 1)
    d = ConetHeader.data("a", 1, 1, 1, b"X")
    assert encode_header(i) == wire_golden["interest_a_csn0_seg1"]
    assert encode_header(d) == wire_golden["data_a_csn1_seg1_X"]
    assert decode_header(wire_golden["interest_a_csn0_seg1"]) == i
    assert decode_header(wire_golden["data_a_csn1_seg1_X"]) == d


def test_decode_errors(wire_golden):
    good = wire_golden["interest_a_csn0_seg1"]
    with pytest.raises(Truncated):
        decode_header(b"")
    with pytest.raises(BadType):
        decode_header(b"\x13" + good[1:])
    with pytest.raises(BadVersion):
        decode_header(b"\x21" + good[1:])
    with pytest.raises(NameTooLong):
        decode_header(good[:2] + b"\x00" + good[3:])
    with pytest.raises(NameTooLong):
        decode_header(good[:2] + b"\x81" + b"a" * 129 + b"\x00\x00\x01")
    with pytest.raises(TrailingGarbage):
        decode_header(good + b"\x00")
    with pytest.raises(Truncated):
        decode_header(good[:-1])
    with pytest.raises(VarintOverflow):
        decode_header(good[:4] + b"\xff" * 8 + b"\x01\x00\x01")


def test_varint_oracle():
    for n in (0, 1, 127, 128, 300, 16383, 16384, (1 << 56) - 1):
        enc = encode_varint(n)
        # independent decode: little groups first, high bit continues
        value = sum((b & 0x7F) << (7 * i) for i, b in enumerate(enc))
        assert value == n
        assert all(b & 0x80 for b in enc[:-1]) and not enc[-1] & 0x80
        assert decode_varint(enc, 0) == (n, len(enc))
    assert encode_varint(300) == bytes([0xAC, 0x02])
    with pytest.raises(ValueError):
        encode_varint(1 << 56)


@given(headers())
def test_header_round_trip(h):
    assert decode_header(encode_header(h)) == h


def test_header_invariants():
    with pytest.raises(ValueError):
        ConetHeader.data("a", 0, 3, 2, b"")
    with pytest.raises(ValueError):
        ConetHeader.interest("a", 0, 0)
    with pytest.raises(ValueError):
        ConetHeader(1, parse_name("a"), payload=b"x")


@settings(max_examples=300)
@given(headers(), st.integers(0, 255), st.sampled_from(["type", "name_len", "payload_len_hi", "payload_len_lo"]))
def test_length_and_type_mutations_rejected(h, value, where):
    enc = bytearray(encode_header(h))
    if where == "type":
        pos = 0
    elif where == "name_len":
        pos = 2
    else:
        assume(not h.is_interest)
        pos = len(enc) - len(h.payload) - (2 if where == "payload_len_hi" else 1)
    assume(enc[pos] != value)
    enc[pos] = value
    try:
        got = decode_header(bytes(enc))
    except WireError:
        return
    # a surviving decode must at least not be the original header
    assert got != h
    # and the only way to survive is a shifted name field on a data header
    assert where == "name_len" and not h.is_interest


# -- packets


def _packet(fmt, h, src, dst, tag):
    if fmt.tag_width == 0:
        return ConetPacket(fmt, src, dst, h)
    return ConetPacket(fmt, src, dst, h, tag.truncated(fmt.tag_width))


short_names = st.text(alphabet="abcdefgh", min_size=1, max_size=8).map(parse_name)


@settings(max_examples=200)
@given(st.sampled_from(list(F)), headers(short_names), addrs, addrs, tags)
def test_packet_round_trip(fmt, h, src, dst, tag):
    p = _packet(fmt, h, src, dst, tag)
    raw = encode_packet(p)
    ip = _oracle_ip(raw)
    assert ip["version"] == 4 and ip["checksum_ok"]
    assert ip["total"] == len(raw)
    assert ip["proto"] == (17 if fmt in (F.F5, F.F6) else 252)
    assert (ip["src"], ip["dst"]) == (src, dst)
    assert bool(ip["options"]) == fmt.uses_option
    hint = fmt if fmt in (F.F3, F.F4, F.F5) else None
    assert decode_packet(raw, hint) == p


def test_f6_port_layout():
    h = ConetHeader.interest("foo.com/x", 0, 1)
    p = ConetPacket(F.F6, "192.168.1.23", "192.168.1.8", h, DomainTag.from_ports(1, 2))
    ip = _oracle_ip(encode_packet(p))
    assert ip["proto"] == 17
    assert ip["payload"][:4] == bytes.fromhex("00010002")
    assert ip["payload"][4:] == encode_header(h)


def test_f1_option_layout():
    h = ConetHeader.data("ab", 0, 1, 1, b"hello")
    raw = encode_packet(ConetPacket(F.F1, "10.0.0.1", "10.0.0.2", h))
    ip = _oracle_ip(raw)
    opts = ip["options"]
    assert opts[0] == 0x9E and len(opts) % 4 == 0
    assert ip["payload"] == b"hello"
    # option content is the header without its payload bytes
    assert opts[2 : opts[1]] == encode_header(h)[: -len(b"hello")]


def test_option_overflow():
    h = ConetHeader.interest("n" * 60)
    for fmt in (F.F1, F.F3):
        tag = DomainTag.from_ports(1, 1) if fmt is F.F3 else None
        with pytest.raises(OptionOverflow):
            encode_packet(ConetPacket(fmt, "10.0.0.1", "10.0.0.2", h, tag))
    # largest interest name that fits: 38 - (3 fixed + 1 varint + 2 segment) = 32 bytes
    ok = ConetPacket(F.F1, "10.0.0.1", "10.0.0.2", ConetHeader.interest("n" * 32))
    assert decode_packet(encode_packet(ok)) == ok
    with pytest.raises(OptionOverflow):
        encode_packet(ConetPacket(F.F1, "10.0.0.1", "10.0.0.2", ConetHeader.interest("n" * 33)))


def test_packet_errors():
    p = ConetPacket(F.F2, "10.0.0.1", "10.0.0.2", ConetHeader.interest("a"))
    raw = bytearray(encode_packet(p))
    raw[12] ^= 1
    with pytest.raises(ChecksumMismatch):
        decode_packet(bytes(raw))
    raw = bytearray(encode_packet(p))
    raw[9] = 6
    raw[10:12] = b"\0\0"
    raw[10:12] = struct.pack("!H", _oracle_checksum(bytes(raw[:20])))
    with pytest.raises(UnknownProtocol):
        decode_packet(bytes(raw))
    with pytest.raises(Truncated):
        decode_packet(b"\x45\x00")


def test_tagging_examples():
    h = ConetHeader.interest("foo.com/x", 3, 2)
    p = ConetPacket(F.F2, "192.168.1.23", "192.168.1.8", h)
    t = DomainTag.from_hex("1122334455667788")
    tagged = tag_packet(p, t, F.F6)
    assert tagged.tag.ports == (0x1122, 0x3344)
    assert _oracle_ip(encode_packet(tagged))["proto"] == 17
    back, got = untag_packet(tagged)
    assert back == p and encode_packet(back) == encode_packet(p)
    assert got == t.truncated(4)
    back4, got4 = untag_packet(tag_packet(p, t, F.F4))
    assert back4 == p and got4 == t
    with pytest.raises(NotTagged):
        untag_packet(p)
    with pytest.raises(AlreadyTagged):
        tag_packet(tagged, t, F.F6)


@given(headers(short_names), tags, st.sampled_from([F.F4, F.F5, F.F6]))
def test_tag_untag_inverse(h, t, fmt):
    p = ConetPacket(F.F2, "192.168.1.23", "192.168.1.8", h)
    q = tag_packet(p, t, fmt)
    assert encode_header(q.header) == encode_header(h)
    back, got = untag_packet(q)
    assert back == p and got == t.truncated(fmt.tag_width)


def test_domain_tag_rules():
    with pytest.raises(ValueError):
        DomainTag(bytes(8))
    with pytest.raises(ValueError):
        DomainTag(b"\x01")
    assert DomainTag.from_ports(0x0001, 0x0002).hex() == "0001000200000000"


def test_checksum_matches_oracle():
    h = bytes.fromhex("450000730000400040110000c0a80001c0a800c7")
    assert ipv4_checksum(h) == _oracle_checksum(h) == 0xB861
