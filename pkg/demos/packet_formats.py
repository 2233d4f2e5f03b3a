"""
Six ways to carry a content name over IPv4
==========================================

The same interest encoded in every packet format, then tagged and stripped
the way an edge node does it at the border of the OpenFlow domain.
"""

from conet.node import Frame, extract_match_fields
from conet.wire import (
    ConetHeader,
    ConetPacket,
    DomainTag,
    OptionOverflow,
    PacketFormat,
    encode_header,
    encode_packet,
    tag_packet,
    untag_packet,
)

header = ConetHeader.interest("foo.com/football", csn=2, segment=1)
print("header bytes:", encode_header(header).hex(" "))

tag = DomainTag.from_hex("1122334455667788")
for fmt in PacketFormat:
    t = tag.truncated(fmt.tag_width) if fmt.tag_width else None
    p = ConetPacket(fmt, "192.168.1.23", "192.168.1.8", header, t)
    raw = encode_packet(p)
    print(f"{fmt.name}: proto {raw[9]:3d}, {len(raw):3d} bytes, ihl {raw[0] & 15}  {raw[20:32].hex(' ')}")

# names that do not fit the 40-byte IP option area are refused outright
try:
    encode_packet(ConetPacket(PacketFormat.F1, "10.0.0.1", "10.0.0.2", ConetHeader.interest("x" * 60)))
except OptionOverflow as exc:
    print("F1 with a 60-byte name:", exc)

# an edge node tags a native packet; an unmodified switch sees UDP ports
native = ConetPacket(PacketFormat.F2, "192.168.1.23", "192.168.1.8", header)
tagged = tag_packet(native, tag, PacketFormat.F6)
fields = extract_match_fields(Frame("02:00:00:00:00:02", "02:00:00:00:00:01", encode_packet(tagged)), in_port=1)
print("switch sees:", {k: fields[k] for k in ("nw_proto", "nw_dst", "tp_src", "tp_dst")})
print(f"tag ports:   {tag.ports[0]:#06x} {tag.ports[1]:#06x}")

back, seen = untag_packet(tagged)
print("stripped packet identical:", encode_packet(back) == encode_packet(native), "tag seen:", seen)
