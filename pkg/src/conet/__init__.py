"""Information-centric networking over an OpenFlow domain.

Content names, the binary packet formats, chunk framing, edge nodes and
switches, the name routing controller, cache servers, the northbound API and
a deterministic simulator of a single domain.
"""

from .naming import ContentName, parse_name
from .wire import ConetHeader, ConetPacket, DomainTag, PacketFormat, decode_packet, encode_packet
from .nrs import Controller, Mode
from .sim import ConfigError, Simulation, load_script, load_topology, run

__all__ = [
    "ConfigError",
    "ConetHeader",
    "ConetPacket",
    "ContentName",
    "Controller",
    "DomainTag",
    "Mode",
    "PacketFormat",
    "Simulation",
    "decode_packet",
    "encode_packet",
    "load_script",
    "load_topology",
    "parse_name",
    "run",
]
