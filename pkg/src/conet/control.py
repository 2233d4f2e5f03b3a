"""Experimenter-message envelope carrying JSON-encoded ICN operations.

Envelope::

    u8   experimenter message type (4, as in OpenFlow)
    u32  experimenter id 0x434F4E45 ("CONE")
    u32  body length
    ...  UTF-8 JSON object, first key "op"
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

EXPERIMENTER_TYPE = 4
EXPERIMENTER_ID = 0x434F4E45
_ENVELOPE = struct.Struct("!BII")


class ControlError(ValueError):
    pass


class BadEnvelope(ControlError):
    pass


class BadJson(ControlError):
    pass


class UnknownOp(ControlError):
    pass


class MessageKind(enum.Enum):
    NAME_LOOKUP = "name_lookup"
    NAME_LOOKUP_REPLY = "name_lookup_reply"
    CONTENT_REGISTER = "content_register"
    CONTENT_UNREGISTER = "content_unregister"
    CHUNK_CACHED = "chunk_cached"
    TAG_REQUEST = "tag_request"
    TAG_REPLY = "tag_reply"
    FIB_EXPORT_REQUEST = "fib_export_request"
    FIB_EXPORT_REPLY = "fib_export_reply"
    PROACTIVE_PUSH = "proactive_push"
    INTEREST_SUMMARY = "interest_summary"
    CONNECTION_SETUP = "connection_setup"


_OPT_STR = (str, type(None))

# field -> accepted JSON types; every field is mandatory
SCHEMAS: Dict[MessageKind, Dict[str, Tuple[type, ...]]] = {
    MessageKind.NAME_LOOKUP: {"name": (str,), "csn": (int,)},
    MessageKind.NAME_LOOKUP_REPLY: {
        "name": (str,),
        "csn": (int,),
        "status": (str,),
        "prefix": _OPT_STR,
        "next_hop": _OPT_STR,
        "tag": _OPT_STR,
    },
    MessageKind.CONTENT_REGISTER: {"origin": (str,), "address": (str,), "prefix": (str,)},
    MessageKind.CONTENT_UNREGISTER: {"origin": (str,), "prefix": (str,)},
    MessageKind.CHUNK_CACHED: {"cache": (str,), "name": (str,), "csn": (int,)},
    MessageKind.TAG_REQUEST: {"name": (str,)},
    MessageKind.TAG_REPLY: {"name": (str,), "tag": (str,)},
    MessageKind.FIB_EXPORT_REQUEST: {"node": (str,)},
    MessageKind.FIB_EXPORT_REPLY: {"node": (str,), "entries": (list,)},
    MessageKind.PROACTIVE_PUSH: {
        "cache": (str,),
        "name": (str,),
        "csn": (int,),
        "content_b64": (str,),
    },
    MessageKind.INTEREST_SUMMARY: {"node": (str,), "counts": (dict,)},
    MessageKind.CONNECTION_SETUP: {"node": (str,), "role": (str,)},
}


def _check_body(kind: MessageKind, body: Dict[str, Any]) -> None:
    schema = SCHEMAS[kind]
    missing = schema.keys() - body.keys()
    extra = body.keys() - schema.keys()
    if missing or extra:
        raise BadJson(f"{kind.value}: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for key, types in schema.items():
        value = body[key]
        # bool is an int subclass but never a valid csn
        if isinstance(value, bool) or not isinstance(value, types):
            raise BadJson(f"{kind.value}.{key} has type {type(value).__name__}")


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    body: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MessageKind(self.kind))
        _check_body(self.kind, self.body)

    @classmethod
    def make(cls, kind: MessageKind, **body: Any) -> "ControlMessage":
        return cls(kind, body)

    def __getitem__(self, key: str) -> Any:
        return self.body[key]

    def to_json(self) -> Dict[str, Any]:
        return {"op": self.kind.value, **self.body}

    @classmethod
    def from_json(cls, obj: Any) -> "ControlMessage":
        if not isinstance(obj, dict):
            raise BadJson("message body must be a JSON object")
        body = dict(obj)
        op = body.pop("op", None)
        if not isinstance(op, str):
            raise BadJson("missing 'op' field")
        try:
            kind = MessageKind(op)
        except ValueError:
            raise UnknownOp(f"unknown op {op!r}") from None
        return cls(kind, body)


def encode_body(m: ControlMessage) -> bytes:
    return json.dumps(m.to_json(), separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_control(m: ControlMessage) -> bytes:
    body = encode_body(m)
    return _ENVELOPE.pack(EXPERIMENTER_TYPE, EXPERIMENTER_ID, len(body)) + body


def decode_control(b: bytes) -> ControlMessage:
    if len(b) < _ENVELOPE.size:
        raise BadEnvelope("shorter than the envelope")
    mtype, exp_id, length = _ENVELOPE.unpack_from(b)
    if mtype != EXPERIMENTER_TYPE:
        raise BadEnvelope(f"message type {mtype}")
    if exp_id != EXPERIMENTER_ID:
        raise BadEnvelope(f"experimenter id {exp_id:#010x}")
    if length != len(b) - _ENVELOPE.size:
        raise BadEnvelope(f"declared body length {length}, have {len(b) - _ENVELOPE.size}")
    try:
        obj = json.loads(b[_ENVELOPE.size :].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadJson(str(exc)) from None
    return ControlMessage.from_json(obj)
