"""Hierarchical content names (ICN-IDs) and name-prefix tables.

A name is a principal followed by zero or more labels, written
``principal/label1/label2``.  Names are compared component by component,
never as raw text, so ``foo.com/foot`` is not covered by ``foo.com/football``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Generic, Iterator, List, Optional, Tuple, TypeVar

SEPARATOR = "/"
MAX_NAME_BYTES = 128


class NamingError(ValueError):
    """Base class for invalid content names."""


class EmptyComponent(NamingError):
    pass


class NameTooLong(NamingError):
    pass


class BadComponent(NamingError):
    """A component holds a separator or a control character."""


def _check_component(comp: str) -> None:
    if not comp:
        raise EmptyComponent("content name has an empty component")
    if SEPARATOR in comp:
        raise BadComponent(f"component {comp!r} contains {SEPARATOR!r}")
    for ch in comp:
        # control characters would make a name ambiguous on the wire
        if ord(ch) < 0x20 or ord(ch) == 0x7F:
            raise BadComponent(f"component {comp!r} contains a control character")


@dataclass(frozen=True)
class ContentName:
    principal: str
    labels: Tuple[str, ...] = ()
    self_certifying: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.labels, tuple):
            object.__setattr__(self, "labels", tuple(self.labels))
        _check_component(self.principal)
        for label in self.labels:
            _check_component(label)
        size = len(self.encode())
        if size > MAX_NAME_BYTES:
            raise NameTooLong(f"name is {size} bytes, limit is {MAX_NAME_BYTES}")

    @property
    def components(self) -> Tuple[str, ...]:
        return (self.principal,) + self.labels

    def __str__(self) -> str:
        return SEPARATOR.join(self.components)

    def encode(self) -> bytes:
        return str(self).encode("utf-8")

    def __len__(self) -> int:
        return len(self.labels) + 1

    def child(self, *labels: str) -> "ContentName":
        return ContentName(self.principal, self.labels + labels, self.self_certifying)

    def parent(self) -> Optional["ContentName"]:
        if not self.labels:
            return None
        return ContentName(self.principal, self.labels[:-1], self.self_certifying)

    def prefixes(self) -> Iterator["ContentName"]:
        """Yield every prefix of this name, longest first."""
        for depth in range(len(self.labels), -1, -1):
            yield ContentName(self.principal, self.labels[:depth], self.self_certifying)


def parse_name(s: str, self_certifying: bool = False) -> ContentName:
    """Parse ``principal/label/...`` into a :class:`ContentName`.

    Raises :class:`EmptyComponent` for leading, trailing or doubled
    separators and :class:`NameTooLong` past 128 UTF-8 bytes.
    """
    if not s:
        raise EmptyComponent("empty content name")
    if len(s.encode("utf-8")) > MAX_NAME_BYTES:
        raise NameTooLong(f"name exceeds {MAX_NAME_BYTES} bytes")
    parts = s.split(SEPARATOR)
    return ContentName(parts[0], tuple(parts[1:]), self_certifying)


def as_name(value) -> ContentName:
    if isinstance(value, ContentName):
        return value
    return parse_name(value)


def is_prefix_of(prefix: ContentName, name: ContentName) -> bool:
    if prefix.principal != name.principal:
        return False
    n = len(prefix.labels)
    return n <= len(name.labels) and name.labels[:n] == prefix.labels


V = TypeVar("V")


class PrefixTable(Generic[V]):
    """Exact-match map from name prefixes to values with longest-prefix lookup.

    Lookup probes the candidate prefixes of the query name from longest to
    shortest, so its cost depends on name depth and not on table size.
    """

    def __init__(self) -> None:
        self._entries: Dict[Tuple[str, ...], Tuple[ContentName, V]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, prefix: ContentName) -> bool:
        return prefix.components in self._entries

    def __iter__(self) -> Iterator[Tuple[ContentName, V]]:
        return iter(list(self._entries.values()))

    def get(self, prefix: ContentName) -> Optional[V]:
        hit = self._entries.get(prefix.components)
        return None if hit is None else hit[1]

    def insert(self, prefix: ContentName, value: V) -> None:
        self._entries[prefix.components] = (prefix, value)

    def remove(self, prefix: ContentName) -> bool:
        return self._entries.pop(prefix.components, None) is not None

    def longest_match(self, name: ContentName) -> Optional[Tuple[ContentName, V]]:
        comps = name.components
        for depth in range(len(comps), 0, -1):
            hit = self._entries.get(comps[:depth])
            if hit is not None:
                return hit
        return None

    def items(self) -> List[Tuple[ContentName, V]]:
        return list(self._entries.values())
