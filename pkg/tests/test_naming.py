import pytest
from hypothesis import given, strategies as st

from conet.naming import (
    BadComponent,
    ContentName,
    EmptyComponent,
    NameTooLong,
    PrefixTable,
    is_prefix_of,
    parse_name,
)

component = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="/"),
    min_size=1,
    max_size=8,
)
components = st.lists(component, min_size=1, max_size=6).filter(lambda c: len("/".join(c).encode()) <= 128)


def test_principal_and_label():
    n = parse_name("foo.com/football")
    assert n.principal == "foo.com"
    assert n.labels == ("football",)


def test_principal_only():
    n = parse_name("foo.com")
    assert n.principal == "foo.com" and n.labels == ()


def test_length_boundary():
    assert len(parse_name("a" * 128).encode()) == 128
    with pytest.raises(NameTooLong):
        parse_name("a" * 129)
    # limit is bytes, not characters
    with pytest.raises(NameTooLong):
        parse_name("é" * 65)


@pytest.mark.parametrize("text", ["", "foo.com//x", "foo.com/", "/foo.com"])
def test_empty_components(text):
    with pytest.raises(EmptyComponent):
        parse_name(text)


def test_control_characters_rejected():
    with pytest.raises(BadComponent):
        parse_name("foo.com/a\x00b")
    with pytest.raises(BadComponent):
        ContentName("foo.com", ("a/b",))


def test_prefix_examples():
    assert is_prefix_of(parse_name("foo.com"), parse_name("foo.com/football"))
    assert not is_prefix_of(parse_name("foo.com/football"), parse_name("foo.com/foot"))
    assert not is_prefix_of(parse_name("foo.com/foot"), parse_name("foo.com/football"))
    assert is_prefix_of(parse_name("foo.com/a"), parse_name("foo.com/a"))
    assert not is_prefix_of(parse_name("foo.co"), parse_name("foo.com"))


def test_child_parent_prefixes():
    n = parse_name("p/a/b")
    assert n.parent() == parse_name("p/a")
    assert parse_name("p").parent() is None
    assert parse_name("p").child("a", "b") == n
    assert [str(x) for x in n.prefixes()] == ["p/a/b", "p/a", "p"]


@given(components)
def test_parse_serialize_identity(comps):
    text = "/".join(comps)
    n = parse_name(text)
    assert str(n) == text
    assert parse_name(str(n)) == n
    assert n.components == tuple(comps)


def _oracle_prefix(p, n):
    a, b = str(p).split("/"), str(n).split("/")
    return len(a) <= len(b) and b[: len(a)] == a


@given(components, components, components)
def test_prefix_relation(c1, c2, c3):
    a, b, c = (parse_name("/".join(x)) for x in (c1, c2, c3))
    assert is_prefix_of(a, b) == _oracle_prefix(a, b)
    assert is_prefix_of(a, a)
    if is_prefix_of(a, b):
        assert len(a.encode()) <= len(b.encode())
        if is_prefix_of(b, c):
            assert is_prefix_of(a, c)
    # derived chain always transitive
    ab = parse_name("/".join(c1[:1]))
    assert is_prefix_of(ab, a)


def test_prefix_table_longest_match():
    t = PrefixTable()
    t.insert(parse_name("foo.com"), "A")
    t.insert(parse_name("foo.com/football"), "B")
    assert t.longest_match(parse_name("foo.com/football/hl"))[1] == "B"
    assert t.longest_match(parse_name("foo.com/foot"))[1] == "A"
    assert t.longest_match(parse_name("bar.org/x")) is None
    assert t.remove(parse_name("foo.com"))
    assert not t.remove(parse_name("foo.com"))
    assert len(t) == 1
