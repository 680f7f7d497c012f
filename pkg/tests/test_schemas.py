import pytest

from fuzzlab.errors import UnknownField, ValueOutOfRange
from fuzzlab.schemas import FIELDS, LAYERS, Kind, dump_schemas, find_field


def test_layers_have_no_gaps():
    """Every layer's fixed fields tile its bit length exactly."""
    for layer in LAYERS.values():
        assert sum(f.bit_width for f in layer.fields) == layer.bit_length
        assert layer.bit_length % 8 == 0


def test_header_sizes():
    assert LAYERS["ETH"].byte_length == 14
    assert LAYERS["ARP"].byte_length == 28
    assert LAYERS["IP"].byte_length == 20
    assert LAYERS["TCP"].byte_length == 20
    assert LAYERS["UDP"].byte_length == 8
    assert LAYERS["DNS"].byte_length == 12
    assert LAYERS["RR"].byte_length == 16


def test_computed_fields_never_fuzzable():
    """Checksums and lengths are excluded from fuzzing by schema."""
    computed = [f for f in FIELDS.values() if f.kind is Kind.computed]
    assert {f.path for f in computed} >= {
        "IP.total_length",
        "IP.header_checksum",
        "UDP.length",
        "UDP.checksum",
        "TCP.checksum",
        "AUTHP.length",
        "AUTHP.checksum",
    }
    assert not any(f.fuzzable for f in computed)


def test_find_field_unknown():
    with pytest.raises(UnknownField):
        find_field("IP.nope")


def test_enum_check_rejects_reserved_flag():
    """The reserved IP flag bit is not a valid value."""
    flags = find_field("IP.flags")
    flags.check(2)
    with pytest.raises(ValueOutOfRange):
        flags.check(1)


def test_range_check_bounds():
    ttl = find_field("IP.ttl")
    ttl.check(0)
    ttl.check(255)
    with pytest.raises(ValueOutOfRange):
        ttl.check(256)


def test_check_rejects_bool_and_bytes_for_ints():
    ttl = find_field("IP.ttl")
    with pytest.raises(ValueOutOfRange):
        ttl.check(True)
    with pytest.raises(ValueOutOfRange):
        ttl.check(b"\x01")


def test_tail_fields():
    """Variable-length payloads are tails, not fixed fields."""
    assert find_field("TELNET.data").is_tail
    assert find_field("AUTHP.payload").is_tail
    assert not find_field("TELNET.data").fuzzable


def test_dump_schemas_entries():
    """The dump lists every field once with its kind description."""
    dump = dump_schemas()
    assert len(dump) == len(FIELDS)
    ttl = next(d for d in dump if d["layer"] == "IP" and d["name"] == "ttl")
    assert ttl["kind"] == "range(0,255)"
    assert ttl["fuzzable"] is True
    checksum = next(d for d in dump if d["layer"] == "IP" and d["name"] == "header_checksum")
    assert checksum["kind"] == "computed(checksum)"
