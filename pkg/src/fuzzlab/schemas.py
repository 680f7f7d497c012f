"""Layer and field schemas for every protocol the simulator speaks.

Fields are bit-addressed inside their layer, big-endian on the wire. A layer
may end with one variable-length opaque tail (payloads, DNS questions).
Adjacent flag bits that only make sense together are one field.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

from .errors import TruncatedPacket, UnknownField, ValueOutOfRange

FieldValue = Union[int, bytes]


class Kind(str, Enum):
    """Value constraint of a field."""

    range = "range"
    enum_set = "enum_set"
    address = "address"
    computed = "computed"
    opaque_bytes = "opaque_bytes"


@dataclass(frozen=True)
class FieldSchema:
    """One field of a layer.

    bit_width is 0 only for a variable-length tail field.
    """

    name: str
    layer: str
    bit_offset: int
    bit_width: int
    kind: Kind
    fuzzable: bool = False
    lo: int = 0
    hi: int = 0
    values: tuple[int, ...] = ()
    address: str = ""  # "mac" or "ipv4"
    computed: str = ""  # "checksum" or "length"
    default: FieldValue = 0

    @property
    def path(self) -> str:
        return f"{self.layer}.{self.name}"

    @property
    def is_tail(self) -> bool:
        return self.kind is Kind.opaque_bytes and self.bit_width == 0

    @property
    def byte_length(self) -> int:
        return self.bit_width // 8

    def check(self, value: FieldValue) -> None:
        """Raise ValueOutOfRange unless value satisfies the kind constraint."""
        if self.kind is Kind.opaque_bytes:
            if not isinstance(value, (bytes, bytearray)):
                raise ValueOutOfRange(f"{self.path} expects bytes, got {value!r}")
            if not self.is_tail and len(value) != self.byte_length:
                raise ValueOutOfRange(
                    f"{self.path} expects {self.byte_length} bytes, got {len(value)}"
                )
            return
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueOutOfRange(f"{self.path} expects an integer, got {value!r}")
        if self.kind is Kind.enum_set:
            if value not in self.values:
                raise ValueOutOfRange(
                    f"{self.path}={value} not in valid set {sorted(self.values)}"
                )
        elif self.kind is Kind.range:
            if not self.lo <= value <= self.hi:
                raise ValueOutOfRange(
                    f"{self.path}={value} outside [{self.lo}, {self.hi}]"
                )
        elif not 0 <= value < (1 << self.bit_width):
            raise ValueOutOfRange(f"{self.path}={value} does not fit {self.bit_width} bits")

    def describe(self) -> dict:
        """Schema dump entry."""
        if self.kind is Kind.range:
            kind = f"range({self.lo},{self.hi})"
        elif self.kind is Kind.enum_set:
            kind = f"enum_set({','.join(str(v) for v in self.values)})"
        elif self.kind is Kind.address:
            kind = f"address({self.address})"
        elif self.kind is Kind.computed:
            kind = f"computed({self.computed})"
        else:
            kind = f"opaque_bytes({self.byte_length if not self.is_tail else 'var'})"
        return {
            "name": self.name,
            "layer": self.layer,
            "bit_offset": self.bit_offset,
            "bit_width": self.bit_width,
            "kind": kind,
            "fuzzable": self.fuzzable,
        }


@dataclass(frozen=True)
class LayerSchema:
    """Ordered, gap-free field layout of one layer."""

    kind: str
    bit_length: int
    fields: tuple[FieldSchema, ...]
    tail: Optional[FieldSchema] = None
    tail_length: Optional[Callable[[bytes], int]] = field(default=None, compare=False)

    def __post_init__(self):
        cursor = 0
        for f in self.fields:
            if f.bit_offset != cursor:
                raise ValueError(f"{f.path} leaves a gap or overlaps at bit {cursor}")
            if f.bit_offset + f.bit_width > self.bit_length:
                raise ValueError(f"{f.path} exceeds layer length {self.bit_length}")
            if f.kind is Kind.computed and f.fuzzable:
                raise ValueError(f"{f.path} is computed and cannot be fuzzable")
            limit = 1 << f.bit_width
            if any(not 0 <= v < limit for v in f.values) or f.hi >= limit:
                raise ValueError(f"{f.path} valid values do not fit {f.bit_width} bits")
            cursor += f.bit_width
        if cursor != self.bit_length or self.bit_length % 8:
            raise ValueError(f"{self.kind} fields cover {cursor} of {self.bit_length} bits")

    @property
    def byte_length(self) -> int:
        return self.bit_length // 8

    @property
    def all_fields(self) -> tuple[FieldSchema, ...]:
        return self.fields + ((self.tail,) if self.tail else ())

    def get(self, name: str) -> FieldSchema:
        for f in self.all_fields:
            if f.name == name:
                return f
        raise UnknownField(f"{self.kind}.{name}")


class _Layout:
    """Accumulates fields at consecutive bit offsets."""

    def __init__(self, layer: str):
        self.layer = layer
        self.offset = 0
        self.fields: list[FieldSchema] = []

    def add(self, name: str, width: int, kind: Kind, **kw) -> "_Layout":
        if kind is Kind.range:
            kw.setdefault("hi", (1 << width) - 1)
        self.fields.append(FieldSchema(name, self.layer, self.offset, width, kind, **kw))
        self.offset += width
        return self

    def num(self, name, width, default=0, fuzzable=True, **kw):
        return self.add(name, width, Kind.range, default=default, fuzzable=fuzzable, **kw)

    def enum(self, name, width, values, default=None, fuzzable=False):
        values = tuple(values)
        return self.add(
            name,
            width,
            Kind.enum_set,
            values=values,
            default=values[0] if default is None else default,
            fuzzable=fuzzable,
        )

    def addr(self, name, family):
        width = 48 if family == "mac" else 32
        return self.add(name, width, Kind.address, address=family, fuzzable=True)

    def calc(self, name, width, what):
        return self.add(name, width, Kind.computed, computed=what)

    def build(self, tail: Optional[str] = None, tail_length=None) -> LayerSchema:
        tail_field = None
        if tail:
            tail_field = FieldSchema(
                tail, self.layer, self.offset, 0, Kind.opaque_bytes, default=b""
            )
        return LayerSchema(self.layer, self.offset, tuple(self.fields), tail_field, tail_length)


def _question_length(data: bytes) -> int:
    """Byte length of one encoded DNS question (labels, qtype, qclass)."""
    i = 0
    while True:
        if i >= len(data):
            raise TruncatedPacket("DNS question name runs past end of packet")
        if data[i] == 0:
            break
        i += 1 + data[i]
    if i + 5 > len(data):
        raise TruncatedPacket("DNS question truncated")
    return i + 5


ETHERTYPE_IP = 0x0800
ETHERTYPE_ARP = 0x0806
PROTO_TCP = 6
PROTO_UDP = 17
AUTHP_MAGIC = 0x41555448  # "AUTH"

ETH = (
    _Layout("ETH")
    .addr("dst", "mac")
    .addr("src", "mac")
    .enum("type", 16, (ETHERTYPE_IP, ETHERTYPE_ARP))
    .build()
)

ARP = (
    _Layout("ARP")
    .enum("hw_type", 16, (1,))
    .enum("proto_type", 16, (ETHERTYPE_IP,))
    .enum("hw_len", 8, (6,))
    .enum("proto_len", 8, (4,))
    .enum("opcode", 16, (1, 2), fuzzable=True)
    .addr("sender_mac", "mac")
    .addr("sender_ip", "ipv4")
    .addr("target_mac", "mac")
    .addr("target_ip", "ipv4")
    .build()
)

IP = (
    _Layout("IP")
    .enum("version", 4, (4,))
    .enum("ihl", 4, (5,))
    .num("tos", 8)
    .calc("total_length", 16, "length")
    .num("identification", 16)
    # reserved bit must be 0: DF=2, MF=4
    .enum("flags", 3, (0, 2, 4, 6), default=2, fuzzable=True)
    .enum("frag_offset", 13, (0,))
    .num("ttl", 8, default=64)
    .enum("protocol", 8, (PROTO_TCP, PROTO_UDP))
    .calc("header_checksum", 16, "checksum")
    .addr("src", "ipv4")
    .addr("dst", "ipv4")
    .build()
)

UDP = (
    _Layout("UDP")
    .num("sport", 16)
    .num("dport", 16)
    .calc("length", 16, "length")
    .calc("checksum", 16, "checksum")
    .build()
)

TCP = (
    _Layout("TCP")
    .num("sport", 16)
    .num("dport", 16)
    .num("seq", 32)
    .num("ack", 32)
    .enum("data_offset", 4, (5,))
    .num("reserved", 3)
    .num("flags", 9)
    .num("window", 16, default=64240)
    .calc("checksum", 16, "checksum")
    .num("urgent_ptr", 16)
    .build()
)

DNS = (
    _Layout("DNS")
    .num("id", 16)
    .enum("qr", 1, (0, 1), fuzzable=True)
    .num("opcode", 4)
    .num("aa", 1)
    .num("tc", 1)
    .num("rd", 1, default=1)
    .num("ra", 1)
    .num("z", 1)
    .num("ad", 1)
    .num("cd", 1)
    .num("rcode", 4)
    .calc("qdcount", 16, "length")
    .calc("ancount", 16, "length")
    .enum("nscount", 16, (0,))
    .enum("arcount", 16, (0,))
    .build()
)

QD = _Layout("QD").build(tail="question", tail_length=_question_length)

RR = (
    _Layout("RR")
    .enum("name", 16, (0xC00C,))
    .enum("type", 16, (1,))
    .enum("rr_class", 16, (1,))
    .num("ttl", 32, default=300)
    .calc("rdlength", 16, "length")
    .addr("rdata", "ipv4")
    .build()
)

TELNET = _Layout("TELNET").build(tail="data")

AUTHP_STAGES = (
    "negotiate",
    "auth_request",
    "challenge",
    "challenge_response",
    "auth_response",
    "task",
)
AUTHP_MECHANISMS = ("none", "password_proof", "hash_only")
AUTHP_STATUS = ("ok", "denied", "bad_token", "error")
AUTHP_COMMANDS = ("none", "read", "write", "list", "net", "delete", "query", "exec")

_authp = (
    _Layout("AUTHP")
    .enum("magic", 32, (AUTHP_MAGIC,))
    .enum("stage", 8, range(len(AUTHP_STAGES)))
    .enum("mechanism", 8, range(len(AUTHP_MECHANISMS)))
    .enum("status", 8, range(len(AUTHP_STATUS)))
    .enum("command", 8, range(len(AUTHP_COMMANDS)))
    .num("flags", 16, default=0x0018)
    .num("capabilities", 16, default=0x8014)
    .num("session_token", 32)
    .num("process_id", 16, default=0xFEFF)
    .num("multiplex_id", 16)
)
for _i in range(12):
    _authp.num(f"reserved_{_i}", 8)
AUTHP = _authp.calc("length", 16, "length").calc("checksum", 16, "checksum").build(
    tail="payload"
)

LAYERS: dict[str, LayerSchema] = {
    layer.kind: layer for layer in (ETH, ARP, IP, UDP, TCP, DNS, QD, RR, TELNET, AUTHP)
}

KNOWN_STACKS: frozenset[tuple[str, ...]] = frozenset(
    {
        ("ETH", "ARP"),
        ("ETH", "IP", "UDP", "DNS", "QD"),
        ("ETH", "IP", "UDP", "DNS", "QD", "RR"),
        ("ETH", "IP", "TCP"),
        ("ETH", "IP", "TCP", "TELNET"),
        ("ETH", "IP", "TCP", "AUTHP"),
    }
)

FIELDS: dict[str, FieldSchema] = {
    f.path: f for layer in LAYERS.values() for f in layer.all_fields
}


def find_field(path: str) -> FieldSchema:
    """Look up a field by its "LAYER.name" path.

    Raises:
        UnknownField: no such field
    """
    try:
        return FIELDS[path]
    except KeyError:
        raise UnknownField(path) from None


def dump_schemas() -> list[dict]:
    """All field schemas, layer by layer, as JSON-ready dicts."""
    return [f.describe() for layer in LAYERS.values() for f in layer.all_fields]
