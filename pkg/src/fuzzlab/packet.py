"""Layered packets: field access, finalization and decoding.

Packets are immutable. Every operation returns a new Packet. Length and
checksum fields are never written by callers; finalize() fills them in
after every other field is settled, so any sequence of valid writes still
yields a well-formed frame.
"""

import ipaddress
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .errors import (
    ComputedFieldWrite,
    MissingField,
    TruncatedPacket,
    UnknownField,
    UnknownLayerStack,
)
from .schemas import (
    FIELDS,
    KNOWN_STACKS,
    LAYERS,
    FieldSchema,
    FieldValue,
    Kind,
    LayerSchema,
    find_field,
)

PROTO_NUMBERS = {"TCP": 6, "UDP": 17}


@dataclass(frozen=True)
class Packet:
    """An ordered stack of layers with their field values."""

    layers: tuple[tuple[str, Mapping[str, FieldValue]], ...]
    trailer: bytes = b""
    finalized: bool = False
    raw: bytes = b""

    @property
    def stack(self) -> tuple[str, ...]:
        return tuple(kind for kind, _ in self.layers)

    def has_layer(self, kind: str) -> bool:
        return kind in self.stack

    def layer(self, kind: str) -> Mapping[str, FieldValue]:
        for k, values in self.layers:
            if k == kind:
                return values
        raise UnknownField(f"layer {kind} not in stack {self.stack}")

    def has(self, path: str) -> bool:
        kind, _, name = path.partition(".")
        return self.has_layer(kind) and name in self.layer(kind)

    def get(self, path: str) -> FieldValue:
        kind, _, name = path.partition(".")
        values = self.layer(kind)
        if name not in values:
            raise UnknownField(path)
        return values[name]

    def field_values(self) -> dict[str, FieldValue]:
        """Flat {path: value} view of every field."""
        return {f"{kind}.{name}": v for kind, values in self.layers for name, v in values.items()}

    def __len__(self) -> int:
        return len(self.raw)


def make_packet(*layers: tuple[str, Mapping[str, FieldValue]], trailer: bytes = b"") -> Packet:
    """Build an unfinalized packet, filling unspecified fields with defaults.

    Args:
        *layers: (layer kind, {field name: value}) pairs, outermost first
        trailer: Frame padding appended after the last layer

    Returns:
        Packet with every non-computed field assigned
    """
    built = []
    for kind, overrides in layers:
        schema = _layer_schema(kind)
        values: dict[str, FieldValue] = {}
        for f in schema.all_fields:
            if f.kind is Kind.computed:
                if f.name in overrides:
                    raise ComputedFieldWrite(f.path)
                continue
            value = overrides.get(f.name, f.default)
            f.check(value)
            values[f.name] = bytes(value) if isinstance(value, (bytes, bytearray)) else value
        unknown = set(overrides) - {f.name for f in schema.all_fields}
        if unknown:
            raise UnknownField(", ".join(f"{kind}.{n}" for n in sorted(unknown)))
        built.append((kind, values))
    return Packet(tuple(built), trailer=trailer)


def set_field(packet: Packet, path: str, value: FieldValue) -> Packet:
    """Store one field value.

    Raises:
        UnknownField: the path is not part of this packet's stack
        ValueOutOfRange: value violates the field's constraint
        ComputedFieldWrite: the field is a checksum or length
    """
    schema = find_field(path)
    if schema.kind is Kind.computed:
        raise ComputedFieldWrite(path)
    if not packet.has_layer(schema.layer):
        raise UnknownField(f"{path} not in stack {packet.stack}")
    schema.check(value)
    if isinstance(value, bytearray):
        value = bytes(value)
    layers = tuple(
        (kind, {**values, schema.name: value} if kind == schema.layer else values)
        for kind, values in packet.layers
    )
    return Packet(layers, trailer=packet.trailer)


def set_fields(packet: Packet, values: Mapping[str, FieldValue]) -> Packet:
    for path, value in values.items():
        packet = set_field(packet, path, value)
    return packet


def internet_checksum(data: bytes) -> int:
    """16-bit ones'-complement checksum of data (RFC 1071)."""
    if len(data) % 2:
        data += b"\x00"
    total = sum(int.from_bytes(data[i : i + 2], "big") for i in range(0, len(data), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def sum16(data: bytes) -> int:
    """Plain 16-bit word sum modulo 2**16 (AUTHP checksum)."""
    if len(data) % 2:
        data += b"\x00"
    return sum(int.from_bytes(data[i : i + 2], "big") for i in range(0, len(data), 2)) & 0xFFFF


def encode_layer(kind: str, values: Mapping[str, FieldValue]) -> bytes:
    """Serialize one layer's fields and tail."""
    schema = _layer_schema(kind)
    acc = 0
    for f in schema.fields:
        value = values[f.name]
        if isinstance(value, bytes):
            value = int.from_bytes(value, "big")
        acc |= value << (schema.bit_length - f.bit_offset - f.bit_width)
    out = acc.to_bytes(schema.byte_length, "big") if schema.bit_length else b""
    if schema.tail:
        out += values[schema.tail.name]
    return out


def finalize(packet: Packet) -> Packet:
    """Compute lengths and checksums and serialize the packet.

    Raises:
        MissingField: a non-computed field has no value
    """
    layers = [(kind, dict(values)) for kind, values in packet.layers]
    for kind, values in layers:
        for f in _layer_schema(kind).all_fields:
            if f.kind is not Kind.computed and f.name not in values:
                raise MissingField(f.path)

    kinds = [kind for kind, _ in layers]
    sizes = [
        _layer_schema(kind).byte_length
        + (len(values[_layer_schema(kind).tail.name]) if _layer_schema(kind).tail else 0)
        for kind, values in layers
    ]

    def index(kind: str) -> Optional[int]:
        return kinds.index(kind) if kind in kinds else None

    # lengths first: sizes do not depend on field values
    for i, (kind, values) in enumerate(layers):
        if kind == "IP":
            values["total_length"] = sum(sizes[i:])
        elif kind == "UDP":
            values["length"] = sum(sizes[i:])
        elif kind == "DNS":
            values["qdcount"] = kinds.count("QD")
            values["ancount"] = kinds.count("RR")
        elif kind == "RR":
            values["rdlength"] = 4
        elif kind == "AUTHP":
            values["length"] = sizes[i]

    def encoded_from(i: int) -> bytes:
        return b"".join(encode_layer(k, v) for k, v in layers[i:])

    # checksums innermost first, each over already-final inner bytes
    ip = index("IP")
    for i in reversed(range(len(layers))):
        kind, values = layers[i]
        if kind == "AUTHP":
            values["checksum"] = 0
            values["checksum"] = sum16(encode_layer(kind, values))
        elif kind in ("TCP", "UDP"):
            values["checksum"] = 0
            segment = encoded_from(i)
            pseudo = b""
            if ip is not None:
                ip_values = layers[ip][1]
                pseudo = (
                    ip_values["src"].to_bytes(4, "big")
                    + ip_values["dst"].to_bytes(4, "big")
                    + bytes([0, PROTO_NUMBERS[kind]])
                    + len(segment).to_bytes(2, "big")
                )
            checksum = internet_checksum(pseudo + segment)
            if kind == "UDP" and checksum == 0:
                checksum = 0xFFFF
            values["checksum"] = checksum
        elif kind == "IP":
            values["header_checksum"] = 0
            values["header_checksum"] = internet_checksum(encode_layer(kind, values)[:20])

    raw = encoded_from(0) + packet.trailer
    return Packet(
        tuple((kind, values) for kind, values in layers),
        trailer=packet.trailer,
        finalized=True,
        raw=raw,
    )


def decode(data: bytes, stack: Iterable[str]) -> Packet:
    """Parse raw bytes into a finalized packet with the given layer stack.

    Raises:
        UnknownLayerStack: the stack is not one the simulator produces
        TruncatedPacket: data is shorter than the stack requires
        ValueOutOfRange: an enumerated or ranged field holds an invalid value
    """
    stack = tuple(stack)
    if any(kind not in LAYERS for kind in stack):
        raise UnknownLayerStack(f"unknown layer in {stack}")
    minimum = sum(LAYERS[kind].byte_length for kind in stack)
    if len(data) < minimum:
        raise TruncatedPacket(f"{len(data)} bytes, {stack} needs at least {minimum}")
    if stack not in KNOWN_STACKS:
        raise UnknownLayerStack(f"unsupported stack {stack}")

    data = bytes(data)
    pos = 0
    limit = len(data)
    layers = []
    for kind in stack:
        schema = LAYERS[kind]
        end = pos + schema.byte_length
        if end > limit:
            raise TruncatedPacket(f"{kind} header runs past end of packet")
        values = _decode_fields(schema, data[pos:end])
        for f in schema.fields:
            if f.kind in (Kind.enum_set, Kind.range):
                f.check(values[f.name])
        if kind == "IP":
            total = values["total_length"]
            if total < schema.byte_length or pos + total > len(data):
                raise TruncatedPacket(f"IP total_length {total} exceeds frame")
            limit = pos + total
        pos = end
        if schema.tail:
            if schema.tail_length is not None:
                n = schema.tail_length(data[pos:limit])
            else:
                n = limit - pos
            values[schema.tail.name] = data[pos : pos + n]
            pos += n
        layers.append((kind, values))
    return Packet(tuple(layers), trailer=data[pos:], finalized=True, raw=data)


def field_byte_spans(stack: Iterable[str]) -> list[tuple[FieldSchema, int, int]]:
    """Bit spans of every fixed-size field relative to the frame start.

    Returns:
        (field, first bit, end bit) for each fixed field in stack order. Only
        layers before the first variable-length tail have stable offsets;
        later layers are omitted.
    """
    spans = []
    base = 0
    for kind in stack:
        schema = LAYERS[kind]
        for f in schema.fields:
            spans.append((f, base + f.bit_offset, base + f.bit_offset + f.bit_width))
        base += schema.bit_length
        if schema.tail:
            break
    return spans


def _decode_fields(schema: LayerSchema, chunk: bytes) -> dict[str, FieldValue]:
    acc = int.from_bytes(chunk, "big")
    values: dict[str, FieldValue] = {}
    for f in schema.fields:
        shift = schema.bit_length - f.bit_offset - f.bit_width
        value = (acc >> shift) & ((1 << f.bit_width) - 1)
        if f.kind is Kind.opaque_bytes:
            value = value.to_bytes(f.byte_length, "big")
        values[f.name] = value
    return values


def _layer_schema(kind: str) -> LayerSchema:
    try:
        return LAYERS[kind]
    except KeyError:
        raise UnknownLayerStack(f"unknown layer {kind}") from None


# address helpers


def ip_to_int(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


def int_to_ip(value: int) -> str:
    return str(ipaddress.IPv4Address(value))


def mac_to_str(value: int) -> str:
    return ":".join(f"{b:02x}" for b in value.to_bytes(6, "big"))


def str_to_mac(text: str) -> int:
    return int(text.replace(":", ""), 16)


BROADCAST_MAC = (1 << 48) - 1


def is_computed(path: str) -> bool:
    return path in FIELDS and FIELDS[path].kind is Kind.computed
