"""Sample representations, chopping, filtering, balancing and splitting."""

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Sequence

from .errors import BadLength, BadStack, ConfigError, EmptyClass, LengthMismatch, NonZeroTail
from .lan import CapturedPacket
from .packet import Packet, field_byte_spans
from .rng import make_rng
from .schemas import FieldValue
from .session import BENIGN, EXCLUDED, MALICIOUS, LabeledSession

REPRESENTATIONS = ("typeseq", "bytevec", "bytemat", "headervec")

# AUTHP fields that decide a packet's type number
TYPE_FIELDS = (
    "AUTHP.stage",
    "AUTHP.mechanism",
    "AUTHP.flags",
    "AUTHP.capabilities",
    "AUTHP.command",
)

ARP_BYTES = 42
ARP_PADDED = 60
ROW_START, ROW_END = 14, 54  # bytes 15..54, 1-based
HEADER_START, HEADER_END = 14, 54  # IP + TCP without options
TELNET_STACK = ("ETH", "IP", "TCP", "TELNET")

DEFAULT_WINDOW = 8
DEFAULT_STEP = 4
DEFAULT_K = 8

TypeTable = dict[tuple, int]


@dataclass(frozen=True)
class Sample:
    """One model input with its label (1 = malicious).

    x is a flat tuple for typeseq, bytevec and headervec and a tuple of
    rows for bytemat.
    """

    repr: str
    x: tuple
    y: int
    session: str = ""

    @property
    def flat(self) -> tuple[int, ...]:
        if self.repr == "bytemat":
            return tuple(v for row in self.x for v in row)
        return self.x


@dataclass(frozen=True)
class Element:
    """One feature of a sample and the packet fields it was read from."""

    position: int
    value: int
    fields: tuple[tuple[str, FieldValue], ...] = ()


@dataclass(frozen=True)
class AnnotatedSample:
    sample: Sample
    elements: tuple[Element, ...]


@dataclass
class DatasetSplit:
    """Balanced, stratified train/test split."""

    train: list[Sample]
    test: list[Sample]
    seed: int
    train_index: list[int] = field(default_factory=list)
    test_index: list[int] = field(default_factory=list)


def packet_type_map(
    packets: Iterable[Packet],
    fields: Sequence[str] = TYPE_FIELDS,
    table: Optional[TypeTable] = None,
    frozen: bool = False,
) -> tuple[list[int], TypeTable]:
    """Number packets by their values on `fields`.

    Ids are assigned by first appearance starting at 1. With frozen=True the
    table is not extended and unseen tuples map to 0.

    Raises:
        UnknownField: a field is missing from a packet's stack
    """
    table = {} if table is None else table
    ids = []
    for packet in packets:
        key = tuple(packet.get(path) for path in fields)
        if key not in table:
            if frozen:
                ids.append(0)
                continue
            table[key] = len(table) + 1
        ids.append(table[key])
    return ids, table


def training_type_table(table: TypeTable, train: Iterable[Sample]) -> tuple[TypeTable, dict[int, int]]:
    """Keep the types that occur in training windows, renumbered from 1.

    Returns:
        The reduced table and an old id -> new id map; ids not in the map
        become 0
    """
    seen = {v for s in train for v in s.x}
    kept = [key for key, old in sorted(table.items(), key=lambda kv: kv[1]) if old in seen]
    reduced = {key: i for i, key in enumerate(kept, start=1)}
    return reduced, {table[key]: i for key, i in reduced.items()}


def remap_types(samples: Iterable[Sample], mapping: Mapping[int, int]) -> list[Sample]:
    return [replace(s, x=tuple(mapping.get(v, 0) for v in s.x)) for s in samples]


def chop(sequence: Sequence, window: int, step: int) -> list[tuple]:
    """Fixed-length windows at offsets 0, step, 2*step, ...; tail dropped."""
    if window < 1 or step < 1:
        raise ConfigError(f"window and step must be >= 1, got {window}, {step}")
    return [tuple(sequence[i : i + window]) for i in range(0, len(sequence) - window + 1, step)]


def dedup_and_cross_class_filter(
    benign: Sequence[tuple], malicious: Sequence[tuple]
) -> tuple[list[tuple], list[tuple]]:
    """Drop windows seen in both classes, then duplicates within each class.

    Raises:
        LengthMismatch: windows differ in length
    """
    lengths = {len(w) for w in (*benign, *malicious)}
    if len(lengths) > 1:
        raise LengthMismatch(f"window lengths {sorted(lengths)}")
    both = set(benign) & set(malicious)
    benign_out = [w for w in dict.fromkeys(benign) if w not in both]
    malicious_out = [w for w in dict.fromkeys(malicious) if w not in both]
    return benign_out, malicious_out


def vectorize_arp(packet: Packet) -> tuple[int, ...]:
    """First 42 bytes of an ARP frame.

    Raises:
        BadLength: frame is neither 42 nor 60 bytes
        NonZeroTail: a 60-byte frame has non-zero padding
    """
    raw = packet.raw
    if len(raw) not in (ARP_BYTES, ARP_PADDED):
        raise BadLength(f"ARP frame of {len(raw)} bytes")
    if any(raw[ARP_BYTES:]):
        raise NonZeroTail("ARP frame padding is not zero")
    return tuple(raw[:ARP_BYTES])


def matrix_row(packet: Packet) -> tuple[int, ...]:
    """Bytes 15..54 of a frame, zero-padded to 40."""
    row = packet.raw[ROW_START:ROW_END]
    return tuple(row) + (0,) * (ROW_END - ROW_START - len(row))


def matrixize_dns(packets: Iterable[Packet], k: int = DEFAULT_K, step: int = DEFAULT_STEP) -> list[tuple]:
    """Group per-packet rows into k-row matrices."""
    return chop([matrix_row(p) for p in packets], k, step)


def vectorize_telnet(packet: Packet) -> tuple[int, ...]:
    """IP and TCP header bytes of a TELNET frame; the payload never appears.

    Raises:
        BadStack: not an ETH/IP/TCP/TELNET frame
    """
    if packet.stack != TELNET_STACK:
        raise BadStack(f"expected {'/'.join(TELNET_STACK)}, got {'/'.join(packet.stack)}")
    return tuple(packet.raw[HEADER_START:HEADER_END])


def balance_and_split(samples: Sequence[Sample], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Downsample the majority class, then split each class at ratio.

    Raises:
        EmptyClass: one class has no samples
    """
    if not 0 < ratio < 1:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    by_class = {0: [], 1: []}
    for i, s in enumerate(samples):
        by_class[s.y].append(i)
    for label, members in by_class.items():
        if not members:
            raise EmptyClass(f"no {MALICIOUS if label else BENIGN} samples")
    rng = make_rng(seed)
    n = min(len(m) for m in by_class.values())
    train_index, test_index = [], []
    for label in (0, 1):
        members = by_class[label]
        chosen = [members[i] for i in rng.permutation(len(members))[:n]]
        cut = round(n * ratio)
        train_index += chosen[:cut]
        test_index += chosen[cut:]
    train_index = [train_index[i] for i in rng.permutation(len(train_index))]
    test_index = [test_index[i] for i in rng.permutation(len(test_index))]
    return DatasetSplit(
        [samples[i] for i in train_index],
        [samples[i] for i in test_index],
        seed,
        train_index,
        test_index,
    )


# building datasets from labeled captures


def _labeled_packets(labeled: Sequence[LabeledSession]) -> Iterable[tuple[str, int, CapturedPacket]]:
    for ls in labeled:
        for captured, label in zip(ls.session.packets, ls.labels):
            if label != EXCLUDED:
                yield ls.session.id, int(label == MALICIOUS), captured


def build_type_table(labeled: Sequence[LabeledSession]) -> TypeTable:
    """Type table over every kept packet, in capture order."""
    _, table = packet_type_map(p.packet for _, _, p in _labeled_packets(labeled))
    return table


def build_samples(
    labeled: Sequence[LabeledSession],
    representation: str,
    window: int = DEFAULT_WINDOW,
    step: int = DEFAULT_STEP,
    k: int = DEFAULT_K,
    type_table: Optional[TypeTable] = None,
    dedup: bool = True,
) -> list[Sample]:
    """Turn labeled sessions into samples of one representation.

    typeseq windows are cut per session. bytemat matrices are cut from the
    concatenated row stream of each class. With dedup the windows go
    through dedup_and_cross_class_filter.
    """
    if representation not in REPRESENTATIONS:
        raise ConfigError(f"unknown representation {representation!r}")
    pieces: list[tuple[str, int, tuple]] = []
    if representation == "typeseq":
        table = type_table if type_table is not None else build_type_table(labeled)
        for ls in labeled:
            kept = [(p, lab) for p, lab in zip(ls.session.packets, ls.labels) if lab != EXCLUDED]
            if not kept:
                continue
            ids, _ = packet_type_map((p.packet for p, _ in kept), table=table, frozen=True)
            y = int(kept[0][1] == MALICIOUS)
            pieces += [(ls.session.id, y, w) for w in chop(ids, window, step)]
    elif representation == "bytemat":
        streams: dict[int, list[tuple[str, tuple]]] = {0: [], 1: []}
        for sid, y, captured in _labeled_packets(labeled):
            streams[y].append((sid, matrix_row(captured.packet)))
        for y, stream in streams.items():
            for start in range(0, len(stream) - k + 1, step):
                chunk = stream[start : start + k]
                if len(chunk) == k:
                    pieces.append((chunk[0][0], y, tuple(row for _, row in chunk)))
    else:
        vectorize = vectorize_arp if representation == "bytevec" else vectorize_telnet
        pieces = [(sid, y, vectorize(c.packet)) for sid, y, c in _labeled_packets(labeled)]

    if dedup:
        benign, malicious = dedup_and_cross_class_filter(
            [x for _, y, x in pieces if y == 0], [x for _, y, x in pieces if y == 1]
        )
        keep = {0: set(benign), 1: set(malicious)}
        seen: set[tuple[int, tuple]] = set()
        deduped = []
        for sid, y, x in pieces:
            if x in keep[y] and (y, x) not in seen:
                seen.add((y, x))
                deduped.append((sid, y, x))
        pieces = deduped
    return [Sample(representation, x, y, sid) for sid, y, x in pieces]


# element provenance


@lru_cache(maxsize=None)
def _byte_fields(stack: tuple[str, ...]) -> tuple[tuple[str, ...], ...]:
    """For each byte offset of a stack's fixed prefix, the overlapping field paths."""
    spans = field_byte_spans(stack)
    end = max((hi for _, _, hi in spans), default=0) // 8
    out = []
    for b in range(end):
        lo, hi = 8 * b, 8 * b + 8
        out.append(tuple(f.path for f, start, stop in spans if start < hi and stop > lo))
    return tuple(out)


def byte_provenance(packet: Packet, start: int, end: int) -> list[tuple[int, tuple]]:
    """(byte, ((field path, full value), ...)) for raw offsets [start, end), zero-padded."""
    raw = packet.raw
    names = _byte_fields(packet.stack)
    values = packet.field_values()
    out = []
    for offset in range(start, end):
        if offset >= len(raw):
            out.append((0, ()))
            continue
        paths = names[offset] if offset < len(names) else ()
        out.append((raw[offset], tuple((p, values[p]) for p in paths)))
    return out


def annotate(
    labeled: Sequence[LabeledSession],
    representation: str,
    k: int = DEFAULT_K,
    step: int = DEFAULT_STEP,
) -> list[AnnotatedSample]:
    """Samples with per-element field provenance, no deduplication.

    typeseq elements are type numbers, not packet bytes, so they carry no
    provenance.
    """
    if representation == "typeseq":
        return [
            AnnotatedSample(s, tuple(Element(i, v) for i, v in enumerate(s.x)))
            for s in build_samples(labeled, "typeseq", dedup=False)
        ]
    if representation == "bytemat":
        streams: dict[int, list[tuple[str, list]]] = {0: [], 1: []}
        for sid, y, captured in _labeled_packets(labeled):
            streams[y].append((sid, byte_provenance(captured.packet, ROW_START, ROW_END)))
        out = []
        for y, stream in streams.items():
            for start in range(0, len(stream) - k + 1, step):
                chunk = stream[start : start + k]
                rows = tuple(tuple(b for b, _ in row) for _, row in chunk)
                elements = tuple(
                    Element(r * (ROW_END - ROW_START) + c, b, prov)
                    for r, (_, row) in enumerate(chunk)
                    for c, (b, prov) in enumerate(row)
                )
                out.append(AnnotatedSample(Sample("bytemat", rows, y, chunk[0][0]), elements))
        return out
    if representation == "bytevec":
        start, end, vectorize = 0, ARP_BYTES, vectorize_arp
    elif representation == "headervec":
        start, end, vectorize = HEADER_START, HEADER_END, vectorize_telnet
    else:
        raise ConfigError(f"unknown representation {representation!r}")
    out = []
    for sid, y, captured in _labeled_packets(labeled):
        x = vectorize(captured.packet)
        prov = byte_provenance(captured.packet, start, end)
        elements = tuple(Element(i, b, p) for i, (b, p) in enumerate(prov))
        out.append(AnnotatedSample(Sample(representation, x, y, sid), elements))
    return out


def feature_fields(annotated: Sequence[AnnotatedSample]) -> dict[int, tuple[str, ...]]:
    """Field paths each feature position is read from, merged over samples."""
    merged: dict[int, dict[str, None]] = {}
    for a in annotated:
        for e in a.elements:
            slot = merged.setdefault(e.position, {})
            for path, _ in e.fields:
                slot[path] = None
    return {pos: tuple(paths) for pos, paths in sorted(merged.items())}


def class_counts(samples: Iterable[Sample]) -> Mapping[str, int]:
    counts = {BENIGN: 0, MALICIOUS: 0}
    for s in samples:
        counts[MALICIOUS if s.y else BENIGN] += 1
    return counts
