import pytest

from fuzzlab.dataset import (
    Sample,
    annotate,
    balance_and_split,
    build_samples,
    build_type_table,
    chop,
    class_counts,
    dedup_and_cross_class_filter,
    feature_fields,
    matrix_row,
    matrixize_dns,
    packet_type_map,
    remap_types,
    training_type_table,
    vectorize_arp,
    vectorize_telnet,
)
from fuzzlab.errors import BadLength, BadStack, ConfigError, EmptyClass, LengthMismatch, NonZeroTail
from fuzzlab.fuzz import EMPTY_PLAN
from fuzzlab.lan import CapturedPacket
from fuzzlab.packet import BROADCAST_MAC, finalize, ip_to_int, make_packet, str_to_mac
from fuzzlab.rng import make_rng
from fuzzlab.scenarios import simulate_session
from fuzzlab.schemas import ETHERTYPE_ARP, ETHERTYPE_IP, PROTO_TCP
from fuzzlab.session import BENIGN, EXCLUDED, MALICIOUS, LabeledSession, Session, label_sessions

CLIENT_MAC = str_to_mac("52:54:00:00:00:14")
SERVER_MAC = str_to_mac("52:54:00:00:00:0a")


def telnet_frame(data: bytes = b"ls\r\n", ttl: int = 64, seq: int = 1000):
    return finalize(
        make_packet(
            ("ETH", {"dst": SERVER_MAC, "src": CLIENT_MAC, "type": ETHERTYPE_IP}),
            (
                "IP",
                {"protocol": PROTO_TCP, "ttl": ttl, "src": ip_to_int("10.0.0.20"), "dst": ip_to_int("10.0.0.10")},
            ),
            ("TCP", {"sport": 50000, "dport": 23, "seq": seq, "ack": 2000, "flags": 0x18}),
            ("TELNET", {"data": data}),
        )
    )


def arp_frame(trailer: bytes = b""):
    return finalize(
        make_packet(
            ("ETH", {"dst": BROADCAST_MAC, "src": CLIENT_MAC, "type": ETHERTYPE_ARP}),
            (
                "ARP",
                {
                    "opcode": 1,
                    "sender_mac": CLIENT_MAC,
                    "sender_ip": ip_to_int("10.0.0.20"),
                    "target_mac": 0,
                    "target_ip": ip_to_int("10.0.0.1"),
                },
            ),
            trailer=trailer,
        )
    )


def labeled(scenario, mode, frames, labels, sid="s"):
    packets = tuple(CapturedPacket("c2s", f, i) for i, f in enumerate(frames))
    return LabeledSession(Session(sid, scenario, mode, packets, True, {"complete": True}), tuple(labels))


def test_packet_type_map_first_appearance():
    frames = [telnet_frame(ttl=t) for t in (64, 32, 64, 1)]
    ids, table = packet_type_map(frames, fields=("IP.ttl",))
    assert ids == [1, 2, 1, 3]
    assert table == {(64,): 1, (32,): 2, (1,): 3}


def test_packet_type_map_frozen_table():
    """Unseen tuples map to 0 and the table does not grow."""
    table = {(64,): 1}
    ids, out = packet_type_map([telnet_frame(ttl=64), telnet_frame(ttl=9)], ("IP.ttl",), table, frozen=True)
    assert ids == [1, 0]
    assert out == {(64,): 1}


def test_chop_drops_tail():
    windows = chop(list(range(1, 11)), window=4, step=3)
    assert windows == [(1, 2, 3, 4), (4, 5, 6, 7), (7, 8, 9, 10)]
    assert chop([1, 2], window=4, step=1) == []


def test_chop_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        chop([1, 2, 3], window=2, step=0)


def test_dedup_and_cross_class_filter():
    benign = [(1, 2), (1, 2), (3, 4)]
    malicious = [(3, 4), (5, 6), (5, 6)]
    assert dedup_and_cross_class_filter(benign, malicious) == ([(1, 2)], [(5, 6)])


def test_dedup_rejects_mixed_lengths():
    with pytest.raises(LengthMismatch):
        dedup_and_cross_class_filter([(1, 2)], [(1, 2, 3)])


def test_vectorize_arp():
    plain = vectorize_arp(arp_frame())
    padded = vectorize_arp(arp_frame(b"\x00" * 18))
    assert len(plain) == 42
    assert plain == padded


def test_vectorize_arp_errors():
    with pytest.raises(NonZeroTail):
        vectorize_arp(arp_frame(b"\x00" * 17 + b"\x01"))
    with pytest.raises(BadLength):
        vectorize_arp(arp_frame(b"\x00" * 5))


def test_vectorize_telnet_skips_payload():
    """Only the 40 header bytes go in; payloads differ only through the TCP checksum."""
    a = vectorize_telnet(telnet_frame(b"ls\r\n"))
    b = vectorize_telnet(telnet_frame(b"ps\r\n"))
    assert len(a) == 40
    assert a[0] == 0x45
    assert a[:36] == b[:36]
    assert a[36:38] != b[36:38]


def test_vectorize_telnet_rejects_other_stacks():
    with pytest.raises(BadStack):
        vectorize_telnet(arp_frame())


def test_matrix_row_pads_short_frames():
    row = matrix_row(arp_frame())
    assert len(row) == 40
    assert row[28:] == (0,) * 12


def test_matrixize_groups_rows():
    frames = [telnet_frame(seq=i) for i in range(10)]
    matrices = matrixize_dns(frames, k=4, step=2)
    assert len(matrices) == 4
    assert all(len(m) == 4 and len(m[0]) == 40 for m in matrices)


def test_balance_and_split():
    samples = [Sample("bytevec", (i,), 0) for i in range(30)] + [Sample("bytevec", (i,), 1) for i in range(10)]
    split = balance_and_split(samples, ratio=0.8, seed=5)
    assert class_counts(split.train) == {BENIGN: 8, MALICIOUS: 8}
    assert class_counts(split.test) == {BENIGN: 2, MALICIOUS: 2}
    assert not set(split.train_index) & set(split.test_index)
    again = balance_and_split(samples, ratio=0.8, seed=5)
    assert again.train_index == split.train_index


def test_balance_and_split_needs_both_classes():
    with pytest.raises(EmptyClass):
        balance_and_split([Sample("bytevec", (1,), 0)])


def test_build_headervec_samples_filters_overlap():
    """A header seen in both classes is dropped; excluded packets never appear."""
    shared = telnet_frame(ttl=64)
    benign = labeled("telnet", "benign", [shared, telnet_frame(ttl=60)], [BENIGN, BENIGN], "b")
    hijack = labeled(
        "telnet", "malicious", [shared, telnet_frame(ttl=30), telnet_frame(ttl=10)], [MALICIOUS, MALICIOUS, EXCLUDED], "m"
    )
    samples = build_samples([benign, hijack], "headervec")
    assert sorted(s.x[8] for s in samples) == [30, 60]
    assert {s.x[8]: s.y for s in samples} == {30: 1, 60: 0}
    kept = build_samples([benign, hijack], "headervec", dedup=False)
    assert len(kept) == 4


def test_build_typeseq_samples():
    sessions = [
        simulate_session("pth", "benign", EMPTY_PLAN, make_rng(1)),
        simulate_session("pth", "malicious", EMPTY_PLAN, make_rng(2)),
    ]
    labeled_sessions = label_sessions(sessions)
    table = build_type_table(labeled_sessions)
    samples = build_samples(labeled_sessions, "typeseq", window=8, step=4, type_table=table, dedup=False)
    malicious = [s for s in samples if s.y == 1]
    assert len(malicious) == 4  # 20 packets
    assert all(len(s.x) == 8 and min(s.x) >= 1 for s in samples)
    assert max(v for s in samples for v in s.x) <= len(table)


def test_annotate_headervec_provenance():
    session = labeled("telnet", "benign", [telnet_frame(ttl=42)], [BENIGN])
    (annotated,) = annotate([session], "headervec")
    ttl = annotated.elements[8]
    assert ttl.value == 42
    assert ttl.fields == (("IP.ttl", 42),)
    assert feature_fields([annotated])[8] == ("IP.ttl",)
    assert len(annotated.elements) == 40


def test_annotate_bytemat_positions():
    frames = [telnet_frame(seq=i) for i in range(4)]
    session = labeled("dns", "benign", frames, [BENIGN] * 4)
    (annotated,) = annotate([session], "bytemat", k=4, step=4)
    assert len(annotated.elements) == 160
    assert annotated.elements[40 + 8].fields == (("IP.ttl", 64),)
    assert annotated.sample.flat == tuple(e.value for e in annotated.elements)


def test_unknown_representation():
    with pytest.raises(ConfigError):
        build_samples([], "pixels")


def test_training_type_table():
    """Types absent from training windows collapse to 0."""
    table = {("a",): 1, ("b",): 2, ("c",): 3}
    train = [Sample("typeseq", (1, 3, 3), 0)]
    reduced, mapping = training_type_table(table, train)
    assert reduced == {("a",): 1, ("c",): 2}
    test = remap_types([Sample("typeseq", (2, 3, 1), 1)], mapping)
    assert test[0].x == (0, 2, 1)


def enumerate_windows(sequence, window, step):
    out, start = [], 0
    while start + window <= len(sequence):
        out.append(tuple(sequence[start : start + window]))
        start += step
    return out


@pytest.mark.parametrize("step", [1, 2, 3, 4])
@pytest.mark.parametrize("window", [1, 2, 5, 8])
def test_chop_matches_enumeration(window, step):
    for length in range(21):
        sequence = list(range(length))
        windows = chop(sequence, window, step)
        assert windows == enumerate_windows(sequence, window, step)
        assert len(windows) == (max(0, (length - window) // step + 1) if length >= window else 0)


@pytest.mark.parametrize("seed", range(200))
def test_dedup_matches_set_algebra(seed):
    rng = make_rng(seed)
    benign = [tuple(int(v) for v in rng.integers(0, 3, size=3)) for _ in range(int(rng.integers(0, 15)))]
    malicious = [tuple(int(v) for v in rng.integers(0, 3, size=3)) for _ in range(int(rng.integers(0, 15)))]
    benign_out, malicious_out = dedup_and_cross_class_filter(benign, malicious)
    assert set(benign_out) == set(benign) - set(malicious)
    assert set(malicious_out) == set(malicious) - set(benign)
    assert len(benign_out) == len(set(benign_out))
    assert len(malicious_out) == len(set(malicious_out))
    # first-appearance order is kept
    assert benign_out == sorted(benign_out, key=benign.index)


def test_packet_type_map_is_injective():
    rng = make_rng(11)
    frames = [telnet_frame(ttl=int(rng.integers(1, 5)), seq=int(rng.integers(0, 4))) for _ in range(1000)]
    ids, table = packet_type_map(frames, fields=("IP.ttl", "TCP.seq"))
    keys = [(f.get("IP.ttl"), f.get("TCP.seq")) for f in frames]
    by_key = {}
    for key, i in zip(keys, ids):
        assert by_key.setdefault(key, i) == i
    assert len(set(by_key.values())) == len(by_key)
    assert sorted(table.values()) == list(range(1, len(table) + 1))
