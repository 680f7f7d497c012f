import itertools
from math import prod

import pytest

from fuzzlab.errors import ComputedFieldInAList, ConfigError, NotFuzzable
from fuzzlab.fuzz import (
    EMPTY_PLAN,
    AddressSpace,
    FuzzPlan,
    fuzz_packet,
    fuzz_value,
    reroll_identity,
    select_fields,
    trial_rng,
)
from fuzzlab.lan import Host, Lan
from fuzzlab.packet import ip_to_int, make_packet
from fuzzlab.rng import make_rng
from fuzzlab.schemas import ETHERTYPE_IP, FIELDS, PROTO_UDP, Kind, find_field

FACTORS = {"IP.ttl": 0.9, "IP.tos": 0.4, "IP.identification": 0.8}


def product_oracle(fields, rng):
    """Attack succeeds with the product of the fuzzed fields' factors."""
    return rng.random() < prod(FACTORS[f] for f in fields)


@pytest.fixture
def dns_packet():
    return make_packet(
        ("ETH", {"dst": 1, "src": 2, "type": ETHERTYPE_IP}),
        ("IP", {"protocol": PROTO_UDP, "src": 1, "dst": 2}),
        ("UDP", {"sport": 53, "dport": 40000}),
        ("DNS", {"id": 9, "qr": 1}),
    )


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_select_fields_product_model(seed):
    """0.9 is kept, 0.9*0.4 is dropped, 0.9*0.8 is kept."""
    plan = select_fields(list(FACTORS), product_oracle, trials=2000, seed=seed)
    assert plan.blist == ("IP.ttl", "IP.identification")
    assert plan.seed == seed


def test_select_fields_history():
    history = []
    select_fields(list(FACTORS), product_oracle, trials=500, seed=0, history=history)
    assert [t.field for t in history] == list(FACTORS)
    assert [t.accepted for t in history] == [True, False, True]
    assert history[1].fuzzed == ("IP.ttl", "IP.tos")
    assert history[2].fuzzed == ("IP.ttl", "IP.identification")


def test_select_fields_threshold_is_strict():
    """A success rate of exactly one half is not enough."""
    flips = itertools.cycle([True, False])
    plan = select_fields(["IP.ttl"], lambda fields, rng: next(flips), trials=2)
    assert plan.blist == ()


def test_select_fields_independent_of_workers():
    one = select_fields(list(FACTORS), product_oracle, trials=300, seed=11, workers=1)
    many = select_fields(list(FACTORS), product_oracle, trials=300, seed=11, workers=4)
    assert one == many


def test_select_fields_rejects_computed_candidate():
    with pytest.raises(ComputedFieldInAList):
        select_fields(["IP.ttl", "IP.header_checksum"], product_oracle, trials=10)


def test_select_fields_rejects_bad_trials():
    with pytest.raises(ConfigError):
        select_fields(["IP.ttl"], product_oracle, trials=0)


def test_trial_rng_ignores_field_order():
    a = trial_rng(3, ["IP.ttl", "IP.tos"], 5).integers(0, 1 << 30)
    b = trial_rng(3, ["IP.tos", "IP.ttl"], 5).integers(0, 1 << 30)
    assert a == b


def test_plan_validation():
    with pytest.raises(ConfigError):
        FuzzPlan(("IP.ttl", "IP.ttl"))
    with pytest.raises(NotFuzzable):
        FuzzPlan(("IP.version",))
    with pytest.raises(NotFuzzable):
        FuzzPlan(("UDP.checksum",))


def test_plan_json_roundtrip():
    plan = FuzzPlan(("IP.ttl", "DNS.rcode"), seed=42)
    assert FuzzPlan.from_json(plan.to_json()) == plan
    with pytest.raises(ConfigError):
        FuzzPlan.from_json("{}")


def test_fuzz_value_respects_constraints():
    """Every fuzzable field only ever receives values its schema accepts."""
    rng = make_rng(0)
    for schema in FIELDS.values():
        if not schema.fuzzable:
            continue
        for _ in range(20):
            schema.check(fuzz_value(schema, rng))


ENUM_FIELDS = sorted(p for p, s in FIELDS.items() if s.fuzzable and s.kind is Kind.enum_set)


@pytest.mark.parametrize("path", ENUM_FIELDS)
def test_fuzz_value_draws_every_enum_member(path):
    schema = find_field(path)
    assert len(schema.values) <= 8
    rng = make_rng(17)
    drawn = {fuzz_value(schema, rng) for _ in range(10_000)}
    assert drawn == set(schema.values)


def test_fuzz_value_address_space():
    space = AddressSpace(ip_to_int("10.0.0.1"), ip_to_int("10.0.0.5"))
    rng = make_rng(0)
    values = {fuzz_value(find_field("IP.src"), rng, space) for _ in range(100)}
    assert values <= set(range(ip_to_int("10.0.0.1"), ip_to_int("10.0.0.6")))


def test_fuzz_value_not_fuzzable():
    with pytest.raises(NotFuzzable):
        fuzz_value(find_field("IP.total_length"), make_rng(0))


def test_fuzz_packet_touches_only_plan_fields(dns_packet):
    """Fields outside the plan and layers outside the stack are left alone."""
    plan = FuzzPlan(("IP.ttl", "DNS.rcode", "TCP.window"))
    fuzzed = fuzz_packet(dns_packet, plan, make_rng(4))
    before, after = dns_packet.field_values(), fuzzed.field_values()
    changed = {p for p in before if before[p] != after[p]}
    assert changed <= {"IP.ttl", "DNS.rcode"}
    assert not fuzzed.has_layer("TCP")


def test_fuzz_packet_deterministic(dns_packet):
    plan = FuzzPlan(("IP.ttl", "IP.identification", "DNS.id"))
    assert fuzz_packet(dns_packet, plan, make_rng(9)) == fuzz_packet(dns_packet, plan, make_rng(9))


def test_fuzz_packet_empty_plan(dns_packet):
    assert fuzz_packet(dns_packet, EMPTY_PLAN, make_rng(0)) == dns_packet


def test_reroll_identity():
    """A rerolled host gets a new MAC and a pool address, and routing follows."""
    lan = Lan()
    old = lan.add_host(Host("client", 0x525400000020, ip_to_int("10.0.0.20"), "client"))
    new = reroll_identity(old, lan, make_rng(2))
    assert new.mac != old.mac
    assert new.ip in lan.pool
    assert lan.hosts["client"] == new
    assert lan.routes[new.ip] == "client"


def test_reroll_identity_rarely_repeats():
    """Rerolls under 100 seeds give (almost) 100 distinct identities."""
    identities = []
    for seed in range(100):
        lan = Lan()
        host = lan.add_host(Host("client", 0x525400000020, ip_to_int("10.0.0.20"), "client"))
        new = reroll_identity(host, lan, make_rng(seed))
        identities.append((new.mac, new.ip))
    assert len(set(identities)) >= 95
    assert all(a != b for a, b in zip(identities, identities[1:]))
