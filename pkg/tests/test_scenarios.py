import pytest

from fuzzlab.errors import ConfigError, InvalidPlanForScenario
from fuzzlab.fuzz import EMPTY_PLAN, FuzzPlan
from fuzzlab.rng import make_rng
from fuzzlab.scenarios import (
    ATTACK_DOMAIN,
    BENIGN_DOMAINS,
    REGISTRY,
    NetProfile,
    check_plan,
    decode_question,
    encode_question,
    get_scenario,
    run_scenario,
    scenario_oracle,
    simulate_session,
    true_address,
)
from fuzzlab.session import SCENARIOS, attack_success, label_sessions

NO_TYPOS = NetProfile(typo_rate=0.0)


def test_registry_covers_every_scenario():
    assert set(REGISTRY) == set(SCENARIOS)
    for info in REGISTRY.values():
        FuzzPlan(info.alist)  # candidates are all fuzzable
        check_plan(info.kind, FuzzPlan(info.alist))


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        get_scenario("smtp")


def test_plan_for_wrong_scenario():
    with pytest.raises(InvalidPlanForScenario):
        check_plan("arp", FuzzPlan(("DNS.id",)))


def test_net_profile_validation():
    with pytest.raises(ConfigError):
        NetProfile(lan_latency=-1)
    with pytest.raises(ConfigError):
        NetProfile(typo_rate=1.5)


@pytest.mark.parametrize("kind", SCENARIOS)
def test_benign_activity_completes(kind):
    session = simulate_session(kind, "benign", EMPTY_PLAN, make_rng(1), NO_TYPOS)
    assert session.success
    assert session.packets


@pytest.mark.parametrize("kind", SCENARIOS)
def test_fixed_parameter_attack_succeeds(kind):
    """Without fuzzing every attack works and the oracle agrees."""
    session = simulate_session(kind, "malicious", EMPTY_PLAN, make_rng(2))
    assert session.success
    assert attack_success(session)


def test_run_scenario_deterministic():
    """Same seed gives identical sessions whatever the worker count."""
    plan = FuzzPlan(("IP.ttl", "DNS.rcode"))
    one = run_scenario("dns", "malicious", 6, plan, seed=3)
    again = run_scenario("dns", "malicious", 6, plan, seed=3)
    threaded = run_scenario("dns", "malicious", 6, plan, seed=3, workers=3)
    assert one == again == threaded
    assert [s.id for s in one] == [f"dns-malicious-{i:06d}" for i in range(6)]


def test_run_scenario_seed_matters():
    a = run_scenario("telnet", "benign", 2, seed=1)
    b = run_scenario("telnet", "benign", 2, seed=2)
    assert a != b


def test_run_scenario_rejects_foreign_plan():
    with pytest.raises(InvalidPlanForScenario):
        run_scenario("telnet", "malicious", 1, FuzzPlan(("ARP.opcode",)))


def test_pth_attack_exchange():
    """Three handshake requests, six uploads and the exec, each answered."""
    session = simulate_session("pth", "malicious", EMPTY_PLAN, make_rng(4))
    assert len(session.packets) == 20
    assert session.meta["mechanism"] == "hash_only"
    assert {p.direction for p in session.packets} == {"a2s", "s2a"}


def test_pth_fuzzing_flags_keeps_attack_working():
    plan = FuzzPlan(("AUTHP.flags", "AUTHP.capabilities", "AUTHP.process_id"))
    session = simulate_session("pth", "malicious", plan, make_rng(5))
    assert session.success
    flags = {p.packet.get("AUTHP.flags") for p in session.packets if p.direction == "a2s"}
    assert len(flags) > 1


def test_pth_fuzzing_token_breaks_attack():
    """A random session token is refused by the server."""
    session = simulate_session("pth", "malicious", FuzzPlan(("AUTHP.session_token",)), make_rng(6))
    assert not session.success


def test_pth_typo_fails_benign_login():
    session = simulate_session("pth", "benign", EMPTY_PLAN, make_rng(1), NetProfile(typo_rate=1.0))
    assert not session.success
    assert session.meta["failed_at"] == "auth_response"


def test_arp_poisoning_capture():
    session = simulate_session("arp", "malicious", EMPTY_PLAN, make_rng(7))
    spoofed = [p for p in session.packets if p.direction == "a2c"]
    assert len(spoofed) == NetProfile().arp_replies
    assert all(p.packet.get("ARP.opcode") == 2 for p in spoofed)


def test_arp_benign_sweep_sizes():
    """The sweep asks for every other address; answers arrive padded."""
    session = simulate_session("arp", "benign", EMPTY_PLAN, make_rng(8))
    requests = [p for p in session.packets if p.direction == "c2b"]
    replies = [p for p in session.packets if p.direction != "c2b"]
    assert len(requests) == 253
    assert all(len(p.packet) == 42 for p in requests)
    assert replies and all(len(p.packet) == 60 for p in replies)


def test_dns_race_lost_when_upstream_is_fast():
    """The spoofed answer must beat the real one to poison the cache."""
    slow_attacker = NetProfile(wan_latency=0, spoof_delay=5)
    session = simulate_session("dns", "malicious", EMPTY_PLAN, make_rng(9), slow_attacker)
    assert not session.success
    assert session.meta["received_ip"] == true_address(ATTACK_DOMAIN)


def test_dns_benign_user_resolves_several_domains():
    session = simulate_session("dns", "benign", EMPTY_PLAN, make_rng(14))
    domains = session.meta["domains"]
    assert len(set(domains)) == NetProfile().dns_queries
    assert session.success
    assert session.meta["answers"] == {d: true_address(d) for d in domains}
    queries = [p for p in session.packets if p.packet.get("UDP.dport") == 53 and p.packet.get("DNS.qr") == 0]
    assert len(queries) >= len(domains)
    with pytest.raises(ConfigError):
        NetProfile(dns_queries=0)


def test_dns_question_codec():
    question = encode_question("intranet.example")
    assert decode_question(question) == "intranet.example"
    assert ATTACK_DOMAIN not in BENIGN_DOMAINS
    assert len(set(BENIGN_DOMAINS)) == len(BENIGN_DOMAINS)


def test_telnet_hijack_labels():
    """The injected command is the only malicious packet of a hijack."""
    session = simulate_session("telnet", "malicious", EMPTY_PLAN, make_rng(10))
    (labeled,) = label_sessions([session])
    malicious = [p for p, lab in zip(session.packets, labeled.labels) if lab == "malicious"]
    assert len(malicious) == 1
    assert b"/dev/tcp/" in malicious[0].packet.get("TELNET.data")
    assert malicious[0].direction == "a2s"


def test_telnet_injection_has_tool_headers():
    session = simulate_session("telnet", "malicious", EMPTY_PLAN, make_rng(12))
    (labeled,) = label_sessions([session])
    packets = [(p.packet, lab) for p, lab in zip(session.packets, labeled.labels)]
    injected = next(p for p, lab in packets if lab == "malicious")
    client = [p for p, lab in packets if lab == "benign" and p.get("IP.src") == injected.get("IP.src")]
    assert client
    for p in client:
        assert (p.get("IP.tos"), p.get("IP.flags"), p.get("IP.ttl")) == (0x10, 2, 64)
        assert p.get("TCP.window") == 64240
    assert (injected.get("IP.tos"), injected.get("IP.flags"), injected.get("IP.ttl")) == (0, 0, 255)
    assert injected.get("TCP.window") == 8192


def test_telnet_candidates_leave_tool_headers_alone():
    alist = get_scenario("telnet").alist
    assert "IP.identification" not in alist
    assert "TCP.window" not in alist
    assert simulate_session("telnet", "malicious", FuzzPlan(("TCP.reserved",)), make_rng(13)).success


def test_telnet_sequence_fuzzing_breaks_hijack():
    session = simulate_session("telnet", "malicious", FuzzPlan(("TCP.seq",)), make_rng(11))
    assert not session.success


def test_scenario_oracle():
    oracle = scenario_oracle("arp")
    assert oracle(("ARP.target_ip",), make_rng(0)) is True
