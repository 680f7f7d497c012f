"""Simulated LAN: hosts, DHCP pool, virtual clock and victim-side capture.

Time is an integer tick counter. Deliveries are ordered by
(deliver_at, enqueue sequence), so a run is fully deterministic.
"""

import heapq
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ConfigError, PoolExhausted
from .packet import Packet, finalize, int_to_ip, ip_to_int
from .rng import randint

ROLES = ("server", "client", "attacker", "router", "dns_local", "dns_global", "dhcp")

ROLE_TAGS = {
    "server": "s",
    "dns_local": "s",
    "client": "c",
    "attacker": "a",
    "router": "r",
    "dns_global": "g",
    "dhcp": "d",
}


@dataclass(frozen=True)
class Host:
    """A machine on the LAN."""

    id: str
    mac: int
    ip: int
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"unknown host role {self.role!r}")


@dataclass(frozen=True)
class CapturedPacket:
    """One frame recorded at the victim."""

    direction: str
    packet: Packet
    tick: int


class Agent(Protocol):
    """Protocol endpoint attached to a host."""

    def on_receive(self, lan: "Lan", packet: Packet, src: str) -> None: ...


class DhcpPool:
    """Inclusive range of leasable IPv4 addresses."""

    def __init__(self, first: str = "10.0.0.2", last: str = "10.0.0.254"):
        self.first = ip_to_int(first)
        self.last = ip_to_int(last)
        if self.last < self.first:
            raise ConfigError(f"empty DHCP pool {first}-{last}")
        self.leases: dict[int, str] = {}

    def __contains__(self, ip: int) -> bool:
        return self.first <= ip <= self.last

    @property
    def size(self) -> int:
        return self.last - self.first + 1

    def free_addresses(self) -> list[int]:
        return [ip for ip in range(self.first, self.last + 1) if ip not in self.leases]

    def lease(self, host_id: str, rng: np.random.Generator) -> int:
        """Lease a random free address to host_id.

        Raises:
            PoolExhausted: every address is leased
        """
        free = self.free_addresses()
        if not free:
            raise PoolExhausted(f"no free address in {int_to_ip(self.first)}-{int_to_ip(self.last)}")
        ip = free[int(rng.integers(len(free)))]
        self.leases[ip] = host_id
        return ip

    def release(self, ip: int) -> None:
        self.leases.pop(ip, None)

    def random_address(self, rng: np.random.Generator) -> int:
        return randint(rng, self.first, self.last)


def random_local_mac(rng: np.random.Generator) -> int:
    """Random locally-administered unicast MAC address."""
    value = randint(rng, 0, (1 << 48) - 1)
    value &= ~(0x01 << 40)  # unicast
    value |= 0x02 << 40  # locally administered
    return value


class Lan:
    """Shared segment with an event queue and a capture point at the victim."""

    def __init__(self, pool: Optional[DhcpPool] = None, victim: Optional[str] = None):
        self.pool = pool or DhcpPool()
        self.victim = victim
        self.clock = 0
        self.hosts: dict[str, Host] = {}
        self.agents: dict[str, Agent] = {}
        self.routes: dict[int, str] = {}  # ip -> host id
        self.sniffers: list[Callable[["Lan", Packet, str, str], None]] = []
        self.captured: list[CapturedPacket] = []
        self._queue: list = []
        self._seq = 0

    def add_host(self, host: Host, agent: Optional[Agent] = None) -> Host:
        self.hosts[host.id] = host
        self.routes[host.ip] = host.id
        if host.ip in self.pool:
            self.pool.leases[host.ip] = host.id
        if agent is not None:
            self.agents[host.id] = agent
        return host

    def update_host(self, host: Host) -> None:
        """Replace a host's identity and refresh the routing table."""
        old = self.hosts[host.id]
        if self.routes.get(old.ip) == host.id:
            del self.routes[old.ip]
        self.hosts[host.id] = host
        self.routes[host.ip] = host.id

    def macs(self) -> set[int]:
        return {h.mac for h in self.hosts.values()}

    def host_by_role(self, role: str) -> Host:
        for host in self.hosts.values():
            if host.role == role:
                return host
        raise ConfigError(f"no host with role {role}")

    def schedule(self, delay: int, callback: Callable[[], None]) -> None:
        self._push(self.clock + delay, ("call", callback))

    def send(self, src: str, dst: str, packet: Packet, latency: int = 1) -> Packet:
        """Finalize packet and queue it for delivery to dst after latency ticks."""
        frame = packet if packet.finalized else finalize(packet)
        self._record(src, dst, frame, self.clock, outgoing=True)
        for sniff in self.sniffers:
            sniff(self, frame, src, dst)
        self._push(self.clock + latency, ("deliver", src, dst, frame))
        return frame

    def broadcast(self, src: str, packet: Packet, latency: int = 1) -> Packet:
        """Deliver to every other host on the segment."""
        frame = packet if packet.finalized else finalize(packet)
        for sniff in self.sniffers:
            sniff(self, frame, src, "*")
        for host_id in self.hosts:
            if host_id != src:
                self._push(self.clock + latency, ("deliver", src, host_id, frame))
        self._record(src, "*", frame, self.clock, outgoing=True)
        return frame

    def run(self, until: Optional[int] = None) -> None:
        """Process events in order until the queue drains or the clock passes until."""
        while self._queue:
            tick = self._queue[0][0]
            if until is not None and tick > until:
                break
            _, _, event = heapq.heappop(self._queue)
            self.clock = tick
            if event[0] == "call":
                event[1]()
                continue
            _, src, dst, frame = event
            self._record(src, dst, frame, tick, outgoing=False)
            agent = self.agents.get(dst)
            if agent is not None:
                agent.on_receive(self, frame, src)
        if until is not None:
            self.clock = max(self.clock, until)

    def _push(self, tick: int, event: tuple) -> None:
        heapq.heappush(self._queue, (tick, self._seq, event))
        self._seq += 1

    def _record(self, src: str, dst: str, frame: Packet, tick: int, outgoing: bool) -> None:
        if self.victim is None:
            return
        seen = src == self.victim if outgoing else dst == self.victim
        if not seen:
            return
        src_tag = ROLE_TAGS[self.hosts[src].role]
        dst_tag = "b" if dst == "*" else ROLE_TAGS[self.hosts[dst].role]
        self.captured.append(CapturedPacket(f"{src_tag}2{dst_tag}", frame, tick))
