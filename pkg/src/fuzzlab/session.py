"""Captured sessions, attack-success oracles and labeling rules."""

from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import IncompleteSession, MixedScenario
from .lan import CapturedPacket

SCENARIOS = ("pth", "arp", "dns", "telnet")
MODES = ("benign", "malicious")

BENIGN = "benign"
MALICIOUS = "malicious"
EXCLUDED = "excluded"


@dataclass(frozen=True)
class Session:
    """Packets captured at the victim during one scenario iteration.

    For malicious sessions `success` is the scenario's attack oracle. For
    benign sessions it records whether the benign activity completed.
    """

    id: str
    scenario: str
    mode: str
    packets: tuple[CapturedPacket, ...]
    success: bool
    meta: dict[str, Any] = field(default_factory=dict, compare=True)


@dataclass(frozen=True)
class LabeledSession:
    """A session plus one label per captured packet."""

    session: Session
    labels: tuple[str, ...]

    def labeled_packets(self, label: str) -> list[CapturedPacket]:
        return [p for p, lab in zip(self.session.packets, self.labels) if lab == label]


def attack_success(session: Session) -> bool:
    """Whether the attack described by the session's meta succeeded.

    Raises:
        IncompleteSession: the simulation did not finish this session
    """
    meta = session.meta
    if not meta.get("complete"):
        raise IncompleteSession(session.id)
    if session.scenario in ("pth", "telnet"):
        return bool(meta.get("reverse_shell", False))
    if session.scenario == "arp":
        first, last = meta["pool"]
        owned = set(meta["lan_macs"])
        return any(first <= ip <= last and mac not in owned for ip, mac in meta["arp_table"])
    if session.scenario == "dns":
        received = meta.get("received_ip")
        return received is not None and received != meta["true_ip"]
    raise IncompleteSession(f"{session.id}: unknown scenario {session.scenario!r}")


def label_sessions(
    sessions: Iterable[Session], include_responses: bool = False
) -> list[LabeledSession]:
    """Apply the per-scenario labeling rules.

    pth, arp and dns are labeled per session: every packet of a benign
    session is benign (failed benign activity included) and failed
    malicious sessions are dropped. telnet is labeled per packet: client
    TELNET packets to the server are benign, injected packets malicious,
    reverse-shell traffic and everything else excluded. Server responses
    are excluded unless include_responses is set, in which case they take
    the label of the command they answer.

    Raises:
        MixedScenario: sessions come from more than one scenario
    """
    sessions = list(sessions)
    kinds = {s.scenario for s in sessions}
    if len(kinds) > 1:
        raise MixedScenario(f"sessions from {sorted(kinds)}")
    labeled = []
    for s in sessions:
        if s.scenario == "telnet":
            labeled.append(LabeledSession(s, _telnet_labels(s, include_responses)))
        elif s.mode == BENIGN:
            labeled.append(LabeledSession(s, (BENIGN,) * len(s.packets)))
        elif s.success:
            labeled.append(LabeledSession(s, (MALICIOUS,) * len(s.packets)))
    return labeled


def _telnet_labels(session: Session, include_responses: bool) -> tuple[str, ...]:
    meta = session.meta
    injected = set(meta.get("injected", ()))
    shell = set(meta.get("shell", ()))
    answers_injected = set(meta.get("injected_responses", ()))
    if session.mode == MALICIOUS and not session.success:
        # a failed hijack leaves only client traffic worth keeping
        injected = set()
        answers_injected = set()
    labels = []
    for i, captured in enumerate(session.packets):
        has_data = captured.packet.has_layer("TELNET")
        if i in shell:
            labels.append(EXCLUDED)
        elif i in injected:
            labels.append(MALICIOUS)
        elif captured.direction == "c2s" and has_data:
            labels.append(BENIGN)
        elif include_responses and captured.direction == "s2c" and has_data:
            labels.append(MALICIOUS if i in answers_injected else BENIGN)
        else:
            labels.append(EXCLUDED)
    return tuple(labels)


def success_rate(sessions: Sequence[Session]) -> float:
    if not sessions:
        return 0.0
    return sum(attack_success(s) for s in sessions) / len(sessions)
