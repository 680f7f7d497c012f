"""AUTHP: a small stateful challenge-response protocol carried over TCP.

A session walks negotiate -> auth_request -> challenge -> challenge_response
-> auth_response and then any number of task exchanges. The server accepts
two proof mechanisms. password_proof clients derive the proof from the
plain password; hash_only clients present a proof built from the stored
password hash, which is all a pass-the-hash attacker has.
"""

from dataclasses import dataclass

from .schemas import AUTHP_COMMANDS, AUTHP_MECHANISMS, AUTHP_STAGES, AUTHP_STATUS

STAGE = {name: i for i, name in enumerate(AUTHP_STAGES)}
MECHANISM = {name: i for i, name in enumerate(AUTHP_MECHANISMS)}
STATUS = {name: i for i, name in enumerate(AUTHP_STATUS)}
COMMAND = {name: i for i, name in enumerate(AUTHP_COMMANDS)}

# stage each stage may follow; task may repeat
NEXT_STAGE = {
    None: "negotiate",
    "negotiate": "auth_request",
    "auth_request": "challenge",
    "challenge": "challenge_response",
    "challenge_response": "auth_response",
    "auth_response": "task",
    "task": "task",
}

_MIX_KEY = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix(z: int) -> int:
    z = (z + _MIX_KEY) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_hash(data: bytes, key: int = 0x41555448) -> int:
    """Keyed 64-bit mixing hash. Not cryptographic."""
    state = _mix(key ^ len(data))
    for i in range(0, len(data), 8):
        state = _mix(state ^ int.from_bytes(data[i : i + 8].ljust(8, b"\x00"), "big"))
    return state


def password_hash(password: str) -> int:
    return mix_hash(password.encode())


def password_proof(challenge: int, password: str) -> int:
    """Proof computed by a legitimate client from the plain password."""
    return mix_hash(challenge.to_bytes(8, "big") + password_hash(password).to_bytes(8, "big"))


def hash_only_proof(challenge: int, stored_hash: int) -> int:
    """Proof computed from a dumped password hash."""
    return mix_hash(challenge.to_bytes(8, "big") + stored_hash.to_bytes(8, "big"))


@dataclass(frozen=True)
class BenignCommand:
    """One entry of the benign client's command list."""

    text: str
    command: str  # AUTHP command class
    exchanges: int  # request/response pairs the command takes


BENIGN_COMMANDS: tuple[BenignCommand, ...] = (
    BenignCommand("type C:\\reports\\q1.txt", "read", 2),
    BenignCommand("type C:\\reports\\q2.txt", "read", 3),
    BenignCommand("type C:\\users\\alice\\notes.txt", "read", 1),
    BenignCommand("type C:\\logs\\app.log", "read", 4),
    BenignCommand("copy C:\\share\\budget.xlsx .", "read", 5),
    BenignCommand("more C:\\config\\settings.ini", "read", 1),
    BenignCommand("echo done > C:\\tmp\\status.txt", "write", 1),
    BenignCommand("copy minutes.docx C:\\share\\", "write", 3),
    BenignCommand("copy draft.pdf C:\\share\\", "write", 2),
    BenignCommand("echo %DATE% >> C:\\logs\\audit.txt", "write", 1),
    BenignCommand("mkdir C:\\share\\archive", "write", 1),
    BenignCommand("dir C:\\share", "list", 1),
    BenignCommand("dir C:\\reports /s", "list", 3),
    BenignCommand("dir C:\\users\\alice", "list", 1),
    BenignCommand("tree C:\\projects", "list", 2),
    BenignCommand("where notepad.exe", "list", 1),
    BenignCommand("ping -n 1 10.0.0.1", "net", 1),
    BenignCommand("ipconfig /all", "net", 2),
    BenignCommand("netstat -an", "net", 3),
    BenignCommand("nslookup intranet.local", "net", 1),
    BenignCommand("tracert -d 10.0.0.1", "net", 2),
    BenignCommand("net use", "net", 1),
    BenignCommand("del C:\\tmp\\old.tmp", "delete", 1),
    BenignCommand("del C:\\tmp\\cache\\*.bak", "delete", 2),
    BenignCommand("rmdir C:\\tmp\\build", "delete", 1),
    BenignCommand("whoami", "query", 1),
    BenignCommand("hostname", "query", 1),
    BenignCommand("systeminfo", "query", 3),
    BenignCommand("tasklist", "query", 2),
    BenignCommand("ver", "query", 1),
    BenignCommand("wmic os get caption", "query", 1),
    BenignCommand("set USERNAME", "query", 1),
)

# attacker task sequence after a successful hash_only login
PAYLOAD_UPLOAD_CHUNKS = 6
REVERSE_SHELL_COMMAND = "sc create updsvc binpath= C:\\tmp\\svc.exe && sc start updsvc"
