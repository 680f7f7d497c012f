"""Trace, dataset and fuzz-plan files.

Traces and datasets are JSON Lines. A trace holds one record per captured
packet; the first record of each session also carries the session meta.
"""

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .dataset import REPRESENTATIONS, Sample
from .errors import ConfigError, DataError, ParseError, SchemaVersionMismatch
from .fuzz import FuzzPlan
from .lan import CapturedPacket
from .packet import decode
from .session import EXCLUDED, LabeledSession, Session, label_sessions

DATASET_FORMAT = 1


def _jsonable(value):
    return value.hex() if isinstance(value, bytes) else value


def trace_records(
    sessions: Sequence[Session], include_responses: bool = False
) -> Iterator[dict]:
    """Yield trace records. Packets of dropped sessions are labeled excluded."""
    labels = {ls.session.id: ls.labels for ls in label_sessions(sessions, include_responses)}
    for s in sessions:
        session_labels = labels.get(s.id, (EXCLUDED,) * len(s.packets))
        for seq, (captured, label) in enumerate(zip(s.packets, session_labels)):
            packet = captured.packet
            record = {
                "session": s.id,
                "scenario": s.scenario,
                "mode": s.mode,
                "seq": seq,
                "tick": captured.tick,
                "dir": captured.direction,
                "stack": list(packet.stack),
                "fields": {k: _jsonable(v) for k, v in packet.field_values().items()},
                "raw": packet.raw.hex(),
                "label": label,
                "session_success": s.success,
            }
            if seq == 0:
                record["meta"] = s.meta
            yield record


def write_traces(path: Path, sessions: Sequence[Session], include_responses: bool = False) -> int:
    """Write sessions as a trace file.

    Returns:
        Number of records written
    """
    count = 0
    with open(path, "w") as f:
        for record in trace_records(sessions, include_responses):
            f.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


def _read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    try:
        f = open(path)
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None
    with f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(str(path), number, f"invalid JSON: {e.msg}") from None
            if not isinstance(record, dict):
                raise ParseError(str(path), number, "record is not an object")
            yield number, record


def read_traces(path: Path) -> list[LabeledSession]:
    """Read a trace file back into labeled sessions.

    Raises:
        ParseError: a line is not valid JSON or misses a key
    """
    sessions: dict[str, dict] = {}
    for number, record in _read_jsonl(path):
        try:
            sid = record["session"]
            packet = decode(bytes.fromhex(record["raw"]), record["stack"])
            captured = CapturedPacket(record["dir"], packet, int(record["tick"]))
            entry = sessions.setdefault(
                sid,
                {
                    "scenario": record["scenario"],
                    "mode": record["mode"],
                    "success": bool(record["session_success"]),
                    "meta": record.get("meta", {}),
                    "packets": [],
                    "labels": [],
                },
            )
            if record["seq"] != len(entry["packets"]):
                raise ParseError(str(path), number, f"session {sid} out of order")
            entry["packets"].append(captured)
            entry["labels"].append(record["label"])
        except KeyError as e:
            raise ParseError(str(path), number, f"missing key {e}") from None
        except (ValueError, TypeError) as e:
            raise ParseError(str(path), number, str(e)) from None
        except DataError as e:
            if isinstance(e, ParseError):
                raise
            raise ParseError(str(path), number, str(e)) from None
    return [
        LabeledSession(
            Session(sid, e["scenario"], e["mode"], tuple(e["packets"]), e["success"], e["meta"]),
            tuple(e["labels"]),
        )
        for sid, e in sessions.items()
    ]


def write_dataset(path: Path, samples: Iterable[Sample], meta: dict) -> Path:
    """Write samples plus a `<name>.meta.json` sidecar.

    Returns:
        Path of the sidecar
    """
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps({"repr": s.repr, "x": s.x, "y": s.y, "session": s.session}) + "\n")
    sidecar = meta_path(path)
    sidecar.write_text(json.dumps({"format": DATASET_FORMAT, **meta}, indent=2, sort_keys=True))
    return sidecar


def meta_path(path: Path) -> Path:
    return path.with_name(path.name.removesuffix(".jsonl") + ".meta.json")


def _freeze(x):
    return tuple(_freeze(v) for v in x) if isinstance(x, list) else x


def _read_sidecar(sidecar: Path) -> dict:
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(str(sidecar), e.lineno, e.msg) from None
    if not isinstance(meta, dict):
        raise ParseError(str(sidecar), 1, "expected a JSON object")
    return meta


def read_dataset(path: Path) -> tuple[list[Sample], dict]:
    """Read a dataset file and its sidecar (empty dict when absent).

    Raises:
        ParseError: malformed line or sidecar
        SchemaVersionMismatch: unknown representation tag or format
    """
    samples = []
    for number, record in _read_jsonl(path):
        try:
            tag = record["repr"]
            if tag not in REPRESENTATIONS:
                raise SchemaVersionMismatch(f"{path}:{number}: unknown representation {tag!r}")
            samples.append(Sample(tag, _freeze(record["x"]), int(record["y"]), record.get("session", "")))
        except KeyError as e:
            raise ParseError(str(path), number, f"missing key {e}") from None
    sidecar = meta_path(path)
    meta = _read_sidecar(sidecar) if sidecar.exists() else {}
    if meta.get("format", DATASET_FORMAT) != DATASET_FORMAT:
        raise SchemaVersionMismatch(f"{sidecar}: dataset format {meta['format']}")
    return samples, meta


def write_plan(path: Path, plan: FuzzPlan) -> None:
    path.write_text(plan.to_json() + "\n")


def read_plan(path: Path) -> FuzzPlan:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return FuzzPlan.from_json(text)


def file_sha256(path: Path) -> Optional[str]:
    if not path.exists():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()
