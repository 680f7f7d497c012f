"""Field fuzzing and success-rate driven field selection."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import ComputedFieldInAList, ConfigError, NotFuzzable
from .lan import Host, Lan, random_local_mac
from .models import FieldTrial
from .packet import Packet, ip_to_int, set_field
from .rng import child_rng, randint
from .schemas import FieldSchema, FieldValue, Kind, find_field

# Oracle contract: (fuzzed field set, trial generator) -> attack succeeded
SuccessOracle = Callable[[tuple[str, ...], np.random.Generator], bool]

DEFAULT_TRIALS = 500
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class AddressSpace:
    """Inclusive IPv4 range used when fuzzing address fields."""

    ip_lo: int = ip_to_int("1.0.0.0")
    ip_hi: int = ip_to_int("223.255.255.255")


UNICAST = AddressSpace()


@dataclass(frozen=True)
class FuzzPlan:
    """Fields selected for fuzzing, in selection order, plus the RNG seed."""

    blist: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blist", tuple(self.blist))
        if len(set(self.blist)) != len(self.blist):
            raise ConfigError(f"duplicate fields in fuzz plan: {list(self.blist)}")
        for path in self.blist:
            if not find_field(path).fuzzable:
                raise NotFuzzable(path)

    def __contains__(self, path: str) -> bool:
        return path in self.blist

    def to_json(self) -> str:
        return json.dumps({"fields": list(self.blist), "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "FuzzPlan":
        try:
            data = json.loads(text)
            return cls(tuple(data["fields"]), int(data["seed"]))
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"malformed fuzz plan: {e}") from None


EMPTY_PLAN = FuzzPlan()


def fuzz_value(
    schema: FieldSchema, rng: np.random.Generator, space: Optional[AddressSpace] = None
) -> FieldValue:
    """Draw a random value from a field's valid set.

    Args:
        schema: Field to fuzz
        rng: Seeded generator
        space: Restricts IPv4 address fields; defaults to public unicast space

    Returns:
        A value satisfying the field's constraint

    Raises:
        NotFuzzable: the field is fixed, computed or a variable-length tail
    """
    if not schema.fuzzable:
        raise NotFuzzable(schema.path)
    if schema.kind is Kind.range:
        return randint(rng, schema.lo, schema.hi)
    if schema.kind is Kind.enum_set:
        return schema.values[int(rng.integers(len(schema.values)))]
    if schema.kind is Kind.address:
        if schema.address == "mac":
            return random_local_mac(rng)
        space = space or UNICAST
        return randint(rng, space.ip_lo, space.ip_hi)
    if schema.kind is Kind.opaque_bytes:
        return rng.bytes(schema.byte_length)
    raise NotFuzzable(schema.path)


def fuzz_packet(
    packet: Packet,
    plan: FuzzPlan,
    rng: np.random.Generator,
    space: Optional[AddressSpace] = None,
) -> Packet:
    """Reassign every plan field present in the packet.

    Fields whose layer is not part of the packet's stack are skipped. Values
    are drawn in plan order, so the result depends only on the packet, the
    plan and the generator state.
    """
    for path in plan.blist:
        schema = find_field(path)
        if packet.has_layer(schema.layer):
            packet = set_field(packet, path, fuzz_value(schema, rng, space))
    return packet


def trial_rng(seed: int, fields: Iterable[str], trial: int) -> np.random.Generator:
    """Generator for one oracle trial, keyed by seed, field set and trial index."""
    return child_rng(seed, "trial", ",".join(sorted(fields)), trial)


def measure_success_rate(
    fields: tuple[str, ...],
    oracle: SuccessOracle,
    trials: int,
    seed: int,
    workers: int = 1,
) -> int:
    """Run the oracle `trials` times with per-trial seeds.

    Returns:
        Number of successful trials
    """

    def run(trial: int) -> bool:
        return bool(oracle(fields, trial_rng(seed, fields, trial)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return sum(pool.map(run, range(trials)))
    return sum(run(t) for t in range(trials))


def select_fields(
    alist: Iterable[str],
    oracle: SuccessOracle,
    trials: int = DEFAULT_TRIALS,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    workers: int = 1,
    history: Optional[list[FieldTrial]] = None,
    verbose: bool = False,
) -> FuzzPlan:
    """Pick the fields that can be fuzzed while the attack keeps working.

    Each candidate is tested together with every field accepted so far. It
    joins the plan only when the measured success rate is strictly above
    the threshold. Rejected fields are not retried.

    Args:
        alist: Candidate field paths, in the order they are tried
        oracle: Success oracle launching one attack
        trials: Attacks per candidate
        threshold: Minimum success rate, exclusive
        seed: Seed for trial generators and for the returned plan
        workers: Threads used to run trials; results do not depend on it
        history: When given, one FieldTrial per candidate is appended
        verbose: Print one line per candidate

    Raises:
        ComputedFieldInAList: a candidate is a checksum or length field
    """
    if trials < 1:
        raise ConfigError(f"trials must be positive, got {trials}")
    candidates = list(dict.fromkeys(alist))
    for path in candidates:
        schema = find_field(path)
        if schema.kind is Kind.computed:
            raise ComputedFieldInAList(path)
        if not schema.fuzzable:
            raise NotFuzzable(path)

    blist: list[str] = []
    for path in candidates:
        fields = (*blist, path)
        successes = measure_success_rate(fields, oracle, trials, seed, workers)
        rate = successes / trials
        accepted = rate > threshold
        if accepted:
            blist.append(path)
        if history is not None:
            history.append(FieldTrial(path, fields, trials, successes, rate, accepted))
        if verbose:
            print(f"  {path:<24} rate={rate:.3f} {'accepted' if accepted else 'rejected'}")
    return FuzzPlan(tuple(blist), seed)


def reroll_identity(host: Host, lan: Lan, rng: np.random.Generator) -> Host:
    """Give a host a fresh MAC and a fresh DHCP lease.

    Raises:
        PoolExhausted: no free address remains in the pool
    """
    new_ip = lan.pool.lease(host.id, rng)
    taken = lan.macs()
    mac = random_local_mac(rng)
    while mac in taken:
        mac = random_local_mac(rng)
    lan.pool.release(host.ip)
    new_host = replace(host, mac=mac, ip=new_ip)
    lan.update_host(new_host)
    return new_host
