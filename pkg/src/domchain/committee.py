"""Sliding-window committee membership, utility selection, hardness gating,
and quorum approval signatures.

Committee membership is a pure function of the recent chain: the distinct
miners of the last ``w`` blocks, capped at ``c_m`` most recent. Before the
chain is ``w`` blocks long a configured bootstrap committee stands in.
Approvals are aggregate signatures over ``id || H(descriptor)`` by at
least ``ceil(2/3 * c_m)`` members, with the graph identifier drawn from a
strictly increasing counter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .crypto import AggregateSignature, KeyPair, aggregate, digest, sign
from .errors import ApprovalError, ParameterError, ProtocolError
from .protocol import ProblemDescriptor, committee_message

__all__ = [
    "CommitteeWindow",
    "HardnessPolicy",
    "HardnessResult",
    "derive_committee",
    "select_utility",
    "check_hardness",
    "quorum_size",
    "IdIssuer",
    "approve",
    "verify_approval",
    "UtilityRegistry",
]


@dataclass(frozen=True)
class CommitteeWindow:
    """Members ordered most-recent-first; ``w`` is the share window size."""

    w: int
    members: tuple[str, ...]

    @property
    def c_m(self) -> int:
        return len(self.members)


def derive_committee(
    chain_miners: Sequence[str],
    w: int,
    c_m: int,
    bootstrap: Sequence[str],
) -> CommitteeWindow:
    """Committee for the next block given miners of the chain in order.

    Uses the bootstrap list until the chain holds ``w`` blocks; afterwards
    the distinct miners of the last ``w`` blocks, newest first, capped at
    ``c_m``.
    """
    if w < 1 or c_m < 1:
        raise ParameterError("window and committee size must be positive")
    if len(chain_miners) < w:
        if not bootstrap:
            raise ProtocolError("empty chain and no bootstrap committee")
        return CommitteeWindow(w=w, members=tuple(bootstrap[:c_m]))
    seen = []
    for miner in reversed(chain_miners[-w:]):
        if miner not in seen:
            seen.append(miner)
        if len(seen) == c_m:
            break
    return CommitteeWindow(w=w, members=tuple(seen))


def select_utility(registry: "UtilityRegistry", epoch_seed: bytes) -> str:
    """Deterministic uniform choice keyed by the epoch seed (previous block
    hash in the live protocol)."""
    entries = registry.sorted_identities()
    if not entries:
        raise ProtocolError("no registered utilities")
    pick = int.from_bytes(digest(b"utility-select:" + epoch_seed), "big")
    return entries[pick % len(entries)]


@dataclass(frozen=True)
class HardnessPolicy:
    """Structural acceptance bands for submitted instances."""

    min_n: int
    max_n: Optional[int]
    min_avg_degree: float
    max_avg_degree: float

    def __post_init__(self):
        if self.max_n is not None and self.min_n > self.max_n:
            raise ParameterError("min_n above max_n")
        if self.min_avg_degree > self.max_avg_degree:
            raise ParameterError("min_avg_degree above max_avg_degree")

    def to_json(self) -> str:
        return json.dumps(
            {
                "min_n": self.min_n,
                "max_n": self.max_n,
                "min_avg_degree": self.min_avg_degree,
                "max_avg_degree": self.max_avg_degree,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "HardnessPolicy":
        raw = json.loads(text)
        return cls(
            min_n=raw["min_n"],
            max_n=raw.get("max_n"),
            min_avg_degree=raw["min_avg_degree"],
            max_avg_degree=raw["max_avg_degree"],
        )


@dataclass(frozen=True)
class HardnessResult:
    passed: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.passed


def check_hardness(descriptor: ProblemDescriptor, policy: HardnessPolicy) -> HardnessResult:
    if descriptor.n < policy.min_n:
        return HardnessResult(False, "too-small")
    if policy.max_n is not None and descriptor.n > policy.max_n:
        return HardnessResult(False, "too-large")
    avg = 2.0 * descriptor.m / descriptor.n if descriptor.n else 0.0
    if avg < policy.min_avg_degree:
        return HardnessResult(False, "too-sparse")
    if avg > policy.max_avg_degree:
        return HardnessResult(False, "too-dense")
    return HardnessResult(True)


def quorum_size(c_m: int) -> int:
    return math.ceil(2 * c_m / 3)


class IdIssuer:
    """Strictly increasing 64-bit graph identifiers."""

    def __init__(self, last_issued: int = 0):
        self._last = int(last_issued)

    @property
    def last_issued(self) -> int:
        return self._last

    def next_id(self) -> int:
        self._last += 1
        return self._last


def approve(
    descriptor: ProblemDescriptor,
    member_keys: Sequence[KeyPair],
    issuer: IdIssuer,
    signers: Optional[Sequence[int]] = None,
) -> tuple[int, AggregateSignature]:
    """Issue a fresh id and co-sign ``id || H(descriptor)``.

    ``signers`` restricts which members sign (defaults to all); fails when
    fewer than a two-thirds quorum sign.
    """
    if not member_keys:
        raise ApprovalError("committee has no members")
    idx = list(range(len(member_keys))) if signers is None else list(signers)
    need = quorum_size(len(member_keys))
    if len(idx) < need:
        raise ApprovalError(f"quorum is {need} of {len(member_keys)}, got {len(idx)}")
    instance_id = issuer.next_id()
    msg = committee_message(instance_id, descriptor.digest())
    sigs = [sign(msg, member_keys[i].sk) for i in idx]
    pks = [member_keys[i].pk for i in idx]
    return instance_id, aggregate(sigs, pks)


def verify_approval(
    agg: AggregateSignature,
    instance_id: int,
    descriptor_hash: bytes,
    committee_pks: Sequence[bytes],
    quorum: int,
) -> bool:
    from .crypto import aggregate_verify

    signers = agg.signer_pks
    if len(signers) < quorum or len(set(signers)) != len(signers):
        return False
    if not set(signers) <= set(committee_pks):
        return False
    return aggregate_verify(agg, committee_message(instance_id, descriptor_hash), signers)


class UtilityRegistry:
    """Registered utilities: identity plus pseudonymous public key.

    File format: one ``identity hex-pk`` pair per line.
    """

    def __init__(self):
        self._entries: dict[str, bytes] = {}

    def register(self, identity: str, pk: bytes) -> None:
        if " " in identity:
            raise ParameterError("identity must not contain spaces")
        self._entries[identity] = pk

    def public_key(self, identity: str) -> bytes:
        try:
            return self._entries[identity]
        except KeyError:
            raise ProtocolError(f"unknown utility {identity!r}") from None

    def sorted_identities(self) -> list[str]:
        return sorted(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for identity in self.sorted_identities():
                fh.write(f"{identity} {self._entries[identity].hex()}\n")

    @classmethod
    def load(cls, path) -> "UtilityRegistry":
        reg = cls()
        with open(path, "r", encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ParameterError(f"bad registry line: {line!r}")
                reg.register(parts[0], bytes.fromhex(parts[1]))
        return reg
