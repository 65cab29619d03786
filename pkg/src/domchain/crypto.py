"""Protocol hashing, Merkle roots, and an aggregatable signature interface.

The protocol hash is SHA-256 throughout. Signatures go through a small
scheme interface so a pairing-based backend can be slotted in later; the
default backend is Ed25519, which gives deterministic signing and real
unforgeability with small keys. Aggregation is canonical concatenation
with conjunction verification: the aggregate verifies exactly when every
constituent signature verifies, which is the property the protocol
consumes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import DecodeError, ParameterError
from .wire import Reader, Writer

__all__ = [
    "DIGEST_SIZE",
    "digest",
    "merkle_root",
    "KeyPair",
    "keygen",
    "sign",
    "verify",
    "AggregateSignature",
    "aggregate",
    "aggregate_verify",
]

DIGEST_SIZE = 32
_PK_SIZE = 32
_SIG_SIZE = 64


def digest(data: bytes) -> bytes:
    """256-bit protocol hash."""
    return hashlib.sha256(data).digest()


def merkle_root(transactions: Sequence[bytes]) -> bytes:
    """Binary Merkle tree over transaction digests.

    A single-transaction list hashes to its leaf digest; an odd level
    duplicates its last node.
    """
    if not transactions:
        raise ParameterError("merkle root needs at least one transaction")
    level = [digest(tx) for tx in transactions]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [digest(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


@dataclass(frozen=True)
class KeyPair:
    sk: bytes
    pk: bytes


def keygen(seed: Union[int, bytes]) -> KeyPair:
    """Deterministic keypair from an integer or byte seed."""
    if isinstance(seed, int):
        seed = seed.to_bytes(16, "big", signed=False)
    sk = digest(b"domchain.keygen:" + seed)
    priv = Ed25519PrivateKey.from_private_bytes(sk)
    return KeyPair(sk=sk, pk=priv.public_key().public_bytes_raw())


def sign(message: bytes, sk: bytes) -> bytes:
    if len(sk) != 32:
        raise DecodeError(f"secret key must be 32 bytes, got {len(sk)}")
    return Ed25519PrivateKey.from_private_bytes(sk).sign(message)


def verify(message: bytes, sig: bytes, pk: bytes) -> bool:
    if len(pk) != _PK_SIZE:
        raise DecodeError(f"public key must be {_PK_SIZE} bytes, got {len(pk)}")
    if len(sig) != _SIG_SIZE:
        raise DecodeError(f"signature must be {_SIG_SIZE} bytes, got {len(sig)}")
    try:
        Ed25519PublicKey.from_public_bytes(pk).verify(sig, message)
    except InvalidSignature:
        return False
    except ValueError as exc:
        raise DecodeError(f"malformed public key: {exc}") from exc
    return True


@dataclass(frozen=True)
class AggregateSignature:
    """Ordered constituent signatures plus the signer public keys."""

    signatures: tuple[bytes, ...]
    signer_pks: tuple[bytes, ...]

    def __post_init__(self):
        if len(self.signatures) != len(self.signer_pks):
            raise ParameterError("one public key per constituent signature")

    def __len__(self) -> int:
        return len(self.signatures)

    def to_bytes(self) -> bytes:
        w = Writer().put_u32(len(self.signatures))
        for sig, pk in zip(self.signatures, self.signer_pks):
            w.put_block(sig)
            w.put_block(pk)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "AggregateSignature":
        r = Reader(data)
        agg = cls.read_from(r)
        r.expect_end()
        return agg

    @classmethod
    def read_from(cls, r: Reader) -> "AggregateSignature":
        count = r.read_u32()
        sigs, pks = [], []
        for _ in range(count):
            sigs.append(r.read_block())
            pks.append(r.read_block())
        return cls(tuple(sigs), tuple(pks))


def aggregate(sigs: Sequence[bytes], signer_pks: Sequence[bytes]) -> AggregateSignature:
    if not sigs:
        raise ParameterError("nothing to aggregate")
    return AggregateSignature(tuple(sigs), tuple(signer_pks))


def aggregate_verify(
    agg: AggregateSignature,
    messages: Union[bytes, Sequence[bytes]],
    pks: Sequence[bytes],
) -> bool:
    """True iff every constituent verifies.

    ``messages`` is a single byte string when all signers signed the same
    message, or one message per signer.
    """
    if isinstance(messages, (bytes, bytearray)):
        messages = [bytes(messages)] * len(pks)
    if len(messages) != len(pks):
        raise ParameterError("messages and public keys differ in length")
    if len(agg.signatures) != len(pks):
        raise ParameterError("aggregate arity does not match public keys")
    return all(
        verify(msg, sig, pk)
        for msg, sig, pk in zip(messages, agg.signatures, pks)
    )
