"""Iterated one-way hashing and single-step verification.

Authentication walks a hash chain backwards: the server stores the value at
height ``count`` and the client proves itself by revealing the preimage one
step below. Round 1 hashes the UTF-8 bytes of the passkey; every later round
hashes the raw digest bytes of the round before it, never the hex text.
Lowercase unprefixed hex is the only text encoding used on the wire or on
disk.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "HashAlg",
    "Passkey",
    "Digest",
    "hash_once",
    "chain",
    "chain_digest",
    "verify_step",
]


class HashAlg(Enum):
    """Digest algorithms a chain may be built on.

    SHA256 is the default everywhere. MD5 exists for compatibility with the
    original scheme only; it is cryptographically broken and callers must ask
    for it explicitly.
    """

    SHA256 = "sha256"
    MD5 = "md5"

    @property
    def digest_len(self) -> int:
        """Digest size in bytes (32 for sha256, 16 for md5)."""
        return 32 if self is HashAlg.SHA256 else 16

    @classmethod
    def from_name(cls, name: str) -> HashAlg:
        try:
            return cls(name.lower())
        except ValueError:
            supported = ", ".join(a.value for a in cls)
            raise ValueError(
                f"unsupported hash algorithm {name!r}; expected one of: {supported}"
            ) from None


@dataclass(frozen=True)
class Passkey:
    """The client-held secret. Only chain-derived digests ever leave the client."""

    secret: str

    def __post_init__(self) -> None:
        if not self.secret:
            raise ValueError("passkey must be a non-empty string")

    def encoded(self) -> bytes:
        return self.secret.encode("utf-8")


@dataclass(frozen=True)
class Digest:
    """A fixed-length digest tagged with the algorithm that produced it."""

    data: bytes
    alg: HashAlg = HashAlg.SHA256

    def __post_init__(self) -> None:
        if len(self.data) != self.alg.digest_len:
            raise ValueError(
                f"{self.alg.value} digest must be {self.alg.digest_len} bytes, "
                f"got {len(self.data)}"
            )

    @property
    def hex(self) -> str:
        """Canonical text form: lowercase hex, no prefix."""
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str, alg: HashAlg = HashAlg.SHA256) -> Digest:
        try:
            raw = bytes.fromhex(text)
        except ValueError:
            raise ValueError(f"not a hex string: {text!r}") from None
        return cls(raw, alg)


def hash_once(data: bytes, alg: HashAlg = HashAlg.SHA256) -> Digest:
    """Apply the one-way function to ``data`` once."""
    h = hashlib.new(alg.value)
    h.update(data)
    return Digest(h.digest(), alg)


def chain(passkey: Passkey | str, count: int, alg: HashAlg = HashAlg.SHA256) -> bytes:
    """Return the chain value at height ``count``.

    Height 0 is the raw UTF-8 passkey bytes; height i is one hash application
    on top of height i-1. Runs in O(count) hash calls.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if isinstance(passkey, str):
        passkey = Passkey(passkey)
    value = passkey.encoded()
    for _ in range(count):
        value = hash_once(value, alg).data
    return value


def chain_digest(
    passkey: Passkey | str, count: int, alg: HashAlg = HashAlg.SHA256
) -> Digest:
    """:func:`chain` for count >= 1, wrapped as a :class:`Digest`.

    Height 0 is the raw passkey, not a digest, so it is refused here.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1 for a digest, got {count}")
    return Digest(chain(passkey, count, alg), alg)


def verify_step(token: Digest, stored: Digest) -> bool:
    """True iff one hash application on ``token`` reproduces ``stored``.

    Both digests must carry the same algorithm; mixing algorithms is a caller
    bug, not an authentication failure.
    """
    if token.alg is not stored.alg:
        raise ValueError(
            f"algorithm mismatch: token is {token.alg.value}, "
            f"stored is {stored.alg.value}"
        )
    return hash_once(token.data, token.alg) == stored
