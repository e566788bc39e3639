"""Source-network allowlisting, the first gate in the request pipeline.

A store is an ordered, duplicate-free collection of CIDR rules and denies by
default: the empty store trusts nobody, and an operator who wants the filter
off must say so with an explicit 0.0.0.0/0. Stores are immutable; mutating
operations return a new store so a single writer can swap references
atomically while readers keep matching against the old one.
"""

from __future__ import annotations

import ipaddress
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "TrustRule",
    "TrustStore",
    "TrustFileError",
    "load_trust_file",
    "save_trust_file",
]

IPNetwork = ipaddress.IPv4Network | ipaddress.IPv6Network
IPAddress = ipaddress.IPv4Address | ipaddress.IPv6Address


class TrustFileError(ValueError):
    """A trust file could not be read or parsed; message carries path and line."""


@dataclass(frozen=True)
class TrustRule:
    """One allowlist entry, always in canonical (host bits zero) CIDR form."""

    network: IPNetwork

    @classmethod
    def parse(cls, text: str) -> TrustRule:
        """Parse CIDR text, rejecting non-canonical input loudly.

        A network with host bits set is almost always a typo, so instead of
        silently masking we refuse and name the canonical form.
        """
        text = text.strip()
        try:
            network = ipaddress.ip_network(text, strict=True)
        except ValueError:
            try:
                loose = ipaddress.ip_network(text, strict=False)
            except ValueError as exc:
                raise ValueError(f"invalid CIDR {text!r}: {exc}") from None
            raise ValueError(
                f"non-canonical CIDR {text!r}: host bits set; "
                f"canonical form is {loose}"
            ) from None
        return cls(network)

    @property
    def cidr(self) -> str:
        return str(self.network)

    @property
    def prefix_len(self) -> int:
        return self.network.prefixlen


@dataclass(frozen=True)
class TrustStore:
    """Immutable ordered rule collection with default-deny matching."""

    rules: tuple[TrustRule, ...] = ()

    def add(self, rule: TrustRule) -> TrustStore:
        """Return a store containing ``rule`` exactly once (idempotent)."""
        if rule in self.rules:
            return self
        return TrustStore(self.rules + (rule,))

    def remove(self, rule: TrustRule) -> TrustStore:
        """Return a store without ``rule``; removing an absent rule is a no-op."""
        if rule not in self.rules:
            return self
        return TrustStore(tuple(r for r in self.rules if r != rule))

    def is_trusted(self, ip: str | IPAddress) -> bool:
        """True iff ``ip`` falls inside at least one rule's network."""
        addr = ipaddress.ip_address(ip) if isinstance(ip, str) else ip
        for rule in self.rules:
            if addr.version == rule.network.version and addr in rule.network:
                return True
        return False

    def __len__(self) -> int:
        return len(self.rules)


def load_trust_file(path: str | os.PathLike[str]) -> TrustStore:
    """Load a trust file: one CIDR per line, '#' comments, blank lines ignored."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TrustFileError(f"cannot read trust file {path}: {exc}") from None
    store = TrustStore()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rule = TrustRule.parse(line)
        except ValueError as exc:
            raise TrustFileError(f"{path}:{lineno}: {exc}") from None
        store = store.add(rule)
    return store


def save_trust_file(path: str | os.PathLike[str], store: TrustStore) -> None:
    """Rewrite the trust file atomically (temp file in place, then rename)."""
    path = Path(path)
    body = "".join(f"{rule.cidr}\n" for rule in store.rules)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(body)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
