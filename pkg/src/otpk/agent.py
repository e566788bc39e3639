"""Server-side authentication agent: one verifier per user, rotated per login.

The agent stores, per user, a counter and the chain value at that height (the
verifier). A login token is valid when one hash application reproduces the
verifier; on success the agent overwrites the verifier with the token it just
accepted and decrements the counter, so every token works exactly once and a
replay finds the verifier already rotated past it. Knowing the stored
verifier is equally useless: it never verifies against itself because the
next valid token is its preimage.

At counter 1 the chain is spent. Nothing further can be proven safely (the
next value down is the raw passkey), so the user must reinitialize with one
last valid token of the old chain, or be re-registered out of band.

Concurrency contract: per-user updates are linearizable. Verification and
rotation happen under a per-user lock, and the registry file is rewritten
atomically before the in-memory state is published, so a failed or crashed
operation never leaves a half-applied record. Distinct users contend only on
the short file-write section.
"""

from __future__ import annotations

import os
import secrets
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable

from .errors import ApiError, ErrorCode
from .hashchain import Digest, HashAlg, verify_step

__all__ = [
    "UserStatus",
    "UserRecord",
    "AuthChallenge",
    "SessionTicket",
    "UserStore",
    "UserStoreError",
    "AuthAgent",
]

# Characters that would corrupt the line-oriented registry file.
_FORBIDDEN_IN_USER_ID = ("\t", "\n", "\r", "/")


class UserStatus(Enum):
    ACTIVE = "active"
    LOCKED = "locked"


@dataclass(frozen=True)
class UserRecord:
    """One user's authentication state.

    ``counter`` is the remaining chain length; ``verifier`` is the chain value
    at that height. Within one chain the counter only ever decreases, and each
    rotation preserves hash_once(new verifier) == old verifier.
    """

    user_id: str
    alg: HashAlg
    counter: int
    verifier: Digest
    status: UserStatus = UserStatus.ACTIVE


@dataclass(frozen=True)
class AuthChallenge:
    """What the server reveals in phase 1: the user's current counter."""

    user_id: str
    counter: int


@dataclass
class SessionTicket:
    """Single-use, short-lived bridge from a successful login to the protected call."""

    ticket_id: str
    user_id: str
    issued_at: float
    ttl: float
    consumed: bool = False


class UserStoreError(ValueError):
    """The registry file is unreadable or malformed; message carries path and line."""


class UserStore:
    """Tab-separated on-disk user registry, rewritten atomically on every change.

    Line format: user_id, algorithm name, decimal counter, lowercase-hex
    verifier, status. The whole file is loaded at startup and any malformed
    line aborts the load with its line number.
    """

    def __init__(self, path: str | os.PathLike[str]):
        self.path = Path(path)

    def load(self) -> dict[str, UserRecord]:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise UserStoreError(f"cannot read user db {self.path}: {exc}") from None
        records: dict[str, UserRecord] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise UserStoreError(
                    f"{self.path}:{lineno}: expected 5 tab-separated fields, "
                    f"got {len(parts)}"
                )
            user_id, alg_name, counter_text, verifier_hex, status_text = parts
            if not user_id:
                raise UserStoreError(f"{self.path}:{lineno}: empty user id")
            if user_id in records:
                raise UserStoreError(
                    f"{self.path}:{lineno}: duplicate user {user_id!r}"
                )
            if verifier_hex != verifier_hex.lower():
                raise UserStoreError(
                    f"{self.path}:{lineno}: verifier must be lowercase hex"
                )
            try:
                alg = HashAlg.from_name(alg_name)
                counter = int(counter_text)
                verifier = Digest.from_hex(verifier_hex, alg)
                status = UserStatus(status_text)
            except ValueError as exc:
                raise UserStoreError(f"{self.path}:{lineno}: {exc}") from None
            if counter < 1:
                raise UserStoreError(
                    f"{self.path}:{lineno}: counter must be >= 1, got {counter}"
                )
            records[user_id] = UserRecord(user_id, alg, counter, verifier, status)
        return records

    def write(self, records: dict[str, UserRecord]) -> None:
        """Write the full registry to a temp file, fsync, then rename over."""
        lines = []
        for record in records.values():
            lines.append(
                "\t".join(
                    (
                        record.user_id,
                        record.alg.value,
                        str(record.counter),
                        record.verifier.hex,
                        record.status.value,
                    )
                )
            )
        body = "".join(line + "\n" for line in lines)
        fd, tmp_name = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(body)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, self.path)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except OSError:
                pass
            raise


def _validate_user_id(user_id: str) -> None:
    if not isinstance(user_id, str) or not user_id:
        raise ApiError(ErrorCode.BAD_REQUEST, "user_id must be a non-empty string")
    if any(ch in user_id for ch in _FORBIDDEN_IN_USER_ID):
        raise ApiError(
            ErrorCode.BAD_REQUEST,
            "user_id may not contain tabs, newlines, or '/'",
        )


class AuthAgent:
    """The authentication agent itself.

    ``store`` is optional: without one the agent is purely in-memory, which is
    convenient for tests and embedding. ``clock`` exists so ticket expiry can
    be driven deterministically.
    """

    def __init__(
        self,
        store: UserStore | None = None,
        *,
        ticket_ttl: float = 60.0,
        clock: Callable[[], float] = time.time,
    ):
        if ticket_ttl <= 0:
            raise ValueError(f"ticket_ttl must be > 0, got {ticket_ttl}")
        self._store = store
        self._records: dict[str, UserRecord] = store.load() if store is not None else {}
        self._tickets: dict[str, SessionTicket] = {}
        self._user_locks: dict[str, threading.Lock] = {}
        self._maps_lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._ticket_ttl = float(ticket_ttl)
        self._clock = clock

    # -- registry plumbing ---------------------------------------------------

    def _lock_for(self, user_id: str) -> threading.Lock:
        with self._maps_lock:
            lock = self._user_locks.get(user_id)
            if lock is None:
                lock = self._user_locks.setdefault(user_id, threading.Lock())
            return lock

    def _commit(self, user_id: str, record: UserRecord | None) -> None:
        """Persist the registry with ``record`` applied, then publish it.

        File first, memory second: an I/O failure leaves observable state
        untouched. Callers hold the user's lock, so two commits for the same
        user cannot interleave; the write lock serializes the snapshot+rename
        across users.
        """
        with self._write_lock:
            snapshot = dict(self._records)
            if record is None:
                snapshot.pop(user_id, None)
            else:
                snapshot[user_id] = record
            if self._store is not None:
                self._store.write(snapshot)
            self._records = snapshot

    def known_users(self) -> list[str]:
        return list(self._records)

    # -- protocol operations ---------------------------------------------------

    def register(self, user_id: str, counter: int, verifier: Digest) -> UserRecord:
        """Create a user from a freshly built chain.

        A chain registered at counter 1 could never authenticate (its only
        remaining step down is the raw passkey), so the minimum is 2.
        """
        _validate_user_id(user_id)
        if not isinstance(counter, int) or isinstance(counter, bool):
            raise ApiError(ErrorCode.BAD_REQUEST, "counter must be an integer")
        if counter < 2:
            raise ApiError(
                ErrorCode.INVALID_COUNTER,
                f"counter must be >= 2 (a chain registered at 1 is already spent), got {counter}",
            )
        with self._lock_for(user_id):
            if user_id in self._records:
                raise ApiError(ErrorCode.DUPLICATE_USER, f"user {user_id!r} already exists")
            record = UserRecord(user_id, verifier.alg, counter, verifier)
            self._commit(user_id, record)
            return record

    def begin_auth(self, user_id: str) -> AuthChallenge:
        """Phase 1: hand out the current counter. Never mutates anything."""
        record = self._records.get(user_id)
        if record is None:
            raise ApiError(ErrorCode.UNKNOWN_USER, f"no such user {user_id!r}")
        if record.status is UserStatus.LOCKED:
            raise ApiError(ErrorCode.USER_LOCKED, f"user {user_id!r} is locked")
        if record.counter == 1:
            raise ApiError(
                ErrorCode.CHAIN_EXHAUSTED,
                "chain exhausted; reinitialize with a fresh passkey",
            )
        return AuthChallenge(user_id, record.counter)

    def complete_auth(self, user_id: str, token: Digest | bytes) -> SessionTicket:
        """Phase 2: verify the token and rotate the verifier atomically.

        On success the stored pair becomes (counter-1, token) and a fresh
        single-use ticket is issued. On any failure the record is untouched,
        byte for byte. Concurrent submissions of the same valid token race on
        the user lock: exactly one wins, the rest see the rotated verifier and
        get TOKEN_MISMATCH.
        """
        with self._lock_for(user_id):
            record = self._records.get(user_id)
            if record is None:
                raise ApiError(ErrorCode.UNKNOWN_USER, f"no such user {user_id!r}")
            if record.status is UserStatus.LOCKED:
                raise ApiError(ErrorCode.USER_LOCKED, f"user {user_id!r} is locked")
            if record.counter == 1:
                raise ApiError(
                    ErrorCode.CHAIN_EXHAUSTED,
                    "chain exhausted; reinitialize with a fresh passkey",
                )
            token_digest = self._as_token(token, record.alg)
            if token_digest is None or not verify_step(token_digest, record.verifier):
                raise ApiError(
                    ErrorCode.TOKEN_MISMATCH,
                    "token does not hash to the stored verifier",
                )
            rotated = replace(record, counter=record.counter - 1, verifier=token_digest)
            self._commit(user_id, rotated)
        return self._issue_ticket(user_id)

    def reinit(
        self,
        user_id: str,
        token: Digest | bytes,
        new_counter: int,
        new_verifier: Digest | bytes,
        *,
        new_alg: HashAlg | None = None,
    ) -> UserRecord:
        """Swap in a fresh chain, authorized by one valid token of the old one.

        The old chain dies entirely: none of its remaining values verify
        afterwards. At counter 1 there is no token left to authorize with, so
        reinit is refused and only out-of-band re-registration remains.
        """
        if not isinstance(new_counter, int) or isinstance(new_counter, bool):
            raise ApiError(ErrorCode.BAD_REQUEST, "new counter must be an integer")
        if new_counter < 2:
            raise ApiError(
                ErrorCode.INVALID_COUNTER,
                f"new counter must be >= 2, got {new_counter}",
            )
        with self._lock_for(user_id):
            record = self._records.get(user_id)
            if record is None:
                raise ApiError(ErrorCode.UNKNOWN_USER, f"no such user {user_id!r}")
            if record.status is UserStatus.LOCKED:
                raise ApiError(ErrorCode.USER_LOCKED, f"user {user_id!r} is locked")
            if record.counter == 1:
                raise ApiError(
                    ErrorCode.CHAIN_EXHAUSTED,
                    "chain exhausted; no token left to authorize reinit, "
                    "re-register out of band",
                )
            alg = new_alg or record.alg
            if isinstance(new_verifier, Digest):
                fresh_verifier = new_verifier
            else:
                try:
                    fresh_verifier = Digest(new_verifier, alg)
                except ValueError as exc:
                    raise ApiError(ErrorCode.BAD_DIGEST, str(exc)) from None
            token_digest = self._as_token(token, record.alg)
            if token_digest is None or not verify_step(token_digest, record.verifier):
                raise ApiError(
                    ErrorCode.TOKEN_MISMATCH,
                    "token does not hash to the stored verifier",
                )
            fresh = UserRecord(user_id, fresh_verifier.alg, new_counter, fresh_verifier)
            self._commit(user_id, fresh)
            return fresh

    def redeem_ticket(self, ticket_id: str) -> str:
        """Consume a ticket, returning its owner. Valid exactly once, pre-expiry."""
        now = self._clock()
        with self._maps_lock:
            ticket = self._tickets.get(ticket_id)
            if (
                ticket is None
                or ticket.consumed
                or now >= ticket.issued_at + ticket.ttl
            ):
                raise ApiError(
                    ErrorCode.TICKET_INVALID,
                    "ticket absent, expired, or already used",
                )
            ticket.consumed = True
            return ticket.user_id

    # -- administration ----------------------------------------------------------

    def delete_user(self, user_id: str) -> None:
        with self._lock_for(user_id):
            if user_id not in self._records:
                raise ApiError(ErrorCode.UNKNOWN_USER, f"no such user {user_id!r}")
            self._commit(user_id, None)

    def lock_user(self, user_id: str) -> UserRecord:
        with self._lock_for(user_id):
            record = self._records.get(user_id)
            if record is None:
                raise ApiError(ErrorCode.UNKNOWN_USER, f"no such user {user_id!r}")
            locked = replace(record, status=UserStatus.LOCKED)
            self._commit(user_id, locked)
            return locked

    # -- internals ----------------------------------------------------------------

    @staticmethod
    def _as_token(token: Digest | bytes, alg: HashAlg) -> Digest | None:
        """Coerce a submitted token to the record's algorithm.

        A token of the wrong length or algorithm cannot possibly verify, so it
        is reported as a mismatch (None), not as a malformed request: by the
        time we are here the request was syntactically fine.
        """
        if isinstance(token, Digest):
            return token if token.alg is alg else None
        try:
            return Digest(token, alg)
        except ValueError:
            return None

    def _issue_ticket(self, user_id: str) -> SessionTicket:
        ticket = SessionTicket(
            ticket_id=secrets.token_hex(16),
            user_id=user_id,
            issued_at=self._clock(),
            ttl=self._ticket_ttl,
        )
        with self._maps_lock:
            self._tickets[ticket.ticket_id] = ticket
        return ticket
