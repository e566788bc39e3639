"""Adversary drills: replay, stolen-verifier, and wordlist attacks.

Each drill produces a report of per-attempt outcomes. The protocol's claims
hold when every replayed token and every stolen verifier is rejected: a spent
token never verifies again because the server already rotated past it, and a
stolen verifier never verifies against itself because the next valid token is
its preimage.

The wordlist drill is the honest counterexample. An eavesdropper who saw one
(challenge, token) pair can test candidate passkeys offline at will; nothing
in the scheme (no salt, no server-side secret) slows that down, so a weak
passkey falls to any list that contains it. This is reported, not fixed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable

from .agent import UserRecord
from .client import OtpkClient
from .errors import ApiError
from .hashchain import HashAlg, chain
from .transcript import Transcript

__all__ = [
    "AttackAttempt",
    "AttackReport",
    "replay_attack",
    "db_compromise_attack",
    "db_compromise_suite",
    "dictionary_attack",
]


@dataclass(frozen=True)
class AttackAttempt:
    index: int
    accepted: bool
    code: str | None = None  # rejection code, when the server gave one
    detail: str = ""

    @property
    def outcome(self) -> str:
        return "ACCEPTED" if self.accepted else "REJECTED"

    def line(self) -> str:
        text = f"ATTEMPT {self.index} {self.outcome}"
        if not self.accepted and self.code:
            text += f" code={self.code}"
        return text


@dataclass
class AttackReport:
    attempts: list[AttackAttempt] = field(default_factory=list)
    recovered: str | None = None

    @property
    def accepted_count(self) -> int:
        return sum(1 for a in self.attempts if a.accepted)

    @property
    def rejected_count(self) -> int:
        return sum(1 for a in self.attempts if not a.accepted)

    def lines(self) -> list[str]:
        out = [a.line() for a in self.attempts]
        if self.recovered is not None:
            out.append(f"RECOVERED {self.recovered}")
        out.append(f"SUMMARY accepted={self.accepted_count} rejected={self.rejected_count}")
        return out

    @property
    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.text)


def _attempt_token(target: OtpkClient, index: int, user_id: str, token_hex: str) -> AttackAttempt:
    try:
        target.complete_auth(user_id, token_hex)
    except ApiError as exc:
        return AttackAttempt(index, accepted=False, code=exc.code.value)
    return AttackAttempt(index, accepted=True)


def replay_attack(transcript: Transcript, target: OtpkClient) -> AttackReport:
    """Resubmit every token the transcript ever carried, in capture order."""
    report = AttackReport()
    index = 0
    for entry in transcript.entries:
        if entry.direction != "send":
            continue
        token_hex = entry.body.get("token_hex")
        user_id = entry.body.get("user_id")
        if not isinstance(token_hex, str) or not isinstance(user_id, str):
            continue
        index += 1
        report.attempts.append(_attempt_token(target, index, user_id, token_hex))
    return report


def db_compromise_attack(stolen: UserRecord, target: OtpkClient) -> AttackAttempt:
    """Submit a stolen record's verifier as if it were the next token."""
    return _attempt_token(target, 1, stolen.user_id, stolen.verifier.hex)


def db_compromise_suite(records: Iterable[UserRecord], target: OtpkClient) -> AttackReport:
    report = AttackReport()
    for index, record in enumerate(records, 1):
        attempt = _attempt_token(target, index, record.user_id, record.verifier.hex)
        report.attempts.append(attempt)
    return report


def dictionary_attack(
    transcript: Transcript,
    wordlist: Iterable[str],
    alg: HashAlg = HashAlg.SHA256,
) -> tuple[str | None, AttackReport]:
    """Offline guess of the passkey behind the transcript's first session.

    Uses the first (challenge, token) pair found: candidate w matches when
    walking w down to the challenge height minus one reproduces the token.
    Returns the first matching word, or None, along with the attempt report.
    """
    pair = _first_session_pair(transcript)
    if pair is None:
        raise ValueError("transcript holds no (challenge, token) pair to attack")
    count, token_hex = pair
    token = bytes.fromhex(token_hex)
    report = AttackReport()
    for index, word in enumerate(wordlist, 1):
        if not word:
            continue
        if chain(word, count - 1, alg) == token:
            report.attempts.append(AttackAttempt(index, accepted=True, detail=word))
            report.recovered = word
            return word, report
        report.attempts.append(AttackAttempt(index, accepted=False))
    return None, report


def _first_session_pair(transcript: Transcript) -> tuple[int, str] | None:
    challenge: int | None = None
    for entry in transcript.entries:
        if entry.direction == "recv" and entry.endpoint == "/v1/auth/begin":
            count = entry.body.get("p")
            if isinstance(count, int):
                challenge = count
        elif entry.direction == "send" and entry.endpoint == "/v1/auth/complete":
            token_hex = entry.body.get("token_hex")
            if challenge is not None and isinstance(token_hex, str):
                return challenge, token_hex
    return None
