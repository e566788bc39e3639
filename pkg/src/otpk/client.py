"""Client SDK: HTTP caller plus the chain-side arithmetic.

The passkey never leaves the process that holds it. Everything put on the
wire is a chain-derived digest at height >= 1, or plain metadata. The client
keeps no counter of its own; it learns the current height from the server's
challenge every time, so it cannot drift out of sync.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Mapping
from urllib.parse import quote

from .errors import ApiError, ErrorCode
from .hashchain import Digest, HashAlg, Passkey, chain_digest
from .transcript import Transcript

__all__ = ["TransportError", "OtpkClient", "ChainSession"]

_JSON_HEADERS = {"Content-Type": "application/json"}


class TransportError(RuntimeError):
    """Could not reach the server, or could not make sense of its reply."""


class OtpkClient:
    """Thin JSON-over-HTTP caller for the gateway endpoints.

    When a transcript is attached, every request and response body is
    recorded verbatim, which is what the adversary drills feed on.
    """

    def __init__(
        self,
        server: str,
        *,
        timeout: float = 10.0,
        transcript: Transcript | None = None,
        extra_headers: Mapping[str, str] | None = None,
    ):
        self.base_url = server if "://" in server else f"http://{server}"
        self.base_url = self.base_url.rstrip("/")
        self.timeout = timeout
        self.transcript = transcript
        self.extra_headers = dict(extra_headers or {})

    # -- endpoint wrappers -----------------------------------------------------

    def register(self, user_id: str, count: int, verifier_hex: str, alg: str | None = None) -> dict:
        body = {"user_id": user_id, "p": count, "verifier_hex": verifier_hex}
        if alg is not None:
            body["alg"] = alg
        return self._request("POST", "/v1/register", body)

    def begin_auth(self, user_id: str) -> int:
        reply = self._request("POST", "/v1/auth/begin", {"user_id": user_id})
        count = reply.get("p")
        if not isinstance(count, int):
            raise TransportError(f"malformed challenge reply: {reply!r}")
        return count

    def complete_auth(self, user_id: str, token_hex: str) -> dict:
        return self._request(
            "POST", "/v1/auth/complete", {"user_id": user_id, "token_hex": token_hex}
        )

    def reinit(
        self,
        user_id: str,
        token_hex: str,
        new_count: int,
        new_verifier_hex: str,
        alg: str | None = None,
    ) -> dict:
        body = {
            "user_id": user_id,
            "token_hex": token_hex,
            "new_p": new_count,
            "new_verifier_hex": new_verifier_hex,
        }
        if alg is not None:
            body["alg"] = alg
        return self._request("POST", "/v1/reinit", body)

    def mine(self, ticket_id: str, task: str, payload: dict) -> dict:
        reply = self._request(
            "POST", "/v1/mine", {"ticket_id": ticket_id, "task": task, "payload": payload}
        )
        return reply.get("result", reply)

    def admin_trust_add(self, cidr: str) -> list[str]:
        return self._request("POST", "/v1/admin/trust", {"cidr": cidr})["rules"]

    def admin_trust_remove(self, cidr: str) -> list[str]:
        return self._request("DELETE", "/v1/admin/trust", {"cidr": cidr})["rules"]

    def admin_trust_list(self) -> list[str]:
        return self._request("GET", "/v1/admin/trust", None)["rules"]

    def admin_user_delete(self, user_id: str) -> dict:
        return self._request("DELETE", f"/v1/admin/users/{quote(user_id, safe='')}", None)

    def admin_user_lock(self, user_id: str) -> dict:
        return self._request("POST", f"/v1/admin/users/{quote(user_id, safe='')}/lock", None)

    # -- transport ----------------------------------------------------------------

    def _request(self, method: str, path: str, body: dict | None) -> dict:
        data = json.dumps(body).encode("utf-8") if body is not None else None
        if self.transcript is not None and body is not None:
            self.transcript.append("send", path, body)
        request = urllib.request.Request(
            self.base_url + path,
            data=data,
            headers={**_JSON_HEADERS, **self.extra_headers},
            method=method,
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                reply = self._decode(response.read())
        except urllib.error.HTTPError as exc:
            reply = self._decode(exc.read())
            if self.transcript is not None:
                self.transcript.append("recv", path, reply)
            raise self._as_api_error(reply) from None
        except urllib.error.URLError as exc:
            raise TransportError(f"cannot reach {self.base_url}: {exc.reason}") from None
        if self.transcript is not None:
            self.transcript.append("recv", path, reply)
        return reply

    @staticmethod
    def _decode(raw: bytes) -> dict:
        try:
            reply = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise TransportError(f"server sent a non-JSON reply: {raw[:200]!r}") from None
        if not isinstance(reply, dict):
            raise TransportError(f"server reply is not an object: {reply!r}")
        return reply

    @staticmethod
    def _as_api_error(reply: dict) -> Exception:
        code_text = reply.get("error")
        try:
            code = ErrorCode(code_text)
        except ValueError:
            return TransportError(f"server error outside the protocol: {reply!r}")
        return ApiError(code, reply.get("message", ""))


@dataclass
class ChainSession:
    """One user's view of their chain: the passkey plus a client to talk through."""

    user_id: str
    passkey: Passkey
    client: OtpkClient
    alg: HashAlg = HashAlg.SHA256

    def init_chain(self, count: int) -> dict:
        """Build a chain of the given length and register its top value."""
        if count < 2:
            raise ApiError(
                ErrorCode.INVALID_COUNTER,
                f"count must be >= 2 (a chain of 1 admits zero logins), got {count}",
            )
        verifier = chain_digest(self.passkey, count, self.alg)
        return self.client.register(self.user_id, count, verifier.hex, self.alg.value)

    def next_token(self, challenge_count: int) -> Digest:
        """The single-use answer to a challenge: the chain value one step down.

        Refuses a challenge of 1, which would require revealing height 0, the
        raw passkey.
        """
        if challenge_count < 2:
            raise ApiError(
                ErrorCode.CHAIN_EXHAUSTED,
                "challenge counter is at 1: the chain is spent, reinitialize",
            )
        return chain_digest(self.passkey, challenge_count - 1, self.alg)

    def authenticate(self) -> dict:
        """Run the two-phase flow; returns the ticket reply on success."""
        count = self.client.begin_auth(self.user_id)
        token = self.next_token(count)
        return self.client.complete_auth(self.user_id, token.hex)

    def mine(self, ticket_id: str, task: str, payload: dict) -> dict:
        return self.client.mine(ticket_id, task, payload)

    def reinit_chain(
        self,
        new_passkey: Passkey,
        new_count: int,
        new_alg: HashAlg | None = None,
    ) -> dict:
        """Spend one token of the old chain to swap in a brand-new one."""
        if new_count < 2:
            raise ApiError(
                ErrorCode.INVALID_COUNTER,
                f"new count must be >= 2, got {new_count}",
            )
        alg = new_alg or self.alg
        count = self.client.begin_auth(self.user_id)
        token = self.next_token(count)
        new_verifier = chain_digest(new_passkey, new_count, alg)
        reply = self.client.reinit(
            self.user_id, token.hex, new_count, new_verifier.hex, alg.value
        )
        self.passkey = new_passkey
        self.alg = alg
        return reply
