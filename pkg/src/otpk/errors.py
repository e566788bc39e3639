"""Machine-stable error codes shared by the agent, the wire protocol, and the CLI."""

from __future__ import annotations

from enum import Enum


class ErrorCode(str, Enum):
    UNTRUSTED_ORIGIN = "UNTRUSTED_ORIGIN"
    UNKNOWN_USER = "UNKNOWN_USER"
    USER_LOCKED = "USER_LOCKED"
    CHAIN_EXHAUSTED = "CHAIN_EXHAUSTED"
    TOKEN_MISMATCH = "TOKEN_MISMATCH"
    TICKET_INVALID = "TICKET_INVALID"
    DUPLICATE_USER = "DUPLICATE_USER"
    INVALID_COUNTER = "INVALID_COUNTER"
    BAD_DIGEST = "BAD_DIGEST"
    BAD_REQUEST = "BAD_REQUEST"


# HTTP status per code. The code is the contract; messages are advisory only.
HTTP_STATUS: dict[ErrorCode, int] = {
    ErrorCode.UNTRUSTED_ORIGIN: 403,
    ErrorCode.UNKNOWN_USER: 404,
    ErrorCode.DUPLICATE_USER: 409,
    ErrorCode.CHAIN_EXHAUSTED: 409,
    ErrorCode.TOKEN_MISMATCH: 401,
    ErrorCode.TICKET_INVALID: 401,
    ErrorCode.USER_LOCKED: 423,
    ErrorCode.BAD_REQUEST: 400,
    ErrorCode.INVALID_COUNTER: 400,
    ErrorCode.BAD_DIGEST: 400,
}


class ApiError(Exception):
    """A protocol-level failure carrying one :class:`ErrorCode`."""

    def __init__(self, code: ErrorCode, message: str = ""):
        super().__init__(message or code.value)
        self.code = code
        self.message = message or code.value

    @property
    def http_status(self) -> int:
        return HTTP_STATUS[self.code]

    def payload(self) -> dict:
        """Wire body for an error response."""
        return {"error": self.code.value, "message": self.message}
