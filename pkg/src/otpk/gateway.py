"""The network-facing gateway: trust first, then identity, then credential, then work.

The pipeline order is observable through error codes. An untrusted source
sees UNTRUSTED_ORIGIN no matter how broken the rest of its request is; a
trusted one learns about request shape (BAD_REQUEST) before user state
(UNKNOWN_USER, USER_LOCKED, CHAIN_EXHAUSTED) and only then about its
credential (TOKEN_MISMATCH). Nothing mutates for a request rejected at the
trust stage.

Wire protocol: HTTP with UTF-8 JSON bodies. Success responses carry a result
body; failures carry {"error": <code>, "message": <text>} with a status
dictated by the code. The source address is the socket peer; an
X-Forwarded-For header is honored only when the deployment explicitly opts in
(anyone who can reach the socket can forge the header, so only a trusted
reverse proxy makes that safe).
"""

from __future__ import annotations

import ipaddress
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import unquote

from .agent import AuthAgent, UserStore
from .errors import ApiError, ErrorCode
from .hashchain import Digest, HashAlg
from .mining import MiningError, kmeans, parse_dataset
from .trust import TrustRule, TrustStore, load_trust_file, save_trust_file

__all__ = ["GatewayConfig", "GatewayStartupError", "Gateway", "ServerHandle", "serve"]

log = logging.getLogger("otpk.gateway")

# Admin surfaces fall back to loopback-only when no admin trust file is given.
_DEFAULT_ADMIN_NETWORKS = ("127.0.0.0/8", "::1/128")

_USER_PATH = re.compile(r"/v1/admin/users/([^/]+)")
_USER_LOCK_PATH = re.compile(r"/v1/admin/users/([^/]+)/lock")


class GatewayStartupError(RuntimeError):
    """The service cannot come up; message names the offending path or address."""


@dataclass
class GatewayConfig:
    bind_address: str
    user_db_path: str
    trust_path: str
    default_alg: HashAlg = HashAlg.SHA256
    ticket_ttl: float = 60.0
    max_body: int = 1 << 20
    admin_trust_path: str | None = None
    trust_forwarded_for: bool = False

    def __post_init__(self) -> None:
        if self.ticket_ttl <= 0:
            raise ValueError(f"ticket_ttl must be > 0, got {self.ticket_ttl}")
        if self.max_body <= 0:
            raise ValueError(f"max_body must be > 0, got {self.max_body}")


@dataclass(frozen=True)
class _Route:
    handler: Callable
    admin: bool = False


class Gateway:
    """Request dispatcher. Pure with respect to transport: feed it a parsed
    request (method, path, source IP, raw body) and it returns (status, body)."""

    def __init__(self, config: GatewayConfig, *, clock: Callable[[], float] = time.time):
        self.config = config
        try:
            self._trust = load_trust_file(config.trust_path)
        except ValueError as exc:
            raise GatewayStartupError(str(exc)) from None
        if config.admin_trust_path is not None:
            try:
                self._admin_trust = load_trust_file(config.admin_trust_path)
            except ValueError as exc:
                raise GatewayStartupError(str(exc)) from None
        else:
            self._admin_trust = TrustStore(
                tuple(TrustRule.parse(c) for c in _DEFAULT_ADMIN_NETWORKS)
            )
        try:
            self.agent = AuthAgent(
                UserStore(config.user_db_path),
                ticket_ttl=config.ticket_ttl,
                clock=clock,
            )
        except ValueError as exc:
            raise GatewayStartupError(str(exc)) from None
        self._trust_write_lock = threading.Lock()
        self._routes = {
            ("POST", "/v1/register"): _Route(self._ep_register, admin=True),
            ("POST", "/v1/auth/begin"): _Route(self._ep_begin),
            ("POST", "/v1/auth/complete"): _Route(self._ep_complete),
            ("POST", "/v1/reinit"): _Route(self._ep_reinit),
            ("POST", "/v1/mine"): _Route(self._ep_mine),
            ("POST", "/v1/admin/trust"): _Route(self._ep_trust_add, admin=True),
            ("DELETE", "/v1/admin/trust"): _Route(self._ep_trust_remove, admin=True),
            ("GET", "/v1/admin/trust"): _Route(self._ep_trust_list, admin=True),
        }

    # -- request entry point ---------------------------------------------------

    def handle(self, method: str, path: str, source_ip: str, body: bytes) -> tuple[int, dict]:
        try:
            return self._dispatch(method, path, source_ip, body)
        except ApiError as exc:
            return exc.http_status, exc.payload()
        except Exception:
            log.exception("unhandled error for %s %s", method, path)
            return 500, {"error": "INTERNAL", "message": "internal error"}

    def _dispatch(self, method: str, path: str, source_ip: str, body: bytes) -> tuple[int, dict]:
        addr = self._parse_ip(source_ip)
        if addr is None or not self._trust.is_trusted(addr):
            raise ApiError(
                ErrorCode.UNTRUSTED_ORIGIN,
                f"source {source_ip!r} is not in a trusted network",
            )
        route, args = self._match(method, path)
        if route.admin and not self._admin_trust.is_trusted(addr):
            raise ApiError(
                ErrorCode.UNTRUSTED_ORIGIN,
                f"source {source_ip!r} is not in the admin trust set",
            )
        if len(body) > self.config.max_body:
            raise ApiError(
                ErrorCode.BAD_REQUEST,
                f"body exceeds max_body ({self.config.max_body} bytes)",
            )
        payload = self._parse_json(body)
        return route.handler(payload, *args)

    @staticmethod
    def _parse_ip(source_ip: str):
        try:
            return ipaddress.ip_address(source_ip)
        except ValueError:
            return None  # unparseable source: fail closed

    @staticmethod
    def _parse_json(body: bytes) -> dict:
        if not body:
            return {}
        try:
            payload = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ApiError(ErrorCode.BAD_REQUEST, f"body is not valid JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise ApiError(ErrorCode.BAD_REQUEST, "body must be a JSON object")
        return payload

    def _match(self, method: str, path: str) -> tuple[_Route, tuple]:
        route = self._routes.get((method, path))
        if route is not None:
            return route, ()
        m = _USER_LOCK_PATH.fullmatch(path)
        if m and method == "POST":
            return _Route(self._ep_user_lock, admin=True), (unquote(m.group(1)),)
        m = _USER_PATH.fullmatch(path)
        if m and method == "DELETE":
            return _Route(self._ep_user_delete, admin=True), (unquote(m.group(1)),)
        raise ApiError(ErrorCode.BAD_REQUEST, f"no such endpoint: {method} {path}")

    # -- field extraction helpers ---------------------------------------------

    @staticmethod
    def _require_str(payload: dict, name: str) -> str:
        value = payload.get(name)
        if not isinstance(value, str) or not value:
            raise ApiError(ErrorCode.BAD_REQUEST, f"field {name!r} must be a non-empty string")
        return value

    @staticmethod
    def _require_int(payload: dict, name: str) -> int:
        value = payload.get(name)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ApiError(ErrorCode.BAD_REQUEST, f"field {name!r} must be an integer")
        return value

    def _alg_from(self, payload: dict) -> HashAlg:
        name = payload.get("alg")
        if name is None:
            return self.config.default_alg
        if not isinstance(name, str):
            raise ApiError(ErrorCode.BAD_REQUEST, "field 'alg' must be a string")
        try:
            return HashAlg.from_name(name)
        except ValueError as exc:
            raise ApiError(ErrorCode.BAD_REQUEST, str(exc)) from None

    @staticmethod
    def _digest_field(payload: dict, name: str, alg: HashAlg) -> Digest:
        text = payload.get(name)
        if not isinstance(text, str):
            raise ApiError(ErrorCode.BAD_REQUEST, f"field {name!r} must be a hex string")
        try:
            return Digest.from_hex(text, alg)
        except ValueError as exc:
            raise ApiError(ErrorCode.BAD_DIGEST, str(exc)) from None

    @staticmethod
    def _token_bytes(payload: dict, name: str = "token_hex") -> bytes:
        """Token syntax check only; its length is judged against the user's
        algorithm later, as an authentication failure rather than a 400."""
        text = payload.get(name)
        if not isinstance(text, str) or not text:
            raise ApiError(ErrorCode.BAD_REQUEST, f"field {name!r} must be a hex string")
        try:
            return bytes.fromhex(text)
        except ValueError:
            raise ApiError(ErrorCode.BAD_REQUEST, f"field {name!r} is not hex") from None

    # -- endpoints ----------------------------------------------------------------

    def _ep_register(self, payload: dict) -> tuple[int, dict]:
        user_id = self._require_str(payload, "user_id")
        counter = self._require_int(payload, "p")
        alg = self._alg_from(payload)
        verifier = self._digest_field(payload, "verifier_hex", alg)
        record = self.agent.register(user_id, counter, verifier)
        return 201, {"user_id": record.user_id, "p": record.counter}

    def _ep_begin(self, payload: dict) -> tuple[int, dict]:
        user_id = self._require_str(payload, "user_id")
        challenge = self.agent.begin_auth(user_id)
        return 200, {"p": challenge.counter}

    def _ep_complete(self, payload: dict) -> tuple[int, dict]:
        user_id = self._require_str(payload, "user_id")
        token = self._token_bytes(payload)
        ticket = self.agent.complete_auth(user_id, token)
        return 200, {"ticket_id": ticket.ticket_id, "ttl_seconds": ticket.ttl}

    def _ep_reinit(self, payload: dict) -> tuple[int, dict]:
        user_id = self._require_str(payload, "user_id")
        token = self._token_bytes(payload)
        new_counter = self._require_int(payload, "new_p")
        new_alg = None
        if "alg" in payload:
            new_alg = self._alg_from(payload)
        new_verifier = self._token_bytes(payload, "new_verifier_hex")
        record = self.agent.reinit(
            user_id, token, new_counter, new_verifier, new_alg=new_alg
        )
        return 200, {"user_id": record.user_id, "p": record.counter}

    def _ep_mine(self, payload: dict) -> tuple[int, dict]:
        ticket_id = self._require_str(payload, "ticket_id")
        task = self._require_str(payload, "task")
        job = payload.get("payload")
        if not isinstance(job, dict):
            raise ApiError(ErrorCode.BAD_REQUEST, "field 'payload' must be an object")
        # Authentication before resource use: the ticket burns even if the
        # job inside turns out to be malformed.
        user_id = self.agent.redeem_ticket(ticket_id)
        if task != "kmeans":
            raise ApiError(ErrorCode.BAD_REQUEST, f"unknown task {task!r}")
        csv_text = job.get("csv")
        if not isinstance(csv_text, str):
            raise ApiError(ErrorCode.BAD_REQUEST, "payload field 'csv' must be a string")
        k = self._require_int(job, "k")
        max_iters = 100
        if "max_iters" in job:
            max_iters = self._require_int(job, "max_iters")
        try:
            data = parse_dataset(csv_text)
            result = kmeans(data, k, max_iters)
        except MiningError as exc:
            raise ApiError(ErrorCode.BAD_REQUEST, f"{exc.code}: {exc.message}") from None
        log.info("mined kmeans for %s: %d points, k=%d", user_id, len(data.points), k)
        return 200, {
            "result": {
                "centroids": [list(c) for c in result.centroids],
                "assignments": list(result.assignments),
                "iterations_run": result.iterations_run,
                "sse": result.sse,
            }
        }

    def _ep_trust_add(self, payload: dict) -> tuple[int, dict]:
        rule = self._parse_rule(payload)
        with self._trust_write_lock:
            updated = self._trust.add(rule)
            save_trust_file(self.config.trust_path, updated)
            self._trust = updated
        return 200, {"rules": [r.cidr for r in self._trust.rules]}

    def _ep_trust_remove(self, payload: dict) -> tuple[int, dict]:
        rule = self._parse_rule(payload)
        with self._trust_write_lock:
            updated = self._trust.remove(rule)
            save_trust_file(self.config.trust_path, updated)
            self._trust = updated
        return 200, {"rules": [r.cidr for r in self._trust.rules]}

    def _ep_trust_list(self, payload: dict) -> tuple[int, dict]:
        return 200, {"rules": [r.cidr for r in self._trust.rules]}

    def _parse_rule(self, payload: dict) -> TrustRule:
        cidr = self._require_str(payload, "cidr")
        try:
            return TrustRule.parse(cidr)
        except ValueError as exc:
            raise ApiError(ErrorCode.BAD_REQUEST, str(exc)) from None

    def _ep_user_delete(self, payload: dict, user_id: str) -> tuple[int, dict]:
        self.agent.delete_user(user_id)
        return 200, {"user_id": user_id, "deleted": True}

    def _ep_user_lock(self, payload: dict, user_id: str) -> tuple[int, dict]:
        record = self.agent.lock_user(user_id)
        return 200, {"user_id": user_id, "status": record.status.value}


# -- HTTP plumbing ------------------------------------------------------------------


class _GatewayServer(ThreadingHTTPServer):
    # Non-daemon handler threads so shutdown drains in-flight requests.
    daemon_threads = False
    allow_reuse_address = True
    gateway: Gateway


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _GatewayServer

    def do_POST(self) -> None:
        self._serve("POST")

    def do_GET(self) -> None:
        self._serve("GET")

    def do_DELETE(self) -> None:
        self._serve("DELETE")

    def _serve(self, method: str) -> None:
        gateway = self.server.gateway
        config = gateway.config
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            err = ApiError(ErrorCode.BAD_REQUEST, "bad Content-Length header")
            self._respond(err.http_status, err.payload())
            return
        if length > config.max_body:
            err = ApiError(
                ErrorCode.BAD_REQUEST,
                f"body exceeds max_body ({config.max_body} bytes)",
            )
            self._respond(err.http_status, err.payload())
            return
        body = self.rfile.read(length) if length > 0 else b""
        source_ip = self.client_address[0]
        if config.trust_forwarded_for:
            forwarded = self.headers.get("X-Forwarded-For")
            if forwarded:
                source_ip = forwarded.split(",")[0].strip()
        status, payload = gateway.handle(method, self.path, source_ip, body)
        self._respond(status, payload)

    def _respond(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Connection", "close")
        self.end_headers()
        self.wfile.write(data)
        self.close_connection = True

    def log_message(self, format: str, *args) -> None:
        log.debug("%s %s", self.address_string(), format % args)


@dataclass
class ServerHandle:
    """A running gateway; ``stop()`` drains in-flight requests and closes."""

    server: _GatewayServer
    thread: threading.Thread
    gateway: Gateway = field(init=False)

    def __post_init__(self) -> None:
        self.gateway = self.server.gateway

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"{host}:{port}"

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()


def _split_bind(bind_address: str) -> tuple[str, int]:
    host, sep, port_text = bind_address.rpartition(":")
    if not sep or not host:
        raise GatewayStartupError(
            f"bind address must be host:port, got {bind_address!r}"
        )
    try:
        port = int(port_text)
    except ValueError:
        raise GatewayStartupError(f"bad port in bind address {bind_address!r}") from None
    return host, port


def serve(config: GatewayConfig, *, clock: Callable[[], float] = time.time) -> ServerHandle:
    """Load state, bind, and start serving on a background thread."""
    gateway = Gateway(config, clock=clock)
    host, port = _split_bind(config.bind_address)
    try:
        server = _GatewayServer((host, port), _Handler)
    except OSError as exc:
        raise GatewayStartupError(f"cannot bind {config.bind_address}: {exc}") from None
    server.gateway = gateway
    thread = threading.Thread(target=server.serve_forever, name="otpk-gateway", daemon=True)
    thread.start()
    bound_host, bound_port = server.server_address[:2]
    log.info("gateway listening on %s:%d", bound_host, bound_port)
    return ServerHandle(server, thread)
