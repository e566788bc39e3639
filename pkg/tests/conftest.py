"""Shared fixtures: disposable gateway environments and an independent hash oracle."""

from __future__ import annotations

import hashlib
import io
import re
import socket
from contextlib import contextmanager, redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

from otpk.cli import main as cli_main
from otpk.gateway import GatewayConfig, serve

LOOPBACK_RULES = ("127.0.0.0/8", "::1/128")


def oracle_chain(secret: str, count: int, alg: str = "sha256") -> bytes:
    """Reference chain walk, written independently of the library's loop."""
    value = secret.encode("utf-8")
    for _ in range(count):
        value = hashlib.new(alg, value).digest()
    return value


def make_config(tmp_path: Path, trust_lines=LOOPBACK_RULES, **kwargs) -> GatewayConfig:
    """Lay out an empty user db and a trust file, return a config pointing at them."""
    bind_address = kwargs.pop("bind_address", "127.0.0.1:0")
    db = tmp_path / "users.db"
    if not db.exists():
        db.write_text("")
    trust = tmp_path / "trust.txt"
    trust.write_text("".join(line + "\n" for line in trust_lines))
    return GatewayConfig(
        bind_address=bind_address,
        user_db_path=str(db),
        trust_path=str(trust),
        **kwargs,
    )


@contextmanager
def running_server(config: GatewayConfig):
    handle = serve(config)
    try:
        yield handle
    finally:
        handle.stop()


@pytest.fixture
def gateway_env(tmp_path):
    """A served gateway on a loopback port with empty state files."""
    config = make_config(tmp_path)
    with running_server(config) as handle:
        yield handle


def run_cli(argv: list[str]) -> tuple[int, str, str]:
    """Invoke the CLI in-process, capturing exit code, stdout, and stderr."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            code = cli_main(argv)
        except SystemExit as exc:  # argparse usage errors
            code = exc.code if isinstance(exc.code, int) else 1
    return code, out.getvalue(), err.getvalue()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def pytest_runtest_logreport(report):
    """Acceptance criteria print a PASS line themselves; print the FAIL twin."""
    if report.when != "call" or not report.failed:
        return
    m = re.search(r"test_acceptance\.py::test_(\d+)_(\w+)", report.nodeid)
    if m:
        print(f"\nACCEPTANCE {int(m.group(1))} FAIL: {m.group(2)}")
