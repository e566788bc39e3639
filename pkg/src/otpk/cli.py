"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 protocol error (the error code is
printed on a single line to stderr), 1 transport or internal failure.
"""

from __future__ import annotations

import argparse
import getpass
import json
import logging
import os
import signal
import sys
import threading

from .agent import UserStore
from .attacks import (
    db_compromise_suite,
    dictionary_attack,
    replay_attack,
)
from .client import ChainSession, OtpkClient, TransportError
from .errors import ApiError, ErrorCode
from .gateway import GatewayConfig, GatewayStartupError, serve
from .hashchain import HashAlg, Passkey, chain
from .transcript import Transcript

log = logging.getLogger("otpk.cli")

_EXIT_OK = 0
_EXIT_FAILURE = 1
_EXIT_PROTOCOL = 3
# usage errors exit 2, produced by argparse itself


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ApiError as exc:
        print(f"{exc.code.value}: {exc.message}", file=sys.stderr)
        if exc.code is ErrorCode.CHAIN_EXHAUSTED:
            print(
                "chain exhausted: pick a new passkey and run "
                "`otpk reinit --new-count <n>` while one token remains, "
                "or re-register the user out of band",
                file=sys.stderr,
            )
        return _EXIT_PROTOCOL
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return _EXIT_FAILURE
    except GatewayStartupError as exc:
        print(f"startup error: {exc}", file=sys.stderr)
        return _EXIT_FAILURE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_FAILURE


# -- argument plumbing -----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otpk",
        description="One-time passkey authentication: client, server, and attack drills.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chain", help="print a chain value (debug / oracle parity)")
    p.add_argument("--passkey", help="passkey (else OTPK_PASSKEY or prompt)")
    p.add_argument("--count", type=int, required=True, help="chain height, >= 0")
    _add_alg(p)
    p.set_defaults(func=_cmd_chain)

    p = sub.add_parser("init", help="register a user with a fresh chain")
    _add_server(p)
    p.add_argument("--user", required=True)
    p.add_argument("--count", type=int, required=True, help="chain length, >= 2")
    p.add_argument("--passkey")
    _add_alg(p)
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("auth", help="authenticate once; prints the ticket id")
    _add_server(p)
    p.add_argument("--user", required=True)
    p.add_argument("--passkey")
    p.add_argument("--transcript", help="append this session's wire bodies to a JSONL file")
    _add_alg(p)
    p.set_defaults(func=_cmd_auth)

    p = sub.add_parser("mine", help="run a mining task with a ticket")
    _add_server(p)
    p.add_argument("--ticket", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--input", required=True, help="CSV file of points ('-' for stdin)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("reinit", help="swap in a new chain using one old token")
    _add_server(p)
    p.add_argument("--user", required=True)
    p.add_argument("--new-count", type=int, required=True)
    p.add_argument("--passkey", help="current passkey")
    p.add_argument("--new-passkey", help="replacement passkey (else OTPK_NEW_PASSKEY or prompt)")
    _add_alg(p)
    p.set_defaults(func=_cmd_reinit)

    p = sub.add_parser("serve", help="run the gateway")
    p.add_argument("--bind", default="127.0.0.1:8600", help="host:port")
    p.add_argument("--db", required=False, help="user database file")
    p.add_argument("--trust", required=False, help="trust file (one CIDR per line)")
    p.add_argument("--admin-trust", help="admin trust file (default: loopback only)")
    _add_alg(p)
    p.add_argument("--ticket-ttl", type=float, default=60.0)
    p.add_argument("--max-body", type=int, default=1 << 20)
    p.add_argument(
        "--trust-forwarded-for",
        action="store_true",
        help="take the source IP from X-Forwarded-For; only safe behind a "
        "trusted reverse proxy, since anyone reaching the socket can forge it",
    )
    p.set_defaults(func=_cmd_serve)

    admin = sub.add_parser("admin", help="administrative operations").add_subparsers(
        dest="admin_command", required=True
    )
    trust = admin.add_parser("trust", help="manage the trust allowlist").add_subparsers(
        dest="trust_command", required=True
    )
    p = trust.add_parser("add")
    _add_server(p)
    p.add_argument("--cidr", required=True)
    p.set_defaults(func=_cmd_trust_add)
    p = trust.add_parser("rm")
    _add_server(p)
    p.add_argument("--cidr", required=True)
    p.set_defaults(func=_cmd_trust_rm)
    p = trust.add_parser("list")
    _add_server(p)
    p.set_defaults(func=_cmd_trust_list)

    user = admin.add_parser("user", help="manage users").add_subparsers(
        dest="user_command", required=True
    )
    p = user.add_parser("lock")
    _add_server(p)
    p.add_argument("--user", required=True)
    p.set_defaults(func=_cmd_user_lock)
    p = user.add_parser("rm")
    _add_server(p)
    p.add_argument("--user", required=True)
    p.set_defaults(func=_cmd_user_rm)

    attack = sub.add_parser("attack", help="adversary drills").add_subparsers(
        dest="attack_command", required=True
    )
    p = attack.add_parser("replay", help="resubmit every captured token")
    _add_server(p)
    p.add_argument("--transcript", required=True)
    _add_report_outputs(p)
    p.set_defaults(func=_cmd_attack_replay)
    p = attack.add_parser("dbcomp", help="submit stolen verifiers as tokens")
    _add_server(p)
    p.add_argument("--db", required=True, help="stolen user database file")
    _add_report_outputs(p)
    p.set_defaults(func=_cmd_attack_dbcomp)
    p = attack.add_parser("dict", help="offline wordlist attack on a transcript")
    p.add_argument("--transcript", required=True)
    p.add_argument("--wordlist", required=True, help="candidate passkeys, one per line")
    _add_alg(p)
    _add_report_outputs(p)
    p.set_defaults(func=_cmd_attack_dict)

    return parser


def _add_server(p: argparse.ArgumentParser) -> None:
    p.add_argument("--server", required=True, help="gateway address, host:port")


def _add_alg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--alg",
        choices=[a.value for a in HashAlg],
        default=HashAlg.SHA256.value,
        help="hash algorithm (md5 is broken; opt in only for compatibility)",
    )


def _add_report_outputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="also write the report to this file")
    p.add_argument("--plot", help="also render an outcome figure to this file")


def _passkey_from(args, attr: str = "passkey", env: str = "OTPK_PASSKEY") -> Passkey:
    value = getattr(args, attr, None) or os.environ.get(env)
    if not value:
        value = getpass.getpass(f"{attr.replace('_', ' ')}: ")
    return Passkey(value)


def _session(args) -> ChainSession:
    return ChainSession(
        user_id=args.user,
        passkey=_passkey_from(args),
        client=OtpkClient(args.server),
        alg=HashAlg.from_name(args.alg),
    )


# -- commands ----------------------------------------------------------------------


def _cmd_chain(args) -> int:
    passkey = _passkey_from(args)
    value = chain(passkey, args.count, HashAlg.from_name(args.alg))
    print(value.hex())
    return _EXIT_OK


def _cmd_init(args) -> int:
    session = _session(args)
    reply = session.init_chain(args.count)
    print(f"registered: user={reply['user_id']} count={reply['p']}")
    return _EXIT_OK


def _cmd_auth(args) -> int:
    transcript = Transcript() if args.transcript else None
    session = ChainSession(
        user_id=args.user,
        passkey=_passkey_from(args),
        client=OtpkClient(args.server, transcript=transcript),
        alg=HashAlg.from_name(args.alg),
    )
    try:
        reply = session.authenticate()
    finally:
        if transcript is not None and transcript.entries:
            transcript.save(args.transcript, append=True)
    print(reply["ticket_id"])
    return _EXIT_OK


def _cmd_mine(args) -> int:
    if args.input == "-":
        csv_text = sys.stdin.read()
    else:
        with open(args.input, "r", encoding="utf-8") as handle:
            csv_text = handle.read()
    client = OtpkClient(args.server)
    result = client.mine(
        args.ticket,
        args.task,
        {"csv": csv_text, "k": args.k, "max_iters": args.max_iters},
    )
    print(json.dumps(result))
    return _EXIT_OK


def _cmd_reinit(args) -> int:
    session = _session(args)
    new_passkey = _passkey_from(args, "new_passkey", "OTPK_NEW_PASSKEY")
    reply = session.reinit_chain(new_passkey, args.new_count)
    print(f"reinitialized: user={reply['user_id']} count={reply['p']}")
    return _EXIT_OK


def _cmd_serve(args) -> int:
    config = _config_from(args)
    handle = serve(config)
    print(f"listening on {handle.address}", flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    try:
        stop.wait()
    finally:
        handle.stop()
    return _EXIT_OK


def _config_from(args) -> GatewayConfig:
    """Build the server config; OTPK_* environment variables override flags."""
    env = os.environ
    bind = env.get("OTPK_BIND", args.bind)
    db = env.get("OTPK_DB", args.db)
    trust = env.get("OTPK_TRUST", args.trust)
    if not db:
        raise GatewayStartupError("no user database: pass --db or set OTPK_DB")
    if not trust:
        raise GatewayStartupError("no trust file: pass --trust or set OTPK_TRUST")
    forwarded = args.trust_forwarded_for
    if "OTPK_TRUST_FORWARDED_FOR" in env:
        forwarded = env["OTPK_TRUST_FORWARDED_FOR"].lower() in ("1", "true", "yes")
    return GatewayConfig(
        bind_address=bind,
        user_db_path=db,
        trust_path=trust,
        default_alg=HashAlg.from_name(env.get("OTPK_ALG", args.alg)),
        ticket_ttl=float(env.get("OTPK_TICKET_TTL", args.ticket_ttl)),
        max_body=int(env.get("OTPK_MAX_BODY", args.max_body)),
        admin_trust_path=env.get("OTPK_ADMIN_TRUST", args.admin_trust),
        trust_forwarded_for=forwarded,
    )


def _cmd_trust_add(args) -> int:
    OtpkClient(args.server).admin_trust_add(args.cidr)
    return _EXIT_OK


def _cmd_trust_rm(args) -> int:
    OtpkClient(args.server).admin_trust_remove(args.cidr)
    return _EXIT_OK


def _cmd_trust_list(args) -> int:
    for cidr in OtpkClient(args.server).admin_trust_list():
        print(cidr)
    return _EXIT_OK


def _cmd_user_lock(args) -> int:
    OtpkClient(args.server).admin_user_lock(args.user)
    return _EXIT_OK


def _cmd_user_rm(args) -> int:
    OtpkClient(args.server).admin_user_delete(args.user)
    return _EXIT_OK


def _emit_report(report, args, *, title: str) -> None:
    sys.stdout.write(report.text)
    if args.out:
        report.write(args.out)
    if args.plot:
        from .plotting import save_outcome_figure

        save_outcome_figure(report, args.plot, title=title)


def _cmd_attack_replay(args) -> int:
    transcript = Transcript.load(args.transcript)
    report = replay_attack(transcript, OtpkClient(args.server))
    _emit_report(report, args, title="replay attack")
    return _EXIT_OK


def _cmd_attack_dbcomp(args) -> int:
    records = UserStore(args.db).load()
    report = db_compromise_suite(records.values(), OtpkClient(args.server))
    _emit_report(report, args, title="stolen-verifier attack")
    return _EXIT_OK


def _cmd_attack_dict(args) -> int:
    transcript = Transcript.load(args.transcript)
    with open(args.wordlist, "r", encoding="utf-8") as handle:
        words = [line.strip() for line in handle if line.strip()]
    recovered, report = dictionary_attack(transcript, words, HashAlg.from_name(args.alg))
    _emit_report(report, args, title="wordlist attack")
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
