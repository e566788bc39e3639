"""Adversary drills: the protocol's claims hold, and its weakness is honest."""

from __future__ import annotations

import random
import re
import secrets

import pytest

from otpk.agent import UserStore
from otpk.attacks import (
    db_compromise_attack,
    db_compromise_suite,
    dictionary_attack,
    replay_attack,
)
from otpk.client import ChainSession, OtpkClient
from otpk.hashchain import Passkey
from otpk.transcript import Transcript

from conftest import make_config, run_cli, running_server

LINE = re.compile(r"^ATTEMPT \d+ (ACCEPTED|REJECTED)( code=[A-Z_]+)?$")
SUMMARY = re.compile(r"^SUMMARY accepted=\d+ rejected=\d+$")


@pytest.fixture
def server(tmp_path):
    with running_server(make_config(tmp_path)) as handle:
        yield handle


def run_sessions(handle, user_id: str, secret: str, count: int, logins: int) -> Transcript:
    transcript = Transcript()
    session = ChainSession(user_id, Passkey(secret), OtpkClient(handle.address, transcript=transcript))
    session.init_chain(count)
    for _ in range(logins):
        session.authenticate()
    return transcript


class TestReplay:
    def test_single_session_replay_rejected(self, server):
        transcript = run_sessions(server, "alice", "pk", 5, 1)
        report = replay_attack(transcript, OtpkClient(server.address))
        assert len(report.attempts) == 1
        assert report.accepted_count == 0
        assert report.attempts[0].code == "TOKEN_MISMATCH"

    def test_nine_auths_nine_replays_all_rejected(self, server):
        transcript = run_sessions(server, "alice", "pk", 10, 9)
        report = replay_attack(transcript, OtpkClient(server.address))
        assert len(report.attempts) == 9
        assert report.accepted_count == 0
        assert report.rejected_count == 9

    def test_empty_transcript(self, server):
        report = replay_attack(Transcript(), OtpkClient(server.address))
        assert report.attempts == []
        assert report.lines() == ["SUMMARY accepted=0 rejected=0"]

    def test_randomized_sessions(self, server):
        rng = random.Random(1337)
        transcript = Transcript()
        for i in range(20):
            count = rng.randint(2, 12)
            logins = rng.randint(1, count - 1)
            sub = run_sessions(server, f"user{i}", f"pk{rng.random()}", count, logins)
            transcript.entries.extend(sub.entries)
        report = replay_attack(transcript, OtpkClient(server.address))
        assert report.accepted_count == 0
        assert report.rejected_count == len(report.attempts) > 0


class TestDbCompromise:
    def test_stolen_verifier_rejected(self, server, tmp_path):
        run_sessions(server, "alice", "pk", 10, 3)
        stolen = UserStore(tmp_path / "users.db").load()["alice"]
        attempt = db_compromise_attack(stolen, OtpkClient(server.address))
        assert attempt.accepted is False
        assert attempt.code == "TOKEN_MISMATCH"

    def test_exhausted_record_reports_chain_state(self, server, tmp_path):
        run_sessions(server, "worn", "pk", 2, 1)
        stolen = UserStore(tmp_path / "users.db").load()["worn"]
        assert stolen.counter == 1
        attempt = db_compromise_attack(stolen, OtpkClient(server.address))
        assert attempt.accepted is False
        assert attempt.code == "CHAIN_EXHAUSTED"

    def test_record_stolen_before_reinit_is_dead(self, server, tmp_path):
        run_sessions(server, "alice", "pk", 10, 1)
        stolen = UserStore(tmp_path / "users.db").load()["alice"]
        session = ChainSession("alice", Passkey("pk"), OtpkClient(server.address))
        session.reinit_chain(Passkey("pk-new"), 15)
        attempt = db_compromise_attack(stolen, OtpkClient(server.address))
        assert attempt.accepted is False
        assert attempt.code == "TOKEN_MISMATCH"

    def test_suite_over_many_records(self, server, tmp_path):
        rng = random.Random(7)
        for i in range(15):
            run_sessions(server, f"u{i}", f"pk{i}", rng.randint(2, 9), 1)
        records = UserStore(tmp_path / "users.db").load().values()
        report = db_compromise_suite(records, OtpkClient(server.address))
        assert len(report.attempts) == 15
        assert report.accepted_count == 0


class TestDictionary:
    WORDLIST = [
        "apple", "banana", "cat", "dog", "eagle", "fish", "goat", "horse",
        "ibis", "jackal", "kiwi", "lemur", "mole", "newt", "owl", "panda",
        "quail", "rat", "snake", "tiger", "urchin", "vole", "wolf", "xerus",
        "yak", "zebra",
    ]

    def make_transcript(self, server, secret: str, count: int = 5) -> Transcript:
        return run_sessions(server, f"dict-{secrets.token_hex(4)}", secret, count, 1)

    def test_weak_passkey_recovered(self, server):
        transcript = self.make_transcript(server, "cat", count=5)
        recovered, report = dictionary_attack(transcript, self.WORDLIST)
        assert recovered == "cat"
        assert report.recovered == "cat"
        assert report.accepted_count == 1
        # stops at the hit: "cat" is the 3rd word
        assert len(report.attempts) == 3

    def test_absent_passkey_not_recovered(self, server):
        transcript = self.make_transcript(server, "not-in-any-list")
        recovered, report = dictionary_attack(transcript, self.WORDLIST)
        assert recovered is None
        assert report.accepted_count == 0
        assert len(report.attempts) == len(self.WORDLIST)

    def test_random_128_bit_passkey_defeats_10k_words(self, server):
        strong = secrets.token_hex(16)  # 128-bit random
        transcript = self.make_transcript(server, strong)
        wordlist = [f"candidate-{i}" for i in range(10_000)]
        recovered, _ = dictionary_attack(transcript, wordlist)
        assert recovered is None

    def test_transcript_without_session_pair(self):
        with pytest.raises(ValueError, match="no .* pair"):
            dictionary_attack(Transcript(), ["a"])


class TestReportFormat:
    def test_line_grammar(self, server, tmp_path):
        transcript = run_sessions(server, "fmt", "pk", 4, 2)
        report = replay_attack(transcript, OtpkClient(server.address))
        lines = report.lines()
        for line in lines[:-1]:
            assert LINE.match(line), line
        assert SUMMARY.match(lines[-1]), lines[-1]
        assert lines[-1] == "SUMMARY accepted=0 rejected=2"
        # attempts are numbered from 1 in order
        assert [int(l.split()[1]) for l in lines[:-1]] == [1, 2]

    def test_text_written_to_file(self, server, tmp_path):
        transcript = run_sessions(server, "fmt", "pk", 3, 1)
        report = replay_attack(transcript, OtpkClient(server.address))
        out = tmp_path / "report.txt"
        report.write(out)
        assert out.read_text() == report.text
        assert report.text.endswith("\n")

    def test_recovered_line_precedes_summary(self, server):
        transcript = run_sessions(server, "fmt2", "cat", 5, 1)
        _, report = dictionary_attack(transcript, ["dog", "cat"])
        lines = report.lines()
        assert lines[-2] == "RECOVERED cat"
        assert SUMMARY.match(lines[-1])


class TestFigureOutput:
    def test_png_rendered(self, server, tmp_path):
        from otpk.plotting import save_outcome_figure

        transcript = run_sessions(server, "fig", "pk", 6, 5)
        report = replay_attack(transcript, OtpkClient(server.address))
        path = tmp_path / "outcomes.png"
        save_outcome_figure(report, path, title="replay drill")
        magic = path.read_bytes()[:8]
        assert magic == b"\x89PNG\r\n\x1a\n"
        assert path.stat().st_size > 1000


class TestAttackCli:
    def test_replay_command_with_report_and_plot(self, server, tmp_path):
        transcript = run_sessions(server, "cli-re", "pk", 5, 3)
        t_path = tmp_path / "t.jsonl"
        transcript.save(t_path)
        out_path, plot_path = tmp_path / "report.txt", tmp_path / "report.png"
        code, out, _ = run_cli(
            [
                "attack", "replay", "--server", server.address,
                "--transcript", str(t_path),
                "--out", str(out_path), "--plot", str(plot_path),
            ]
        )
        assert code == 0
        assert out.splitlines()[-1] == "SUMMARY accepted=0 rejected=3"
        assert out_path.read_text() == out
        assert plot_path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_dbcomp_command(self, server, tmp_path):
        run_sessions(server, "cli-db", "pk", 4, 1)
        code, out, _ = run_cli(
            [
                "attack", "dbcomp", "--server", server.address,
                "--db", str(tmp_path / "users.db"),
            ]
        )
        assert code == 0
        assert out.splitlines()[-1] == "SUMMARY accepted=0 rejected=1"

    def test_dict_command(self, server, tmp_path):
        transcript = run_sessions(server, "cli-dict", "tiger", 5, 1)
        t_path = tmp_path / "t.jsonl"
        transcript.save(t_path)
        words = tmp_path / "words.txt"
        words.write_text("".join(w + "\n" for w in TestDictionary.WORDLIST))
        code, out, _ = run_cli(
            ["attack", "dict", "--transcript", str(t_path), "--wordlist", str(words)]
        )
        assert code == 0
        lines = out.splitlines()
        assert "RECOVERED tiger" in lines
        assert lines[-1].startswith("SUMMARY accepted=1")
