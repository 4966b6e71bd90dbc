import json
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from twostep.config import Config  # noqa: E402
from twostep.envelope import IdentityMessage, encrypt_identity  # noqa: E402
from twostep.provider import MemoryOutbox, Provider, ProviderConfig  # noqa: E402
from twostep.server import AuthServer, ManualClock  # noqa: E402
from twostep.store import MemoryStore  # noqa: E402

DATA = Path(__file__).parent / "data"

ALICE = dict(
    first="Alice", last="Liddell", username="alice", password="Ab3$efgh",
    mobile="+15550100", imei="1" * 15, imsi="001010123456789",
)


def load_vectors():
    with open(DATA / "otp_vectors.jsonl") as fh:
        return [json.loads(line) for line in fh]


class Stack:
    """An in-process server + provider + outbox driven by a manual clock."""

    def __init__(self, store=None, config=None, master_key=b"\x42" * 32):
        self.clock = ManualClock(1_360_000_000)
        self.config = config or Config(pbkdf2_iterations=10_000)
        self.outbox = MemoryOutbox()
        self.provider = Provider(self.outbox, ProviderConfig(
            token_length=self.config.token_length, validity=self.config.token_validity,
            max_attempts=self.config.max_attempts, rate_limit=self.config.rate_limit,
            rate_window=self.config.rate_window,
        ))
        self.store = store if store is not None else MemoryStore()
        self.auth = AuthServer(self.store, self.provider, master_key, self.config)
        self.keys = {}

    def register(self, **overrides):
        fields = dict(ALICE, **overrides)
        summary, key = self.auth.register_user(now=self.clock(), **fields)
        self.keys[fields["username"]] = key
        return summary, key

    def envelope(self, username="alice", imei=ALICE["imei"], imsi=ALICE["imsi"], key=None, at=None):
        msg = IdentityMessage.create(imei, imsi, username, self.clock() if at is None else at)
        return encrypt_identity(msg, key or self.keys[username]).to_wire()

    def latest_token(self, mobile=ALICE["mobile"]):
        return self.outbox.last_for(mobile).body.rsplit(" ", 1)[-1]


@pytest.fixture
def stack():
    return Stack()


@pytest.fixture
def alice(stack):
    stack.register()
    return stack


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
