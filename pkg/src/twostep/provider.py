"""Simulated SMS service provider.

Issues random digit tokens bound to transaction IDs, hands the SMS to a
pluggable transport and answers "valid or not" for (txid, token) pairs.
"""
from __future__ import annotations

import enum
import hmac
import json
import logging
import os
import random
import re
import secrets
import sys
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Iterator, List, Optional, Protocol

log = logging.getLogger(__name__)

MOBILE_RE = re.compile(r"^\+[0-9]{7,15}$")


class ValidationError(ValueError):
    pass


class Throttled(Exception):
    pass


class TokenState(str, enum.Enum):
    PENDING = "pending"
    CONSUMED = "consumed"
    EXPIRED = "expired"


class VerifyResult(str, enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    EXPIRED = "expired"
    CONSUMED = "consumed"
    UNKNOWN = "unknown"


@dataclass
class ProviderConfig:
    token_length: int = 6
    validity: int = 600
    max_attempts: int = 5
    rate_limit: int = 5
    rate_window: int = 600

    def __post_init__(self):
        if not 4 <= self.token_length <= 10:
            raise ValueError("token_length must be in 4..10")


@dataclass
class TokenRecord:
    txid: str
    mobile: str
    token: str = field(repr=False)
    issued_at: int
    expires_at: int
    state: TokenState = TokenState.PENDING
    failures: int = 0


@dataclass(frozen=True)
class SmsRecord:
    mobile: str
    body: str
    sent_at: int

    def to_json(self) -> str:
        return json.dumps({"mobile": self.mobile, "body": self.body, "sent_at": self.sent_at})


class Transport(Protocol):
    def send(self, sms: SmsRecord) -> None: ...


class MemoryOutbox:
    def __init__(self):
        self.records: List[SmsRecord] = []
        self._lock = threading.Lock()

    def send(self, sms: SmsRecord) -> None:
        with self._lock:
            self.records.append(sms)

    def last_for(self, mobile: str) -> Optional[SmsRecord]:
        with self._lock:
            for sms in reversed(self.records):
                if sms.mobile == mobile:
                    return sms
        return None


class FileOutbox:
    """Append-only JSON-lines outbox."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def send(self, sms: SmsRecord) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(sms.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def __iter__(self) -> Iterator[SmsRecord]:
        return iter(read_outbox(self.path))

    def last_for(self, mobile: str) -> Optional[SmsRecord]:
        found = None
        for sms in read_outbox(self.path):
            if sms.mobile == mobile:
                found = sms
        return found


def read_outbox(path, warn=None) -> List[SmsRecord]:
    """Parse an outbox file, skipping malformed lines (reported through ``warn``)."""
    path = Path(path)
    if not path.exists():
        return []
    if warn is None:
        def warn(msg):
            print(msg, file=sys.stderr)
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                out.append(SmsRecord(str(doc["mobile"]), str(doc["body"]), int(doc["sent_at"])))
            except (ValueError, KeyError, TypeError):
                warn(f"{path}:{lineno}: skipping malformed outbox line")
    return out


TOKEN_IN_BODY = re.compile(r"(\d{4,10})")


def token_from_body(body: str) -> Optional[str]:
    m = TOKEN_IN_BODY.search(body)
    return m.group(1) if m else None


class Provider:
    """In-memory token table. All state transitions happen under one lock."""

    def __init__(
        self,
        transport: Optional[Transport] = None,
        config: Optional[ProviderConfig] = None,
        rng: Optional[random.Random] = None,
        txid_factory: Callable[[], str] = lambda: secrets.token_hex(16),
    ):
        self.transport = transport if transport is not None else MemoryOutbox()
        self.config = config or ProviderConfig()
        self._rng = rng or secrets.SystemRandom()
        self._new_txid = txid_factory
        self._records: Dict[str, TokenRecord] = {}
        self._sends: Dict[str, Deque[int]] = defaultdict(deque)
        self._lock = threading.Lock()

    def _throttled(self, mobile: str, now: int) -> bool:
        recent = self._sends[mobile]
        while recent and recent[0] <= now - self.config.rate_window:
            recent.popleft()
        return len(recent) >= self.config.rate_limit

    def issue_token(self, mobile: str, now: int) -> str:
        if not isinstance(mobile, str) or not MOBILE_RE.match(mobile):
            raise ValidationError("mobile must look like +<7-15 digits>")
        with self._lock:
            if self._throttled(mobile, now):
                log.warning("issue throttled for %s", mobile)
                raise Throttled(mobile)
            txid = self._new_txid()
            while txid in self._records:
                txid = self._new_txid()
            token = "".join(str(self._rng.randrange(10)) for _ in range(self.config.token_length))
            self._records[txid] = TokenRecord(
                txid, mobile, token, now, now + self.config.validity
            )
            self._sends[mobile].append(now)
        self.transport.send(SmsRecord(mobile, f"Your code is {token}", now))
        log.info("issued txid=%s to %s", txid, mobile)
        return txid

    def verify_token(self, txid: str, token: str, now: int) -> VerifyResult:
        with self._lock:
            rec = self._records.get(txid)
            if rec is None:
                result = VerifyResult.UNKNOWN
            elif rec.state is TokenState.CONSUMED:
                result = VerifyResult.CONSUMED
            elif rec.state is TokenState.EXPIRED:
                result = VerifyResult.EXPIRED
            elif now >= rec.expires_at:
                rec.state = TokenState.EXPIRED
                result = VerifyResult.EXPIRED
            elif hmac.compare_digest(rec.token.encode(), str(token).encode()):
                rec.state = TokenState.CONSUMED
                result = VerifyResult.VALID
            else:
                rec.failures += 1
                if rec.failures >= self.config.max_attempts:
                    rec.state = TokenState.EXPIRED
                result = VerifyResult.INVALID
        log.info("verify txid=%s -> %s", txid, result.value)
        return result

    def sweep_expired(self, now: int) -> int:
        n = 0
        with self._lock:
            for rec in self._records.values():
                if rec.state is TokenState.PENDING and rec.expires_at <= now:
                    rec.state = TokenState.EXPIRED
                    n += 1
        return n

    def state_of(self, txid: str) -> Optional[TokenState]:
        with self._lock:
            rec = self._records.get(txid)
            return rec.state if rec else None
