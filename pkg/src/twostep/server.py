"""Corporate-side authentication logic.

Registration, password-first login with an encrypted identity envelope,
provider-token completion, and the connection-less path where the server
re-derives the OTP the phone computed.
"""
from __future__ import annotations

import enum
import hashlib
import hmac
import logging
import os
import secrets
import stat
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, Optional, Protocol, Tuple, Union

from . import envelope as env
from .config import Config
from .otp import (
    FactorError,
    FactorSet,
    OtpPolicy,
    PinPolicy,
    TimeFactors,
    check_imei,
    check_imsi,
    check_username,
    derive_otp,
    time_factors,
    validate_pin,
)
from .provider import MOBILE_RE, Throttled, VerifyResult
from .store import DuplicateUsername, PasswordHash, UserRecord

log = logging.getLogger(__name__)

Clock = Callable[[], int]

# PINs are policy-checked at registration; re-derivation must not re-judge them
_REGISTERED_PIN = PinPolicy(
    min_length=4, require_upper=False, require_lower=False, require_digit=False, require_symbol=False
)


def system_clock() -> int:
    return int(time.time())


class ManualClock:
    """Injectable test clock."""

    def __init__(self, start: int = 1_360_000_000):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int) -> int:
        self.now += seconds
        return self.now


class Reason(str, enum.Enum):
    BAD_PASSWORD = "bad-password"
    BAD_IDENTITY = "bad-identity"
    BAD_TOKEN = "bad-token"
    EXPIRED = "expired"
    THROTTLED = "throttled"


@dataclass(frozen=True)
class AuthDecision:
    outcome: str
    reason: Optional[Reason] = None

    def __post_init__(self):
        if self.outcome not in ("granted", "denied"):
            raise ValueError(self.outcome)
        if (self.reason is None) != (self.outcome == "granted"):
            raise ValueError("reason is required exactly when denied")

    @property
    def granted(self) -> bool:
        return self.outcome == "granted"

    @classmethod
    def grant(cls) -> "AuthDecision":
        return cls("granted")

    @classmethod
    def deny(cls, reason: Reason) -> "AuthDecision":
        return cls("denied", reason)


class ChallengeState(str, enum.Enum):
    AWAITING_TOKEN = "awaiting_token"
    GRANTED = "granted"
    DENIED = "denied"
    EXPIRED = "expired"


@dataclass
class LoginChallenge:
    challenge_id: str
    username: str
    txid: str
    created_at: int
    state: ChallengeState = ChallengeState.AWAITING_TOKEN
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)


@dataclass(frozen=True)
class LoginStarted:
    challenge_id: str
    txid: str


class RegistrationError(ValueError):
    code = "registration-error"


class WeakPassword(RegistrationError):
    code = "weak-password"

    def __init__(self, violations):
        super().__init__("password violates policy: " + ", ".join(violations))
        self.violations = list(violations)


class MalformedIdentifier(RegistrationError):
    code = "malformed-identifier"


class UpstreamUnavailable(Exception):
    """The provider could not be reached; the caller may retry."""


class TokenProvider(Protocol):
    def issue_token(self, mobile: str, now: int) -> str: ...

    def verify_token(self, txid: str, token: str, now: int) -> VerifyResult: ...


def load_master_key(path) -> bytes:
    """Read the server master key, creating it (mode 0600) on first use."""
    path = Path(path)
    if path.exists():
        key = path.read_bytes()
        if len(key) != env.KEY_SIZE:
            raise ValueError(f"{path}: master key must be {env.KEY_SIZE} bytes")
        return key
    path.parent.mkdir(parents=True, exist_ok=True)
    key = os.urandom(env.KEY_SIZE)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_EXCL, stat.S_IRUSR | stat.S_IWUSR)
    with os.fdopen(fd, "wb") as fh:
        fh.write(key)
    return key


class AuthServer:
    def __init__(
        self,
        store,
        provider: TokenProvider,
        master_key: bytes,
        config: Optional[Config] = None,
        pin_policy: PinPolicy = PinPolicy(),
    ):
        self.store = store
        self.provider = provider
        self.config = config or Config()
        self.pin_policy = pin_policy
        self.otp_policy = OtpPolicy(self.config.otp_length, self.config.window)
        self._master = master_key
        self._lock = threading.Lock()
        self._register_lock = threading.Lock()
        self._challenges: Dict[str, LoginChallenge] = {}
        self._active: Dict[str, str] = {}
        self._seen_nonces: Dict[bytes, int] = {}
        self._login_failures: Dict[str, Deque[int]] = defaultdict(deque)
        self._otp_used: Dict[Tuple[str, TimeFactors, bytes], int] = {}
        self._otp_failures: Dict[Tuple[str, TimeFactors], int] = defaultdict(int)
        # dummy hash keeps the unknown-user path as slow as a real check
        self._dummy_hash = PasswordHash.create(secrets.token_hex(8), self.config.pbkdf2_iterations)

    # -- at-rest wrapping -------------------------------------------------

    def _wrap(self, data: bytes, username: str, what: str) -> bytes:
        return env.seal(data, self._master, f"{what}:{username}".encode())

    def _unwrap(self, blob: bytes, username: str, what: str) -> bytes:
        return env.unseal(blob, self._master, f"{what}:{username}".encode())

    def user_key(self, username: str) -> env.SymmetricKey:
        user = self.store.get_user(username)
        return env.SymmetricKey(self._unwrap(user.key_wrapped, username, "key"))

    # -- registration -----------------------------------------------------

    def register_user(
        self,
        first: str,
        last: str,
        username: str,
        password: str,
        mobile: str,
        imei: str,
        imsi: str,
        pin: Optional[str] = None,
        now: Optional[int] = None,
    ) -> Tuple[dict, env.SymmetricKey]:
        """Create a user and return ``(summary, key)``.

        The key is handed out here and never again. ``pin`` defaults to the
        password; it is stored wrapped under the master key because the
        connection-less check must re-run the derivation.
        """
        try:
            check_username(username)
            check_imei(imei)
            check_imsi(imsi)
        except FactorError as exc:
            raise MalformedIdentifier(str(exc)) from None
        if not isinstance(mobile, str) or not MOBILE_RE.match(mobile):
            raise MalformedIdentifier("mobile must look like +<7-15 digits>")
        violations = validate_pin(password, self.pin_policy)
        if violations:
            raise WeakPassword(violations)
        pin = password if pin is None else pin
        violations = validate_pin(pin, self.pin_policy)
        if violations:
            raise WeakPassword(violations)

        with self._register_lock:
            if self.store.get_user(username) is not None:
                raise DuplicateUsername(username)
            key = env.SymmetricKey.generate()
            record = UserRecord(
                first=first,
                last=last,
                username=username,
                password_hash=PasswordHash.create(password, self.config.pbkdf2_iterations),
                key_wrapped=self._wrap(key.key_bytes, username, "key"),
                mobile=mobile,
                imei=imei,
                imsi=imsi,
                pin_wrapped=self._wrap(pin.encode("utf-8"), username, "pin"),
                created_at=system_clock() if now is None else now,
            )
            self.store.put_user(record)
        log.info("registered user=%s mobile=%s", username, mobile)
        return {"username": username, "mobile": mobile}, key

    # -- token login ------------------------------------------------------

    def _note_failure(self, username: str, now: int, code: Reason) -> AuthDecision:
        with self._lock:
            self._login_failures[username].append(now)
        log.info("login denied user=%s code=%s", username, code.value)
        return AuthDecision.deny(code)

    def _login_throttled(self, username: str, now: int) -> bool:
        with self._lock:
            recent = self._login_failures[username]
            while recent and recent[0] <= now - self.config.rate_window:
                recent.popleft()
            return len(recent) >= self.config.login_failure_limit

    def _remember_nonce(self, nonce: bytes, now: int) -> bool:
        """False if the envelope nonce was already used inside the skew window."""
        with self._lock:
            horizon = now - 2 * self.config.envelope_skew
            for n in [n for n, t in self._seen_nonces.items() if t < horizon]:
                del self._seen_nonces[n]
            if nonce in self._seen_nonces:
                return False
            self._seen_nonces[nonce] = now
            return True

    def begin_login(
        self, username: str, password: str, envelope: Union[str, env.Ciphertext], now: int
    ) -> Union[LoginStarted, AuthDecision]:
        if self._login_throttled(username, now):
            log.info("login denied user=%s code=%s", username, Reason.THROTTLED.value)
            return AuthDecision.deny(Reason.THROTTLED)

        user = self.store.get_user(username)
        if user is None:
            self._dummy_hash.verify(password)
            return self._note_failure(username, now, Reason.BAD_PASSWORD)
        if not user.password_hash.verify(password):
            return self._note_failure(username, now, Reason.BAD_PASSWORD)

        try:
            ct = env.Ciphertext.from_wire(envelope) if isinstance(envelope, str) else envelope
            msg = env.decrypt_identity(
                ct, self.user_key(username), now, self.config.envelope_skew
            )
        except env.EnvelopeError:
            return self._note_failure(username, now, Reason.BAD_IDENTITY)
        same = (
            hmac.compare_digest(msg.username.encode(), user.username.encode())
            & hmac.compare_digest(msg.imei.encode(), user.imei.encode())
            & hmac.compare_digest(msg.imsi.encode(), user.imsi.encode())
        )
        if not same or not self._remember_nonce(msg.nonce, now):
            return self._note_failure(username, now, Reason.BAD_IDENTITY)

        try:
            txid = self.provider.issue_token(user.mobile, now)
        except Throttled:
            log.info("login denied user=%s code=%s", username, Reason.THROTTLED.value)
            return AuthDecision.deny(Reason.THROTTLED)
        except (UpstreamUnavailable, OSError) as exc:
            log.warning("provider unavailable: %s", type(exc).__name__)
            raise UpstreamUnavailable(str(exc)) from None

        challenge = LoginChallenge(secrets.token_hex(16), username, txid, now)
        with self._lock:
            prior = self._challenges.get(self._active.get(username, ""))
            if prior is not None and prior.state is ChallengeState.AWAITING_TOKEN:
                prior.state = ChallengeState.EXPIRED
            self._challenges[challenge.challenge_id] = challenge
            self._active[username] = challenge.challenge_id
        log.info("challenge %s issued user=%s txid=%s", challenge.challenge_id, username, txid)
        return LoginStarted(challenge.challenge_id, txid)

    def challenge_state(self, challenge_id: str) -> Optional[ChallengeState]:
        ch = self._challenges.get(challenge_id)
        return ch.state if ch else None

    def complete_login(self, challenge_id: str, token: str, now: int) -> AuthDecision:
        ch = self._challenges.get(challenge_id)
        if ch is None:
            return AuthDecision.deny(Reason.EXPIRED)
        # per-challenge lock: the provider verdict and the state change are one step
        with ch.lock:
            if ch.state is not ChallengeState.AWAITING_TOKEN:
                return AuthDecision.deny(Reason.EXPIRED)
            if now - ch.created_at >= self.config.challenge_ttl:
                ch.state = ChallengeState.EXPIRED
                log.info("challenge %s expired", challenge_id)
                return AuthDecision.deny(Reason.EXPIRED)
            verdict = self.provider.verify_token(ch.txid, token, now)
            if verdict is VerifyResult.VALID:
                ch.state = ChallengeState.GRANTED
                log.info("challenge %s granted user=%s", challenge_id, ch.username)
                return AuthDecision.grant()
            if verdict in (VerifyResult.CONSUMED, VerifyResult.EXPIRED):
                ch.state = ChallengeState.EXPIRED
        log.info("challenge %s denied: provider said %s", challenge_id, verdict.value)
        return AuthDecision.deny(Reason.BAD_TOKEN)

    # -- connection-less OTP ----------------------------------------------

    def connectionless_verify(self, username: str, otp: str, now: int) -> AuthDecision:
        """Accept the OTP for the current window or the one before it, once."""
        user = self.store.get_user(username)
        if user is None or user.pin_wrapped is None:
            log.info("otp denied user=%s code=%s", username, Reason.BAD_TOKEN.value)
            return AuthDecision.deny(Reason.BAD_TOKEN)
        policy = self.otp_policy
        tz = self.config.timezone
        current = time_factors(now, policy, tz)
        with self._lock:
            if self._otp_failures[(username, current)] >= self.config.max_attempts:
                log.info("otp denied user=%s code=%s", username, Reason.THROTTLED.value)
                return AuthDecision.deny(Reason.THROTTLED)

        pin = self._unwrap(user.pin_wrapped, username, "pin").decode("utf-8")
        factors = FactorSet(user.imei, user.imsi, username, pin, pin_policy=_REGISTERED_PIN)
        presented = str(otp).encode("utf-8")
        for window in (current, time_factors(now - policy.window.seconds, policy, tz)):
            expected = derive_otp(factors, window, policy).encode("ascii")
            if hmac.compare_digest(expected, presented):
                key = (username, window, hashlib.sha256(presented).digest())
                with self._lock:
                    self._prune_otp_cache(now)
                    if key in self._otp_used:
                        log.info("otp denied user=%s code=replay", username)
                        return AuthDecision.deny(Reason.BAD_TOKEN)
                    self._otp_used[key] = now
                log.info("otp granted user=%s", username)
                return AuthDecision.grant()
        with self._lock:
            self._otp_failures[(username, current)] += 1
            self._prune_otp_cache(now)
        log.info("otp denied user=%s code=%s", username, Reason.BAD_TOKEN.value)
        return AuthDecision.deny(Reason.BAD_TOKEN)

    def _prune_otp_cache(self, now: int) -> None:
        horizon = now - 3 * self.otp_policy.window.seconds
        for k in [k for k, t in self._otp_used.items() if t < horizon]:
            del self._otp_used[k]
        if len(self._otp_failures) > 1024:
            live = {time_factors(now - i * self.otp_policy.window.seconds, self.otp_policy,
                                 self.config.timezone) for i in range(2)}
            for k in [k for k in self._otp_failures if k[1] not in live]:
                del self._otp_failures[k]
