"""Deterministic OTP derivation from device/user factors and quantized time.

The pipeline is::

    SHA-256(imei|imsi|username|pin|hh|m|dow|yy|mm|dd)
      XOR pin bytes repeated to 32 bytes
      -> unpadded Base64 (43 chars)
      -> folded down to the configured length

Client and server run the same function; equal inputs give equal passwords
for the whole validity window.
"""
from __future__ import annotations

import base64
import calendar
import datetime as dt
import enum
import hashlib
import string
from dataclasses import dataclass, field
from typing import List, Optional
from zoneinfo import ZoneInfo

B64_ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits + "+/"
_B64_INDEX = {c: i for i, c in enumerate(B64_ALPHABET)}

DIGEST_SIZE = 32
MIN_OTP_LENGTH = 4
MAX_OTP_LENGTH = 28
SEPARATOR = "|"

UTC = dt.timezone.utc


class PolicyError(ValueError):
    """Raised when a PIN fails the active PinPolicy."""

    def __init__(self, violations: List[str]):
        super().__init__("PIN policy violated: " + ", ".join(violations))
        self.violations = violations


class FactorError(ValueError):
    """Malformed IMEI, IMSI or username."""


class Window(str, enum.Enum):
    MINUTE = "minute"
    TEN_MINUTES = "ten-minutes"

    @property
    def seconds(self) -> int:
        return 60 if self is Window.MINUTE else 600


@dataclass(frozen=True)
class PinPolicy:
    min_length: int = 8
    require_upper: bool = True
    require_lower: bool = True
    require_digit: bool = True
    require_symbol: bool = True

    def __post_init__(self):
        if self.min_length < 4:
            raise ValueError("min_length must be at least 4")


def _is_symbol(ch: str) -> bool:
    return not ch.isalnum() and not ch.isspace() and ch.isprintable()


def validate_pin(pin: str, policy: PinPolicy = PinPolicy()) -> List[str]:
    """Return every rule ``pin`` breaks; an empty list means the PIN is acceptable."""
    violations = []
    if len(pin) < policy.min_length:
        violations.append("too-short")
    if policy.require_upper and not any(c.isupper() for c in pin):
        violations.append("no-upper")
    if policy.require_lower and not any(c.islower() for c in pin):
        violations.append("no-lower")
    if policy.require_digit and not any(c.isdigit() for c in pin):
        violations.append("no-digit")
    if policy.require_symbol and not any(_is_symbol(c) for c in pin):
        violations.append("no-symbol")
    return violations


def check_imei(imei: str) -> str:
    if len(imei) != 15 or not (imei.isascii() and imei.isdigit()):
        raise FactorError("IMEI must be exactly 15 decimal digits")
    return imei


def check_imsi(imsi: str) -> str:
    if not 6 <= len(imsi) <= 15 or not (imsi.isascii() and imsi.isdigit()):
        raise FactorError("IMSI must be 6-15 decimal digits")
    return imsi


def check_username(username: str) -> str:
    if not username:
        raise FactorError("username must not be empty")
    if any(ord(c) < 0x20 for c in username) or SEPARATOR in username:
        raise FactorError("username contains a control character or '|'")
    return username


@dataclass(frozen=True)
class FactorSet:
    """Static per-user inputs. The PIN is excluded from repr and comparison output."""

    imei: str
    imsi: str
    username: str
    pin: str = field(repr=False)
    pin_policy: PinPolicy = field(default=PinPolicy(), repr=False, compare=False)

    def __post_init__(self):
        check_imei(self.imei)
        check_imsi(self.imsi)
        check_username(self.username)
        violations = validate_pin(self.pin, self.pin_policy)
        if violations:
            raise PolicyError(violations)


@dataclass(frozen=True)
class OtpPolicy:
    otp_length: int = 8
    window: Window = Window.TEN_MINUTES
    digest: str = "sha256"

    def __post_init__(self):
        if not MIN_OTP_LENGTH <= self.otp_length <= MAX_OTP_LENGTH:
            raise ValueError(
                f"otp_length must be in {MIN_OTP_LENGTH}..{MAX_OTP_LENGTH}, got {self.otp_length}"
            )
        object.__setattr__(self, "window", Window(self.window))
        if self.digest != "sha256":
            raise ValueError("only sha256 is supported")


@dataclass(frozen=True)
class TimeFactors:
    """Quantized clock fields.

    ``minute_digit`` holds floor(minute / 10) for ten-minute windows and the
    full minute when ``per_minute`` is set.
    """

    yy: int
    mm: int
    dd: int
    dow: int
    hh: int
    minute_digit: int
    per_minute: bool = False

    def __post_init__(self):
        if not 0 <= self.yy <= 99:
            raise ValueError("yy out of range")
        if not 1 <= self.mm <= 12:
            raise ValueError("mm out of range")
        if not 1 <= self.dd <= calendar.monthrange(2000 + self.yy, self.mm)[1]:
            raise ValueError("dd is not a valid day for this month")
        if not 0 <= self.dow <= 6:
            raise ValueError("dow out of range")
        if not 0 <= self.hh <= 23:
            raise ValueError("hh out of range")
        limit = 59 if self.per_minute else 5
        if not 0 <= self.minute_digit <= limit:
            raise ValueError("minute field out of range")


def to_provider_time(instant, tz: Optional[str] = None) -> dt.datetime:
    """Normalise an instant (datetime or epoch seconds) into the provider zone.

    Naive datetimes are taken to already be in provider time.
    """
    zone = ZoneInfo(tz) if tz and tz != "UTC" else UTC
    if isinstance(instant, (int, float)):
        return dt.datetime.fromtimestamp(instant, zone)
    if instant.tzinfo is None:
        return instant
    return instant.astimezone(zone)


def time_factors(instant, policy: OtpPolicy = OtpPolicy(), tz: Optional[str] = None) -> TimeFactors:
    t = to_provider_time(instant, tz)
    per_minute = policy.window is Window.MINUTE
    return TimeFactors(
        yy=t.year % 100,
        mm=t.month,
        dd=t.day,
        dow=t.weekday(),
        hh=t.hour,
        minute_digit=t.minute if per_minute else t.minute // 10,
        per_minute=per_minute,
    )


def canonical_concat(factors: FactorSet, time: TimeFactors) -> bytes:
    minute = f"{time.minute_digit:02d}" if time.per_minute else f"{time.minute_digit:d}"
    parts = [
        factors.imei,
        factors.imsi,
        factors.username,
        factors.pin,
        f"{time.hh:02d}",
        minute,
        f"{time.dow:d}",
        f"{time.yy:02d}",
        f"{time.mm:02d}",
        f"{time.dd:02d}",
    ]
    return SEPARATOR.join(parts).encode("utf-8")


def fold(b64: str, target_len: int) -> str:
    """Shrink a Base64 string by XOR-ing its halves over 6-bit alphabet indices.

    Halving continues while the string is longer than ``2 * target_len - 1``;
    the shorter second half is padded with index 0 ('A'). The result is then
    truncated to ``target_len``.
    """
    if not 1 <= target_len <= len(b64):
        raise ValueError(f"target_len must be in 1..{len(b64)}, got {target_len}")
    try:
        idx = [_B64_INDEX[c] for c in b64]
    except KeyError as exc:
        raise ValueError(f"character {exc.args[0]!r} is not in the Base64 alphabet") from None
    while len(idx) > 2 * target_len - 1:
        half = (len(idx) + 1) // 2
        tail = idx[half:] + [0] * (half - (len(idx) - half))
        idx = [a ^ b for a, b in zip(idx[:half], tail)]
    return "".join(B64_ALPHABET[i] for i in idx[:target_len])


def _pin_pad(pin: str) -> bytes:
    raw = pin.encode("utf-8")
    reps = -(-DIGEST_SIZE // len(raw))
    return (raw * reps)[:DIGEST_SIZE]


def derive_otp(
    factors: FactorSet,
    time: TimeFactors,
    policy: OtpPolicy = OtpPolicy(),
    pin_policy: Optional[PinPolicy] = None,
) -> str:
    """Derive the one-time password for ``factors`` in the window ``time``.

    ``pin_policy`` re-checks the PIN against a policy other than the one the
    FactorSet was built with; violations raise PolicyError.
    """
    if pin_policy is not None:
        violations = validate_pin(factors.pin, pin_policy)
        if violations:
            raise PolicyError(violations)
    digest = hashlib.sha256(canonical_concat(factors, time)).digest()
    mixed = bytes(a ^ b for a, b in zip(digest, _pin_pad(factors.pin)))
    encoded = base64.b64encode(mixed).decode("ascii").rstrip("=")
    return fold(encoded, policy.otp_length)


def otp_at(factors: FactorSet, instant, policy: OtpPolicy = OtpPolicy(), tz: Optional[str] = None) -> str:
    """Convenience wrapper: quantize ``instant`` and derive."""
    return derive_otp(factors, time_factors(instant, policy, tz), policy)
