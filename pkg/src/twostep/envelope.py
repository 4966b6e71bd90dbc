"""AES-256-GCM envelope for the client -> server identity message."""
from __future__ import annotations

import base64
import binascii
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .otp import check_imei, check_imsi, check_username

log = logging.getLogger(__name__)

KEY_SIZE = 32
NONCE_SIZE = 12
TAG_SIZE = 16
DEFAULT_SKEW = 120


class EnvelopeError(Exception):
    code = "envelope-error"


class AuthenticationFailure(EnvelopeError):
    code = "authentication-failure"


class StaleMessage(EnvelopeError):
    code = "stale-message"


@dataclass(frozen=True)
class SymmetricKey:
    key_bytes: bytes

    def __post_init__(self):
        if len(self.key_bytes) != KEY_SIZE:
            raise ValueError("symmetric key must be exactly 32 bytes")

    def __repr__(self):
        return "SymmetricKey(<redacted>)"

    @classmethod
    def generate(cls) -> "SymmetricKey":
        return cls(AESGCM.generate_key(bit_length=256))

    @classmethod
    def from_b64(cls, text: str) -> "SymmetricKey":
        return cls(base64.b64decode(text, validate=True))

    def to_b64(self) -> str:
        return base64.b64encode(self.key_bytes).decode("ascii")


@dataclass(frozen=True)
class IdentityMessage:
    imei: str
    imsi: str
    username: str
    nonce: bytes
    issued_at: int

    @classmethod
    def create(cls, imei: str, imsi: str, username: str, issued_at: int) -> "IdentityMessage":
        return cls(imei, imsi, username, os.urandom(NONCE_SIZE), int(issued_at))

    def serialize(self) -> bytes:
        # fixed field order, no whitespace
        doc = {
            "imei": self.imei,
            "imsi": self.imsi,
            "username": self.username,
            "nonce": base64.b64encode(self.nonce).decode("ascii"),
            "issued_at": self.issued_at,
        }
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    @classmethod
    def parse(cls, data: bytes) -> "IdentityMessage":
        doc = json.loads(data.decode("utf-8"))
        msg = cls(
            imei=check_imei(doc["imei"]),
            imsi=check_imsi(doc["imsi"]),
            username=check_username(doc["username"]),
            nonce=base64.b64decode(doc["nonce"]),
            issued_at=int(doc["issued_at"]),
        )
        if len(msg.nonce) != NONCE_SIZE:
            raise ValueError("bad nonce length")
        return msg


@dataclass(frozen=True)
class Ciphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def to_wire(self) -> str:
        return (base64.b64encode(self.nonce).decode("ascii") + "."
                + base64.b64encode(self.body + self.tag).decode("ascii"))

    @classmethod
    def from_wire(cls, text: str) -> "Ciphertext":
        try:
            head, _, rest = text.partition(".")
            nonce = base64.b64decode(head, validate=True)
            sealed = base64.b64decode(rest, validate=True)
        except (binascii.Error, ValueError, AttributeError):
            raise AuthenticationFailure("malformed envelope") from None
        if len(nonce) != NONCE_SIZE or len(sealed) < TAG_SIZE:
            raise AuthenticationFailure("malformed envelope")
        return cls(nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])

    def __len__(self):
        return len(self.nonce) + len(self.body) + len(self.tag)


def encrypt_identity(msg: IdentityMessage, key: SymmetricKey) -> Ciphertext:
    nonce = os.urandom(NONCE_SIZE)
    sealed = AESGCM(key.key_bytes).encrypt(nonce, msg.serialize(), None)
    return Ciphertext(nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def decrypt_identity(
    ct: Ciphertext, key: SymmetricKey, now: int, skew: int = DEFAULT_SKEW
) -> IdentityMessage:
    """Open and verify an envelope.

    Raises AuthenticationFailure for a wrong key, tampering or an unparseable
    plaintext, and StaleMessage when ``issued_at`` is more than ``skew``
    seconds away from ``now``.
    """
    try:
        plain = AESGCM(key.key_bytes).decrypt(ct.nonce, ct.body + ct.tag, None)
    except (InvalidTag, ValueError):
        log.info("envelope rejected: %s", AuthenticationFailure.code)
        raise AuthenticationFailure("envelope failed authentication") from None
    try:
        msg = IdentityMessage.parse(plain)
    except (ValueError, KeyError, TypeError):
        log.info("envelope rejected: %s", AuthenticationFailure.code)
        raise AuthenticationFailure("envelope plaintext malformed") from None
    if abs(now - msg.issued_at) > skew:
        log.info("envelope rejected: %s (off by %ds)", StaleMessage.code, now - msg.issued_at)
        raise StaleMessage("envelope timestamp outside the accepted skew")
    return msg


def seal(data: bytes, key: bytes, aad: Optional[bytes] = None) -> bytes:
    """Wrap server-side secrets at rest: nonce || ciphertext || tag."""
    nonce = os.urandom(NONCE_SIZE)
    return nonce + AESGCM(key).encrypt(nonce, data, aad)


def unseal(blob: bytes, key: bytes, aad: Optional[bytes] = None) -> bytes:
    return AESGCM(key).decrypt(blob[:NONCE_SIZE], blob[NONCE_SIZE:], aad)
