"""User registry with salted, iterated password hashes.

Two backends share one interface: ``MemoryStore`` for unit tests and
``JsonFileStore``, a single JSON document replaced atomically on every write.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional

MIN_ITERATIONS = 10_000
SALT_SIZE = 16
FORMAT_VERSION = 1


class DuplicateUsername(Exception):
    pass


class StoreCorrupt(Exception):
    pass


def hash_password(password: str, salt: bytes, iterations: int) -> bytes:
    if iterations < MIN_ITERATIONS:
        raise ValueError(f"iterations must be >= {MIN_ITERATIONS}")
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations, 32)


@dataclass(frozen=True)
class PasswordHash:
    salt: bytes
    iterations: int
    digest: bytes

    @classmethod
    def create(cls, password: str, iterations: int = 200_000) -> "PasswordHash":
        salt = os.urandom(SALT_SIZE)
        return cls(salt, iterations, hash_password(password, salt, iterations))

    def verify(self, password: str) -> bool:
        return hmac.compare_digest(hash_password(password, self.salt, self.iterations), self.digest)


@dataclass(frozen=True)
class UserRecord:
    first: str
    last: str
    username: str
    password_hash: PasswordHash = field(repr=False)
    key_wrapped: bytes = field(repr=False)
    mobile: str
    imei: str
    imsi: str
    pin_wrapped: Optional[bytes] = field(default=None, repr=False)
    created_at: int = 0

    def to_dict(self) -> dict:
        b64 = lambda b: base64.b64encode(b).decode("ascii")  # noqa: E731
        d = asdict(self)
        d["password_hash"] = {
            "salt": b64(self.password_hash.salt),
            "iterations": self.password_hash.iterations,
            "digest": b64(self.password_hash.digest),
        }
        d["key_wrapped"] = b64(self.key_wrapped)
        d["pin_wrapped"] = b64(self.pin_wrapped) if self.pin_wrapped is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UserRecord":
        ph = d["password_hash"]
        return cls(
            first=d["first"],
            last=d["last"],
            username=d["username"],
            password_hash=PasswordHash(
                base64.b64decode(ph["salt"]), int(ph["iterations"]), base64.b64decode(ph["digest"])
            ),
            key_wrapped=base64.b64decode(d["key_wrapped"]),
            mobile=d["mobile"],
            imei=d["imei"],
            imsi=d["imsi"],
            pin_wrapped=base64.b64decode(d["pin_wrapped"]) if d.get("pin_wrapped") else None,
            created_at=int(d.get("created_at", 0)),
        )


class MemoryStore:
    def __init__(self):
        self._users: Dict[str, UserRecord] = {}
        self._lock = threading.RLock()

    def put_user(self, record: UserRecord) -> None:
        with self._lock:
            self._refresh()
            if record.username in self._users:
                raise DuplicateUsername(record.username)
            users = dict(self._users)
            users[record.username] = record
            self._commit(users)
            self._users = users

    def get_user(self, username: str) -> Optional[UserRecord]:
        self._refresh()
        return self._users.get(username)

    def usernames(self):
        self._refresh()
        return sorted(self._users)

    def __len__(self):
        self._refresh()
        return len(self._users)

    def _refresh(self) -> None:
        pass

    def _commit(self, users: Dict[str, UserRecord]) -> None:
        pass


class JsonFileStore(MemoryStore):
    """JSON document ``{"version": 1, "users": [...]}``, binary fields base64.

    Writes go to a temp file in the same directory, are fsynced, then renamed
    over the original so a crash leaves either the old or the new file.
    Another process (the ``register`` command) may replace the file while a
    server holds it open; reads pick that up by watching the file identity.
    """

    def __init__(self, path):
        super().__init__()
        self.path = Path(path)
        self._stamp = None
        if self.path.exists():
            self._refresh()
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._commit({})

    def _identity(self):
        st = os.stat(self.path)
        return st.st_ino, st.st_mtime_ns, st.st_size

    def _refresh(self) -> None:
        with self._lock:
            stamp = self._identity()
            if stamp != self._stamp:
                self._users = self._load()
                self._stamp = stamp

    def _load(self) -> Dict[str, UserRecord]:
        try:
            doc = json.loads(self.path.read_text(encoding="utf-8"))
            if doc.get("version") != FORMAT_VERSION:
                raise StoreCorrupt(f"unsupported store version {doc.get('version')!r}")
            return {u["username"]: UserRecord.from_dict(u) for u in doc["users"]}
        except (ValueError, KeyError, TypeError) as exc:
            raise StoreCorrupt(f"{self.path}: {exc}") from exc

    def _commit(self, users: Dict[str, UserRecord]) -> None:
        doc = {"version": FORMAT_VERSION, "users": [users[k].to_dict() for k in sorted(users)]}
        fd, tmp = tempfile.mkstemp(prefix=".store-", dir=self.path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=1)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)
            self._stamp = self._identity()
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise

