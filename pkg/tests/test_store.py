import base64
import hashlib
import json
import os

import pytest

from oracles import oracle_pbkdf2_sha256
from twostep.store import (
    DuplicateUsername,
    JsonFileStore,
    MemoryStore,
    PasswordHash,
    StoreCorrupt,
    UserRecord,
    hash_password,
)

SALT = bytes(range(16))
# frozen from tests/oracles.py (hand-written PBKDF2 loop)
VECTOR = bytes.fromhex("74e5c77213e05af410a7eb0d95545780e87b8b11a37d70401e8411731ddbf74d")
VECTOR_SALT_1_16 = bytes.fromhex("55bf88418e8a7ae8ab11451e963d8132e22ce57d79f5d3aab3637ed9728821af")


def record(username="alice", password="Ab3$efgh"):
    return UserRecord(
        first="Alice", last="Liddell", username=username,
        password_hash=PasswordHash.create(password, 10_000),
        key_wrapped=b"\x01" * 60, mobile="+15550100", imei="1" * 15, imsi="001010123456789",
        pin_wrapped=b"\x02" * 36, created_at=1_360_000_000,
    )


def test_hash_password_frozen_vector():
    assert hash_password("Ab3$efgh", SALT, 10_000) == VECTOR
    assert oracle_pbkdf2_sha256(b"Ab3$efgh", SALT, 10_000) == VECTOR


def test_hash_password_salt_matters():
    assert hash_password("Ab3$efgh", bytes(range(1, 17)), 10_000) == VECTOR_SALT_1_16 != VECTOR


def test_hash_password_deterministic():
    assert hash_password("x", SALT, 10_000) == hash_password("x", SALT, 10_000)


def test_hash_password_iteration_floor():
    with pytest.raises(ValueError):
        hash_password("x", SALT, 9_999)


def test_digest_is_not_an_encoding_of_the_password():
    pw = "Ab3$efgh"
    ph = PasswordHash.create(pw, 10_000)
    raw = pw.encode()
    encodings = {raw, raw.hex().encode(), base64.b64encode(raw), hashlib.sha256(raw).digest(),
                 raw.ljust(32, b"\0")}
    assert ph.digest not in encodings
    assert ph.verify(pw) and not ph.verify("Ab3$efgi")


@pytest.mark.parametrize("factory", [lambda p: MemoryStore(), lambda p: JsonFileStore(p / "users.json")])
def test_put_get_roundtrip(tmp_path, factory):
    store = factory(tmp_path)
    rec = record()
    store.put_user(rec)
    assert store.get_user("alice") == rec
    assert store.get_user("Alice") is None
    assert store.get_user("bob") is None
    with pytest.raises(DuplicateUsername):
        store.put_user(record())
    assert len(store) == 1


def test_file_store_durable(tmp_path):
    path = tmp_path / "users.json"
    store = JsonFileStore(path)
    store.put_user(record("alice"))
    store.put_user(record("bob"))
    reopened = JsonFileStore(path)
    assert reopened.usernames() == ["alice", "bob"]
    assert reopened.get_user("bob") == store.get_user("bob")
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and len(doc["users"]) == 2


def test_missing_store_file_created_empty(tmp_path):
    path = tmp_path / "nested" / "users.json"
    JsonFileStore(path)
    assert json.loads(path.read_text()) == {"version": 1, "users": []}


def test_crash_between_write_and_rename(tmp_path, monkeypatch):
    path = tmp_path / "users.json"
    store = JsonFileStore(path)
    store.put_user(record("alice"))
    before = path.read_bytes()

    def boom(src, dst):
        raise OSError("simulated crash")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        store.put_user(record("bob"))
    monkeypatch.undo()
    assert path.read_bytes() == before
    assert store.get_user("bob") is None
    assert JsonFileStore(path).usernames() == ["alice"]
    assert [p.name for p in tmp_path.iterdir()] == ["users.json"]


def test_corrupt_store_reported(tmp_path):
    path = tmp_path / "users.json"
    path.write_text("{not json")
    with pytest.raises(StoreCorrupt):
        JsonFileStore(path)
    path.write_text('{"version": 2, "users": []}')
    with pytest.raises(StoreCorrupt):
        JsonFileStore(path)


def test_no_plaintext_password_in_file(tmp_path):
    path = tmp_path / "users.json"
    JsonFileStore(path).put_user(record(password="Zq9!secretPW"))
    data = path.read_bytes()
    assert b"Zq9!secretPW" not in data
    assert base64.b64encode(b"Zq9!secretPW") not in data


def test_reader_sees_other_writer(tmp_path):
    path = tmp_path / "users.json"
    server_view = JsonFileStore(path)
    JsonFileStore(path).put_user(record("alice"))
    assert server_view.get_user("alice") is not None
    server_view.put_user(record("bob"))
    assert JsonFileStore(path).usernames() == ["alice", "bob"]
