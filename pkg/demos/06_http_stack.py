"""
Running the JSON API
====================

Mounts the auth server and the provider in one HTTP server on a background
thread, then drives registration and login with plain HTTP calls. The same
routes are what ``twostep serve`` exposes.
"""
import json

from twostep import AuthServer, IdentityMessage, MemoryOutbox, MemoryStore, Provider, SymmetricKey, encrypt_identity
from twostep.api import App, post_json, serve_in_thread
from twostep.config import Config
from twostep.server import system_clock

outbox = MemoryOutbox()
provider = Provider(outbox)
auth = AuthServer(MemoryStore(), provider, b"\x33" * 32, Config(pbkdf2_iterations=10_000))
server, url = serve_in_thread(App(auth, provider))
print("serving on", url)

status, reg = post_json(url + "/register", {
    "first": "Alice", "last": "Liddell", "username": "alice", "password": "Ab3$efgh",
    "mobile": "+15550100", "imei": "490154203237518", "imsi": "310150123456789",
})
print(status, {k: v for k, v in reg.items() if k != "key_b64"})

key = SymmetricKey.from_b64(reg["key_b64"])
msg = IdentityMessage.create("490154203237518", "310150123456789", "alice", system_clock())
status, started = post_json(url + "/login/begin", {
    "username": "alice", "password": "Ab3$efgh", "envelope": encrypt_identity(msg, key).to_wire(),
})
print(status, json.dumps(started))

token = outbox.last_for("+15550100").body.rsplit(" ", 1)[-1]
print(*post_json(url + "/login/complete", {"challenge_id": started["challenge_id"], "token": token}))
print(*post_json(url + "/login/complete", {"challenge_id": started["challenge_id"], "token": token}))
server.shutdown()
