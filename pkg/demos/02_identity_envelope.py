"""
Sealing the identity message
============================

The phone sends its identifiers to the server under the per-user 256-bit key.
Any change to the ciphertext, a wrong key or an old timestamp is rejected.
"""
import time

from twostep import (
    AuthenticationFailure,
    Ciphertext,
    IdentityMessage,
    StaleMessage,
    SymmetricKey,
    decrypt_identity,
    encrypt_identity,
)

key = SymmetricKey.generate()
now = int(time.time())
msg = IdentityMessage.create("490154203237518", "310150123456789", "alice", now)

wire = encrypt_identity(msg, key).to_wire()
print("wire form:", wire)
print("opened   :", decrypt_identity(Ciphertext.from_wire(wire), key, now))

###############################################################################
# Flip one bit of the body.
ct = Ciphertext.from_wire(wire)
tampered = Ciphertext(ct.nonce, bytes([ct.body[0] ^ 1]) + ct.body[1:], ct.tag)
for label, attempt in [
    ("tampered", lambda: decrypt_identity(tampered, key, now)),
    ("wrong key", lambda: decrypt_identity(ct, SymmetricKey.generate(), now)),
    ("an hour late", lambda: decrypt_identity(ct, key, now + 3600)),
]:
    try:
        attempt()
    except (AuthenticationFailure, StaleMessage) as exc:
        print(f"{label:12s} -> {exc.code}")
