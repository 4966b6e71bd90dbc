"""
Connection-less verification and clock skew
===========================================

Phone and server derive the OTP independently. The server accepts the
current window and the one before it, so a phone clock that runs behind by
up to one window still works. Run the sweep to see where the band lies.
"""
import datetime as dt

from twostep import AuthServer, FactorSet, MemoryOutbox, MemoryStore, Provider, otp_at
from twostep.config import Config

IMEI, IMSI, PIN = "490154203237518", "310150123456789", "Ab3$efgh"
server_now = int(dt.datetime(2013, 2, 18, 10, 34, tzinfo=dt.timezone.utc).timestamp())
phone = FactorSet(IMEI, IMSI, "alice", PIN)

row = []
for offset in range(-20, 21):
    server = AuthServer(MemoryStore(), Provider(MemoryOutbox()), b"\x22" * 32,
                        Config(pbkdf2_iterations=10_000))
    server.register_user("Alice", "Liddell", "alice", PIN, "+15550100", IMEI, IMSI)
    otp = otp_at(phone, server_now + 60 * offset)
    row.append("#" if server.connectionless_verify("alice", otp, server_now).granted else ".")

print("phone clock offset -20 ... +20 min (server at 10:34)")
print("".join(row))
