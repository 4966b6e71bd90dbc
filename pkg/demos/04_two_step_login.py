"""
A complete two-step login
=========================

Register in person, send password plus sealed identity, receive the SMS,
type the token. A manual clock makes the expiry case instantaneous.
"""
from twostep import AuthServer, IdentityMessage, ManualClock, MemoryOutbox, MemoryStore, Provider, encrypt_identity
from twostep.config import Config

clock = ManualClock()
outbox = MemoryOutbox()
server = AuthServer(MemoryStore(), Provider(outbox), master_key=b"\x11" * 32,
                    config=Config(pbkdf2_iterations=10_000))

summary, key = server.register_user(
    "Alice", "Liddell", "alice", "Ab3$efgh", "+15550100", "490154203237518", "310150123456789",
    now=clock(),
)
print("registered:", summary)


def login(password="Ab3$efgh", key=key, delay=30):
    msg = IdentityMessage.create("490154203237518", "310150123456789", "alice", clock())
    started = server.begin_login("alice", password, encrypt_identity(msg, key), clock())
    if not hasattr(started, "challenge_id"):
        return started
    token = outbox.last_for("+15550100").body.rsplit(" ", 1)[-1]
    return server.complete_login(started.challenge_id, token, clock.advance(delay))


print("happy path    :", login())
print("wrong password:", login(password="Nope#1234"))
print("token too late:", login(delay=601))
