"""
The simulated SMS provider
==========================

Issue a token for a phone number, read it from the outbox, and verify it
against the transaction ID. Tokens are single use and expire after ten
minutes.
"""
from twostep import MemoryOutbox, Provider

outbox = MemoryOutbox()
provider = Provider(outbox)
now = 1_360_000_000

txid = provider.issue_token("+15550100", now)
sms = outbox.records[-1]
token = sms.body.rsplit(" ", 1)[-1]
print("txid  :", txid)
print("SMS   :", sms)

print("wrong :", provider.verify_token(txid, "000000", now + 5).value)
print("right :", provider.verify_token(txid, token, now + 10).value)
print("again :", provider.verify_token(txid, token, now + 11).value)

txid2 = provider.issue_token("+15550100", now)
token2 = outbox.records[-1].body.rsplit(" ", 1)[-1]
print("late  :", provider.verify_token(txid2, token2, now + 601).value)

###############################################################################
# Leftover pending tokens can be swept in bulk.
provider.issue_token("+15550100", now)
print("swept :", provider.sweep_expired(now + 600))
