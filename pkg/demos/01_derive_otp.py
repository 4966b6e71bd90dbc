"""
Deriving a one-time password from phone factors
===============================================

Walks through each stage of the derivation and shows how long an OTP stays
valid under the two window sizes.
"""
import base64
import datetime as dt
import hashlib

from twostep import FactorSet, OtpPolicy, Window, canonical_concat, derive_otp, fold, time_factors

###############################################################################
# Static factors live on both the handset and the server. The PIN is checked
# against the policy when the FactorSet is built and is hidden from repr.
factors = FactorSet(imei="490154203237518", imsi="310150123456789", username="alice", pin="Ab3$efgh")
print(factors)

###############################################################################
# Quantize the clock. With the default ten-minute window only the first digit
# of the minute is kept.
instant = dt.datetime(2013, 2, 18, 10, 37)
tf = time_factors(instant)
print(tf)

###############################################################################
# The stages, spelled out.
message = canonical_concat(factors, tf)
digest = hashlib.sha256(message).digest()
pad = (factors.pin.encode() * 32)[:32]
mixed = bytes(a ^ b for a, b in zip(digest, pad))
encoded = base64.b64encode(mixed).decode().rstrip("=")
print("concat :", message.decode().replace(factors.pin, "********"))
print("base64 :", encoded, f"({len(encoded)} chars)")
for n in (28, 12, 8, 6):
    print(f"fold {n:2d}:", fold(encoded, n))

###############################################################################
# derive_otp runs the same pipeline in one call.
assert derive_otp(factors, tf, OtpPolicy(8)) == fold(encoded, 8)

###############################################################################
# Every minute of the 10:30 bucket yields the same password; 10:40 starts a
# new one. A per-minute policy changes the value every minute instead.
for policy in (OtpPolicy(8), OtpPolicy(8, Window.MINUTE)):
    print(f"\n{policy.window.value}:")
    for minute in (29, 30, 35, 39, 40):
        t = dt.datetime(2013, 2, 18, 10, minute)
        print(f"  10:{minute}  {derive_otp(factors, time_factors(t, policy), policy)}")
