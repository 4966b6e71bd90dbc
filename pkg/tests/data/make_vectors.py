"""Regenerate the frozen OTP vectors from the standalone oracle.

    python tests/data/make_vectors.py > tests/data/otp_vectors.jsonl
"""
import json
import os
import random
import string
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))
from oracles import oracle_otp  # noqa: E402

SYMBOLS = "!@#$%^&*()-_=+[]{};:,.<>?/~"


def random_pin(rng):
    n = rng.randint(8, 16)
    chars = [rng.choice(string.ascii_uppercase), rng.choice(string.ascii_lowercase),
             rng.choice(string.digits), rng.choice(SYMBOLS)]
    pool = string.ascii_letters + string.digits + SYMBOLS
    chars += [rng.choice(pool) for _ in range(n - 4)]
    rng.shuffle(chars)
    return "".join(chars)


def main():
    rng = random.Random(20130218)
    rows = [dict(imei="1" * 15, imsi="001010123456789", username="alice", pin="Ab3$efgh",
                 instant="2013-02-18T10:37", window="ten-minutes", length=8)]
    # adjacent-bucket pairs: 10:31 / 10:39 / 10:40
    for hhmm in ("10:31", "10:39", "10:40"):
        rows.append(dict(rows[0], instant="2013-02-18T" + hhmm))
    while len(rows) < 100:
        year = rng.randint(2000, 2099)
        month = rng.randint(1, 12)
        day = rng.randint(1, 28)
        hour = rng.randint(0, 23)
        minute = rng.randint(0, 59)
        base = dict(
            imei="".join(rng.choice(string.digits) for _ in range(15)),
            imsi="".join(rng.choice(string.digits) for _ in range(rng.randint(6, 15))),
            username=rng.choice(["alice", "bob", "carol", "dave", "erin"]) + str(rng.randint(0, 999)),
            pin=random_pin(rng),
            window=rng.choice(["ten-minutes", "ten-minutes", "minute"]),
            length=rng.randint(4, 28),
        )
        base["instant"] = "%04d-%02d-%02dT%02d:%02d" % (year, month, day, hour, minute)
        rows.append(base)
        if len(rows) < 100 and base["window"] == "ten-minutes":
            # same factors, next ten-minute bucket
            total = hour * 60 + minute + 10
            if total < 24 * 60:
                rows.append(dict(base, instant="%04d-%02d-%02dT%02d:%02d"
                                 % (year, month, day, total // 60, total % 60)))
    for row in rows:
        date, hm = row["instant"].split("T")
        y, mo, d = (int(p) for p in date.split("-"))
        h, mi = (int(p) for p in hm.split(":"))
        row["otp"] = oracle_otp(row["imei"], row["imsi"], row["username"], row["pin"],
                                y, mo, d, h, mi, row["length"], row["window"] == "minute")
        print(json.dumps(row, sort_keys=False))


if __name__ == "__main__":
    main()
