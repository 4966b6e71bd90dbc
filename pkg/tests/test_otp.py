import base64
import datetime as dt
import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load_vectors
from oracles import B64, oracle_fold, oracle_otp, zeller_dow
from twostep.otp import (
    B64_ALPHABET,
    FactorError,
    FactorSet,
    OtpPolicy,
    PinPolicy,
    PolicyError,
    TimeFactors,
    Window,
    canonical_concat,
    derive_otp,
    fold,
    otp_at,
    time_factors,
    validate_pin,
)

ALICE = FactorSet("1" * 15, "001010123456789", "alice", "Ab3$efgh")
T_1037 = TimeFactors(13, 2, 18, 0, 10, 3)


def test_alphabet_matches_oracle():
    assert B64_ALPHABET == B64
    assert len(set(B64_ALPHABET)) == 64


# -- PIN policy ----------------------------------------------------------------

@pytest.mark.parametrize("pin, expected", [
    ("Ab3$efgh", []),
    ("1234", ["too-short", "no-upper", "no-lower", "no-symbol"]),
    ("abcdefgh", ["no-upper", "no-digit", "no-symbol"]),
    ("ABCDEFGH", ["no-lower", "no-digit", "no-symbol"]),
    ("Ab3$efg", ["too-short"]),
    ("", ["too-short", "no-upper", "no-lower", "no-digit", "no-symbol"]),
])
def test_validate_pin(pin, expected):
    assert validate_pin(pin) == expected


def test_validate_pin_respects_disabled_classes():
    relaxed = PinPolicy(min_length=4, require_symbol=False, require_upper=False)
    assert validate_pin("ab12", relaxed) == []
    assert validate_pin("abcd", relaxed) == ["no-digit"]


def test_pin_policy_floor():
    with pytest.raises(ValueError):
        PinPolicy(min_length=3)


# -- factor invariants ---------------------------------------------------------

@pytest.mark.parametrize("imei, imsi, username", [
    ("1" * 14, "001010123456789", "alice"),
    ("1" * 16, "001010123456789", "alice"),
    ("11111111111111a", "001010123456789", "alice"),
    ("1" * 15, "12345", "alice"),
    ("1" * 15, "1" * 16, "alice"),
    ("1" * 15, "001010123456789", ""),
    ("1" * 15, "001010123456789", "al|ce"),
    ("1" * 15, "001010123456789", "al\nce"),
])
def test_factor_set_rejects_malformed(imei, imsi, username):
    with pytest.raises(FactorError):
        FactorSet(imei, imsi, username, "Ab3$efgh")


def test_factor_set_rejects_weak_pin():
    with pytest.raises(PolicyError) as info:
        FactorSet("1" * 15, "001010123456789", "alice", "1234")
    assert info.value.violations == ["too-short", "no-upper", "no-lower", "no-symbol"]


def test_pin_not_in_repr():
    assert "Ab3$efgh" not in repr(ALICE)


# -- time factors --------------------------------------------------------------

def test_time_factors_example():
    tf = time_factors(dt.datetime(2013, 2, 18, 10, 37))
    assert tf == TimeFactors(yy=13, mm=2, dd=18, dow=0, hh=10, minute_digit=3)
    assert zeller_dow(2013, 2, 18) == 0


def test_time_factors_y2k():
    tf = time_factors(dt.datetime(2000, 1, 1, 0, 0))
    assert (tf.yy, tf.mm, tf.dd, tf.hh, tf.minute_digit) == (0, 1, 1, 0, 0)
    assert tf.dow == zeller_dow(2000, 1, 1) == 5


def test_time_factors_same_bucket():
    a = time_factors(dt.datetime(2013, 2, 18, 10, 37))
    b = time_factors(dt.datetime(2013, 2, 18, 10, 39))
    assert a == b


def test_time_factors_per_minute_widens_slot():
    tf = time_factors(dt.datetime(2013, 2, 18, 10, 37), OtpPolicy(window=Window.MINUTE))
    assert tf.minute_digit == 37 and tf.per_minute


def test_time_factors_epoch_and_zone():
    # 2013-02-18T10:37Z
    epoch = int(dt.datetime(2013, 2, 18, 10, 37, tzinfo=dt.timezone.utc).timestamp())
    assert time_factors(epoch) == T_1037
    tokyo = time_factors(epoch, tz="Asia/Tokyo")
    assert (tokyo.hh, tokyo.minute_digit) == (19, 3)
    aware = dt.datetime(2013, 2, 18, 11, 37, tzinfo=dt.timezone(dt.timedelta(hours=1)))
    assert time_factors(aware) == T_1037


@given(st.datetimes(min_value=dt.datetime(1900, 3, 1), max_value=dt.datetime(2199, 12, 31)))
def test_dow_matches_zeller(instant):
    assert time_factors(instant).dow == zeller_dow(instant.year, instant.month, instant.day)


def test_time_factors_rejects_bad_day():
    with pytest.raises(ValueError):
        TimeFactors(13, 2, 29, 0, 0, 0)
    TimeFactors(12, 2, 29, 2, 0, 0)


# -- canonical concatenation -----------------------------------------------------

def test_canonical_concat_example():
    assert canonical_concat(ALICE, T_1037) == (
        b"111111111111111|001010123456789|alice|Ab3$efgh|10|3|0|13|02|18"
    )


def test_canonical_concat_pin_sensitivity():
    other = FactorSet("1" * 15, "001010123456789", "alice", "Ab3$efgi")
    assert canonical_concat(ALICE, T_1037) != canonical_concat(other, T_1037)


def test_canonical_concat_per_minute():
    tf = TimeFactors(13, 2, 18, 0, 10, 7, per_minute=True)
    assert canonical_concat(ALICE, tf).endswith(b"|10|07|0|13|02|18")


# -- fold ----------------------------------------------------------------------

@pytest.mark.parametrize("text, n, expected", [
    ("ABCDABCD", 4, "AAAA"),
    ("ABCD", 2, "CC"),
    ("ABCDE", 2, "DF"),   # hand oracle: ABC ^ DEA = DFC, truncated
    ("ABCDE", 5, "ABCDE"),
    ("B", 1, "B"),
])
def test_fold_examples(text, n, expected):
    assert fold(text, n) == expected
    assert oracle_fold(text, n) == expected


@pytest.mark.parametrize("n", [0, 6])
def test_fold_rejects_bad_length(n):
    with pytest.raises(ValueError):
        fold("ABCDE", n)


def test_fold_rejects_foreign_characters():
    with pytest.raises(ValueError):
        fold("AB=D", 2)


b64_text = st.text(alphabet=B64, min_size=1, max_size=64)


@given(b64_text, st.data())
def test_fold_matches_oracle_and_stays_in_alphabet(text, data):
    n = data.draw(st.integers(1, len(text)))
    out = fold(text, n)
    assert len(out) == n
    assert set(out) <= set(B64)
    assert out == oracle_fold(text, n)


@given(b64_text)
def test_fold_identity(text):
    assert fold(text, len(text)) == text


@given(st.text(alphabet=B64, min_size=1, max_size=32))
def test_fold_equal_halves(half):
    assert fold(half + half, len(half)) == "A" * len(half)


# -- derive_otp ----------------------------------------------------------------

def test_derive_otp_frozen_example():
    assert derive_otp(ALICE, T_1037, OtpPolicy(8)) == "7m14uD0t"


def test_derive_otp_pipeline_by_hand():
    data = canonical_concat(ALICE, T_1037)
    digest = hashlib.sha256(data).digest()
    pad = (b"Ab3$efgh" * 4)[:32]
    mixed = bytes(a ^ b for a, b in zip(digest, pad))
    encoded = base64.b64encode(mixed).decode().rstrip("=")
    assert len(encoded) == 43
    for n in (4, 8, 21, 22, 28):
        assert derive_otp(ALICE, T_1037, OtpPolicy(n)) == fold(encoded, n)


def test_derive_otp_window_examples():
    at = lambda hh, mm: otp_at(ALICE, dt.datetime(2013, 2, 18, hh, mm))  # noqa: E731
    assert at(10, 31) == at(10, 39) == "7m14uD0t"
    assert time_factors(dt.datetime(2013, 2, 18, 10, 39)) != time_factors(dt.datetime(2013, 2, 18, 10, 40))
    assert at(10, 40) == "MDSw6j+C" != at(10, 39)


def test_derive_otp_matches_frozen_vectors():
    for v in load_vectors():
        factors = FactorSet(v["imei"], v["imsi"], v["username"], v["pin"])
        assert otp_at(factors, dt.datetime.fromisoformat(v["instant"]),
                      OtpPolicy(v["length"], v["window"])) == v["otp"], v


def test_frozen_vectors_pin_sensitivity():
    # the oracle gives different values for PINs one character apart
    a = oracle_otp("1" * 15, "001010123456789", "alice", "Ab3$efgh", 2013, 2, 18, 10, 37, 8)
    b = oracle_otp("1" * 15, "001010123456789", "alice", "Ab3$efgi", 2013, 2, 18, 10, 37, 8)
    assert a == "7m14uD0t" and a != b
    other = FactorSet("1" * 15, "001010123456789", "alice", "Ab3$efgi")
    assert derive_otp(other, T_1037) == b


def test_derive_otp_enforces_explicit_policy():
    with pytest.raises(PolicyError):
        derive_otp(ALICE, T_1037, pin_policy=PinPolicy(min_length=12))


@pytest.mark.parametrize("n", [3, 29])
def test_otp_policy_bounds(n):
    with pytest.raises(ValueError):
        OtpPolicy(n)


def test_otp_policy_window_coerced():
    assert OtpPolicy(window="minute").window is Window.MINUTE
    with pytest.raises(ValueError):
        OtpPolicy(window="hourly")


@settings(max_examples=200)
@given(st.integers(0, 10**9), st.integers(4, 28))
def test_determinism_and_alphabet(epoch, n):
    policy = OtpPolicy(n)
    a = otp_at(ALICE, epoch, policy)
    assert a == otp_at(ALICE, epoch, policy)
    assert len(a) == n and set(a) <= set(B64)
