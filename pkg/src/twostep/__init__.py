"""Two-step authentication: factor-derived OTPs, SMS transaction tokens and
an encrypted identity envelope, with a small JSON server and CLI."""
from .envelope import (
    AuthenticationFailure,
    Ciphertext,
    IdentityMessage,
    StaleMessage,
    SymmetricKey,
    decrypt_identity,
    encrypt_identity,
)
from .otp import (
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
from .provider import FileOutbox, MemoryOutbox, Provider, ProviderConfig, VerifyResult
from .server import AuthDecision, AuthServer, LoginStarted, ManualClock, Reason
from .store import JsonFileStore, MemoryStore, UserRecord, hash_password

__version__ = "0.1.0"
