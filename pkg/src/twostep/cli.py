"""Operator and mobile-client simulator.

    twostep serve                        run the auth server (+ in-process provider)
    twostep register --username ...      in-person registration, writes a profile
    twostep login --profile P            full two-step login against the server
    twostep otp --profile P [--at T]     derive the phone-side OTP
    twostep outbox [PATH] [--tail N]     show simulated SMS messages
    twostep vectors --count N --seed S   emit OTP test vectors as JSON lines

The PIN is read from ``TWOSTEP_PIN`` or an interactive prompt, never from argv.
"""
from __future__ import annotations

import argparse
import datetime as dt
import getpass
import json
import logging
import os
import random
import stat
import string
import sys
import time
from pathlib import Path
from typing import List, Optional

from . import envelope as env
from .api import ApiError, App, HttpProvider, make_server, post_json
from .config import Config, ConfigError, load_config
from .otp import FactorError, FactorSet, OtpPolicy, PolicyError, Window, otp_at, validate_pin
from .provider import FileOutbox, Provider, ProviderConfig, read_outbox, token_from_body
from .server import AuthServer, RegistrationError, WeakPassword, load_master_key
from .store import DuplicateUsername, JsonFileStore, StoreCorrupt

EXIT_OK, EXIT_DENIED, EXIT_USAGE, EXIT_NETWORK = 0, 1, 2, 3
PIN_ENV = "TWOSTEP_PIN"

log = logging.getLogger("twostep.cli")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def read_pin(prompt: str = "PIN: ") -> str:
    pin = os.environ.get(PIN_ENV)
    if pin is not None:
        return pin
    return getpass.getpass(prompt)


def emit(args, text: str, payload: Optional[dict] = None) -> None:
    if args.json and payload is not None:
        print(json.dumps(payload))
    else:
        print(text)


def _config(args) -> Config:
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}") from None


def build_provider(cfg: Config) -> Provider:
    pcfg = ProviderConfig(
        token_length=cfg.token_length,
        validity=cfg.token_validity,
        max_attempts=cfg.max_attempts,
        rate_limit=cfg.rate_limit,
        rate_window=cfg.rate_window,
    )
    return Provider(FileOutbox(cfg.outbox_path), pcfg)


def build_auth(cfg: Config, provider=None) -> AuthServer:
    try:
        store = JsonFileStore(cfg.store_path)
    except StoreCorrupt as exc:
        raise CliError(f"store error: {exc}") from None
    if provider is None and cfg.provider_url:
        provider = HttpProvider(cfg.provider_url, cfg.provider_timeout)
    return AuthServer(store, provider, load_master_key(cfg.master_key_path), cfg)


# -- profile ------------------------------------------------------------------


def write_profile(path: Path, profile: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, stat.S_IRUSR | stat.S_IWUSR)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(profile, fh, indent=2)
    try:
        os.chmod(path, stat.S_IRUSR | stat.S_IWUSR)
    except OSError:
        pass


def read_profile(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read profile {path}: {exc}") from None
    missing = [k for k in ("username", "mobile", "imei", "imsi", "key_b64") if k not in doc]
    if missing:
        raise CliError(f"profile {path} is missing {', '.join(missing)}")
    return doc


# -- commands -----------------------------------------------------------------


def cmd_serve(args) -> int:
    cfg = _config(args)
    provider = None
    auth = None
    if args.provider_only or not cfg.provider_url:
        provider = build_provider(cfg)
    if not args.provider_only:
        auth = build_auth(cfg, provider)
    app = App(auth, provider)
    try:
        server = make_server(app, cfg.host, cfg.port)
    except (OSError, OverflowError) as exc:
        print(f"cannot bind {cfg.listen}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    host, port = server.server_address[:2]
    log.info("listening on http://%s:%s", host, port)
    if args.ready_file:
        Path(args.ready_file).write_text(f"http://{host}:{port}\n")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_register(args) -> int:
    cfg = _config(args)
    password = read_pin("Password/PIN: ")
    violations = validate_pin(password)
    if violations:
        print("weak password: " + ", ".join(violations), file=sys.stderr)
        return EXIT_DENIED
    auth = build_auth(cfg, provider=None)
    try:
        summary, key = auth.register_user(
            args.first, args.last, args.username, password, args.mobile, args.imei, args.imsi
        )
    except DuplicateUsername:
        print(f"username {args.username!r} is already registered", file=sys.stderr)
        return EXIT_DENIED
    except WeakPassword as exc:
        print("weak password: " + ", ".join(exc.violations), file=sys.stderr)
        return EXIT_DENIED
    except RegistrationError as exc:
        print(f"registration rejected: {exc}", file=sys.stderr)
        return EXIT_USAGE
    profile_path = Path(args.profile or f"{args.username}.profile.json")
    profile = {
        "username": args.username,
        "mobile": args.mobile,
        "imei": args.imei,
        "imsi": args.imsi,
        "key_b64": key.to_b64(),
    }
    write_profile(profile_path, profile)
    emit(args, f"registered {summary['username']} ({summary['mobile']}); profile written to {profile_path}",
         dict(summary, profile=str(profile_path)))
    return EXIT_OK


def _server_url(args, cfg: Config) -> str:
    if args.server:
        return args.server.rstrip("/")
    return f"http://{cfg.host}:{cfg.port}"


def _await_token(args, cfg: Config, mobile: str, after: int) -> str:
    if not args.auto_token:
        return input("Token from SMS: ").strip()
    path = args.outbox or cfg.outbox_path
    deadline = time.monotonic() + args.token_timeout
    while True:
        records = [r for r in read_outbox(path) if r.mobile == mobile]
        if len(records) > after:
            token = token_from_body(records[-1].body)
            if token:
                return token
        if time.monotonic() > deadline:
            raise CliError("no SMS arrived in the outbox", EXIT_NETWORK)
        time.sleep(0.05)


def cmd_login(args) -> int:
    cfg = _config(args)
    profile = read_profile(args.profile)
    url = _server_url(args, cfg)
    pin = read_pin()
    key = env.SymmetricKey.from_b64(profile["key_b64"])
    msg = env.IdentityMessage.create(profile["imei"], profile["imsi"], profile["username"], int(time.time()))
    envelope = env.encrypt_identity(msg, key).to_wire()
    seen = 0
    if args.auto_token:
        seen = sum(1 for r in read_outbox(args.outbox or cfg.outbox_path) if r.mobile == profile["mobile"])
    try:
        status, body = post_json(url + "/login/begin", {
            "username": profile["username"], "password": pin, "envelope": envelope,
        }, cfg.provider_timeout)
        if status == 503:
            print("provider unavailable, try again", file=sys.stderr)
            return EXIT_NETWORK
        if status != 200:
            emit(args, "denied", {"outcome": "denied"})
            return EXIT_DENIED
        token = _await_token(args, cfg, profile["mobile"], seen)
        status, result = post_json(url + "/login/complete", {
            "challenge_id": body["challenge_id"], "token": token,
        }, cfg.provider_timeout)
    except ApiError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    if status == 503:
        return EXIT_NETWORK
    outcome = result.get("outcome", "denied")
    emit(args, outcome, {"outcome": outcome})
    return EXIT_OK if outcome == "granted" else EXIT_DENIED


def parse_instant(text: str) -> dt.datetime:
    try:
        return dt.datetime.fromisoformat(text)
    except ValueError:
        raise CliError(f"--at must be an ISO date-time, got {text!r}") from None


def cmd_otp(args) -> int:
    cfg = _config(args)
    if args.profile:
        profile = read_profile(args.profile)
        imei, imsi, username = profile["imei"], profile["imsi"], profile["username"]
    else:
        imei, imsi, username = args.imei, args.imsi, args.username
        if not (imei and imsi and username):
            raise CliError("need --profile or all of --imei/--imsi/--username")
    try:
        policy = OtpPolicy(args.length or cfg.otp_length, args.window or cfg.window)
        factors = FactorSet(imei, imsi, username, read_pin())
    except PolicyError as exc:
        print("PIN rejected: " + ", ".join(exc.violations), file=sys.stderr)
        return EXIT_DENIED
    except (FactorError, ValueError) as exc:
        raise CliError(str(exc)) from None
    instant = parse_instant(args.at) if args.at else time.time()
    otp = otp_at(factors, instant, policy, cfg.timezone)
    if not args.submit:
        emit(args, otp, {"otp": otp})
        return EXIT_OK
    try:
        status, _ = post_json(_server_url(args, cfg) + "/login/otp", {"username": username, "otp": otp})
    except ApiError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    outcome = "granted" if status == 200 else "denied"
    emit(args, outcome, {"outcome": outcome})
    return EXIT_OK if outcome == "granted" else EXIT_DENIED


def cmd_outbox(args) -> int:
    path = args.path
    if path is None:
        path = _config(args).outbox_path
    records = read_outbox(path)
    if args.tail is not None:
        records = records[-args.tail:] if args.tail > 0 else []
    for r in records:
        emit(args, f"{r.sent_at}\t{r.mobile}\t{r.body}",
             {"mobile": r.mobile, "body": r.body, "sent_at": r.sent_at})
    return EXIT_OK


_VECTOR_SYMBOLS = "!@#$%^&*()-_=+[]{};:,.<>?/~"


def _vector_pin(rng: random.Random) -> str:
    n = rng.randint(8, 16)
    chars = [rng.choice(string.ascii_uppercase), rng.choice(string.ascii_lowercase),
             rng.choice(string.digits), rng.choice(_VECTOR_SYMBOLS)]
    pool = string.ascii_letters + string.digits + _VECTOR_SYMBOLS
    chars += [rng.choice(pool) for _ in range(n - 4)]
    rng.shuffle(chars)
    return "".join(chars)


def make_vectors(count: int, seed: int) -> List[dict]:
    """Deterministic OTP vectors for freezing into CI fixtures."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        instant = dt.datetime(2000, 1, 1) + dt.timedelta(minutes=rng.randrange(100 * 365 * 24 * 60))
        row = {
            "imei": "".join(rng.choice(string.digits) for _ in range(15)),
            "imsi": "".join(rng.choice(string.digits) for _ in range(rng.randint(6, 15))),
            "username": "user%d" % rng.randrange(10_000),
            "pin": _vector_pin(rng),
            "instant": instant.strftime("%Y-%m-%dT%H:%M"),
            "window": rng.choice([Window.TEN_MINUTES.value, Window.MINUTE.value]),
            "length": rng.randint(4, 28),
        }
        factors = FactorSet(row["imei"], row["imsi"], row["username"], row["pin"])
        row["otp"] = otp_at(factors, instant, OtpPolicy(row["length"], row["window"]))
        out.append(row)
    return out


def cmd_vectors(args) -> int:
    if args.count < 0:
        raise CliError("--count must be >= 0")
    for row in make_vectors(args.count, args.seed):
        print(json.dumps(row))
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("--server", default=argparse.SUPPRESS, help="server base URL")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output")

    parser = argparse.ArgumentParser(prog="twostep", description=__doc__.split("\n\n")[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", parents=[common], help="run the auth server")
    p.add_argument("--provider-only", action="store_true", help="serve only the provider routes")
    p.add_argument("--ready-file", help="write the bound URL here once listening")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("register", parents=[common], help="register a user (trusted, local)")
    for name in ("first", "last", "username", "mobile", "imei", "imsi"):
        p.add_argument(f"--{name}", required=True)
    p.add_argument("--profile", help="where to write the client profile")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("login", parents=[common], help="two-step login")
    p.add_argument("--profile", required=True)
    p.add_argument("--auto-token", action="store_true", help="read the token from the outbox (test mode)")
    p.add_argument("--outbox", help="outbox file to watch with --auto-token")
    p.add_argument("--token-timeout", type=float, default=5.0)
    p.set_defaults(func=cmd_login)

    p = sub.add_parser("otp", parents=[common], help="derive the connection-less OTP")
    p.add_argument("--profile")
    p.add_argument("--imei")
    p.add_argument("--imsi")
    p.add_argument("--username")
    p.add_argument("--at", help="ISO instant (naive = provider time zone)")
    p.add_argument("--length", type=int)
    p.add_argument("--window", choices=[w.value for w in Window])
    p.add_argument("--submit", action="store_true", help="send it to /login/otp")
    p.set_defaults(func=cmd_otp)

    p = sub.add_parser("outbox", parents=[common], help="print simulated SMS records")
    p.add_argument("path", nargs="?")
    p.add_argument("--tail", type=int)
    p.set_defaults(func=cmd_outbox)

    p = sub.add_parser("vectors", parents=[common], help="emit OTP test vectors")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_vectors)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("server", None), ("json", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(exc, file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
