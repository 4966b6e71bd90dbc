"""JSON-over-HTTP surface for the auth server and the simulated provider.

Both sets of routes can share one ``ThreadingHTTPServer``; either side may be
left out to run the provider standalone or point the server at a remote one.
"""
from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Tuple

from .provider import Provider, Throttled, ValidationError, VerifyResult
from .server import (
    AuthServer,
    LoginStarted,
    RegistrationError,
    UpstreamUnavailable,
    WeakPassword,
    system_clock,
)
from .store import DuplicateUsername

log = logging.getLogger(__name__)

MAX_BODY = 64 * 1024


class App:
    """Route table; each handler maps a JSON dict to ``(status, body)``."""

    def __init__(
        self,
        auth: Optional[AuthServer] = None,
        provider: Optional[Provider] = None,
        clock: Callable[[], int] = system_clock,
        allow_register: bool = True,
    ):
        self.auth = auth
        self.provider = provider
        self.clock = clock
        self.routes = {("GET", "/healthz"): self.healthz}
        if auth is not None:
            self.routes.update({
                ("POST", "/login/begin"): self.login_begin,
                ("POST", "/login/complete"): self.login_complete,
                ("POST", "/login/otp"): self.login_otp,
            })
            if allow_register:
                self.routes[("POST", "/register")] = self.register
        if provider is not None:
            self.routes.update({
                ("POST", "/provider/issue"): self.provider_issue,
                ("POST", "/provider/verify"): self.provider_verify,
            })

    def healthz(self, body):
        return 200, {"status": "ok"}

    def register(self, body):
        try:
            summary, key = self.auth.register_user(
                body["first"], body["last"], body["username"], body["password"],
                body["mobile"], body["imei"], body["imsi"], pin=body.get("pin"),
                now=self.clock(),
            )
        except DuplicateUsername:
            return 409, {"error": "duplicate-username"}
        except WeakPassword as exc:
            return 422, {"error": exc.code, "violations": exc.violations}
        except RegistrationError as exc:
            return 422, {"error": exc.code, "detail": str(exc)}
        return 201, dict(summary, key_b64=key.to_b64())

    def login_begin(self, body):
        try:
            result = self.auth.begin_login(
                str(body["username"]), str(body["password"]), str(body["envelope"]), self.clock()
            )
        except UpstreamUnavailable:
            return 503, {"error": "upstream-unavailable", "retryable": True}
        if isinstance(result, LoginStarted):
            return 200, {"challenge_id": result.challenge_id, "txid": result.txid}
        return 401, {"reason": "denied"}

    def login_complete(self, body):
        try:
            decision = self.auth.complete_login(
                str(body["challenge_id"]), str(body["token"]), self.clock()
            )
        except UpstreamUnavailable:
            return 503, {"error": "upstream-unavailable", "retryable": True}
        if decision.granted:
            return 200, {"outcome": "granted"}
        return 401, {"outcome": "denied"}

    def login_otp(self, body):
        decision = self.auth.connectionless_verify(str(body["username"]), str(body["otp"]), self.clock())
        if decision.granted:
            return 200, {"outcome": "granted"}
        return 401, {"outcome": "denied"}

    def provider_issue(self, body):
        try:
            txid = self.provider.issue_token(body["mobile"], self.clock())
        except ValidationError as exc:
            return 400, {"error": "validation", "detail": str(exc)}
        except Throttled:
            return 429, {"error": "throttled"}
        return 200, {"txid": txid}

    def provider_verify(self, body):
        result = self.provider.verify_token(str(body["txid"]), str(body["token"]), self.clock())
        return 200, {"result": result.value}

    def dispatch(self, method: str, path: str, raw: bytes) -> Tuple[int, dict]:
        handler = self.routes.get((method, path.split("?", 1)[0]))
        if handler is None:
            known = {p for _, p in self.routes}
            if path in known:
                return 405, {"error": "method-not-allowed"}
            return 404, {"error": "not-found"}
        body = {}
        if method == "POST":
            try:
                body = json.loads(raw or b"{}")
            except ValueError:
                return 400, {"error": "invalid-json"}
            if not isinstance(body, dict):
                return 400, {"error": "invalid-json"}
        try:
            return handler(body)
        except KeyError as exc:
            return 400, {"error": "missing-field", "field": exc.args[0]}


class _Handler(BaseHTTPRequestHandler):
    app: App
    protocol_version = "HTTP/1.1"

    def _serve(self, method):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            status, body = 413, {"error": "too-large"}
        else:
            raw = self.rfile.read(length) if length else b""
            status, body = self.app.dispatch(method, self.path, raw)
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        self._serve("GET")

    def do_POST(self):
        self._serve("POST")

    def log_message(self, fmt, *args):
        # request lines only; bodies are never logged
        log.debug("%s %s", self.address_string(), fmt % args)


def make_server(app: App, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("Handler", (_Handler,), {"app": app})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_in_thread(app: App, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a background thread; returns ``(server, base_url)``."""
    server = make_server(app, host, port)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"


class ApiError(Exception):
    """Transport-level failure talking to a server."""


def post_json(url: str, body: dict, timeout: float = 5.0) -> Tuple[int, dict]:
    req = urllib.request.Request(
        url, data=json.dumps(body).encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as exc:
        try:
            payload = json.loads(exc.read() or b"{}")
        except ValueError:
            payload = {}
        return exc.code, payload
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise ApiError(str(exc)) from None


class HttpProvider:
    """Provider reached over HTTP. Its own clock is authoritative, so ``now`` is ignored."""

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def issue_token(self, mobile: str, now: int) -> str:
        try:
            status, body = post_json(self.base_url + "/provider/issue", {"mobile": mobile}, self.timeout)
        except ApiError as exc:
            raise UpstreamUnavailable(str(exc)) from None
        if status == 400:
            raise ValidationError(body.get("detail", "invalid mobile"))
        if status == 429:
            raise Throttled(mobile)
        if status != 200:
            raise UpstreamUnavailable(f"provider returned {status}")
        return body["txid"]

    def verify_token(self, txid: str, token: str, now: int) -> VerifyResult:
        try:
            status, body = post_json(
                self.base_url + "/provider/verify", {"txid": txid, "token": token}, self.timeout
            )
        except ApiError as exc:
            raise UpstreamUnavailable(str(exc)) from None
        if status != 200:
            raise UpstreamUnavailable(f"provider returned {status}")
        return VerifyResult(body["result"])

