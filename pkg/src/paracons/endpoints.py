"""Scorer endpoints: spec parsing plus exec (stdio-JSONL) and HTTP transports.

Endpoint specs:
  mock:<kind>[?param=value&...]   e.g. mock:parametric?q=0.9, mock:fixed?answer=London
  mock:<kind>(args)               sugar: mock:parametric(q=0.9), mock:fixed(London)
  exec:<command>                  one JSON request per stdin line, response per stdout line
  http://host[:port]/path        one POST per batch, JSONL body both ways
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import time

from .errors import ConfigurationError, ProtocolError, TransportError
from .mocks import MockConfig, MockEndpoint, QueryMeta
from .protocol import ScoreRequest, ScoreResponse

_MOCK_PARAM_TYPES = {
    "q": float,
    "answer": str,
    "reuse_p": float,
    "hub": bool,
    "gold_term_count": int,
    "other_term_count": int,
    "embedding_dim": int,
    "embedding_jitter": float,
}

_POSITIONAL_PARAM = {"parametric": "q", "fixed": "answer"}


def _coerce(name: str, raw: str):
    if name not in _MOCK_PARAM_TYPES:
        raise ConfigurationError(f"unknown mock parameter {name!r}")
    typ = _MOCK_PARAM_TYPES[name]
    if typ is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigurationError(f"boolean parameter {name} got {raw!r}")
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigurationError(f"parameter {name} got {raw!r}") from exc


def parse_mock_spec(rest: str) -> MockConfig:
    params: dict[str, object] = {}
    if "?" in rest:
        rest, query = rest.split("?", 1)
        for part in query.split("&"):
            if not part:
                continue
            if "=" not in part:
                raise ConfigurationError(f"bad mock parameter {part!r}")
            name, raw = part.split("=", 1)
            params[name] = _coerce(name, raw)
    if rest.endswith(")") and "(" in rest:
        rest, args = rest[:-1].split("(", 1)
        for part in args.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" in part:
                name, raw = part.split("=", 1)
                params[name] = _coerce(name.strip(), raw.strip())
            else:
                name = _POSITIONAL_PARAM.get(rest)
                if name is None:
                    raise ConfigurationError(f"mock kind {rest!r} takes no positional argument")
                params[name] = _coerce(name, part)
    config = MockConfig(kind=rest, **params)  # type: ignore[arg-type]
    config.validate()
    return config


def make_endpoint(spec: str, seed: int, *, retries: int = 3, backoff: float = 0.25):
    if spec.startswith("mock:"):
        return MockEndpoint(parse_mock_spec(spec[len("mock:") :]), seed)
    if spec.startswith("exec:"):
        return ExecEndpoint(spec[len("exec:") :], retries=retries, backoff=backoff)
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpEndpoint(spec, retries=retries, backoff=backoff)
    raise ConfigurationError(f"unrecognized endpoint spec {spec!r}")


def _with_retries(fn, attempts: int, backoff: float, describe: str):
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn()
        except TransportError as exc:
            last = exc
            if attempt + 1 < attempts:
                time.sleep(backoff * (2**attempt))
    raise TransportError(f"{describe} failed after {attempts} attempts: {last}")


def _match_responses(
    requests: list[ScoreRequest], lines: list[str]
) -> list[ScoreResponse]:
    by_id: dict[str, ScoreResponse] = {}
    for line in lines:
        resp = ScoreResponse.from_json(line)
        if resp.request_id in by_id:
            raise ProtocolError(f"duplicate response for request {resp.request_id}")
        by_id[resp.request_id] = resp
    out = []
    for req in requests:
        if req.request_id not in by_id:
            raise ProtocolError(f"no response for request {req.request_id}")
        out.append(by_id[req.request_id])
    return out


class ExecEndpoint:
    """Subprocess worker speaking one JSON object per line on stdin/stdout."""

    def __init__(self, command: str, retries: int = 3, backoff: float = 0.25):
        self.command = command
        self.identity = f"exec:{command}"
        self.retries = retries
        self.backoff = backoff
        self.batches = 0
        self.requests_scored = 0
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise TransportError(f"cannot start scorer process: {exc}") from exc
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
        self._proc = None

    def score_batch(
        self, requests: list[ScoreRequest], metas: list[QueryMeta]
    ) -> list[ScoreResponse]:
        del metas  # wire endpoints only ever see the request

        def attempt() -> list[str]:
            with self._lock:
                proc = self._ensure_proc()
                try:
                    for req in requests:
                        proc.stdin.write(req.to_json() + "\n")
                    proc.stdin.flush()
                    lines = []
                    for _ in requests:
                        line = proc.stdout.readline()
                        if not line:
                            raise TransportError("scorer process closed its stdout")
                        lines.append(line)
                    return lines
                except (BrokenPipeError, OSError) as exc:
                    self._proc = None
                    raise TransportError(f"scorer process pipe failure: {exc}") from exc

        lines = _with_retries(attempt, self.retries, self.backoff, f"exec {self.command!r}")
        self.batches += 1
        self.requests_scored += len(requests)
        return _match_responses(requests, lines)


class HttpEndpoint:
    """POSTs a JSONL batch body and expects a JSONL body back."""

    def __init__(self, url: str, retries: int = 3, backoff: float = 0.25, timeout: float = 60.0):
        self.url = url
        self.identity = url
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.batches = 0
        self.requests_scored = 0

    def close(self) -> None:
        pass

    def score_batch(
        self, requests: list[ScoreRequest], metas: list[QueryMeta]
    ) -> list[ScoreResponse]:
        del metas
        import requests as _requests

        body = "\n".join(r.to_json() for r in requests) + "\n"

        def attempt() -> list[str]:
            try:
                resp = _requests.post(
                    self.url,
                    data=body.encode("utf-8"),
                    headers={"content-type": "application/x-ndjson"},
                    timeout=self.timeout,
                )
            except _requests.RequestException as exc:
                raise TransportError(f"POST {self.url} failed: {exc}") from exc
            if resp.status_code != 200:
                raise TransportError(f"POST {self.url} returned {resp.status_code}")
            return [line for line in resp.text.splitlines() if line.strip()]

        lines = _with_retries(attempt, self.retries, self.backoff, f"http {self.url}")
        self.batches += 1
        self.requests_scored += len(requests)
        return _match_responses(requests, lines)
