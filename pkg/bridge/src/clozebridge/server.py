"""Serve a BridgeScorer over stdio JSONL or HTTP."""

# no postponed annotations here: fastapi resolves handler annotations at
# definition time, and Request/Response are imported lazily inside build_app
import json
import sys

from .scoring import BridgeScorer


def serve_stdio(scorer: BridgeScorer, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            stdout.write(json.dumps({"error": f"bad request line: {exc.msg}"}) + "\n")
            stdout.flush()
            continue
        response = scorer.score_request(request)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


def build_app(scorer: BridgeScorer):
    from fastapi import FastAPI, Request, Response

    app = FastAPI(title="cloze-bridge", version="0.1.0")

    @app.get("/health")
    def health():
        return {"status": "ok", "endpoint": scorer.config.identity}

    @app.post("/score")
    async def score(request: Request) -> Response:
        body = (await request.body()).decode("utf-8")
        lines = []
        for line in body.splitlines():
            if not line.strip():
                continue
            try:
                req = json.loads(line)
            except json.JSONDecodeError as exc:
                lines.append(json.dumps({"error": f"bad request line: {exc.msg}"}))
                continue
            lines.append(json.dumps(scorer.score_request(req), ensure_ascii=False))
        return Response(content="\n".join(lines) + "\n", media_type="application/x-ndjson")

    return app


def serve_http(scorer: BridgeScorer, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(build_app(scorer), host=host, port=port, log_level="warning")
