"""Wire protocol for external MT/TTS/ASR helpers.

Requests go to the helper one JSON object per line: {"id", "task", and
"text" or "audio"}. Responses come back one per line as {"id", "ok", and
"text"/"audio"/"err"}, possibly out of order; correlation is by id. Every
request/response pair is appended to a transcript file so any run can be
replayed later without the helper process.
"""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

from ..errors import ClientError

TASKS = ("mt", "tts", "asr")


def _validate_request(req: dict) -> None:
    if req.get("task") not in TASKS:
        raise ClientError(f"request task must be one of {TASKS}: {req}")
    if not req.get("id"):
        raise ClientError(f"request needs a non-empty id: {req}")
    if ("text" in req) == ("audio" in req):
        raise ClientError(f"request needs exactly one of text/audio: {req}")


def request_key(req: dict) -> str:
    """Replay key: the request content with the correlation id removed."""
    return json.dumps({k: v for k, v in sorted(req.items()) if k != "id"})


class TranscriptWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def log(self, req: dict, res: dict) -> None:
        self._fh.write(json.dumps({"req": req, "res": res},
                                  ensure_ascii=False) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


class CallableClient:
    """In-process helper: a function from request dict to response dict."""

    def __init__(self, fn, transcript_path=None):
        self._fn = fn
        self._transcript = TranscriptWriter(transcript_path) if transcript_path else None

    def submit(self, requests) -> dict:
        out = {}
        for req in requests:
            _validate_request(req)
            try:
                res = self._fn(dict(req))
            except Exception as e:  # helper bugs become failed responses
                res = {"id": req["id"], "ok": False, "err": f"{type(e).__name__}: {e}"}
            if res.get("id") != req["id"]:
                res = dict(res, id=req["id"])
            out[req["id"]] = res
            if self._transcript:
                self._transcript.log(req, res)
        return out

    def close(self):
        if self._transcript:
            self._transcript.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SubprocessClient:
    """Helper behind a pipe; lines out, lines back, correlated by id."""

    def __init__(self, argv, transcript_path=None):
        self.argv = list(argv)
        self._proc = None
        self._transcript = TranscriptWriter(transcript_path) if transcript_path else None

    def _ensure_started(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1)

    def submit(self, requests) -> dict:
        requests = list(requests)
        for req in requests:
            _validate_request(req)
        ids = [req["id"] for req in requests]
        if len(set(ids)) != len(ids):
            raise ClientError("duplicate ids within one submission")
        if not requests:
            return {}
        self._ensure_started()
        by_id = {req["id"]: req for req in requests}
        try:
            for req in requests:
                self._proc.stdin.write(json.dumps(req, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise ClientError(f"helper {self.argv[0]} is gone: {e}") from e
        out = {}
        while len(out) < len(requests):
            line = self._proc.stdout.readline()
            if not line:
                raise ClientError(
                    f"helper {self.argv[0]} closed its output with "
                    f"{len(requests) - len(out)} responses outstanding")
            line = line.strip()
            if not line:
                continue
            try:
                res = json.loads(line)
            except json.JSONDecodeError as e:
                raise ClientError(f"helper wrote a malformed response: {line!r}") from e
            rid = res.get("id")
            if rid not in by_id:
                raise ClientError(f"helper answered unknown id {rid!r}")
            if rid in out:
                raise ClientError(f"helper answered id {rid!r} twice")
            out[rid] = res
            if self._transcript:
                self._transcript.log(by_id[rid], res)
        return out

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None
        if self._transcript:
            self._transcript.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ReplayClient:
    """Answers from a recorded transcript; never contacts a helper.

    Matching is by request content (task plus payload), so replay works
    even when correlation ids differ between runs.
    """

    def __init__(self, transcript_path):
        self._responses = {}
        with open(transcript_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    pair = json.loads(line)
                    key = request_key(pair["req"])
                    res = pair["res"]
                except (json.JSONDecodeError, KeyError) as e:
                    raise ClientError(
                        f"{transcript_path}:{lineno}: bad transcript entry ({e})"
                    ) from e
                self._responses[key] = res

    def submit(self, requests) -> dict:
        out = {}
        for req in requests:
            _validate_request(req)
            key = request_key(req)
            if key not in self._responses:
                raise ClientError(
                    f"transcript has no response for request {key}")
            out[req["id"]] = dict(self._responses[key], id=req["id"])
        return out

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
