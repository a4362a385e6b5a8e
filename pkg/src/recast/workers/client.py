"""Engine-side worker clients: subprocess stdio and HTTP transports.

Control messages are newline-delimited JSON; pixel data always travels by
workspace-relative paths. Handshake:

    engine -> {"hello": {"protocol_version": 1}}
    worker -> {"ready": {"protocol_version": 1, "stages": [...], "max_batch": N}}

then one request/response pair at a time per subprocess worker, and finally
{"shutdown": {}} after which the worker exits 0. Subprocess workers receive
the workspace root in the RECAST_WORKSPACE environment variable.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from pathlib import Path
from typing import Callable

from ..errors import ContractViolationError, ProtocolError, StageError, WorkerTimeoutError
from .types import PROTOCOL_VERSION, StageRequest, StageResponse, WorkerSpec

__all__ = ["WorkerClient", "SubprocessWorker", "HttpWorker", "open_worker"]

WORKSPACE_ENV = "RECAST_WORKSPACE"


class WorkerClient:
    """Shared request/response bookkeeping for both transports."""

    stages: tuple[str, ...] = ()
    max_batch: int = 1

    def invoke(
        self,
        req: StageRequest,
        workspace_root: Path | None = None,
        validator: Callable[[dict[str, str]], None] | None = None,
    ) -> StageResponse:
        """Send one request; validate the response before accepting it.

        Raises ProtocolError for malformed traffic, StageError for worker
        error replies, ContractViolationError when promised artifacts are
        missing or fail the caller's validator.
        """
        if req.stage not in self.stages:
            raise ProtocolError(f"worker does not support stage {req.stage!r} (has {self.stages})")
        doc = self._roundtrip(req.to_wire())
        resp = StageResponse.from_wire(doc)
        if resp.request_id != req.request_id:
            raise ProtocolError(
                f"response id {resp.request_id!r} does not echo request id {req.request_id!r}"
            )
        if not resp.ok:
            raise StageError(req.stage, resp.error_message or "worker error", code=resp.error_code)
        if workspace_root is not None:
            for name, rel in resp.artifacts.items():
                if not (workspace_root / rel).exists():
                    raise ContractViolationError(f"artifact {name!r} missing at {rel}")
        if validator is not None:
            validator(resp.artifacts)
        return resp

    def _roundtrip(self, doc: dict) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class SubprocessWorker(WorkerClient):
    """One worker process over stdio; a single request in flight at a time."""

    def __init__(self, spec: WorkerSpec, workspace_root: Path):
        self.spec = spec
        self.workspace_root = Path(workspace_root)
        env = dict(os.environ)
        env[WORKSPACE_ENV] = str(self.workspace_root)
        self.proc = subprocess.Popen(
            shlex.split(spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
            env=env,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._handshake()

    def _read_loop(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, doc: dict) -> None:
        if self.proc.poll() is not None:
            raise ProtocolError(f"worker exited with code {self.proc.returncode}")
        assert self.proc.stdin is not None
        self.proc.stdin.write(json.dumps(doc, separators=(",", ":")) + "\n")
        self.proc.stdin.flush()

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            self.proc.kill()
            raise WorkerTimeoutError(f"no response within {self.spec.timeout}s") from None
        if line is None:
            stderr = self.proc.stderr.read() if self.proc.stderr else ""
            raise ProtocolError(f"worker closed stdout; stderr: {stderr[-2000:]}")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed worker message: {line[:200]!r}") from exc

    def _handshake(self) -> None:
        self._send({"hello": {"protocol_version": PROTOCOL_VERSION}})
        doc = self._recv()
        ready = doc.get("ready")
        if not isinstance(ready, dict):
            raise ProtocolError(f"expected ready message, got {doc}")
        version = ready.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        stages = ready.get("stages", [])
        if not stages:
            raise ProtocolError("worker advertised no stages")
        self.stages = tuple(stages)
        self.max_batch = int(ready.get("max_batch", 1))

    def _roundtrip(self, doc: dict) -> dict:
        self._send(doc)
        return self._recv()

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._send({"shutdown": {}})
                self.proc.wait(timeout=10)
            except Exception:
                self.proc.kill()
        for stream in (self.proc.stdin, self.proc.stdout, self.proc.stderr):
            if stream:
                stream.close()


class HttpWorker(WorkerClient):
    """Worker behind an HTTP endpoint: GET /handshake, POST /invoke."""

    def __init__(self, spec: WorkerSpec):
        self.spec = spec
        self.base = spec.base_url.rstrip("/")
        ready = self._get(f"{self.base}/handshake").get("ready")
        if not isinstance(ready, dict):
            raise ProtocolError("handshake endpoint did not return a ready message")
        if ready.get("protocol_version") != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {ready.get('protocol_version')}")
        self.stages = tuple(ready.get("stages", []))
        self.max_batch = int(ready.get("max_batch", 1))

    def _get(self, url: str) -> dict:
        try:
            with urllib.request.urlopen(url, timeout=self.spec.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.URLError as exc:
            raise ProtocolError(f"worker unreachable: {exc}") from exc

    def _roundtrip(self, doc: dict) -> dict:
        body = json.dumps(doc).encode("utf-8")
        req = urllib.request.Request(
            f"{self.base}/invoke", data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.spec.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except TimeoutError as exc:
            raise WorkerTimeoutError(f"no response within {self.spec.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, TimeoutError):
                raise WorkerTimeoutError(f"no response within {self.spec.timeout}s") from exc
            raise ProtocolError(f"worker request failed: {exc}") from exc


def open_worker(spec: WorkerSpec, workspace_root: Path) -> WorkerClient:
    if spec.transport == "subprocess-stdio":
        return SubprocessWorker(spec, workspace_root)
    return HttpWorker(spec)
