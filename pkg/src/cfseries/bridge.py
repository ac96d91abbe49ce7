"""Subprocess bridge: score through any external model over stdin/stdout.

Wire protocol (UTF-8, one JSON object per line; the child reads stdin and
writes stdout):

  handshake   child's first line:
              {"type": "hello", "class_count": C, "variables": V, "timesteps": T}
  request     {"type": "predict", "id": n, "samples": [[[... T floats] x V] x B]}
              ids are strictly increasing nonnegative integers; samples are
              variable-major
  response    {"type": "scores", "id": n, "scores": [[... C floats] x B]}
              or {"type": "error", "id": n, "message": "..."}
  shutdown    the engine closes the child's stdin; the child must exit

The protocol is strictly sequential: at most one outstanding request per
child. Concurrent callers serialize on an internal lock in FIFO order.
Floats are serialized with full round-trip precision (json uses repr), so
any finite matrix survives the trip bit-exactly.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierHandle, PredictionRule, ScoringError


class BridgeError(ScoringError):
    """Base for all bridge failures; a ScoringError so callers of
    predict_scores see one error family."""


class BridgeSpawnError(BridgeError):
    """The child process could not be started."""


class BridgeHandshakeError(BridgeError):
    """Missing, malformed, or mismatching hello line."""


class BridgeTimeoutError(BridgeError):
    """The child did not answer within the configured timeout."""


class BridgeProtocolError(BridgeError):
    """The child violated the protocol (bad JSON, wrong id, bad shapes)."""


class BridgeExitError(BridgeError):
    """The child exited while a response was expected."""


@dataclass(frozen=True)
class BridgeConfig:
    command: tuple[str, ...]
    startup_timeout_ms: int = 10000
    request_timeout_ms: int = 30000

    def __post_init__(self):
        if not self.command:
            raise ValueError("bridge command must be nonempty")
        object.__setattr__(self, "command", tuple(str(c) for c in self.command))
        if self.startup_timeout_ms <= 0 or self.request_timeout_ms <= 0:
            raise ValueError("bridge timeouts must be positive")


_EOF = object()


class BridgeClassifier(ClassifierHandle):
    """ClassifierHandle backed by a child process.

    Owns the child for its lifetime; ``close()`` (or use as a context
    manager) shuts the child down by closing stdin, then waits up to the
    startup timeout before killing it.
    """

    def __init__(self, cfg: BridgeConfig, expected: tuple[int, int, int],
                 rule: PredictionRule | None = None):
        v, t, class_count = expected
        self.cfg = cfg
        self._lock = threading.Lock()
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        self._stderr_tail: list[str] = []
        try:
            self._proc = subprocess.Popen(
                list(cfg.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeSpawnError(f"cannot spawn {cfg.command[0]!r}: {exc}") from None
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()
        self._err_reader = threading.Thread(target=self._read_stderr, daemon=True)
        self._err_reader.start()
        try:
            hello = self._read_message(cfg.startup_timeout_ms / 1000.0, "handshake")
        except BridgeError:
            self._kill()
            raise
        if hello.get("type") != "hello":
            self._kill()
            raise BridgeHandshakeError(f"first line is not a hello message: {hello}")
        declared = tuple(hello.get(k) for k in ("variables", "timesteps", "class_count"))
        if declared != (v, t, class_count):
            self._kill()
            raise BridgeHandshakeError(
                f"declaration mismatch: child declared V={declared[0]}, T={declared[1]}, "
                f"classes={declared[2]}; expected V={v}, T={t}, classes={class_count}"
            )
        super().__init__(self._score, class_count, rule, v, t, name="bridge")

    # -- transport ---------------------------------------------------------

    def _read_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _read_stderr(self):
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))
            del self._stderr_tail[:-5]

    def _read_message(self, timeout_s: float, context: str) -> dict:
        try:
            line = self._lines.get(timeout=timeout_s)
        except queue.Empty:
            raise BridgeTimeoutError(f"timed out waiting for {context} "
                                     f"after {timeout_s:.1f}s") from None
        if line is _EOF:
            code = self._proc.poll()
            tail = "; ".join(self._stderr_tail)
            raise BridgeExitError(
                f"child exited (code {code}) while waiting for {context}"
                + (f"; stderr: {tail}" if tail else "")
            )
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise BridgeProtocolError(f"malformed JSON line from child: {line.rstrip()!r}") from None
        if not isinstance(msg, dict):
            raise BridgeProtocolError(f"expected a JSON object from child, got: {line.rstrip()!r}")
        return msg

    def request(self, samples: np.ndarray) -> np.ndarray:
        """One predict round-trip; internal transport for score_matrix."""
        samples = np.asarray(samples, dtype=np.float64)
        n = len(samples)
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            payload = {"type": "predict", "id": req_id, "samples": samples.tolist()}
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError, OSError):
                code = self._proc.poll()
                raise BridgeExitError(f"child pipe closed (exit code {code})") from None
            msg = self._read_message(self.cfg.request_timeout_ms / 1000.0, f"response {req_id}")
        if msg.get("id") != req_id:
            raise BridgeProtocolError(
                f"id mismatch: request {req_id} answered with id {msg.get('id')!r}"
            )
        if msg.get("type") == "error":
            raise ScoringError(f"model error: {msg.get('message', '(no message)')}")
        if msg.get("type") != "scores":
            raise BridgeProtocolError(f"unexpected message type {msg.get('type')!r}")
        scores = msg.get("scores")
        if not isinstance(scores, list) or len(scores) != n:
            raise BridgeProtocolError(
                f"expected {n} score vectors, got "
                f"{len(scores) if isinstance(scores, list) else type(scores).__name__}"
            )
        if n == 0:
            return np.zeros((0, self.class_count))
        out = np.asarray(scores, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.class_count:
            raise BridgeProtocolError(
                f"score vectors have wrong length: expected {self.class_count} per sample"
            )
        return out

    def _score(self, batch: np.ndarray) -> np.ndarray:
        return self.request(batch)

    # -- lifecycle ---------------------------------------------------------

    def _kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self):
        """Close stdin and wait for the child; kill it after the startup
        timeout."""
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=self.cfg.startup_timeout_ms / 1000.0)
            except subprocess.TimeoutExpired:
                self._kill()
        self._reader.join(timeout=1.0)
        self._err_reader.join(timeout=1.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            if self._proc.poll() is None:
                self._proc.kill()
        except Exception:
            pass


def open_bridge(cfg: BridgeConfig, expected: tuple[int, int, int],
                rule: PredictionRule | None = None) -> BridgeClassifier:
    """Spawn the child, run the handshake, and validate its declared
    (V, T, class_count) against what the caller expects."""
    return BridgeClassifier(cfg, expected, rule)
