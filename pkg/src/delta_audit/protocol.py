"""Client for external model servers speaking line-delimited JSON.

The server is a child process. Every message is a single UTF-8 JSON object
terminated by one newline, with no embedded newlines; anything else on the
server's stdout is a protocol error (logs belong on stderr). Requests carry
monotonically increasing integer ids which responses must echo; the channel
is strictly request/response with one message in flight.

Ops and shapes:

* ``capabilities``  -> ``{"id":0,"has_decision_function":bool,
  "has_predict_proba":bool,"class_count":int,"model_tag":str}``
* ``margin``/``proba`` -> ``{"id":k,"Y":[[...],...]}`` (one row per input row)
* ``predict``       -> ``{"id":k,"y":[...]}``
* ``shutdown``      -> ``{"id":k,"ok":true}`` followed by exit 0
* errors            -> ``{"id":k,"error":"message"}``

Requests are batched; matrices above ``CHUNK_ROWS`` rows are split into
consecutive envelopes and the responses re-concatenated in order. Floats
are serialized with shortest round-trip decimals, so every finite double
survives the wire exactly.
"""

from __future__ import annotations

import json
import subprocess
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass
from queue import Empty, Queue

import numpy as np

CHUNK_ROWS = 4096
HANDSHAKE_TIMEOUT = 10.0
REQUEST_TIMEOUT = 120.0


class BridgeError(RuntimeError):
    """Bridge endpoint failure (spawn, response validation, server error)."""


class BridgeProtocolError(BridgeError):
    """The server violated the framing or envelope rules."""


class BridgeTimeout(BridgeError):
    """The server did not answer within the deadline."""


@dataclass(frozen=True)
class BridgeCapabilities:
    has_decision_function: bool
    has_predict_proba: bool
    class_count: int
    model_tag: str

    def __post_init__(self):
        if not (self.has_decision_function or self.has_predict_proba):
            raise BridgeProtocolError("server reports neither a decision function nor probabilities")
        if self.class_count < 2:
            raise BridgeProtocolError(f"server reports class_count={self.class_count}")


def scaler_fingerprint(model_tag: str) -> str | None:
    """Scaler hash fragment embedded in a model tag as ``...@scaler:<hex>``."""
    if "@scaler:" in model_tag:
        return model_tag.rsplit("@scaler:", 1)[1]
    return None


class BridgeClient:
    """Spawns one server process and drives the request/response loop."""

    def __init__(self, command, handshake_timeout: float = HANDSHAKE_TIMEOUT,
                 timeout: float = REQUEST_TIMEOUT):
        self.command = list(command)
        self.handshake_timeout = handshake_timeout
        self.timeout = timeout
        self.capabilities: BridgeCapabilities | None = None
        self.rows_sent: Counter = Counter()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"failed to spawn bridge endpoint {self.command}: {exc}") from exc
        self._lines: Queue = Queue()
        self._stderr_tail: deque[str] = deque(maxlen=40)
        self._stdout_closed = threading.Event()
        threading.Thread(target=self._read_stdout, daemon=True).start()
        threading.Thread(target=self._read_stderr, daemon=True).start()

    # -- plumbing ---------------------------------------------------------

    def _read_stdout(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._stdout_closed.set()

    def _read_stderr(self):
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))

    def _stderr_summary(self) -> str:
        return " | ".join(self._stderr_tail) or "<no stderr>"

    def _request(self, envelope: dict, timeout: float) -> dict:
        if self._proc.poll() is not None:
            raise BridgeError(
                f"bridge process exited with code {self._proc.returncode}; stderr: {self._stderr_summary()}"
            )
        line = json.dumps(envelope, separators=(",", ":"))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise BridgeError(f"bridge stdin closed; stderr: {self._stderr_summary()}") from exc
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout(
                    f"no response to op {envelope['op']!r} within {timeout}s; stderr: {self._stderr_summary()}"
                )
            try:
                raw = self._lines.get(timeout=min(remaining, 0.25))
                break
            except Empty:
                if self._stdout_closed.is_set() and self._lines.empty():
                    raise BridgeError(
                        f"bridge stdout closed before answering op {envelope['op']!r}; "
                        f"stderr: {self._stderr_summary()}"
                    ) from None
        raw = raw.rstrip("\n")
        try:
            message = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(
                f"malformed JSON from server at byte {exc.pos}: {raw[:200]!r}"
            ) from exc
        if not isinstance(message, dict):
            raise BridgeProtocolError(f"expected a JSON object, got: {raw[:200]!r}")
        if message.get("id") != envelope["id"]:
            raise BridgeProtocolError(
                f"out-of-order response: sent id {envelope['id']}, got {message.get('id')!r}"
            )
        if "error" in message:
            raise BridgeError(f"server error for op {envelope['op']!r}: {message['error']}")
        return message

    def _take_id(self) -> int:
        rid = self._next_id
        self._next_id += 1
        return rid

    # -- protocol ops -----------------------------------------------------

    def handshake(self) -> BridgeCapabilities:
        message = self._request({"op": "capabilities", "id": self._take_id()}, self.handshake_timeout)
        try:
            caps = BridgeCapabilities(
                has_decision_function=bool(message["has_decision_function"]),
                has_predict_proba=bool(message["has_predict_proba"]),
                class_count=int(message["class_count"]),
                model_tag=str(message.get("model_tag", "")),
            )
        except KeyError as exc:
            raise BridgeProtocolError(f"capabilities response missing field {exc}") from None
        self.capabilities = caps
        return caps

    def batch_score(self, op: str, X: np.ndarray) -> np.ndarray:
        """Scores all rows of X through one op, chunking large matrices."""
        if op not in ("margin", "proba", "predict"):
            raise BridgeError(f"unsupported scoring op {op!r}")
        if self.capabilities is None:
            raise BridgeError("handshake required before scoring")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise BridgeError("X must be 2-d")
        pieces = []
        for start in range(0, X.shape[0], CHUNK_ROWS):
            chunk = X[start : start + CHUNK_ROWS]
            envelope = {"op": op, "id": self._take_id(), "X": chunk.tolist()}
            message = self._request(envelope, self.timeout)
            pieces.append(self._parse_scores(op, message, chunk.shape[0]))
            self.rows_sent[op] += chunk.shape[0]
        return np.concatenate(pieces, axis=0)

    def _parse_scores(self, op: str, message: dict, n_rows: int) -> np.ndarray:
        C = self.capabilities.class_count
        if op == "predict":
            if "y" not in message:
                raise BridgeProtocolError("predict response missing 'y'")
            y = np.asarray(message["y"])
            if y.shape != (n_rows,):
                raise BridgeProtocolError(f"predict returned {y.shape[0] if y.ndim else '?'} labels for {n_rows} rows")
            y = y.astype(np.int64)
            if y.size and (y.min() < 0 or y.max() >= C):
                raise BridgeProtocolError("predicted labels outside [0, class_count)")
            return y
        if "Y" not in message:
            raise BridgeProtocolError(f"{op} response missing 'Y'")
        Y = message["Y"]
        if len(Y) != n_rows:
            raise BridgeProtocolError(f"{op} returned {len(Y)} rows for {n_rows} inputs")
        arr = np.asarray(Y, dtype=np.float64)
        if arr.ndim != 2:
            raise BridgeProtocolError(f"{op} rows are ragged or not numeric")
        if not np.all(np.isfinite(arr)):
            raise BridgeProtocolError(f"non-finite values in {op} response")
        if op == "margin":
            if arr.shape[1] == 1 and C == 2:
                # binary servers may send a single decision value per row;
                # expand to per-class margins (class 1 = +dec, class 0 = -dec)
                arr = np.hstack([-arr, arr])
            if arr.shape[1] != C:
                raise BridgeProtocolError(f"margin rows have {arr.shape[1]} columns, expected {C}")
        else:
            if arr.shape[1] != C:
                raise BridgeProtocolError(f"proba rows have {arr.shape[1]} columns, expected {C}")
            if np.any(arr < 0):
                raise BridgeProtocolError("negative probability in proba response")
            sums = arr.sum(axis=1)
            bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
            if bad.size:
                raise BridgeProtocolError(
                    f"proba row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1"
                )
        return arr

    def shutdown(self, timeout: float = 5.0) -> int:
        """Orderly shutdown; returns the server's exit code."""
        if self._proc.poll() is None:
            try:
                message = self._request({"op": "shutdown", "id": self._take_id()}, timeout)
                if message.get("ok") is not True:
                    raise BridgeProtocolError(f"shutdown not acknowledged: {message}")
            except BridgeError:
                self._proc.kill()
            try:
                self._proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        return self._proc.returncode

    def close(self):
        try:
            self.shutdown()
        finally:
            for stream in (self._proc.stdin, self._proc.stdout, self._proc.stderr):
                try:
                    stream.close()
                except Exception:
                    pass


class BridgeProvider:
    """Score provider backed by a bridge endpoint.

    The audit works in client-standardized space; rows are mapped back to
    the dataset's original feature space before crossing the wire, so
    servers own their preprocessing end to end.
    """

    def __init__(self, client: BridgeClient, standardizer=None):
        if client.capabilities is None:
            raise BridgeError("handshake the client before wrapping it")
        self.client = client
        self.standardizer = standardizer

    @property
    def has_margin(self) -> bool:
        return self.client.capabilities.has_decision_function

    @property
    def has_probability(self) -> bool:
        return self.client.capabilities.has_predict_proba

    @property
    def class_count(self) -> int:
        return self.client.capabilities.class_count

    def _to_raw(self, Z: np.ndarray) -> np.ndarray:
        if self.standardizer is None:
            return np.asarray(Z, dtype=np.float64)
        return self.standardizer.inverse_transform(Z)

    def predict(self, Z):
        return self.client.batch_score("predict", self._to_raw(Z))

    def margin_scores(self, Z):
        return self.client.batch_score("margin", self._to_raw(Z))

    def probability_scores(self, Z):
        return self.client.batch_score("proba", self._to_raw(Z))
