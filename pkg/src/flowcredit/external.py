"""Black-box node functions served by a child process.

Wire format, one UTF-8 JSON object per line over the child's stdin/stdout::

    -> {"id": 7, "inputs": {"x": 3.5, "color": "red"}}
    <- {"id": 7, "output": 3.5}

One request is in flight per process. A handle is owned by exactly one
worker; other workers call :meth:`External.new_handle` for their own process.
"""

from __future__ import annotations

import json
import os
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ModelTimeout, ProcessDead, ProtocolViolation
from .functions import FunctionSpec

PROTOCOLS = ("jsonl-v1",)


class ModelProcess:
    """A running external model speaking the line protocol."""

    def __init__(self, command, timeout=10.0):
        self.command = list(command)
        self.timeout = timeout
        self._next_id = 0
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    @property
    def alive(self):
        return self._proc.poll() is None

    def call(self, inputs: Mapping) -> float:
        if not self.alive:
            raise ProcessDead(f"model process {self.command!r} exited with {self._proc.returncode}")
        self._next_id += 1
        rid = self._next_id
        request = json.dumps({"id": rid, "inputs": dict(inputs)}, allow_nan=False)
        try:
            self._proc.stdin.write(request + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProcessDead(f"cannot write to model process: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ModelTimeout(f"no response within {self.timeout} s") from None
        if line is None:
            self._proc.wait()
            raise ProcessDead(f"model process exited with {self._proc.returncode} mid-call")
        return _decode(line, rid)

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _decode(line, rid):
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolViolation(f"response is not JSON: {line.strip()[:80]!r}") from None
    if not isinstance(msg, dict):
        raise ProtocolViolation("response is not a JSON object")
    if msg.get("id") != rid:
        raise ProtocolViolation(f"response id {msg.get('id')!r} does not echo request id {rid}")
    if "output" not in msg:
        raise ProtocolViolation("response has no 'output' field")
    out = msg["output"]
    if isinstance(out, bool) or not isinstance(out, (int, float)):
        raise ProtocolViolation(f"output must be a number, got {out!r}")
    return float(out)


@dataclass(frozen=True, eq=False)
class External(FunctionSpec):
    params: tuple
    command: tuple
    protocol: str = "jsonl-v1"
    timeout: float = 10.0
    variant = "external"
    # one lazily started process per OS process; never pickled
    _handles: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "command", tuple(self.command))
        if self.protocol not in PROTOCOLS:
            raise ProtocolViolation(f"unsupported protocol {self.protocol!r}")

    def __getstate__(self):
        return {"params": self.params, "command": self.command,
                "protocol": self.protocol, "timeout": self.timeout}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "_handles", {})

    def new_handle(self) -> ModelProcess:
        return ModelProcess(self.command, self.timeout)

    def handle(self) -> ModelProcess:
        pid = os.getpid()
        h = self._handles.get(pid)
        if h is None or not h.alive:
            h = self._handles[pid] = self.new_handle()
        return h

    def evaluate(self, args):
        return self.handle().call(dict(zip(self.params, args)))

    def reorder(self, params):
        params, _ = self._permutation(params)
        return External(params, self.command, self.protocol, self.timeout)

    def close(self):
        for h in self._handles.values():
            h.close()
        self._handles.clear()

    def to_doc(self):
        return {"type": "external", "command": list(self.command),
                "protocol": self.protocol, "timeout": self.timeout}


def call_external(fn: External, args: Mapping) -> float:
    """Send one request with named inputs and return the model's output."""
    return fn.handle().call({name: args[name] for name in fn.params})
