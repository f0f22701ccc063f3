"""Client for external forecaster processes speaking the line protocol.

The host spawns the adapter command, writes one segment JSON per line to its
stdin followed by a single empty line (end-of-stream), and reads one
prediction JSON per line from its stdout.  Predictions are matched to
segments by (recording_id, seg_index), so the adapter may answer out of
order; results always come back in input order.  Lines starting with '#' are
progress comments and are collected, not parsed.
"""
from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AdapterProtocolError, AdapterTimeout, BadPrediction
from .types import Segment


@dataclass(frozen=True)
class AdapterEndpoint:
    command: str
    timeout: float = 600.0


@dataclass
class ForecastResult:
    recording_id: str
    seg_index: int
    y_hat: np.ndarray
    patient_id: str | None = None


def segment_to_wire(seg: Segment, include_target: bool = True) -> dict:
    if seg.x_padded is None or seg.mask is None:
        raise ValueError("segment must be padded before hitting the wire")
    record = {
        "patient_id": seg.id.patient_id,
        "recording_id": seg.id.recording_id,
        "seg_index": seg.seg_index,
        "x": seg.x_padded.tolist(),
        "mask": seg.mask.astype(int).tolist(),
        "y": seg.y.tolist() if include_target else [],
        "out_len": int(seg.y.size),
    }
    return record


class _ProcIO:
    """Feed stdin from a thread and queue stdout/stderr lines."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        self.out_q: queue.Queue = queue.Queue()
        self.stderr_tail: list[str] = []
        self.write_error: Exception | None = None
        threading.Thread(target=self._drain_stdout, daemon=True).start()
        threading.Thread(target=self._drain_stderr, daemon=True).start()

    def _drain_stdout(self):
        for line in self.proc.stdout:
            self.out_q.put(line)
        self.out_q.put(None)

    def _drain_stderr(self):
        for line in self.proc.stderr:
            self.stderr_tail.append(line.rstrip("\n"))
            del self.stderr_tail[:-20]

    def send_all(self, lines: Sequence[str]):
        def write():
            try:
                for line in lines:
                    self.proc.stdin.write(line + "\n")
                self.proc.stdin.write("\n")
                self.proc.stdin.close()
            except (BrokenPipeError, OSError) as e:  # adapter died mid-stream
                self.write_error = e

        threading.Thread(target=write, daemon=True).start()

    def next_line(self, deadline: float) -> str | None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise queue.Empty
        return self.out_q.get(timeout=remaining)

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()

    def diagnostics(self) -> str:
        tail = "; ".join(self.stderr_tail[-5:])
        return f"exit={self.proc.poll()} stderr={tail!r}"


def _exchange(segments: Sequence[Segment], endpoint: AdapterEndpoint, include_target: bool):
    lines = [json.dumps(segment_to_wire(s, include_target=include_target)) for s in segments]
    io = _ProcIO(endpoint.command)
    io.send_all(lines)
    deadline = time.monotonic() + endpoint.timeout
    predictions: dict[tuple[str, int], list] = {}
    comments: list[str] = []
    try:
        while True:
            try:
                line = io.next_line(deadline)
            except queue.Empty:
                io.kill()
                raise AdapterTimeout(f"adapter silent past {endpoint.timeout}s ({io.diagnostics()})")
            if line is None:  # EOF
                break
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            try:
                record = json.loads(line)
                key = (record["recording_id"], int(record["seg_index"]))
                y_hat = record["y_hat"]
            except (ValueError, KeyError, TypeError) as e:
                io.kill()
                raise AdapterProtocolError(f"unparseable prediction line {line[:120]!r}: {e}")
            if key in predictions:
                io.kill()
                raise AdapterProtocolError(f"duplicate prediction for {key}")
            predictions[key] = y_hat
        try:
            io.proc.wait(timeout=max(deadline - time.monotonic(), 1.0))
        except subprocess.TimeoutExpired:
            io.kill()
            raise AdapterTimeout(f"adapter did not exit after end-of-stream ({io.diagnostics()})")
    finally:
        io.kill()
    return predictions, comments, io


def external_forecast(
    segments: Sequence[Segment],
    endpoint: AdapterEndpoint,
    include_target: bool = True,
) -> list[ForecastResult]:
    """Stream segments to the adapter and return predictions in input order."""
    if not segments:
        return []
    predictions, _, io = _exchange(segments, endpoint, include_target)
    results = []
    for seg in segments:
        key = (seg.id.recording_id, seg.seg_index)
        if key not in predictions:
            raise AdapterProtocolError(f"no prediction for {key} ({io.diagnostics()})")
        y_hat = np.asarray(predictions.pop(key), dtype=np.float64)
        if y_hat.ndim != 1 or y_hat.size != seg.y.size:
            raise BadPrediction(f"prediction for {key} has length {y_hat.size}, expected {seg.y.size}")
        if not np.isfinite(y_hat).all():
            raise BadPrediction(f"prediction for {key} contains non-finite values")
        results.append(ForecastResult(seg.id.recording_id, seg.seg_index, y_hat, seg.id.patient_id))
    if predictions:
        raise AdapterProtocolError(f"adapter answered for unknown segments: {sorted(predictions)[:3]}")
    return results


def external_finetune(segments: Sequence[Segment], endpoint: AdapterEndpoint) -> list[str]:
    """Stream training segments to a fine-tune command; returns the adapter's
    progress comments (per-epoch losses).  The adapter persists its own
    weights."""
    predictions, comments, io = _exchange(segments, endpoint, include_target=True)
    code = io.proc.poll()
    if code != 0:
        raise AdapterProtocolError(f"fine-tune command failed ({io.diagnostics()})")
    if predictions:
        raise AdapterProtocolError("fine-tune command unexpectedly emitted predictions")
    return comments
