"""Stdin/stdout line protocol shared with the host pipeline.

One segment JSON per input line, terminated by an empty line or EOF; one
prediction JSON per output line.  Lines starting with '#' are progress
comments for the host's log.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass


@dataclass
class WireSegment:
    patient_id: str
    recording_id: str
    seg_index: int
    x: list[float]
    mask: list[int]
    y: list[float]
    out_len_hint: int | None = None

    @property
    def real_x(self) -> list[float]:
        return [v for v, m in zip(self.x, self.mask) if m]

    def out_len(self, default: int) -> int:
        if self.y:
            return len(self.y)
        if self.out_len_hint is not None:
            return self.out_len_hint
        return default


def read_segments(stream=None) -> list[WireSegment]:
    stream = stream if stream is not None else sys.stdin
    segments = []
    for line in stream:
        line = line.strip()
        if not line:
            break
        record = json.loads(line)
        if "meta" in record:
            continue
        segments.append(WireSegment(
            patient_id=record.get("patient_id", ""),
            recording_id=record["recording_id"],
            seg_index=int(record["seg_index"]),
            x=[float(v) for v in record["x"]],
            mask=[int(m) for m in record["mask"]],
            y=[float(v) for v in record.get("y") or []],
            out_len_hint=None if record.get("out_len") is None else int(record["out_len"]),
        ))
    return segments


def write_prediction(seg: WireSegment, y_hat, stream=None):
    stream = stream if stream is not None else sys.stdout
    stream.write(json.dumps({
        "recording_id": seg.recording_id,
        "seg_index": seg.seg_index,
        "y_hat": [float(v) for v in y_hat],
    }) + "\n")
    stream.flush()


def comment(text: str, stream=None):
    stream = stream if stream is not None else sys.stdout
    stream.write(f"# {text}\n")
    stream.flush()
