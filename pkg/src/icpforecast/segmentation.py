"""Cuts clean signals into overlapping (history, target) segments.

A signal of length L yields floor((L - (in_len + out_len)) / str_len) + 1
segments when L is long enough, else none.  Segment j starts at j*str_len;
its target always immediately follows its history.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .errors import PadOverflow
from .types import CleanSignal, Segment, SegmentConfig


def segment_count(length: int, cfg: SegmentConfig) -> int:
    window = cfg.in_len + cfg.out_len
    if length < window:
        return 0
    return (length - window) // cfg.str_len + 1


def pad_fixed(seg: Segment, cfg: SegmentConfig) -> Segment:
    """Append zeros after the history up to fixed_len and build the 0/1 mask
    marking real positions."""
    n = seg.x.size
    if n > cfg.fixed_len:
        raise PadOverflow(f"history length {n} exceeds fixed_len {cfg.fixed_len}")
    x_padded = np.zeros(cfg.fixed_len)
    x_padded[:n] = seg.x
    mask = np.zeros(cfg.fixed_len)
    mask[:n] = 1.0
    return dataclasses.replace(seg, x_padded=x_padded, mask=mask)


def segment_signal(clean: CleanSignal, cfg: SegmentConfig) -> list[Segment]:
    """All (X, Y) segments of the signal, each already padded to fixed_len."""
    n = segment_count(len(clean), cfg)
    segments = []
    for j in range(n):
        start = j * cfg.str_len
        split = start + cfg.in_len
        seg = Segment(
            id=clean.id,
            seg_index=j,
            x=clean.values[start:split],
            y=clean.values[split : split + cfg.out_len],
            start_minute=clean.start_minute + start,
        )
        segments.append(pad_fixed(seg, cfg))
    return segments
