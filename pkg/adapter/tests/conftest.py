import json
import subprocess
import sys

import numpy as np

INPUT_LEN = 512


def wire_segment(recording_id="r0", seg_index=0, in_len=60, out_len=30, seed=0,
                 pad_value=0.0, patient_id="p0"):
    rng = np.random.default_rng(seed)
    x = np.zeros(INPUT_LEN)
    x[:in_len] = rng.normal(0.0, 1.0, in_len)
    x[in_len:] = pad_value
    mask = [1] * in_len + [0] * (INPUT_LEN - in_len)
    y = rng.normal(0.0, 1.0, out_len)
    return {
        "patient_id": patient_id,
        "recording_id": recording_id,
        "seg_index": seg_index,
        "x": x.tolist(),
        "mask": mask,
        "y": y.tolist(),
        "out_len": out_len,
    }


def sine_wire_segments(n, in_len=60, out_len=30, seed=0):
    """Segments cut from one long noisy sine so the head has something to learn."""
    rng = np.random.default_rng(seed)
    t = np.arange(in_len + out_len + 5 * n, dtype=float)
    series = np.sin(2 * np.pi * t / 47.0) + 0.05 * rng.normal(size=t.size)
    segments = []
    for j in range(n):
        start = 5 * j
        window = series[start : start + in_len + out_len]
        x = np.zeros(INPUT_LEN)
        x[:in_len] = window[:in_len]
        segments.append({
            "patient_id": "p0",
            "recording_id": "sine",
            "seg_index": j,
            "x": x.tolist(),
            "mask": [1] * in_len + [0] * (INPUT_LEN - in_len),
            "y": window[in_len:].tolist(),
            "out_len": out_len,
        })
    return segments


def run_adapter(records, *flags, timeout=120):
    """Spawn the adapter CLI on a stream of records; returns (predictions, comments, code)."""
    stdin = "".join(json.dumps(r) + "\n" for r in records) + "\n"
    proc = subprocess.run(
        [sys.executable, "-m", "moment_adapter", *flags],
        input=stdin, capture_output=True, text=True, timeout=timeout,
    )
    predictions, comments = [], []
    for line in proc.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            comments.append(line)
        else:
            predictions.append(json.loads(line))
    return predictions, comments, proc.returncode
