"""Report rendering: summary tables, plot-ready CSVs, and matplotlib figures.

Figures mirror the standard diagnostics for this pipeline: segment MAE versus
segment variance with a linear fit, per-patient MAE with point size showing
recording variance, and train/validation loss per epoch across folds.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluation import MetricsReport, variance_mae_fit
from .errors import DegenerateFit
from .train import LossCurve

_FIG_DPI = 150


def recording_rows(reports: list[MetricsReport]) -> list[dict]:
    """Per-recording MAE and mean segment variance, tagged with the patient."""
    rows = []
    for rep in reports:
        by_rec: dict[str, list] = {}
        for s in rep.segment_scores:
            by_rec.setdefault(s.recording_id, []).append(s)
        for rec_id in sorted(by_rec):
            scores = by_rec[rec_id]
            rows.append({
                "patient_id": rep.patient_of.get(rec_id, ""),
                "recording_id": rec_id,
                "mae": float(np.mean([s.mae for s in scores])),
                "variance": float(np.mean([s.variance for s in scores])),
                "n_segments": len(scores),
            })
    rows.sort(key=lambda r: (r["patient_id"], r["recording_id"]))
    return rows


def write_variance_mae(out_dir: Path, reports: list[MetricsReport], cfg_hash: str, model: str):
    scores = [s for rep in reports for s in rep.segment_scores]
    with open(out_dir / "variance_mae.csv", "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash} model={model}\n")
        writer = csv.writer(f)
        writer.writerow(["recording_id", "seg_index", "variance", "mae"])
        for s in scores:
            writer.writerow([s.recording_id, s.seg_index, repr(s.variance), repr(s.mae)])

    var = np.array([s.variance for s in scores])
    mae = np.array([s.mae for s in scores])
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter(var, mae, s=10, alpha=0.35, edgecolors="none")
    try:
        slope, intercept = variance_mae_fit(scores)
        xs = np.linspace(var.min(), var.max(), 50)
        ax.plot(xs, slope * xs + intercept, color="red", lw=2,
                label=f"fit: mae = {slope:.3g}*var + {intercept:.3g}")
        ax.legend()
    except DegenerateFit:
        pass
    ax.set_xlabel("segment variance (mm Hg$^2$)")
    ax.set_ylabel("segment MAE (mm Hg)")
    ax.set_title(f"MAE vs variance per segment ({model})")
    fig.tight_layout()
    fig.savefig(out_dir / "variance_mae.png", dpi=_FIG_DPI,
                metadata={"Description": f"config_hash={cfg_hash}"})
    plt.close(fig)


def write_per_patient_mae(out_dir: Path, reports: list[MetricsReport], cfg_hash: str, model: str):
    rows = recording_rows(reports)
    with open(out_dir / "per_patient_mae.csv", "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash} model={model}\n")
        writer = csv.writer(f)
        writer.writerow(["patient_id", "recording_id", "mae", "variance", "n_segments"])
        for r in rows:
            writer.writerow([r["patient_id"], r["recording_id"], repr(r["mae"]),
                             repr(r["variance"]), r["n_segments"]])

    patients = sorted({r["patient_id"] for r in rows})
    pos = {p: i for i, p in enumerate(patients)}
    cmap = plt.get_cmap("tab20")
    fig, ax = plt.subplots(figsize=(max(7, 0.4 * len(patients)), 5))
    var = np.array([r["variance"] for r in rows])
    vmax = var.max() if var.size and var.max() > 0 else 1.0
    for r in rows:
        ax.scatter(pos[r["patient_id"]], r["mae"],
                   s=30 + 170 * r["variance"] / vmax,
                   color=cmap(pos[r["patient_id"]] % 20), alpha=0.8, edgecolors="none")
    ax.set_xticks(range(len(patients)))
    ax.set_xticklabels(patients, rotation=90, fontsize=7)
    ax.set_xlabel("patient")
    ax.set_ylabel("recording MAE (mm Hg)")
    ax.set_title(f"Per-patient MAE, point size ~ recording variance ({model})")
    fig.tight_layout()
    fig.savefig(out_dir / "per_patient_mae.png", dpi=_FIG_DPI,
                metadata={"Description": f"config_hash={cfg_hash}"})
    plt.close(fig)


def write_loss_curves(out_dir: Path, curves: list[LossCurve], cfg_hash: str, model: str):
    if not curves:
        return
    with open(out_dir / "loss_curves.csv", "w", newline="") as f:
        f.write(f"# config_hash={cfg_hash} model={model}\n")
        writer = csv.writer(f)
        writer.writerow(["fold", "epoch", "train_loss", "val_loss"])
        for i, c in enumerate(curves):
            for e, (tr, va) in enumerate(zip(c.train, c.validation), start=1):
                writer.writerow([i, e, repr(tr), repr(va)])

    fig, ax = plt.subplots(figsize=(7, 5))
    epochs = range(1, len(curves[0].train) + 1)
    for c in curves:
        ax.plot(epochs, c.train, color="tab:blue", alpha=0.25)
        ax.plot(epochs, c.validation, color="tab:orange", alpha=0.25)
    ax.plot(epochs, np.mean([c.train for c in curves], axis=0),
            color="tab:blue", lw=2.5, label="train (mean)")
    ax.plot(epochs, np.mean([c.validation for c in curves], axis=0),
            color="tab:orange", lw=2.5, label="validation (mean)")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE loss (scaled space)")
    ax.set_title(f"Loss per epoch ({model})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "loss_curves.png", dpi=_FIG_DPI,
                metadata={"Description": f"config_hash={cfg_hash}"})
    plt.close(fig)
