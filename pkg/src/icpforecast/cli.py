"""Command-line pipeline: preprocess, segment, train, predict, evaluate,
cv, and report.

Every command is a pure function of (input files, config, seed); rerunning
with identical inputs produces byte-identical outputs.  Timestamps appear only
in the sidecar run.log.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .adapter import AdapterEndpoint, external_finetune, external_forecast
from .cv import Dataset, ModelSpec, run_cv
from .errors import (
    AdapterError,
    NumericalDivergence,
    PipelineError,
)
from .es import es_forecast
from .evaluation import aggregate, cv_summary, score_segment
from .lstm import forward_batch, init_lstm_params
from .preprocess import (
    preprocess_recording,
    scale_segment,
    scaler_fit_values,
    scaler_invert,
)
from .segmentation import segment_signal
from .train import TrainConfig, train
from .types import RecordingMeta, ScalerStats

log = logging.getLogger("icpforecast")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGED = 2
EXIT_ADAPTER = 3


def _setup_logging(out_dir: Path | None):
    log.setLevel(logging.INFO)
    log.handlers.clear()
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(console)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        sidecar = logging.FileHandler(out_dir / "run.log")
        sidecar.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(sidecar)


def _check_stamp(stamp: str | None, cfg_hash: str, what: str):
    if stamp is not None and stamp != cfg_hash:
        log.warning("%s was produced under config %s, current config is %s", what, stamp, cfg_hash)


def _load_stage(args) -> tuple[io.RunConfig, str, Path, Path]:
    cfg = io.load_config(args.config)
    out_dir = Path(args.out)
    _setup_logging(out_dir)
    return cfg, io.config_hash(cfg), Path(args.in_dir), out_dir


# --- preprocess ----------------------------------------------------------------

def cmd_preprocess(args) -> int:
    cfg, cfg_hash, raw_dir, out_dir = _load_stage(args)
    metas, _ = io.read_manifest(raw_dir / "manifest.json")
    events = []
    accepted: list[RecordingMeta] = []
    for meta in sorted(metas, key=lambda m: m.id.recording_id):
        rid = meta.id.recording_id
        if meta.id.monitor_type.value not in cfg.allowed_monitor_types:
            events.append({"recording_id": rid, "action": "excluded",
                           "reason": f"monitor type {meta.id.monitor_type.value}"})
            continue
        try:
            raw = io.read_raw_recording(raw_dir / f"{rid}.csv", meta.id)
            outcome = preprocess_recording(raw, cfg.preprocess, meta.manual_trim_minute)
        except (PipelineError, OSError, ValueError) as e:
            events.append({"recording_id": rid, "action": "error", "reason": str(e)})
            log.warning("skipping %s: %s", rid, e)
            continue
        if outcome.trimmed_at is not None:
            events.append({"recording_id": rid, "action": "trimmed",
                           "reason": f"manual trim at minute {outcome.trimmed_at}"})
        if not outcome.accepted:
            events.append({"recording_id": rid, "action": "excluded", "reason": outcome.rejected_reason})
            continue
        io.write_clean_signal(out_dir / f"{rid}.csv", outcome.signal, cfg_hash)
        accepted.append(meta)
    io.write_manifest(out_dir / "manifest.json", accepted, cfg_hash)
    (out_dir / "exclusions.json").write_text(
        json.dumps({"config_hash": cfg_hash, "events": events}, indent=1, sort_keys=True) + "\n")
    log.info("accepted %d of %d recordings", len(accepted), len(metas))
    return EXIT_OK


def _load_dataset(clean_dir: Path) -> tuple[Dataset, str | None]:
    metas, stamp = io.read_manifest(clean_dir / "manifest.json")
    signals = {}
    for meta in metas:
        rid = meta.id.recording_id
        signals[rid] = io.read_clean_signal(clean_dir / f"{rid}.csv", meta.id)
    return Dataset(metas=metas, signals=signals, config_tag=stamp), stamp


# --- segment ---------------------------------------------------------------------

def cmd_segment(args) -> int:
    cfg, cfg_hash, clean_dir, out_dir = _load_stage(args)
    dataset, stamp = _load_dataset(clean_dir)
    _check_stamp(stamp, cfg_hash, "clean signals")
    segments = []
    for meta in sorted(dataset.metas, key=lambda m: m.id.recording_id):
        segments.extend(segment_signal(dataset.signals[meta.id.recording_id], cfg.segment))
    io.write_segments(out_dir / "segments.jsonl", segments, cfg_hash)
    io.write_manifest(out_dir / "manifest.json", dataset.metas, cfg_hash)
    log.info("wrote %d segments from %d recordings", len(segments), len(dataset.metas))
    return EXIT_OK


def _pooled_scaler(segments) -> ScalerStats:
    # Stage input is segments, not signals, so the scaler pools x and y values
    # of the training segments (overlap included).
    return scaler_fit_values(np.concatenate([np.concatenate([s.x, s.y]) for s in segments]))


# --- train ------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg, cfg_hash, in_dir, out_dir = _load_stage(args)
    segments, stamp = io.read_segments(in_dir / "segments.jsonl")
    _check_stamp(stamp, cfg_hash, "segments")
    if not segments:
        raise PipelineError("no training segments")
    scaler = _pooled_scaler(segments)
    if args.model == "external":
        if not args.adapter_cmd:
            raise PipelineError("--adapter-cmd required for external model")
        scaled = [scale_segment(s, scaler) for s in segments]
        comments = external_finetune(scaled, AdapterEndpoint(args.adapter_cmd, args.adapter_timeout))
        (out_dir / "adapter_losses.txt").write_text("\n".join(comments) + ("\n" if comments else ""))
        (out_dir / "scaler.json").write_text(json.dumps(
            {"config_hash": cfg_hash, **scaler.to_dict()}, sort_keys=True) + "\n")
        return EXIT_OK
    if args.model != "lstm":
        raise PipelineError(f"model {args.model!r} needs no training")
    val_segments = segments
    if args.val:
        val_segments, _ = io.read_segments(Path(args.val))
    seed = args.seed if args.seed is not None else cfg.train.seed
    train_cfg = TrainConfig(**{**cfg.train.to_dict(), "seed": seed})
    params = init_lstm_params(cfg.hidden_size, seed)
    scaled_train = [scale_segment(s, scaler) for s in segments]
    scaled_val = [scale_segment(s, scaler) for s in val_segments]
    result = train(params, scaled_train, scaled_val, train_cfg)
    io.write_checkpoint(out_dir / "checkpoint.json", result.params, scaler, train_cfg, cfg_hash)
    io.write_loss_curve(out_dir / "loss_curve.json", result.curve, cfg_hash)
    if result.diverged:
        log.error("training diverged; checkpoint holds the last finite parameters")
        return EXIT_DIVERGED
    log.info("trained %d epochs on %d segments", train_cfg.epochs, len(segments))
    return EXIT_OK


# --- predict ------------------------------------------------------------------------

def _predict_rows(segments, preds):
    return [
        {"patient_id": s.id.patient_id, "recording_id": s.id.recording_id,
         "seg_index": s.seg_index, "y_hat": list(map(float, y))}
        for s, y in zip(segments, preds)
    ]


def cmd_predict(args) -> int:
    cfg, cfg_hash, in_dir, out_dir = _load_stage(args)
    segments, stamp = io.read_segments(in_dir / "segments.jsonl")
    _check_stamp(stamp, cfg_hash, "segments")
    if args.model == "es":
        preds = [es_forecast(s.x, s.y.size, cfg.es) for s in segments]
    elif args.model == "lstm":
        if not args.checkpoint:
            raise PipelineError("--checkpoint required for lstm predictions")
        params, scaler, _ = io.read_checkpoint(args.checkpoint)
        preds = []
        for start in range(0, len(segments), 1024):
            batch = segments[start : start + 1024]
            x = np.stack([scale_segment(s, scaler).x for s in batch])
            y_hat = forward_batch(params, x, tf_prob=0.0, out_len=batch[0].y.size)
            preds.extend(scaler_invert(row, scaler) for row in y_hat)
    else:
        if not args.adapter_cmd:
            raise PipelineError("--adapter-cmd required for external model")
        scaler = _load_scaler(args)
        scaled = [scale_segment(s, scaler) for s in segments]
        results = external_forecast(scaled, AdapterEndpoint(args.adapter_cmd, args.adapter_timeout))
        preds = [scaler_invert(r.y_hat, scaler) for r in results]
    io.write_predictions(out_dir / "predictions.jsonl", _predict_rows(segments, preds), cfg_hash)
    log.info("wrote %d predictions (%s)", len(preds), args.model)
    return EXIT_OK


def _load_scaler(args) -> ScalerStats:
    if args.checkpoint:
        _, scaler, _ = io.read_checkpoint(args.checkpoint)
        return scaler
    if args.scaler:
        doc = json.loads(Path(args.scaler).read_text())
        return ScalerStats.from_dict(doc)
    raise PipelineError("external predictions need --checkpoint or --scaler for the scaler stats")


# --- evaluate -----------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    cfg, cfg_hash, in_dir, out_dir = _load_stage(args)
    segments, stamp = io.read_segments(in_dir / "segments.jsonl")
    _check_stamp(stamp, cfg_hash, "segments")
    pred_path = Path(args.pred) if args.pred else in_dir / "predictions.jsonl"
    rows, pstamp = io.read_predictions(pred_path)
    _check_stamp(pstamp, cfg_hash, "predictions")
    by_key = {(r["recording_id"], int(r["seg_index"])): r["y_hat"] for r in rows}
    scores = []
    pmap = {}
    for s in segments:
        key = (s.id.recording_id, s.seg_index)
        if key not in by_key:
            raise PipelineError(f"no prediction for segment {key}")
        scores.append(score_segment(s.y, by_key[key], x=s.x,
                                    recording_id=s.id.recording_id, seg_index=s.seg_index))
        pmap[s.id.recording_id] = s.id.patient_id
    report = aggregate(scores, pmap)
    io.write_report(out_dir / "report.json", report, args.model, "evaluation", cfg_hash)
    io.write_point_summary_csv(out_dir / "report.csv", report, cfg_hash, args.model)
    log.info("model MAE %.4f over %d segments", report.model_mae, len(scores))
    return EXIT_OK


# --- cv ------------------------------------------------------------------------------

def cmd_cv(args) -> int:
    cfg, cfg_hash, clean_dir, out_dir = _load_stage(args)
    dataset, stamp = _load_dataset(clean_dir)
    _check_stamp(stamp, cfg_hash, "clean signals")
    spec = ModelSpec(
        kind=args.model,
        es_config=cfg.es,
        train_config=cfg.train,
        hidden_size=cfg.hidden_size,
        adapter_cmd=args.adapter_cmd,
        adapter_finetune_cmd=args.adapter_finetune_cmd,
        adapter_timeout=args.adapter_timeout,
    )
    seed = args.seed if args.seed is not None else cfg.train.seed
    result = run_cv(dataset, spec, k=args.folds, seed=seed, seg_cfg=cfg.segment,
                    workdir=str(out_dir))
    curves = []
    folds_doc = []
    for fr in result.folds:
        fold_dir = out_dir / f"fold_{fr.split.fold_index}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        io.write_report(fold_dir / "report_val.json", fr.val_report, args.model,
                        "validation", cfg_hash, fold=fr.split.fold_index)
        io.write_report(fold_dir / "report_train.json", fr.train_report, args.model,
                        "training", cfg_hash, fold=fr.split.fold_index)
        (fold_dir / "scaler.json").write_text(json.dumps(
            {"config_hash": cfg_hash, **fr.scaler.to_dict()}, sort_keys=True) + "\n")
        if fr.curve is not None:
            io.write_loss_curve(fold_dir / "loss_curve.json", fr.curve, cfg_hash)
            curves.append(fr.curve)
        folds_doc.append({
            "fold": fr.split.fold_index,
            "train_patients": sorted(fr.split.train_patients),
            "val_patients": sorted(fr.split.val_patients),
            "diverged": fr.diverged,
        })
    (out_dir / "folds.json").write_text(
        json.dumps({"config_hash": cfg_hash, "seed": seed, "folds": folds_doc},
                   indent=1, sort_keys=True) + "\n")
    stats = cv_summary(result.val_reports)
    io.write_summary_csv(out_dir / "cv_summary.csv", stats, cfg_hash, args.model)
    train_stats = cv_summary(result.train_reports)
    io.write_summary_csv(out_dir / "cv_summary_train.csv", train_stats, cfg_hash, args.model)
    for key, s in stats.items():
        log.info("validation %s: %s", key, s.formatted())
    if any(fr.diverged for fr in result.folds):
        log.error("at least one fold diverged")
        return EXIT_DIVERGED
    return EXIT_OK


# --- report ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    from . import report as rpt

    cfg, cfg_hash, in_dir, out_dir = _load_stage(args)
    fold_reports = sorted(in_dir.glob("fold_*/report_val.json"))
    single = in_dir / "report.json"
    docs = [io.read_report(p) for p in fold_reports] if fold_reports else (
        [io.read_report(single)] if single.exists() else [])
    if not docs:
        raise PipelineError(f"no report files under {in_dir}")
    for doc in docs:
        _check_stamp(doc.get("config_hash"), cfg_hash, "report")
    model = docs[0].get("model", "unknown")
    reports = [d["_report"] for d in docs]
    if len(reports) >= 2:
        io.write_summary_csv(out_dir / "summary.csv", cv_summary(reports), cfg_hash, model)
    else:
        io.write_point_summary_csv(out_dir / "summary.csv", reports[0], cfg_hash, model)
    rpt.write_variance_mae(out_dir, reports, cfg_hash, model)
    rpt.write_per_patient_mae(out_dir, reports, cfg_hash, model)
    curves = [io.read_loss_curve(p) for p in sorted(in_dir.glob("fold_*/loss_curve.json"))]
    if (in_dir / "loss_curve.json").exists():
        curves.append(io.read_loss_curve(in_dir / "loss_curve.json"))
    rpt.write_loss_curves(out_dir, curves, cfg_hash, model)
    log.info("report written to %s", out_dir)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, model: bool = False):
    p.add_argument("--in", dest="in_dir", required=True, help="input directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None, help="config JSON (defaults when omitted)")
    p.add_argument("--seed", type=int, default=None)
    if model:
        p.add_argument("--model", choices=["es", "lstm", "external"], default="lstm")
        p.add_argument("--adapter-cmd", default=None, help="external adapter command line")
        p.add_argument("--adapter-finetune-cmd", default=None)
        p.add_argument("--adapter-timeout", type=float, default=600.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icpforecast",
                                     description="ICP time-series forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw recordings -> per-minute clean signals")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", help="clean signals -> (X, Y) segments")
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train the LSTM (or fine-tune an external adapter)")
    _add_common(p, model=True)
    p.add_argument("--val", default=None, help="validation segments.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="segments -> predictions")
    _add_common(p, model=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--scaler", default=None, help="scaler stats JSON for external predictions")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="segments + predictions -> metrics report")
    _add_common(p, model=True)
    p.add_argument("--pred", default=None, help="predictions.jsonl (default: <in>/predictions.jsonl)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="patient-grouped k-fold cross-validation")
    _add_common(p, model=True)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("report", help="reports -> summary tables and figures")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdapterError as e:
        log.error("adapter failure: %s", e)
        return EXIT_ADAPTER
    except NumericalDivergence as e:
        log.error("numerical divergence: %s", e)
        return EXIT_DIVERGED
    except (PipelineError, OSError, json.JSONDecodeError) as e:
        log.error("fatal: %s", e)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
