"""Adapter entry point: serve predictions or fine-tune the head over the
stdin/stdout line protocol.

``--echo`` answers with the last real history value repeated (no model, no
torch import) and exists so host pipelines can test protocol plumbing
cheaply.
"""
from __future__ import annotations

import argparse
import sys

from .protocol import WireSegment, comment, read_segments, write_prediction


def serve_echo(segments: list[WireSegment], default_out_len: int):
    for seg in segments:
        real = seg.real_x
        last = real[-1] if real else 0.0
        write_prediction(seg, [last] * seg.out_len(default_out_len))


def build_model(args, out_len: int):
    import torch

    from .model import ForecastModel, build_encoder

    torch.set_num_threads(1)  # keeps results bit-stable across runs
    torch.manual_seed(args.seed)
    encoder = build_encoder(args.encoder, args.model_name)
    model = ForecastModel(encoder, out_len, dropout=args.dropout)
    model.eval()
    return model


def serve_predict(args, segments: list[WireSegment]):
    import torch

    from .model import load_head

    if not segments:
        return
    out_len = segments[0].out_len(args.out_len)
    model = build_model(args, out_len)
    if args.weights:
        load_head(args.weights, model)
    x = torch.tensor([s.x for s in segments], dtype=torch.float32)
    mask = torch.tensor([s.mask for s in segments], dtype=torch.float32)
    with torch.no_grad():
        preds = model(x, mask)
    for seg, row in zip(segments, preds):
        write_prediction(seg, row.tolist())


def run_finetune(args, segments: list[WireSegment]):
    from .finetune import finetune_head, segments_to_tensors
    from .model import save_head

    if not segments:
        raise SystemExit("no training segments on stdin")
    out_len = segments[0].out_len(args.out_len)
    model = build_model(args, out_len)
    x, mask, y = segments_to_tensors(segments, out_len)
    finetune_head(
        model, x, mask, y,
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size, seed=args.seed,
        progress=lambda epoch, loss: comment(f"epoch {epoch} train_loss={loss:.6f}"),
    )
    if args.weights:
        save_head(args.weights, model, args.encoder)
        comment(f"weights saved to {args.weights}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="moment-adapter")
    ap.add_argument("--mode", choices=["predict", "finetune"], default="predict")
    ap.add_argument("--echo", action="store_true",
                    help="answer with the last real input value repeated (no model)")
    ap.add_argument("--weights", default=None, help="head weights path (load or save)")
    ap.add_argument("--encoder", choices=["standin", "moment"], default="standin")
    ap.add_argument("--model-name", default=None,
                    help="pre-trained model id for --encoder moment")
    ap.add_argument("--out-len", type=int, default=30)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=1e-5)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--dropout", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    segments = read_segments()
    try:
        if args.echo:
            serve_echo(segments, args.out_len)
        elif args.mode == "predict":
            serve_predict(args, segments)
        else:
            run_finetune(args, segments)
    except Exception as e:  # protocol requires an error line before nonzero exit
        print(f"# error: {e}", flush=True)
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
