"""Head-only fine-tuning: the encoder stays frozen, the forecasting head is
trained with MSE, Adam, and value clipping."""
from __future__ import annotations

import torch
from torch import nn

from .model import ForecastModel
from .protocol import WireSegment


def segments_to_tensors(segments: list[WireSegment], out_len: int):
    x = torch.tensor([s.x for s in segments], dtype=torch.float32)
    mask = torch.tensor([s.mask for s in segments], dtype=torch.float32)
    y = torch.tensor([s.y for s in segments], dtype=torch.float32)
    if y.shape[1] != out_len:
        raise ValueError(f"target length {y.shape[1]} does not match out_len {out_len}")
    return x, mask, y


def finetune_head(
    model: ForecastModel,
    x: torch.Tensor,
    mask: torch.Tensor,
    y: torch.Tensor,
    epochs: int = 10,
    lr: float = 1e-5,
    batch_size: int = 64,
    clip_value: float = 5.0,
    seed: int = 0,
    progress=None,
) -> list[float]:
    """Train only the head; returns the per-epoch mean training losses."""
    torch.manual_seed(seed)
    head_params = [p for p in model.head.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(head_params, lr=lr)
    loss_fn = nn.MSELoss()
    n = x.shape[0]
    losses: list[float] = []
    model.train()
    for epoch in range(1, epochs + 1):
        order = torch.randperm(n)
        total = 0.0
        for start in range(0, n, batch_size):
            take = order[start : start + batch_size]
            optimizer.zero_grad()
            pred = model(x[take], mask[take])
            loss = loss_fn(pred, y[take])
            loss.backward()
            nn.utils.clip_grad_value_(head_params, clip_value)
            optimizer.step()
            total += float(loss.detach()) * take.numel()
        losses.append(total / n)
        if progress is not None:
            progress(epoch, losses[-1])
    model.eval()
    return losses
