"""Frozen encoder plus a small fine-tunable forecasting head.

The encoder maps a fixed-length (512) univariate series to a flat embedding;
only the head (dropout + one linear layer onto the forecast horizon) is ever
trained.  Two encoder backends exist:

- ``moment``: the published pre-trained transformer, loaded through the
  optional ``momentfm`` package; its embedding is the flattened patch
  representation.
- ``standin``: a small deterministic patch-projection encoder with weights
  fixed by an internal seed.  It mimics the shape of the real thing (patchify,
  embed, flatten) so head fine-tuning, freezing, and the wire protocol can be
  exercised without downloading model weights.
"""
from __future__ import annotations

import torch
from torch import nn

INPUT_LEN = 512
PATCH_LEN = 8
STANDIN_DIM = 16
_STANDIN_SEED = 170353


class StandinEncoder(nn.Module):
    """Deterministic frozen encoder: patchify 512 -> 64 patches, project each
    to STANDIN_DIM, flatten."""

    def __init__(self):
        super().__init__()
        gen = torch.Generator().manual_seed(_STANDIN_SEED)
        self.proj = nn.Linear(PATCH_LEN, STANDIN_DIM)
        with torch.no_grad():
            self.proj.weight.copy_(torch.randn(STANDIN_DIM, PATCH_LEN, generator=gen) / PATCH_LEN**0.5)
            self.proj.bias.copy_(torch.randn(STANDIN_DIM, generator=gen) * 0.01)
        self.activation = nn.Tanh()
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def embed_dim(self) -> int:
        return (INPUT_LEN // PATCH_LEN) * STANDIN_DIM

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        # x, mask: (B, 512); padded positions are already zero
        patches = (x * mask).reshape(x.shape[0], INPUT_LEN // PATCH_LEN, PATCH_LEN)
        return self.activation(self.proj(patches)).reshape(x.shape[0], -1)


class MomentEncoder(nn.Module):
    """Wrapper over the published pre-trained encoder (optional dependency)."""

    def __init__(self, model_name: str):
        super().__init__()
        try:
            from momentfm import MOMENTPipeline
        except ImportError as e:
            raise RuntimeError(
                "the 'momentfm' package is required for --encoder moment; "
                "install it (pip install momentfm) or use --encoder standin"
            ) from e
        self.pipeline = MOMENTPipeline.from_pretrained(
            model_name, model_kwargs={"task_name": "embedding"})
        self.pipeline.init()
        for p in self.pipeline.parameters():
            p.requires_grad_(False)
        d_model = self.pipeline.config.d_model
        self._embed_dim = (INPUT_LEN // self.pipeline.config.patch_len) * d_model

    @property
    def embed_dim(self) -> int:
        return self._embed_dim

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        out = self.pipeline.encode(x_enc=x.unsqueeze(1), input_mask=mask)
        return out.embeddings.reshape(x.shape[0], -1)


class ForecastHead(nn.Module):
    """Dropout followed by one affine map onto the forecast horizon."""

    def __init__(self, embed_dim: int, out_len: int, dropout: float = 0.1):
        super().__init__()
        self.dropout = nn.Dropout(dropout)
        self.linear = nn.Linear(embed_dim, out_len)

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        return self.linear(self.dropout(emb))


class ForecastModel(nn.Module):
    def __init__(self, encoder: nn.Module, out_len: int, dropout: float = 0.1):
        super().__init__()
        self.encoder = encoder
        self.head = ForecastHead(encoder.embed_dim, out_len, dropout)
        self.out_len = out_len

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(x, mask))


def build_encoder(name: str, model_name: str | None = None) -> nn.Module:
    if name == "standin":
        return StandinEncoder()
    if name == "moment":
        return MomentEncoder(model_name or "AutonLab/MOMENT-1-large")
    raise ValueError(f"unknown encoder {name!r}")


def encoder_fingerprint(encoder: nn.Module) -> bytes:
    """Byte-exact snapshot of every encoder parameter and buffer."""
    chunks = []
    for name, tensor in sorted(encoder.state_dict().items()):
        chunks.append(name.encode())
        chunks.append(tensor.detach().cpu().numpy().tobytes())
    return b"".join(chunks)


def save_head(path: str, model: ForecastModel, encoder_name: str):
    torch.save({
        "format_version": 1,
        "encoder": encoder_name,
        "out_len": model.out_len,
        "embed_dim": model.encoder.embed_dim,
        "head_state": model.head.state_dict(),
    }, path)


def load_head(path: str, model: ForecastModel):
    doc = torch.load(path, map_location="cpu", weights_only=True)
    if doc.get("format_version") != 1:
        raise ValueError(f"{path}: unsupported weights version {doc.get('format_version')}")
    if doc["out_len"] != model.out_len or doc["embed_dim"] != model.encoder.embed_dim:
        raise ValueError(f"{path}: head shape mismatch")
    model.head.load_state_dict(doc["head_state"])
