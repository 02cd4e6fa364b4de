"""Mixture, autoregressive and diffusion decoders over the quantized target grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .tensorio import RandomStream
from .vq import QuantizedTarget


class DecoderError(ValueError):
    pass


def _slots(s):
    return s.slots if hasattr(s, "slots") else s


# ----------------------------------------------------------------- mixture


@dataclass
class MixtureOutput:
    components: torch.Tensor  # (B, n, h, w, c)
    alphas: torch.Tensor  # (B, n, h, w)
    reconstruction: torch.Tensor  # (B, h, w, c)


class MixtureDecoder(nn.Module):
    """Spatial-broadcast MLP decoder; each slot emits c values plus an alpha logit per position."""

    def __init__(self, slot_dim: int, out_dim: int, grid: tuple[int, int], width: int = 64):
        super().__init__()
        self.grid = tuple(grid)
        self.out_dim = out_dim
        self.pos = nn.Parameter(torch.randn(grid[0] * grid[1], slot_dim) * 0.02)
        self.mlp = nn.Sequential(
            nn.Linear(slot_dim, width),
            nn.ReLU(),
            nn.Linear(width, width),
            nn.ReLU(),
            nn.Linear(width, width),
            nn.ReLU(),
            nn.Linear(width, out_dim + 1),
        )

    def forward(self, slots) -> MixtureOutput:
        slots = _slots(slots)
        b, n, _ = slots.shape
        h, w = self.grid
        x = slots[:, :, None, :] + self.pos  # (B, n, hw, d)
        out = self.mlp(x)
        components = out[..., :-1].reshape(b, n, h, w, self.out_dim)
        alphas = out[..., -1].softmax(dim=1).reshape(b, n, h, w)
        recon = (alphas[..., None] * components).sum(dim=1)
        return MixtureOutput(components, alphas, recon)


# --------------------------------------------------------------- attention


class Attention(nn.Module):
    def __init__(self, width: int, heads: int, kv_dim: int | None = None):
        super().__init__()
        if width % heads:
            raise DecoderError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        self.q = nn.Linear(width, width)
        self.kv = nn.Linear(kv_dim or width, 2 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x, context, causal: bool = False):
        b, lq, w = x.shape
        lk = context.shape[1]
        hd = w // self.heads
        q = self.q(x).reshape(b, lq, self.heads, hd).transpose(1, 2)
        k, v = self.kv(context).split(w, dim=-1)
        k = k.reshape(b, lk, self.heads, hd).transpose(1, 2)
        v = v.reshape(b, lk, self.heads, hd).transpose(1, 2)
        logits = q @ k.transpose(-1, -2) * hd ** -0.5
        if causal:
            mask = torch.ones(lq, lk, dtype=torch.bool).triu(1)
            logits = logits.masked_fill(mask, float("-inf"))
        mixed = (logits.softmax(-1) @ v).transpose(1, 2).reshape(b, lq, w)
        return self.out(mixed)


class DecoderBlock(nn.Module):
    """Pre-norm self-attention, cross-attention to slots, feed-forward."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.self_attn = Attention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.cross_attn = Attention(width, heads)
        self.norm3 = nn.LayerNorm(width)
        self.ff = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x, slots, causal: bool):
        h = self.norm1(x)
        x = x + self.self_attn(h, h, causal=causal)
        x = x + self.cross_attn(self.norm2(x), slots)
        return x + self.ff(self.norm3(x))


# ----------------------------------------------------------- autoregressive


class AutoregressiveDecoder(nn.Module):
    """Causal Transformer decoder over raster-ordered target tokens.

    ``mode="ce"`` embeds code indices and emits ``m`` logits per position;
    ``mode="mse"`` embeds continuous codes and regresses ``c`` values.
    """

    def __init__(
        self,
        slot_dim: int,
        code_dim: int,
        codebook_size: int,
        length: int,
        mode: str = "ce",
        width: int = 64,
        blocks: int = 2,
        heads: int = 4,
    ):
        super().__init__()
        if mode not in ("ce", "mse"):
            raise DecoderError(f"unknown ar mode {mode!r}")
        self.mode = mode
        self.codebook_size = codebook_size
        self.length = length
        if mode == "ce":
            self.embed = nn.Embedding(codebook_size, width)
        else:
            self.embed = nn.Linear(code_dim, width)
        self.bos = nn.Parameter(torch.randn(width) * 0.02)
        self.pos = nn.Parameter(torch.randn(length, width) * 0.02)
        self.slot_proj = nn.Linear(slot_dim, width)
        self.blocks = nn.ModuleList(DecoderBlock(width, heads) for _ in range(blocks))
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, codebook_size if mode == "ce" else code_dim)

    def tokens(self, target: QuantizedTarget) -> torch.Tensor:
        """Teacher-forcing input: target tokens shifted right behind a begin token."""
        if self.mode == "ce":
            idx = target.indices.reshape(target.indices.shape[0], -1)
            x = self.embed(idx)
        else:
            q = target.q
            x = self.embed(q.reshape(q.shape[0], -1, q.shape[-1]).detach())
        if x.shape[1] != self.length:
            raise DecoderError(f"target has {x.shape[1]} tokens, decoder expects {self.length}")
        bos = self.bos.expand(x.shape[0], 1, -1)
        return torch.cat([bos, x[:, :-1]], dim=1)

    def forward(self, slots, target: QuantizedTarget, codebook_size: int | None = None):
        if self.mode == "ce" and codebook_size is not None and codebook_size != self.codebook_size:
            raise DecoderError(f"codebook has {codebook_size} codes, decoder emits {self.codebook_size}")
        ctx = self.slot_proj(_slots(slots))
        x = self.tokens(target) + self.pos
        for block in self.blocks:
            x = block(x, ctx, causal=True)
        return self.head(self.norm(x))


# ----------------------------------------------------------------- diffusion


def linear_betas(steps: int) -> torch.Tensor:
    """Linear schedule scaled from the usual 1000-step range (1e-4 .. 0.02)."""
    scale = 1000.0 / steps
    return torch.linspace(1e-4 * scale, min(0.02 * scale, 0.999), steps, dtype=torch.float64)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


@dataclass
class DiffusionState:
    t: torch.Tensor  # (B,) in [1, T]
    noisy: torch.Tensor  # Q_t
    eps: torch.Tensor
    eps_hat: torch.Tensor


class DiffusionDecoder(nn.Module):
    """Slot-conditioned noise predictor on the ``(h, w, c)`` target grid."""

    def __init__(self, slot_dim: int, code_dim: int, length: int, steps: int = 100, width: int = 64, blocks: int = 2, heads: int = 4):
        super().__init__()
        self.steps = steps
        self.width = width
        betas = linear_betas(steps)
        self.register_buffer("betas", betas.float())
        self.register_buffer("alpha_bars", torch.cumprod(1.0 - betas, 0).float())
        self.embed = nn.Linear(code_dim, width)
        self.pos = nn.Parameter(torch.randn(length, width) * 0.02)
        self.time_mlp = nn.Sequential(nn.Linear(width, width), nn.GELU(), nn.Linear(width, width))
        self.slot_proj = nn.Linear(slot_dim, width)
        self.blocks = nn.ModuleList(DecoderBlock(width, heads) for _ in range(blocks))
        self.norm = nn.LayerNorm(width)
        self.head = nn.Linear(width, code_dim)

    def alpha_bar(self, t: torch.Tensor) -> torch.Tensor:
        return self.alpha_bars[t - 1]

    def add_noise(self, q: torch.Tensor, t: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
        ab = self.alpha_bar(t).reshape(-1, *([1] * (q.dim() - 1)))
        return ab.sqrt() * q + (1.0 - ab).sqrt() * eps

    def predict(self, noisy: torch.Tensor, t: torch.Tensor, slots) -> torch.Tensor:
        b = noisy.shape[0]
        x = self.embed(noisy.reshape(b, -1, noisy.shape[-1])) + self.pos
        x = x + self.time_mlp(timestep_embedding(t, self.width))[:, None]
        ctx = self.slot_proj(_slots(slots))
        for block in self.blocks:
            x = block(x, ctx, causal=False)
        return self.head(self.norm(x)).reshape(noisy.shape)

    def sample_timesteps(self, batch: int, rng: RandomStream) -> torch.Tensor:
        return torch.from_numpy(rng.integers(1, self.steps, size=batch)).long()

    def forward(self, slots, q: QuantizedTarget | torch.Tensor, t, rng: RandomStream) -> DiffusionState:
        q = q.q if isinstance(q, QuantizedTarget) else q
        q = q.detach()
        t = torch.as_tensor(t, dtype=torch.long).reshape(-1)
        if t.numel() == 1 and q.shape[0] > 1:
            t = t.expand(q.shape[0])
        if (t < 1).any() or (t > self.steps).any():
            raise DecoderError(f"timestep outside [1, {self.steps}]")
        eps = torch.from_numpy(rng.normal(size=tuple(q.shape))).to(q.dtype)
        noisy = self.add_noise(q, t, eps)
        return DiffusionState(t, noisy, eps, self.predict(noisy, t, slots))


# --------------------------------------------------------------------- loss


def reconstruction_loss(pred, target: QuantizedTarget | torch.Tensor, kind: str = "mse") -> torch.Tensor:
    """MSE against the detached target codes, or cross-entropy against its indices."""
    if kind == "mse":
        tq = target.q if isinstance(target, QuantizedTarget) else target
        if pred.shape != tq.shape:
            raise DecoderError(f"prediction {tuple(pred.shape)} vs target {tuple(tq.shape)}")
        return F.mse_loss(pred, tq.detach())
    if kind == "ce":
        if not isinstance(target, QuantizedTarget):
            raise DecoderError("cross-entropy needs code indices")
        idx = target.indices.reshape(-1)
        logits = pred.reshape(-1, pred.shape[-1])
        if logits.shape[0] != idx.shape[0]:
            raise DecoderError(f"{logits.shape[0]} predictions for {idx.shape[0]} targets")
        return F.cross_entropy(logits, idx)
    raise DecoderError(f"unknown loss kind {kind!r}")
