"""Slot Attention aggregator with learned (BO-QSA) or sampled queries, and the
Transformer-block transition used between video frames."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .tensorio import RandomStream

PIXEL_EPS = 1e-8


class AggregatorError(ValueError):
    pass


@dataclass
class SlotState:
    slots: torch.Tensor  # (B, n, d)
    queries: torch.Tensor  # (B, n, d)
    attention: torch.Tensor  # (B, n, h, w), softmax over n

    @property
    def masks(self) -> torch.Tensor:
        return self.attention.argmax(dim=-3)


class SlotAttention(nn.Module):
    def __init__(
        self,
        num_slots: int = 6,
        dim: int = 16,
        iters: int = 3,
        init: str = "learned",
        update: str = "gru",
        hidden: int | None = None,
    ):
        super().__init__()
        if iters < 1:
            raise AggregatorError("iteration count must be >= 1")
        if init not in ("learned", "sampled"):
            raise AggregatorError(f"unknown slot init {init!r}")
        if update not in ("gru", "additive"):
            raise AggregatorError(f"unknown slot update {update!r}")
        self.num_slots = num_slots
        self.dim = dim
        self.iters = iters
        self.init = init
        self.update = update
        self.scale = dim ** -0.5
        hidden = hidden or 4 * dim

        if init == "learned":
            self.queries = nn.Parameter(torch.empty(num_slots, dim))
            nn.init.xavier_uniform_(self.queries)
        else:
            self.mu = nn.Parameter(torch.zeros(dim))
            self.log_sigma = nn.Parameter(torch.zeros(dim))
            nn.init.xavier_uniform_(self.mu[None])

        self.norm_input = nn.LayerNorm(dim)
        self.norm_slots = nn.LayerNorm(dim)
        self.norm_mlp = nn.LayerNorm(dim)
        self.to_q = nn.Linear(dim, dim, bias=False)
        self.to_k = nn.Linear(dim, dim, bias=False)
        self.to_v = nn.Linear(dim, dim, bias=False)
        if update == "gru":
            self.gru = nn.GRUCell(dim, dim)
        else:
            self.to_update = nn.Linear(dim, dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.ReLU(), nn.Linear(hidden, dim))

    def initial_queries(self, batch: int, rng: RandomStream | None = None) -> torch.Tensor:
        if self.init == "learned":
            return self.queries.expand(batch, -1, -1)
        if rng is None:
            raise AggregatorError("sampled queries need a random stream")
        noise = torch.from_numpy(rng.normal(size=(batch, self.num_slots, self.dim))).float()
        return self.mu + self.log_sigma.exp() * noise

    def step(self, slots, k, v):
        """One attention-and-update iteration; returns new slots and the attention."""
        q = self.to_q(self.norm_slots(slots))
        logits = torch.einsum("bnd,bpd->bnp", q, k) * self.scale
        attn = logits.softmax(dim=1)
        weights = attn / (attn.sum(dim=-1, keepdim=True) + PIXEL_EPS)
        updates = torch.einsum("bnp,bpd->bnd", weights, v)
        if self.update == "gru":
            b, n, d = slots.shape
            new = self.gru(updates.reshape(-1, d), slots.reshape(-1, d)).reshape(b, n, d)
        else:
            new = slots + self.to_update(updates)
        new = new + self.mlp(self.norm_mlp(new))
        return new, attn

    def forward(self, z: torch.Tensor, queries: torch.Tensor | None = None, rng: RandomStream | None = None):
        """Aggregate ``(B, h, w, d)`` features into ``n`` slots.

        With learned queries, gradients reach the queries through the final
        iteration only.
        """
        if z.dim() != 4:
            raise AggregatorError(f"expected (B, h, w, d) features, got {tuple(z.shape)}")
        b, h, w, d = z.shape
        if queries is None:
            queries = self.initial_queries(b, rng)
        n = queries.shape[1]
        if n > h * w:
            raise AggregatorError(f"{n} slots for {h * w} positions")
        inputs = self.norm_input(z.reshape(b, h * w, d))
        k, v = self.to_k(inputs), self.to_v(inputs)

        slots = queries
        truncate = self.init == "learned"
        for i in range(self.iters):
            if truncate and i == self.iters - 1:
                slots = slots.detach() + queries - queries.detach()
            slots, attn = self.step(slots, k, v)
            if truncate and i < self.iters - 1:
                slots = slots.detach()
        return SlotState(slots=slots, queries=queries, attention=attn.reshape(b, n, h, w))


class TransitionBlock(nn.Module):
    """Pre-norm Transformer encoder block mapping slots to next-frame queries."""

    def __init__(self, dim: int = 16, heads: int = 4, hidden: int | None = None):
        super().__init__()
        if dim % heads:
            raise AggregatorError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        hidden = hidden or 4 * dim
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff1 = nn.Linear(dim, hidden)
        self.ff2 = nn.Linear(hidden, dim)

    def forward(self, slots):
        b, n, d = slots.shape
        hd = d // self.heads
        q, k, v = self.qkv(self.norm1(slots)).split(d, dim=-1)
        q, k, v = (t.reshape(b, n, self.heads, hd).transpose(1, 2) for t in (q, k, v))
        attn = (q @ k.transpose(-1, -2) * hd ** -0.5).softmax(-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, n, d)
        x = slots + self.out(mixed)
        return x + self.ff2(F.gelu(self.ff1(self.norm2(x))))


class Aggregator(nn.Module):
    """Slot attention plus, in video mode, the recurrent query transition."""

    def __init__(self, num_slots=6, dim=16, iters=3, init="learned", update="gru", video=False, heads=4):
        super().__init__()
        self.slot_attention = SlotAttention(num_slots, dim, iters, init, update)
        self.video = video
        self.transition_block = TransitionBlock(dim, heads) if video else None

    def aggregate(self, z, queries=None, rng=None) -> SlotState:
        return self.slot_attention(z, queries, rng)

    forward = aggregate

    def transition(self, state: SlotState | torch.Tensor) -> torch.Tensor:
        if self.transition_block is None:
            raise AggregatorError("transition is only available in video mode")
        slots = state.slots if isinstance(state, SlotState) else state
        return self.transition_block(slots)

    def aggregate_video(self, z, rng=None) -> list[SlotState]:
        """``(B, t, h, w, d)`` features, queries carried frame to frame by the transition."""
        states = []
        queries = None
        for i in range(z.shape[1]):
            state = self.aggregate(z[:, i], queries, rng)
            states.append(state)
            queries = self.transition(state)
        return states
