"""Shared-feature vector quantizer: projected frozen codebook, Gumbel selection,
annealing residual, straight-through estimator and its VAE pretraining."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .metrics import code_usage_stats
from .tensorio import RandomStream, RunConfig

logger = logging.getLogger(__name__)

NORM_EPS = 1e-5


class QuantizerError(ValueError):
    pass


class PretrainDivergence(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite pretraining loss {loss} at step {step}")
        self.step = step


class Codebook(nn.Module):
    """``m`` frozen random templates composed with a trainable ``c x c0`` projection."""

    def __init__(self, size: int = 256, dim: int = 16, template_dim: int | None = None, seed: int = 0):
        super().__init__()
        template_dim = dim if template_dim is None else template_dim
        g = torch.Generator().manual_seed(seed)
        # unit-norm-scale templates so early, small features still spread over codes
        self.register_buffer("templates", torch.randn(size, template_dim, generator=g) * template_dim ** -0.5)
        self.projection = nn.Linear(template_dim, dim, bias=False)
        with torch.no_grad():
            if template_dim == dim:
                self.projection.weight.copy_(torch.eye(dim))
            else:
                self.projection.weight.normal_(0.0, template_dim ** -0.5, generator=g)

    @property
    def size(self) -> int:
        return self.templates.shape[0]

    @property
    def dim(self) -> int:
        return self.projection.weight.shape[0]

    def active(self) -> torch.Tensor:
        # templates is a buffer, so it never receives gradient
        return self.projection(self.templates)

    def freeze(self):
        self.projection.requires_grad_(False)
        return self


@dataclass
class QuantizedTarget:
    q: torch.Tensor
    indices: torch.Tensor
    probs: torch.Tensor | None = None
    distances: torch.Tensor | None = None

    def detach(self) -> "QuantizedTarget":
        d = lambda t: None if t is None else t.detach()  # noqa: E731
        return QuantizedTarget(self.q.detach(), self.indices, d(self.probs), d(self.distances))


def cosine_alpha(step: int, total_steps: int) -> float:
    """Residual weight annealed from 1 at step 0 to 0 at ``total_steps``."""
    if total_steps <= 0:
        return 0.0
    step = min(max(step, 0), total_steps)
    return 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class PretrainState:
    step: int = 0
    total_steps: int = 1
    tau: float = 1.0
    lambda_n: float = 0.1
    residual: bool = True

    @property
    def alpha(self) -> float:
        return cosine_alpha(self.step, self.total_steps) if self.residual else 0.0


def _codes(book) -> torch.Tensor:
    return book.active() if isinstance(book, Codebook) else torch.as_tensor(book)


def match_distances(z, book) -> torch.Tensor:
    """Squared Euclidean distance from every position of ``z`` to every code."""
    codes = _codes(book)
    z = torch.as_tensor(z)
    if z.shape[-1] != codes.shape[-1]:
        raise QuantizerError(f"feature channels {z.shape[-1]} != code channels {codes.shape[-1]}")
    zz = (z * z).sum(-1, keepdim=True)
    cc = (codes * codes).sum(-1)
    d = zz - 2.0 * z @ codes.T + cc
    return d.clamp_min(0.0)


def select_codes(distances, book, rng: RandomStream | None = None, tau: float = 1.0, noisy: bool = False):
    """Softmax over ``-D / tau`` and argmax selection, lowest index on ties.

    With ``noisy`` the logits are ``(-D + G) / tau`` for i.i.d. Gumbel ``G``: the
    argmax is then a sample from ``softmax(-D)`` and ``tau`` only sets how soft
    ``probs`` is.
    """
    if tau <= 0:
        raise QuantizerError(f"tau must be positive, got {tau}")
    logits = -distances
    if noisy:
        if rng is None:
            raise QuantizerError("noisy selection needs a random stream")
        g = torch.from_numpy(rng.gumbel(tuple(distances.shape))).to(distances.dtype)
        logits = logits + g
    logits = logits / tau
    probs = torch.softmax(logits, dim=-1)
    # torch.argmax returns the first maximal index
    indices = torch.argmax(logits.detach(), dim=-1)
    q = _codes(book)[indices]
    return QuantizedTarget(q=q, indices=indices, probs=probs, distances=distances)


def apply_residual(q: QuantizedTarget, z, alpha: float | PretrainState) -> QuantizedTarget:
    if isinstance(alpha, PretrainState):
        alpha = alpha.alpha
    if q.q.shape != z.shape:
        raise QuantizerError(f"shape mismatch {tuple(q.q.shape)} vs {tuple(z.shape)}")
    if alpha == 0.0:
        blended = q.q
    elif alpha == 1.0:
        blended = z
    else:
        blended = alpha * z + (1.0 - alpha) * q.q
    return QuantizedTarget(blended, q.indices, q.probs, q.distances)


class _StraightThrough(torch.autograd.Function):
    @staticmethod
    def forward(ctx, q, z):
        return q.clone()

    @staticmethod
    def backward(ctx, grad):
        return None, grad


def straight_through(q, z) -> torch.Tensor:
    """Forward value ``q`` exactly; backward passes the gradient to ``z`` unchanged."""
    q = q.q if isinstance(q, QuantizedTarget) else q
    if q.shape != z.shape:
        raise QuantizerError(f"shape mismatch {tuple(q.shape)} vs {tuple(z.shape)}")
    return _StraightThrough.apply(q.detach(), z)


def normalization_regularizer(z, lambda_n: float = 0.1, eps: float = NORM_EPS) -> torch.Tensor:
    """``lambda * MSE(z, sg(standardize(z)))`` with statistics over (h, w, c) per sample."""
    if z.numel() <= 1:
        raise QuantizerError("regularizer needs more than one element")
    dims = tuple(range(-3, 0)) if z.dim() >= 3 else tuple(range(z.dim()))
    with torch.no_grad():
        mean = z.mean(dim=dims, keepdim=True)
        var = z.var(dim=dims, keepdim=True, unbiased=False)
        target = (z - mean) / torch.sqrt(var + eps)
    return lambda_n * F.mse_loss(z, target)


def quantize(z_adjusted, book) -> QuantizedTarget:
    """Deterministic nearest-code quantization used as the OCL reconstruction target."""
    with torch.no_grad():
        d = match_distances(torch.as_tensor(z_adjusted), book)
        return select_codes(d, book, noisy=False)


class PixelDecoder(nn.Module):
    """Transposed-conv VAE decoder, ``(h, w, c)`` codes to ``(8h, 8w, 3)`` pixels."""

    def __init__(self, channels: int = 16, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.ConvTranspose2d(channels, width, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose2d(width, width, 4, stride=2, padding=1),
            nn.ReLU(),
            nn.ConvTranspose2d(width, 3, 4, stride=2, padding=1),
        )

    def forward(self, q):
        x = self.net(q.permute(0, 3, 1, 2))
        return x.permute(0, 2, 3, 1)


@dataclass
class PretrainResult:
    codebook: Codebook
    adjust_cnn: nn.Module
    decoder: PixelDecoder
    log: list[dict] = field(default_factory=list)
    final_recon_mse: float = float("nan")
    final_unique_codes: int = 0

    def log_lines(self) -> str:
        return "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in self.log)


def _lr_lambda(total: int, warmup: int):
    def f(step):
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return f


def reconstruct_pixels(features, adjust_cnn, book, decoder, batch: int = 64) -> torch.Tensor:
    out = []
    with torch.no_grad():
        for i in range(0, len(features), batch):
            target = quantize(adjust_cnn(features[i:i + batch]), book)
            out.append(decoder(target.q))
    return torch.cat(out)


def pretrain_vq(
    images,
    features,
    adjust_cnn: nn.Module,
    book: Codebook,
    decoder: PixelDecoder,
    cfg: RunConfig,
    rng: RandomStream,
    noisy: bool | None = None,
    residual: bool | None = None,
) -> PretrainResult:
    """Train the projection, ``adjust_cnn`` and pixel decoder, then freeze the quantizer.

    ``features`` are frozen-backbone outputs ``(N, h, w, c)`` for ``images`` ``(N, H, W, 3)``.
    Loss is pixel MSE + alignment + beta * commitment + normalization regularizer.
    """
    noisy = cfg.get_bool("gumbel") if noisy is None else noisy
    residual = cfg.get_bool("residual") if residual is None else residual
    steps = cfg.get_int("pretrain_steps")
    batch = min(cfg.get_int("pretrain_batch"), len(features))
    epoch_steps = cfg.get_int("epoch_steps")
    beta = cfg.get_float("beta")
    fraction = cfg.get_float("residual_fraction")
    if not 0.0 < fraction <= 1.0:
        raise QuantizerError(f"residual_fraction must be in (0, 1], got {fraction}")
    # alpha reaches 0 after this many steps; the rest trains on pure codes
    horizon = max(1, round(fraction * steps))
    state = PretrainState(0, horizon, cfg.get_float("tau"), cfg.get_float("lambda_n"), residual)

    images = torch.as_tensor(images, dtype=torch.float32)
    features = torch.as_tensor(features, dtype=torch.float32)
    params = list(adjust_cnn.parameters()) + list(book.projection.parameters()) + list(decoder.parameters())
    opt = torch.optim.Adam(params, lr=cfg.get_float("pretrain_lr"))
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _lr_lambda(steps, min(cfg.get_int("warmup_steps"), steps // 10 + 1)))

    log: list[dict] = []
    recon_sum, n_in_epoch, epoch_indices = 0.0, 0, []
    for step in range(steps):
        state.step = step
        idx = torch.from_numpy(rng.choice(len(features), size=batch, replace=False))
        z = adjust_cnn(features[idx])
        d = match_distances(z, book)
        sel = select_codes(d.detach(), book, rng, state.tau, noisy=noisy)
        code = sel.q
        blended = apply_residual(sel, z, state.alpha)
        recon = decoder(straight_through(blended, z))
        recon_mse = F.mse_loss(recon, images[idx])
        align = F.mse_loss(code, z.detach())
        commit = F.mse_loss(z, code.detach())
        loss = recon_mse + align + beta * commit + normalization_regularizer(z, state.lambda_n)
        if not torch.isfinite(loss):
            raise PretrainDivergence(step, float(loss.detach()))
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()

        recon_sum += float(recon_mse.detach())
        n_in_epoch += 1
        epoch_indices.append(sel.indices.numpy())
        if n_in_epoch == epoch_steps or step == steps - 1:
            stats = code_usage_stats(epoch_indices, book.size)
            entry = {
                "epoch": len(log),
                "recon_mse": recon_sum / n_in_epoch,
                "unique_codes": stats["unique_codes"],
                "usage_cv": stats["usage_cv"],
                "alpha": state.alpha,
            }
            logger.info("pretrain %s", entry)
            log.append(entry)
            recon_sum, n_in_epoch, epoch_indices = 0.0, 0, []

    adjust_cnn.requires_grad_(False)
    book.freeze()
    decoder.requires_grad_(False)
    with torch.no_grad():
        pix = reconstruct_pixels(features, adjust_cnn, book, decoder)
        final_mse = float(F.mse_loss(pix, images))
        idx = [quantize(adjust_cnn(features[i:i + 64]), book).indices.numpy() for i in range(0, len(features), 64)]
    return PretrainResult(
        codebook=book,
        adjust_cnn=adjust_cnn,
        decoder=decoder,
        log=log,
        final_recon_mse=final_mse,
        final_unique_codes=code_usage_stats(idx, book.size)["unique_codes"],
    )

