"""Two-stage pipeline: quantizer pretraining, then OCL training and evaluation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import metrics as M
from .aggregator import Aggregator, SlotState
from .decoders import AutoregressiveDecoder, DiffusionDecoder, MixtureDecoder, reconstruction_loss
from .encoder import Encoder, FeatureMap, ToyBackbone
from .analysis import compare_objectness
from .scenegen import _read_index, generate_scene
from .tensorio import RandomStream, RunConfig, load_checkpoint, read_tensor, save_checkpoint, write_tensor
from .vq import Codebook, PixelDecoder, PretrainResult, QuantizedTarget, pretrain_vq, quantize

logger = logging.getLogger(__name__)

VARIANTS = ("vvo", "no-quantize", "separate-encoder")
DECODERS = ("mixture", "ar", "diffusion")
EVAL_KEYS = ("ari", "ari_fg", "miou", "mbo", "n_samples")


class PipelineError(ValueError):
    pass


class TrainingDivergence(RuntimeError):
    pass


def validate_config(cfg: RunConfig) -> None:
    variant, decoder = cfg["variant"], cfg["decoder"]
    if variant not in VARIANTS:
        raise PipelineError(f"unknown variant {variant!r}")
    if decoder not in DECODERS:
        raise PipelineError(f"unknown decoder {decoder!r}")
    if decoder == "ar" and cfg["ar_mode"] == "ce" and variant == "no-quantize":
        raise PipelineError("cross-entropy decoding needs a quantized target")
    if cfg["image_size"] % ToyBackbone.stride:
        raise PipelineError("image_size must be divisible by the backbone stride")


@dataclass
class Pipeline:
    cfg: RunConfig
    encoder: Encoder
    aggregator: Aggregator
    decoder: nn.Module
    codebook: Codebook | None = None
    target_encoder: Encoder | None = None
    pixel_decoder: PixelDecoder | None = None

    @property
    def grid(self) -> tuple[int, int]:
        s = self.cfg["image_size"] // ToyBackbone.stride
        return s, s

    @property
    def quantized(self) -> bool:
        return self.codebook is not None

    @property
    def target_source(self) -> Encoder:
        return self.target_encoder if self.target_encoder is not None else self.encoder

    def modules(self) -> dict[str, nn.Module]:
        out = {"encoder": self.encoder, "aggregator": self.aggregator, "decoder": self.decoder}
        if self.codebook is not None:
            out["codebook"] = self.codebook
        if self.target_encoder is not None:
            out["target_encoder"] = self.target_encoder
        if self.pixel_decoder is not None:
            out["pixel_decoder"] = self.pixel_decoder
        return out

    def state(self) -> dict[str, torch.Tensor]:
        params = {}
        for prefix, mod in self.modules().items():
            for name, value in mod.state_dict().items():
                params[f"{prefix}.{name}"] = value
        return params

    def load_state(self, params: dict, strict: bool = True) -> None:
        for prefix, mod in self.modules().items():
            sub = {k[len(prefix) + 1:]: torch.from_numpy(np.array(v)) for k, v in params.items() if k.startswith(prefix + ".")}
            if sub or strict:
                mod.load_state_dict(sub, strict=strict)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return (
            list(self.encoder.adjust_linear.parameters())
            + list(self.aggregator.parameters())
            + list(self.decoder.parameters())
        )

    def freeze_targets(self) -> None:
        self.encoder.backbone.requires_grad_(False)
        self.encoder.adjust_cnn.requires_grad_(False)
        if self.codebook is not None:
            self.codebook.freeze()
        if self.target_encoder is not None:
            self.target_encoder.requires_grad_(False)
        if self.pixel_decoder is not None:
            self.pixel_decoder.requires_grad_(False)


def _codebook_seed(seed: int) -> int:
    return int(RandomStream(seed).spawn(10).integers(0, 2**31 - 1))


def build_pipeline(cfg: RunConfig) -> Pipeline:
    """Fresh modules for ``cfg``; the encoder-to-aggregator path does not depend on the variant."""
    validate_config(cfg)
    seed = cfg["seed"]
    torch.manual_seed(seed)
    c, d = cfg["feature_dim"], cfg["slot_dim"]
    h = w = cfg["image_size"] // ToyBackbone.stride
    encoder = Encoder(c, d, cfg["backbone_seed"], cfg["adjust_cnn_layers"])
    aggregator = Aggregator(
        cfg["num_slots"], d, cfg["slot_iters"], cfg["slot_init"], cfg["slot_update"],
        video=cfg["video"], heads=_heads(d, cfg["dec_heads"]),
    )
    kind = cfg["decoder"]
    if kind == "mixture":
        decoder = MixtureDecoder(d, c, (h, w), cfg["dec_width"])
    elif kind == "ar":
        decoder = AutoregressiveDecoder(
            d, c, cfg["codebook_size"], h * w, cfg["ar_mode"], cfg["dec_width"], cfg["dec_blocks"], cfg["dec_heads"]
        )
    else:
        decoder = DiffusionDecoder(d, c, h * w, cfg["diffusion_steps"], cfg["dec_width"], cfg["dec_blocks"], cfg["dec_heads"])

    variant = cfg["variant"]
    codebook = target_encoder = pixel_decoder = None
    if variant != "no-quantize":
        codebook = Codebook(cfg["codebook_size"], c, cfg["template_dim"], _codebook_seed(seed))
        pixel_decoder = PixelDecoder(c)
    if variant == "separate-encoder":
        target_encoder = Encoder(c, d, cfg["target_backbone_seed"], cfg["adjust_cnn_layers"])
    return Pipeline(cfg, encoder, aggregator, decoder, codebook, target_encoder, pixel_decoder)


def _heads(dim: int, wanted: int) -> int:
    heads = min(wanted, dim)
    while dim % heads:
        heads -= 1
    return heads


# ------------------------------------------------------------------- data


@dataclass
class Split:
    images: np.ndarray  # (N, H, W, 3) or (N, t, H, W, 3)
    labels: np.ndarray
    features: np.ndarray | None = None  # precomputed archive features

    def __len__(self):
        return len(self.images)


def load_split(directory) -> Split:
    directory = Path(directory)
    images, labels, feats = [], [], []
    for _, img, lab, feat in _read_index(directory):
        images.append(read_tensor(directory / img))
        labels.append(read_tensor(directory / lab))
        if feat != "-":
            feats.append(read_tensor(directory / feat))
    if not images:
        raise PipelineError(f"{directory}: empty split")
    if feats and len(feats) != len(images):
        raise PipelineError(f"{directory}: features listed for only some samples")
    return Split(np.stack(images), np.stack(labels), np.stack(feats) if feats else None)


def encode_all(encoder: Encoder, images, batch: int = 64) -> torch.Tensor:
    """Backbone features for every image; one ``encode`` call per batch."""
    images = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    out = [encoder.encode(images[i:i + batch]).values for i in range(0, len(images), batch)]
    return torch.cat(out)


def split_features(pipeline: Pipeline, split: Split) -> torch.Tensor:
    if split.features is not None:
        return FeatureMap.from_archive(split.features).values
    return encode_all(pipeline.encoder, split.images)


# --------------------------------------------------------------- pretrain


def pretrain(pipeline: Pipeline, images, features, rng: RandomStream) -> PretrainResult | None:
    """Pretrain the target quantizer; ``None`` for the no-quantize variant."""
    cfg = pipeline.cfg
    if not pipeline.quantized:
        return None
    images = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    if images.dim() == 5:
        images = images.reshape(-1, *images.shape[-3:])
    if pipeline.target_encoder is not None:
        feats = encode_all(pipeline.target_encoder, images)
    else:
        feats = torch.as_tensor(features)
        feats = feats.reshape(-1, *feats.shape[-3:])
    source = pipeline.target_source
    result = pretrain_vq(images, feats, source.adjust_cnn, pipeline.codebook, pipeline.pixel_decoder, cfg, rng)
    pipeline.freeze_targets()
    return result


def compute_targets(pipeline: Pipeline, features: torch.Tensor, images=None, batch: int = 64) -> QuantizedTarget:
    """Frozen reconstruction targets for every sample.

    vvo quantizes the shared features, no-quantize uses them raw, and
    separate-encoder quantizes features of the second encoder.
    """
    if pipeline.target_encoder is not None:
        if images is None:
            raise PipelineError("separate-encoder targets need the images")
        flat = torch.as_tensor(np.asarray(images), dtype=torch.float32)
        lead = flat.shape[:-3]
        feats = encode_all(pipeline.target_encoder, flat.reshape(-1, *flat.shape[-3:]))
        feats = feats.reshape(*lead, *feats.shape[-3:])
    else:
        feats = features
    if not pipeline.quantized:
        return QuantizedTarget(q=feats.detach().clone(), indices=None)
    adjust = pipeline.target_source.adjust_cnn
    qs, idx = [], []
    with torch.no_grad():
        for i in range(0, len(feats), batch):
            t = quantize(adjust(feats[i:i + batch]), pipeline.codebook)
            qs.append(t.q)
            idx.append(t.indices)
    return QuantizedTarget(torch.cat(qs), torch.cat(idx))


def _subset(target: QuantizedTarget, idx) -> QuantizedTarget:
    return QuantizedTarget(target.q[idx], None if target.indices is None else target.indices[idx])


# ------------------------------------------------------------------ train


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)


def _lr_factor(step: int, total: int, warmup: int) -> float:
    if step < warmup:
        return (step + 1) / warmup
    progress = (step - warmup) / max(1, total - warmup)
    return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def ocl_loss(pipeline: Pipeline, z: torch.Tensor, target: QuantizedTarget, rng: RandomStream):
    """Reconstruction loss of one (image or video) batch, and the slot states."""
    if z.dim() == 5:
        states = pipeline.aggregator.aggregate_video(pipeline.encoder.adjust_for_aggregation(z), rng)
        losses = []
        for i, st in enumerate(states):
            frame_t = QuantizedTarget(target.q[:, i], None if target.indices is None else target.indices[:, i])
            losses.append(_decode_loss(pipeline, st, frame_t, rng))
        return torch.stack(losses).mean(), states
    state = pipeline.aggregator(pipeline.encoder.adjust_for_aggregation(z), rng=rng)
    return _decode_loss(pipeline, state, target, rng), [state]


def _decode_loss(pipeline: Pipeline, state: SlotState, target: QuantizedTarget, rng: RandomStream):
    dec = pipeline.decoder
    if isinstance(dec, MixtureDecoder):
        return reconstruction_loss(dec(state).reconstruction, target, "mse")
    if isinstance(dec, AutoregressiveDecoder):
        pred = dec(state, target)
        if dec.mode == "ce":
            return reconstruction_loss(pred, target, "ce")
        return reconstruction_loss(pred, target.q.reshape(pred.shape), "mse")
    t = dec.sample_timesteps(state.slots.shape[0], rng)
    out = dec(state, target, t, rng)
    return reconstruction_loss(out.eps_hat, out.eps, "mse")


def train_ocl(
    pipeline: Pipeline,
    features: torch.Tensor,
    targets: QuantizedTarget,
    rng: RandomStream,
    steps: int | None = None,
    eval_fn=None,
) -> TrainResult:
    """Train ``adjust_linear``, the aggregator and the decoder; everything else stays frozen."""
    cfg = pipeline.cfg
    steps = cfg["train_steps"] if steps is None else steps
    batch = min(cfg["batch_size"], len(features))
    pipeline.freeze_targets()
    params = pipeline.trainable_parameters()
    opt = torch.optim.Adam(params, lr=cfg["lr"])
    warmup = min(cfg["warmup_steps"], max(1, steps // 10))
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: _lr_factor(s, steps, warmup))
    clip = cfg["grad_clip"]
    epoch_steps, eval_every = cfg["epoch_steps"], cfg["eval_every"]
    result = TrainResult()
    running = []
    for step in range(steps):
        idx = torch.from_numpy(rng.choice(len(features), size=batch, replace=False))
        loss, _ = ocl_loss(pipeline, features[idx], _subset(targets, idx), rng)
        if not torch.isfinite(loss):
            raise TrainingDivergence(f"non-finite loss {float(loss.detach())} at step {step}")
        opt.zero_grad()
        loss.backward()
        if clip > 0:
            nn.utils.clip_grad_norm_(params, clip)
        opt.step()
        sched.step()
        value = float(loss.detach())
        result.losses.append(value)
        running.append(value)
        if len(running) == epoch_steps or step == steps - 1:
            entry = {"step": step + 1, "loss": float(np.mean(running))}
            if eval_fn is not None and ((step + 1) % eval_every == 0 or step == steps - 1):
                entry.update(eval_fn(pipeline))
            logger.info("train %s", entry)
            result.log.append(entry)
            running = []
    return result


# ------------------------------------------------------------------- eval


def predict_attention(pipeline: Pipeline, features: torch.Tensor, rng: RandomStream | None = None, batch: int = 64):
    """Soft slot attention ``(N, [t,] n, h, w)`` for every sample."""
    out = []
    with torch.no_grad():
        for i in range(0, len(features), batch):
            z = pipeline.encoder.adjust_for_aggregation(features[i:i + batch])
            if z.dim() == 5:
                states = pipeline.aggregator.aggregate_video(z, rng)
                out.append(torch.stack([s.attention for s in states], dim=1))
            else:
                out.append(pipeline.aggregator(z, rng=rng).attention)
    return torch.cat(out)


def masks_from_attention(attention: torch.Tensor, image_size: int | None = None) -> np.ndarray:
    """Argmax over slots; with ``image_size`` the soft attention is first
    bilinearly upsampled to pixel resolution."""
    lead = attention.shape[:-3]
    n, h, w = attention.shape[-3:]
    if image_size is None:
        return attention.argmax(-3).numpy().astype(np.int32)
    flat = attention.reshape(-1, n, h, w)
    up = F.interpolate(flat, size=(image_size, image_size), mode="bilinear", align_corners=False)
    return up.argmax(1).reshape(*lead, image_size, image_size).numpy().astype(np.int32)


def downsample_labels(labels, factor: int) -> np.ndarray:
    """Majority label of each ``factor x factor`` cell; ties go to the lowest id."""
    labels = np.asarray(labels)
    *lead, H, W = labels.shape
    if H % factor or W % factor:
        raise PipelineError(f"labels {H}x{W} not divisible by {factor}")
    h, w = H // factor, W // factor
    cells = labels.reshape(-1, h, factor, w, factor).transpose(0, 1, 3, 2, 4).reshape(-1, factor * factor)
    k = int(cells.max()) + 1 if cells.size else 1
    counts = np.zeros((len(cells), k), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(len(cells)), cells.shape[1]), cells.ravel()), 1)
    return counts.argmax(1).reshape(*lead, h, w).astype(np.int32)


def upsample_masks(masks, factor: int) -> np.ndarray:
    """Nearest-neighbour blow-up of grid masks, for plotting."""
    masks = np.asarray(masks)
    return masks.repeat(factor, axis=-2).repeat(factor, axis=-1)


def _pixel_eval(cfg: RunConfig) -> bool:
    mode = cfg["eval_resolution"]
    if mode not in ("feature", "image"):
        raise PipelineError(f"unknown eval_resolution {mode!r}")
    return mode == "image"


def predict_masks(pipeline: Pipeline, features, rng=None) -> np.ndarray:
    """Slot masks on the feature grid, or at pixels when ``eval_resolution=image``."""
    size = pipeline.cfg["image_size"] if _pixel_eval(pipeline.cfg) else None
    return masks_from_attention(predict_attention(pipeline, features, rng), size)


def eval_labels(cfg: RunConfig, labels) -> np.ndarray:
    """Ground truth at the resolution masks are scored at."""
    if _pixel_eval(cfg):
        return np.asarray(labels)
    return downsample_labels(labels, ToyBackbone.stride)


def score_masks(masks: np.ndarray, labels: np.ndarray, per_sample: bool = False) -> dict:
    """Mean ARI, ARI_fg, mIoU and mBO; video frames are scored one by one."""
    masks = np.asarray(masks)
    labels = np.asarray(labels)
    if masks.shape != labels.shape:
        raise PipelineError(f"mask shape {masks.shape} != label shape {labels.shape}")
    masks = masks.reshape(-1, *masks.shape[-2:])
    labels = labels.reshape(-1, *labels.shape[-2:])
    rows = [M.segmentation_scores(p, t) for p, t in zip(masks, labels)]
    out = {k: float(np.mean([r[k] for r in rows])) for k in EVAL_KEYS[:-1]}
    out["n_samples"] = len(rows)
    if per_sample:
        out["per_sample"] = {k: [r[k] for r in rows] for k in EVAL_KEYS[:-1]}
    return out


def _eval_rng(cfg: RunConfig) -> RandomStream:
    return RandomStream(cfg["seed"]).spawn(3)


def make_eval_fn(features, labels):
    def fn(pipeline: Pipeline):
        masks = predict_masks(pipeline, features, _eval_rng(pipeline.cfg))
        scores = score_masks(masks, eval_labels(pipeline.cfg, labels))
        return {f"val_{k}": v for k, v in scores.items() if k != "n_samples"}

    return fn


# -------------------------------------------------------- file-based stages

META = "meta.json"
CONFIG = "config.txt"
PRETRAIN_LOG = "pretrain_log.jsonl"
TRAIN_LOG = "train_log.jsonl"


def _write_meta(directory: Path, **meta):
    (directory / META).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _read_meta(directory: Path) -> dict:
    path = Path(directory) / META
    if not path.exists():
        raise PipelineError(f"{directory}: not a checkpoint (no {META})")
    return json.loads(path.read_text(encoding="utf-8"))


def run_streams(cfg: RunConfig):
    root = RandomStream(cfg["seed"])
    return root.spawn(0), root.spawn(2)


def run_pretrain(cfg: RunConfig, out_dir) -> Path:
    """Pretrain the quantizer on ``data_dir/train`` and write a checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pipeline = build_pipeline(cfg)
    split = load_split(Path(cfg["data_dir"]) / "train")
    log_lines = ""
    extra = {}
    if pipeline.quantized:
        feats = split_features(pipeline, split)
        result = pretrain(pipeline, split.images, feats, run_streams(cfg)[0])
        log_lines = result.log_lines()
        extra = {"final_recon_mse": result.final_recon_mse, "final_unique_codes": result.final_unique_codes}
    save_checkpoint(out_dir, pipeline.state())
    cfg.save(out_dir / CONFIG)
    (out_dir / PRETRAIN_LOG).write_text(log_lines, encoding="utf-8")
    _write_meta(out_dir, stage="pretrain", variant=cfg["variant"], quantizer=pipeline.quantized, **extra)
    return out_dir


def load_pipeline(ckpt_dir, cfg: RunConfig | None = None, strict: bool = True) -> Pipeline:
    ckpt_dir = Path(ckpt_dir)
    if cfg is None:
        cfg = RunConfig.load(ckpt_dir / CONFIG)
    pipeline = build_pipeline(cfg)
    pipeline.load_state(load_checkpoint(ckpt_dir), strict=strict)
    pipeline.freeze_targets()
    return pipeline


def _quantizer_keys(params) -> dict:
    return {k: v for k, v in params.items() if k.startswith(("codebook.", "target_encoder.", "encoder.adjust_cnn.", "encoder.backbone."))}


def run_train(cfg: RunConfig, pretrain_dir, out_dir) -> dict:
    """OCL training on top of a pretrain checkpoint; writes checkpoint, log and val metrics."""
    pretrain_dir, out_dir = Path(pretrain_dir), Path(out_dir)
    meta = _read_meta(pretrain_dir)
    if meta.get("variant") != cfg["variant"]:
        raise PipelineError(f"pretrain checkpoint is for variant {meta.get('variant')!r}, config says {cfg['variant']!r}")
    if meta.get("quantizer") != (cfg["variant"] != "no-quantize"):
        raise PipelineError("pretrain checkpoint quantizer flag does not match the variant")
    pipeline = build_pipeline(cfg)
    pretrained = _quantizer_keys(load_checkpoint(pretrain_dir))
    for prefix, mod in pipeline.modules().items():
        sub = {k[len(prefix) + 1:]: torch.from_numpy(np.array(v)) for k, v in pretrained.items() if k.startswith(prefix + ".")}
        if sub:
            missing = set(sub) - set(mod.state_dict())
            if missing:
                raise PipelineError(f"checkpoint/config mismatch in {prefix}: {sorted(missing)}")
            try:
                mod.load_state_dict(sub, strict=False)
            except RuntimeError as exc:
                raise PipelineError(f"checkpoint/config mismatch in {prefix}: {exc}") from None
    pipeline.freeze_targets()

    data = Path(cfg["data_dir"])
    train = load_split(data / "train")
    feats = split_features(pipeline, train)
    targets = compute_targets(pipeline, feats, train.images)
    eval_fn = None
    if (data / "val").exists():
        val = load_split(data / "val")
        eval_fn = make_eval_fn(split_features(pipeline, val), val.labels)
    result = train_ocl(pipeline, feats, targets, run_streams(cfg)[1], eval_fn=eval_fn)

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir, pipeline.state())
    cfg.save(out_dir / CONFIG)
    (out_dir / TRAIN_LOG).write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in result.log), encoding="utf-8")
    _write_meta(out_dir, stage="train", variant=cfg["variant"], quantizer=pipeline.quantized)
    return {"log": result.log, "losses": result.losses}


def run_eval(ckpt_dir, split: str = "val", json_path=None, dump_dir=None, per_sample: bool = False, data_dir=None, masks_hook=None) -> dict:
    """Segmentation metrics of a trained checkpoint on one split.

    ``masks_hook(masks, labels)`` may replace the predicted masks (used by tests).
    """
    pipeline = load_pipeline(ckpt_dir)
    cfg = pipeline.cfg
    data = Path(data_dir or cfg["data_dir"]) / split
    sp = load_split(data)
    masks = predict_masks(pipeline, split_features(pipeline, sp), _eval_rng(cfg))
    labels = eval_labels(cfg, sp.labels)
    if masks_hook is not None:
        masks = masks_hook(masks, labels)
    scores = score_masks(masks, labels, per_sample=per_sample)
    if json_path is not None:
        Path(json_path).write_text(json.dumps(scores, sort_keys=True) + "\n", encoding="utf-8")
    if dump_dir is not None:
        factor = sp.labels.shape[-1] // masks.shape[-1]
        dump_masks(dump_dir, sp.images, sp.labels, upsample_masks(masks, factor))
    return scores


def dump_masks(directory, images, labels, masks) -> None:
    """``images/``, ``labels/`` and uint8 ``masks/`` TensorFiles for plotting."""
    directory = Path(directory)
    for sub in ("images", "labels", "masks"):
        (directory / sub).mkdir(parents=True, exist_ok=True)
    for i, (img, lab, msk) in enumerate(zip(images, labels, masks)):
        write_tensor(directory / "images" / f"{i:04d}.vvot", np.asarray(img, dtype=np.float32))
        write_tensor(directory / "labels" / f"{i:04d}.vvot", np.asarray(lab, dtype=np.int32))
        write_tensor(directory / "masks" / f"{i:04d}.vvot", np.asarray(msk, dtype=np.uint8))


def objectness_experiment(cfg: RunConfig, n_images: int = 32, seed: int = 0) -> dict:
    """Objectness of the OCL encoder's features against an independently seeded
    second encoder (the separate-encoder target source), and their shift."""
    root = RandomStream(seed)
    scenes = [generate_scene(root.spawn(i), cfg) for i in range(n_images)]
    images = np.stack([s.image for s in scenes])
    labels = downsample_labels(np.stack([s.labels for s in scenes]), ToyBackbone.stride)
    c = cfg["feature_dim"]
    shared = encode_all(Encoder(c, c, cfg["backbone_seed"]), images).numpy()
    separate = encode_all(Encoder(c, c, cfg["target_backbone_seed"]), images).numpy()
    # compare one image at a time so object ids stay distinct
    offsets = np.arange(n_images)[:, None, None] * (labels.max() + 1)
    result = compare_objectness(shared, separate, labels + offsets, rng=root.spawn(n_images))
    result.update(name_a="shared encoder", name_b="separate encoder", n_images=n_images)
    return result
