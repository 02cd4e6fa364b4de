"""Tensor files, run configs, checkpoints and seeded random streams."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

MAGIC = b"VVOT"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4"), 2: np.dtype("u1")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.int32): 1, np.dtype(np.uint8): 2}


class TensorFileError(ValueError):
    """Base class for malformed tensor files."""


class BadMagicError(TensorFileError):
    pass


class TruncatedPayloadError(TensorFileError):
    pass


class UnknownDtypeError(TensorFileError):
    pass


def _as_numpy(values) -> np.ndarray:
    if isinstance(values, torch.Tensor):
        values = values.detach().cpu().numpy()
    return np.asarray(values)


def encode_tensor(values) -> bytes:
    arr = _as_numpy(values)
    code = _CODES.get(arr.dtype.newbyteorder("=")) if arr.dtype.kind != "b" else None
    if code is None:
        raise UnknownDtypeError(f"unsupported dtype {arr.dtype}")
    if arr.ndim == 0 or any(d < 1 for d in arr.shape):
        raise ValueError(f"dims must be nonempty and >= 1, got {arr.shape}")
    if arr.ndim > 255:
        raise ValueError("too many dims")
    header = MAGIC + struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    return header + payload


def decode_tensor(blob: bytes, name: str = "<bytes>") -> np.ndarray:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise BadMagicError(f"{name}: bad magic {blob[:4]!r}")
    code, ndim = struct.unpack_from("<BB", blob, 4)
    if code not in _DTYPES:
        raise UnknownDtypeError(f"{name}: unknown dtype code {code}")
    end = 6 + 4 * ndim
    if len(blob) < end:
        raise TruncatedPayloadError(f"{name}: truncated header")
    dims = struct.unpack_from(f"<{ndim}I", blob, 6)
    dtype = _DTYPES[code]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - end < need:
        raise TruncatedPayloadError(f"{name}: payload has {len(blob) - end} bytes, expected {need}")
    if len(blob) - end > need:
        raise TensorFileError(f"{name}: {len(blob) - end - need} trailing bytes")
    arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(dims)), offset=end)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path: str | os.PathLike, values) -> None:
    """Write ``values`` (float32, int32 or uint8) as a TensorFile."""
    blob = encode_tensor(values)
    Path(path).write_bytes(blob)


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    return decode_tensor(path.read_bytes(), name=str(path))


class RandomStream:
    """Seeded stream of uniform, normal and Gumbel(0, 1) draws.

    Backed by numpy's PCG64, which is stable across platforms. Not thread safe.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Integers in ``[low, high]`` inclusive."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def gumbel(self, size=None):
        # inverse CDF of a uniform draw, kept off the open-interval endpoints
        u = self._gen.random(size)
        tiny = np.finfo(np.float64).tiny
        u = np.clip(u, tiny, 1.0 - np.finfo(np.float64).epsneg)
        return gumbel_from_uniform(u)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def spawn(self, key: int) -> "RandomStream":
        """Independent child stream, e.g. one per sample index or worker."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
        return RandomStream(int(ss.generate_state(2, dtype=np.uint64)[0]))

    def torch_generator(self) -> torch.Generator:
        g = torch.Generator()
        g.manual_seed(int(self._gen.integers(0, 2**62)))
        return g


def gumbel_from_uniform(u):
    return -np.log(-np.log(u))


def seeded_rng(seed: int) -> RandomStream:
    return RandomStream(seed)


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class _Key:
    kind: str
    default: Any
    doc: str


CONFIG_KEYS: dict[str, _Key] = {
    # data
    "seed": _Key("int", 0, "master seed"),
    "data_dir": _Key("str", "data", "dataset root holding one directory per split"),
    "image_size": _Key("int", 64, "square image side in pixels"),
    "min_objects": _Key("int", 2, "fewest objects per scene"),
    "max_objects": _Key("int", 5, "most objects per scene"),
    "shapes": _Key("str", "square,circle,triangle", "comma separated shape set"),
    "object_size_min": _Key("int", 14, "smallest object side in pixels"),
    "object_size_max": _Key("int", 22, "largest object side in pixels"),
    "textured_background": _Key("bool", False, "2-color checker background"),
    "n_train": _Key("int", 512, "training scenes"),
    "n_val": _Key("int", 64, "held-out scenes"),
    "video": _Key("bool", False, "generate and train on frame sequences"),
    "frames": _Key("int", 4, "frames per video"),
    "velocity_max": _Key("int", 2, "max absolute per-axis velocity in pixels per frame"),
    # encoder
    "feature_dim": _Key("int", 16, "encoder channels c"),
    "slot_dim": _Key("int", 16, "slot channels d"),
    "backbone_seed": _Key("int", 1234, "seed of the frozen toy backbone"),
    "target_backbone_seed": _Key("int", 4321, "seed of the second backbone (separate-encoder)"),
    "adjust_cnn_layers": _Key("int", 2, "3x3 convs in the position-removal head"),
    # quantizer
    "codebook_size": _Key("int", 256, "template count m"),
    "template_dim": _Key("int", 16, "template channels c0"),
    "tau": _Key("float", 1.0, "selection temperature"),
    "lambda_n": _Key("float", 0.1, "normalization regularizer weight"),
    "beta": _Key("float", 0.25, "commitment weight"),
    "gumbel": _Key("bool", True, "Gumbel noise during pretraining"),
    "residual": _Key("bool", True, "annealing residual during pretraining"),
    "residual_fraction": _Key("float", 0.5, "fraction of pretraining over which the residual weight anneals 1 -> 0"),
    "pretrain_steps": _Key("int", 1000, "quantizer pretraining steps"),
    "pretrain_batch": _Key("int", 16, "quantizer pretraining batch"),
    "pretrain_lr": _Key("float", 1e-3, "quantizer pretraining learning rate"),
    "epoch_steps": _Key("int", 100, "steps per logged epoch"),
    # aggregator
    "num_slots": _Key("int", 6, "slot count n"),
    "slot_iters": _Key("int", 3, "slot attention iterations"),
    "slot_init": _Key("str", "learned", "learned (BO-QSA) or sampled queries"),
    "slot_update": _Key("str", "gru", "gru or additive slot update"),
    # decoders
    "decoder": _Key("str", "mixture", "mixture, ar or diffusion"),
    "ar_mode": _Key("str", "ce", "ce over code indices or mse over codes"),
    "dec_width": _Key("int", 64, "decoder width"),
    "dec_blocks": _Key("int", 2, "transformer blocks in ar/diffusion decoders"),
    "dec_heads": _Key("int", 4, "attention heads"),
    "diffusion_steps": _Key("int", 100, "diffusion timesteps T"),
    # training
    "variant": _Key("str", "vvo", "vvo, no-quantize or separate-encoder"),
    "train_steps": _Key("int", 3000, "OCL training steps"),
    "batch_size": _Key("int", 16, "OCL batch size"),
    "lr": _Key("float", 4e-4, "OCL peak learning rate"),
    "warmup_steps": _Key("int", 100, "linear warmup before cosine decay"),
    "grad_clip": _Key("float", 1.0, "gradient norm clip, 0 disables"),
    "eval_every": _Key("int", 1000, "evaluate on the val split every this many steps"),
    "distance": _Key("str", "sqeuclid", "analysis distance: sqeuclid or neg_inner"),
    "eval_resolution": _Key("str", "feature", "score masks on the feature grid or at image pixels (feature|image)"),
}


class ConfigError(ValueError):
    pass


def _parse_value(kind: str, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "intlist":
            return [int(v) for v in raw.split(",") if v.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class RunConfig(Mapping):
    """Flat ``key = value`` configuration with documented defaults.

    Only keys listed in ``CONFIG_KEYS`` are accepted. Lines starting with ``#``
    are comments.
    """

    def __init__(self, values: Mapping[str, Any] | None = None, **overrides):
        self._values: dict[str, Any] = {}
        for source in (values or {}, overrides):
            for key, value in source.items():
                self._set(key, value)

    def _set(self, key, value):
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        spec = CONFIG_KEYS[key]
        if isinstance(value, str) and spec.kind != "str":
            value = _parse_value(spec.kind, value, key)
        elif spec.kind == "float":
            value = float(value)
        elif spec.kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"{key}: expected int, got {value!r}")
            value = int(value)
        elif spec.kind == "bool":
            value = bool(value)
        self._values[key] = value

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key: {key}")
            values[key] = _parse_value(CONFIG_KEYS[key].kind, raw, key)
        return cls(values)

    @classmethod
    def load(cls, path: str | os.PathLike | None) -> "RunConfig":
        if path is None:
            return cls()
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def format(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self._values.items())

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.resolved().format(), encoding="utf-8")

    def resolved(self) -> "RunConfig":
        """Copy with every key set explicitly."""
        return RunConfig({k: self[k] for k in CONFIG_KEYS})

    def replace(self, **overrides) -> "RunConfig":
        return RunConfig({**self._values, **overrides})

    def explicit(self) -> dict[str, Any]:
        return dict(self._values)

    def __getitem__(self, key):
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        return self._values.get(key, CONFIG_KEYS[key].default)

    def __iter__(self):
        return iter(CONFIG_KEYS)

    def __len__(self):
        return len(CONFIG_KEYS)

    def __eq__(self, other):
        if isinstance(other, RunConfig):
            return dict(self.items()) == dict(other.items())
        return NotImplemented

    def __repr__(self):
        return f"RunConfig({self._values!r})"

    def get_int(self, key: str) -> int:
        return int(self[key])

    def get_float(self, key: str) -> float:
        return float(self[key])

    def get_bool(self, key: str) -> bool:
        return bool(self[key])

    def get_str(self, key: str) -> str:
        return str(self[key])

    def get_int_list(self, key: str) -> list[int]:
        value = self[key]
        if isinstance(value, str):
            return _parse_value("intlist", value, key)
        return [int(v) for v in value]

    def get_str_list(self, key: str) -> list[str]:
        return [s.strip() for s in str(self[key]).split(",") if s.strip()]


# ------------------------------------------------------------ checkpoint

MANIFEST = "manifest.txt"


class CheckpointError(ValueError):
    pass


def save_checkpoint(directory: str | os.PathLike, params: Mapping[str, Any]) -> None:
    """Write one TensorFile per parameter plus a tab separated manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for stale in directory.glob("*.vvot"):
        stale.unlink()
    lines = []
    for i, (name, value) in enumerate(params.items()):
        if "\t" in name or "\n" in name:
            raise CheckpointError(f"invalid parameter name {name!r}")
        arr = _as_numpy(value)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        fname = f"p{i:04d}.vvot"
        write_tensor(directory / fname, arr)
        lines.append(f"{name}\t{fname}\t{','.join(str(d) for d in arr.shape)}\n")
    (directory / MANIFEST).write_text("".join(lines), encoding="utf-8")


def load_checkpoint(directory: str | os.PathLike) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.exists():
        raise CheckpointError(f"{directory}: no {MANIFEST}")
    params: dict[str, np.ndarray] = {}
    listed = set()
    for line in manifest.read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        try:
            name, fname, dims = line.split("\t")
        except ValueError:
            raise CheckpointError(f"malformed manifest line {line!r}") from None
        arr = read_tensor(directory / fname)
        if tuple(int(d) for d in dims.split(",")) != arr.shape:
            raise CheckpointError(f"{name}: manifest dims {dims} do not match file {arr.shape}")
        params[name] = arr
        listed.add(fname)
    extra = {p.name for p in directory.glob("*.vvot")} - listed
    if extra:
        raise CheckpointError(f"{directory}: files not in manifest: {sorted(extra)}")
    return params
