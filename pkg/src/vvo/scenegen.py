"""Synthetic multi-object sprite scenes and on-disk datasets."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorio import RandomStream, RunConfig, read_tensor, write_tensor

PALETTE = np.array(
    [
        [0.90, 0.10, 0.10],
        [0.10, 0.75, 0.15],
        [0.15, 0.30, 0.95],
        [0.95, 0.85, 0.10],
        [0.85, 0.20, 0.85],
        [0.10, 0.85, 0.85],
        [1.00, 0.55, 0.05],
        [0.55, 0.30, 0.10],
    ],
    dtype=np.float32,
)
BACKGROUND = np.array([0.0, 0.0, 0.0], dtype=np.float32)
CHECKER = np.array([[0.35, 0.35, 0.35], [0.50, 0.50, 0.50]], dtype=np.float32)
CHECKER_CELL = 8
SHAPES = ("square", "circle", "triangle")


class SceneConfigError(ValueError):
    pass


@dataclass
class SceneObject:
    shape: str
    size: int
    row: int
    col: int
    color: int

    def mask(self, height: int, width: int, row: int | None = None, col: int | None = None):
        row = self.row if row is None else row
        col = self.col if col is None else col
        yy, xx = np.mgrid[0:self.size, 0:self.size]
        s = self.size
        if self.shape == "square":
            local = np.ones((s, s), dtype=bool)
        elif self.shape == "circle":
            c = (s - 1) / 2.0
            local = (yy - c) ** 2 + (xx - c) ** 2 <= (s / 2.0) ** 2
        elif self.shape == "triangle":
            # apex at the top, base on the bottom row
            half = (yy + 1) * (s / 2.0) / s
            local = np.abs(xx - (s - 1) / 2.0) <= half
        else:
            raise SceneConfigError(f"unknown shape {self.shape!r}")
        out = np.zeros((height, width), dtype=bool)
        out[row:row + s, col:col + s] = local
        return out


@dataclass
class ScenePair:
    image: np.ndarray
    labels: np.ndarray
    colors: dict[int, int] = field(default_factory=dict)
    frames: np.ndarray | None = None
    frame_labels: np.ndarray | None = None

    @property
    def num_objects(self) -> int:
        return len(self.colors)


def max_placeable(image_size: int, object_size: int) -> int:
    return (image_size // object_size) ** 2


def _check_cfg(cfg: RunConfig):
    size = cfg.get_int("image_size")
    lo, hi = cfg.get_int("min_objects"), cfg.get_int("max_objects")
    smin, smax = cfg.get_int("object_size_min"), cfg.get_int("object_size_max")
    if not 1 <= lo <= hi:
        raise SceneConfigError(f"bad object count range [{lo}, {hi}]")
    if not 1 <= smin <= smax <= size:
        raise SceneConfigError(f"bad object size range [{smin}, {smax}]")
    limit = min(max_placeable(size, smin), len(PALETTE))
    if hi > limit:
        raise SceneConfigError(f"max_objects={hi} exceeds the {limit} objects placeable in a {size}x{size} image")
    shapes = cfg.get_str_list("shapes")
    bad = [s for s in shapes if s not in SHAPES]
    if not shapes or bad:
        raise SceneConfigError(f"unknown shapes {bad or shapes}")
    return size, lo, hi, smin, smax, shapes


def background(size: int, textured: bool) -> np.ndarray:
    img = np.empty((size, size, 3), dtype=np.float32)
    if textured:
        yy, xx = np.mgrid[0:size, 0:size]
        parity = ((yy // CHECKER_CELL) + (xx // CHECKER_CELL)) % 2
        img[:] = CHECKER[parity]
    else:
        img[:] = BACKGROUND
    return img


def render(objects: list[SceneObject], size: int, textured: bool, offsets=None):
    """Paint objects in order; later objects overwrite earlier ones."""
    image = background(size, textured)
    labels = np.zeros((size, size), dtype=np.int32)
    for k, obj in enumerate(objects, 1):
        if offsets is None:
            m = obj.mask(size, size)
        else:
            m = obj.mask(size, size, *offsets[k - 1])
        image[m] = PALETTE[obj.color]
        labels[m] = k
    return image, labels


def _place(rng: RandomStream, count: int, size: int, smin: int, smax: int, shapes, allow_overlap: bool):
    colors = rng.permutation(len(PALETTE))[:count]
    objects: list[SceneObject] = []
    occupied = np.zeros((size, size), dtype=bool)
    for k in range(count):
        for _ in range(200):
            s = int(rng.integers(smin, smax))
            obj = SceneObject(
                shape=shapes[int(rng.integers(0, len(shapes) - 1))],
                size=s,
                row=int(rng.integers(0, size - s)),
                col=int(rng.integers(0, size - s)),
                color=int(colors[k]),
            )
            box = np.zeros_like(occupied)
            box[obj.row:obj.row + s, obj.col:obj.col + s] = True
            if allow_overlap or not (box & occupied).any():
                occupied |= box
                objects.append(obj)
                break
        else:
            return None
    return objects


def _visible(labels: np.ndarray, count: int, min_pixels: int = 4) -> bool:
    counts = np.bincount(labels.ravel(), minlength=count + 1)
    return bool((counts[1:count + 1] >= min_pixels).all())


def _layout(rng: RandomStream, cfg: RunConfig):
    size, lo, hi, smin, smax, shapes = _check_cfg(cfg)
    count = int(rng.integers(lo, hi))
    textured = cfg.get_bool("textured_background")
    for allow_overlap in (False, True):
        for _ in range(50):
            objects = _place(rng, count, size, smin, smax, shapes, allow_overlap)
            if objects is None:
                continue
            _, labels = render(objects, size, textured)
            if _visible(labels, count):
                return objects, size, textured
    raise SceneConfigError(f"could not place {count} visible objects")


def generate_scene(rng: RandomStream, cfg: RunConfig) -> ScenePair:
    """Random sprite scene with per-pixel instance labels (0 = background)."""
    objects, size, textured = _layout(rng, cfg)
    image, labels = render(objects, size, textured)
    return ScenePair(image=image, labels=labels, colors={k: o.color for k, o in enumerate(objects, 1)})


def _trajectory(obj: SceneObject, velocity, t: int, size: int):
    dx, dy = velocity
    lim = size - obj.size
    out = []
    row, col = obj.row, obj.col
    for _ in range(t):
        out.append((row, col))
        row = min(max(row + dy, 0), lim)
        col = min(max(col + dx, 0), lim)
    return out


def generate_video(rng: RandomStream, cfg: RunConfig, velocities=None) -> ScenePair:
    """Sprites moving with constant integer velocities ``(dx, dy)``, clipped at borders.

    ``velocities`` overrides the sampled per-object velocities.
    """
    t = cfg.get_int("frames")
    vmax = cfg.get_int("velocity_max")
    if t < 1:
        raise SceneConfigError("frames must be >= 1")
    for _ in range(50):
        objects, size, textured = _layout(rng, cfg)
        if velocities is None:
            vel = [tuple(int(v) for v in rng.integers(-vmax, vmax, size=2)) for _ in objects]
        else:
            vel = [tuple(v) for v in velocities]
            if len(vel) != len(objects):
                raise SceneConfigError(f"{len(vel)} velocities for {len(objects)} objects")
        paths = [_trajectory(o, v, t, size) for o, v in zip(objects, vel)]
        frames, frame_labels = [], []
        for i in range(t):
            img, lab = render(objects, size, textured, offsets=[p[i] for p in paths])
            frames.append(img)
            frame_labels.append(lab)
        if all(_visible(lab, len(objects), 1) for lab in frame_labels) or velocities is not None:
            frames = np.stack(frames)
            frame_labels = np.stack(frame_labels)
            return ScenePair(
                image=frames[0],
                labels=frame_labels[0],
                colors={k: o.color for k, o in enumerate(objects, 1)},
                frames=frames,
                frame_labels=frame_labels,
            )
    raise SceneConfigError("could not keep every object visible in every frame")


# --------------------------------------------------------------- datasets

INDEX = "index.txt"


def write_dataset(directory, scenes: list[ScenePair], features=None) -> None:
    """Write ``images/NNNN.vvot``, ``labels/NNNN.vvot``, optional features and ``index.txt``."""
    directory = Path(directory)
    for sub in ("images", "labels") + (("features",) if features is not None else ()):
        (directory / sub).mkdir(parents=True, exist_ok=True)
    lines = []
    for i, scene in enumerate(scenes):
        name = f"{i:04d}"
        video = scene.frames is not None
        write_tensor(directory / "images" / f"{name}.vvot", scene.frames if video else scene.image)
        write_tensor(directory / "labels" / f"{name}.vvot", scene.frame_labels if video else scene.labels)
        feat = "-"
        if features is not None:
            feat = f"features/{name}.vvot"
            write_tensor(directory / feat, np.asarray(features[i], dtype=np.float32))
        lines.append(f"{name}\timages/{name}.vvot\tlabels/{name}.vvot\t{feat}\n")
    (directory / INDEX).write_text("".join(lines), encoding="utf-8")


def _read_index(directory: Path):
    path = directory / INDEX
    if not path.exists():
        raise FileNotFoundError(f"missing index file {path}")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise ValueError(f"{path}:{lineno}: expected 3 or 4 tab separated fields")
        if len(parts) == 3:
            parts.append("-")
        rows.append(parts)
    return rows


def load_dataset(directory) -> tuple[np.ndarray, np.ndarray]:
    """Stacked images and labels of one split directory."""
    directory = Path(directory)
    images, labels = [], []
    for _, img, lab, _ in _read_index(directory):
        images.append(read_tensor(directory / img))
        labels.append(read_tensor(directory / lab))
    if not images:
        raise ValueError(f"{directory}: empty dataset")
    return np.stack(images), np.stack(labels)


@dataclass
class FeatureArchive:
    """Precomputed ``h x w x c`` feature maps with their label grids."""

    ids: list[str]
    features: list[np.ndarray]
    labels: list[np.ndarray]

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.features, self.labels))

    @property
    def shape(self):
        return self.features[0].shape if self.features else None


def load_feature_archive(directory) -> FeatureArchive:
    directory = Path(directory)
    ids, feats, labs = [], [], []
    shape = None
    for sid, _, lab, feat in _read_index(directory):
        if feat == "-":
            raise FileNotFoundError(f"sample {sid}: no feature file listed")
        for rel in (feat, lab):
            if not (directory / rel).exists():
                raise FileNotFoundError(f"sample {sid}: missing file {rel}")
        f = read_tensor(directory / feat)
        if f.ndim != 3:
            raise ValueError(f"sample {sid}: feature map must be h x w x c, got {f.shape}")
        if shape is None:
            shape = f.shape
        elif f.shape != shape:
            raise ValueError(f"sample {sid}: feature shape {f.shape} does not match {shape}")
        ids.append(sid)
        feats.append(f)
        labs.append(read_tensor(directory / lab))
    return FeatureArchive(ids, feats, labs)


def generate_split(rng: RandomStream, cfg: RunConfig, count: int) -> list[ScenePair]:
    gen = generate_video if cfg.get_bool("video") else generate_scene
    return [gen(rng.spawn(i), cfg) for i in range(count)]


def generate_dataset(directory, cfg: RunConfig, seed: int) -> None:
    """``train`` and ``val`` splits under ``directory``."""
    root = RandomStream(seed)
    directory = Path(directory)
    write_dataset(directory / "train", generate_split(root.spawn(0), cfg, cfg.get_int("n_train")))
    write_dataset(directory / "val", generate_split(root.spawn(1), cfg, cfg.get_int("n_val")))
