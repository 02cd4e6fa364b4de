"""Static figures: segmentation panels (PPM and SVG) and analysis charts (SVG)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .tensorio import read_tensor  # noqa: E402

# label colours for masks; id 0 is always black
LABEL_COLORS = np.array(
    [
        [0, 0, 0], [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200],
        [245, 130, 48], [145, 30, 180], [70, 240, 240], [240, 50, 230], [210, 245, 60],
        [250, 190, 190], [0, 128, 128], [170, 110, 40], [128, 128, 128],
    ],
    dtype=np.uint8,
)


def colorize(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return LABEL_COLORS[labels % len(LABEL_COLORS)]


def _frames(x, t_axis: bool):
    # video dumps carry a leading time axis; show the first frame
    return x[0] if t_axis else x


def panel(image, labels, masks, gap: int = 2) -> np.ndarray:
    """Image, truth and prediction side by side, as uint8 RGB."""
    image = np.asarray(image)
    video = image.ndim == 4
    image, labels, masks = (_frames(np.asarray(a), video) for a in (image, labels, masks))
    rgb = (np.clip(image, 0, 1) * 255).round().astype(np.uint8)
    parts = [rgb, colorize(labels), colorize(masks)]
    h = rgb.shape[0]
    spacer = np.full((h, gap, 3), 255, dtype=np.uint8)
    out = [parts[0]]
    for p in parts[1:]:
        out += [spacer, p]
    return np.concatenate(out, axis=1)


def load_mask_dump(directory):
    directory = Path(directory)
    names = sorted(p.name for p in (directory / "masks").glob("*.vvot"))
    if not names:
        raise FileNotFoundError(f"{directory}: no masks/*.vvot files")
    for name in names:
        yield (
            Path(name).stem,
            read_tensor(directory / "images" / name),
            read_tensor(directory / "labels" / name),
            read_tensor(directory / "masks" / name),
        )


def plot_masks(mask_dir, out_dir, limit: int | None = None) -> list[Path]:
    """One PPM panel per sample plus an SVG overview of the first few."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, panels = [], []
    for i, (stem, img, lab, msk) in enumerate(load_mask_dump(mask_dir)):
        if limit is not None and i >= limit:
            break
        arr = panel(img, lab, msk)
        path = out_dir / f"{stem}.ppm"
        Image.fromarray(arr).save(path, format="PPM")
        written.append(path)
        panels.append((stem, arr))
    rows = panels[:8]
    fig, axes = plt.subplots(len(rows), 1, figsize=(6, 2.1 * len(rows)), squeeze=False)
    for ax, (stem, arr) in zip(axes[:, 0], rows):
        ax.imshow(arr, interpolation="nearest")
        ax.set_title(f"{stem}: image / truth / prediction", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    svg = out_dir / "panels.svg"
    fig.savefig(svg, format="svg")
    plt.close(fig)
    written.append(svg)
    return written


def plot_analysis(which: str, result: dict, path) -> None:
    """SVG chart for the output of one ``vvo analyze`` experiment."""
    if which == "p2":
        fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8, 3.5))
        ax.plot(result["separations"], result["p2"], "o-")
        ax.set_xlabel("inter-centroid separation")
        ax.set_ylabel("median p2")
        b = result["boundary"]
        ax2.errorbar(b["b"], b["p2"], yerr=[3 * se for se in b["se"]], fmt="o", label="estimate (3 SE)")
        ax2.plot(b["b"], b["phi"], "x", label="Phi(b)")
        ax2.set_xlabel("boundary b")
        ax2.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if which == "bias":
        rows = result["rows"]
        shifts = [r["shift_norm"] for r in rows]
        ax.plot(shifts, [r["mean_residual_shared"] for r in rows], "o-", label="shared target")
        ax.plot(shifts, [r["mean_residual_separate"] for r in rows], "s-", label="separate target")
        ax.plot(shifts, shifts, ":", color="gray", label="||delta||")
        ax.set_xlabel("target shift ||delta||")
        ax.set_ylabel("mean residual norm")
        ax.legend(fontsize=7)
    elif which == "objectness":
        names = ["intra", "inter"]
        x = np.arange(2)
        ax.bar(x - 0.2, [result["intra_a"], result["inter_a"]], 0.4, label=result.get("name_a", "a"))
        ax.bar(x + 0.2, [result["intra_b"], result["inter_b"]], 0.4, label=result.get("name_b", "b"))
        ax.set_xticks(x, names)
        ax.set_ylabel("normalized distance")
        ax.set_title(f"PCA centroid shift {result['shift']:.3f}", fontsize=8)
        ax.legend(fontsize=7)
    else:
        plt.close(fig)
        raise ValueError(f"unknown analysis {which!r}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
