"""Patch-grid slide inference and probability-map rendering.

A slide is tiled into a regular mesh of fixed-micron patches (trailing
remainder pixels dropped), every tile is scored by the classifier, and the
resulting grid is written as a CSV plus a red-intensity P6 pixmap.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ManifestError, read_tensor, render_patch, write_tensor
from .nn import forward
from .seeding import derive_seed

SLIDE_VERSION = 1
RENDER_SCALE = 8  # image pixels per grid cell


class GridError(ValueError):
    """Slide/patch geometry that produces no usable grid."""


@dataclass
class SlideSpec:
    width_px: int
    height_px: int
    microns_per_pixel: float
    pixels: np.ndarray  # (height_px, width_px, channels) float32 in [0, 1]

    def __post_init__(self):
        if self.microns_per_pixel <= 0:
            raise ValueError("microns_per_pixel must be > 0")
        if self.pixels.shape[:2] != (self.height_px, self.width_px):
            raise ValueError(
                f"pixel array {self.pixels.shape} does not match declared "
                f"{self.height_px}x{self.width_px}")


@dataclass
class ProbabilityMap:
    grid: np.ndarray  # (rows, cols) float32 in [0, 1]
    patch_px: int
    origin: tuple = (0, 0)
    slide_ref: str = ""


def patch_grid(slide: SlideSpec, patch_microns: float = 50.0):
    """Mesh geometry: returns (patch_px, cols, rows).

    patch_px = round(patch_microns / mpp); the grid is the floor division
    of the slide dimensions, remainder pixels at the edges are dropped.
    """
    if patch_microns <= 0:
        raise GridError("patch_microns must be > 0")
    patch_px = int(round(patch_microns / slide.microns_per_pixel))
    if patch_px < 1:
        raise GridError(
            f"patch of {patch_microns} microns at {slide.microns_per_pixel} "
            f"mpp is below one pixel")
    cols = slide.width_px // patch_px
    rows = slide.height_px // patch_px
    if cols < 1 or rows < 1:
        raise GridError(
            f"slide {slide.width_px}x{slide.height_px} px holds no full "
            f"{patch_px} px patch")
    return patch_px, cols, rows


def _resize_nearest(tiles, out_side):
    # tiles: (n, s, s, c) -> (n, out_side, out_side, c)
    s = tiles.shape[1]
    idx = (np.arange(out_side) * s // out_side)
    return tiles[:, idx][:, :, idx]


def score_slide(weights, slide: SlideSpec, patch_microns: float = 50.0,
                allow_resize: bool = True, slide_ref: str = "",
                chunk_size: int = 256) -> ProbabilityMap:
    """Score every mesh tile; returns the per-tile probability grid."""
    patch_px, cols, rows = patch_grid(slide, patch_microns)
    side = weights.spec.input_side
    if patch_px != side and not allow_resize:
        raise GridError(
            f"patch is {patch_px} px but the model expects {side} px and "
            f"resizing is disabled")

    cropped = slide.pixels[:rows * patch_px, :cols * patch_px]
    tiles = (cropped
             .reshape(rows, patch_px, cols, patch_px, -1)
             .transpose(0, 2, 1, 3, 4)
             .reshape(rows * cols, patch_px, patch_px, -1))
    if patch_px != side:
        tiles = _resize_nearest(tiles, side)
    tiles = np.ascontiguousarray(tiles, dtype=np.float32)

    probs = np.empty(rows * cols, dtype=np.float32)
    for start in range(0, len(tiles), chunk_size):
        probs[start:start + chunk_size] = forward(weights, tiles[start:start + chunk_size])
    return ProbabilityMap(probs.reshape(rows, cols), patch_px,
                          origin=(0, 0), slide_ref=slide_ref)


def render(pmap: ProbabilityMap, csv_path, image_path):
    """Write the grid as CSV (6 decimals) and as a red-intensity P6 pixmap.

    Each grid cell becomes an 8x8 block colored
    (255*p, 48*(1-p), 48*(1-p)), so red encodes TIL probability.
    """
    rows, cols = pmap.grid.shape
    with open(csv_path, "w") as f:
        for r in range(rows):
            f.write(",".join(f"{v:.6f}" for v in pmap.grid[r]) + "\n")

    p = pmap.grid.astype(np.float64)
    rgb = np.empty((rows, cols, 3), dtype=np.uint8)
    rgb[:, :, 0] = np.rint(255.0 * p)
    rgb[:, :, 1] = np.rint(48.0 * (1.0 - p))
    rgb[:, :, 2] = np.rint(48.0 * (1.0 - p))
    big = np.repeat(np.repeat(rgb, RENDER_SCALE, axis=0), RENDER_SCALE, axis=1)
    with open(image_path, "wb") as f:
        f.write(f"P6\n{cols * RENDER_SCALE} {rows * RENDER_SCALE}\n255\n".encode())
        f.write(big.tobytes())


def read_grid_csv(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows)


def make_synthetic_slide(rows: int, cols: int, seed: int, patch_side: int = 32,
                         channels: int = 3, positive_fraction: float = 0.35,
                         texture_shift=(0.0, 0.0, 0.0), blob_intensity: float = 0.8,
                         patch_microns: float = 50.0):
    """Tile generated patches into one slide; mpp is chosen so one mesh
    patch of `patch_microns` lands exactly on one generated tile.

    Returns (SlideSpec, label_grid).
    """
    rng = np.random.default_rng(derive_seed(seed, "slide"))
    labels = (rng.random((rows, cols)) < positive_fraction).astype(np.uint8)
    pixels = np.empty((rows * patch_side, cols * patch_side, channels),
                      dtype=np.float32)
    for r in range(rows):
        for c in range(cols):
            tile, _ = render_patch(rng, patch_side, channels,
                                   bool(labels[r, c]), texture_shift,
                                   blob_intensity)
            pixels[r * patch_side:(r + 1) * patch_side,
                   c * patch_side:(c + 1) * patch_side] = tile
    mpp = patch_microns / patch_side
    slide = SlideSpec(cols * patch_side, rows * patch_side, mpp, pixels)
    return slide, labels


def save_slide(slide: SlideSpec, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "pixels.fsht", slide.pixels)
    meta = {
        "format_version": SLIDE_VERSION,
        "width_px": slide.width_px,
        "height_px": slide.height_px,
        "microns_per_pixel": slide.microns_per_pixel,
        "tensor_file": "pixels.fsht",
    }
    with open(directory / "slide.json", "w") as f:
        json.dump(meta, f, indent=1)


def load_slide(directory) -> SlideSpec:
    directory = Path(directory)
    meta_path = directory / "slide.json"
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"{meta_path}: no such slide")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{meta_path}: invalid JSON (at byte {exc.pos})")
    if meta.get("format_version") != SLIDE_VERSION:
        raise ManifestError(
            f"{meta_path}: unsupported slide version {meta.get('format_version')}")
    pixels = read_tensor(directory / meta["tensor_file"])
    return SlideSpec(int(meta["width_px"]), int(meta["height_px"]),
                     float(meta["microns_per_pixel"]), pixels)
