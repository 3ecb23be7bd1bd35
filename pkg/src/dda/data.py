"""Synthetic datasets, portable-anymap I/O, augmentation and dataset directories."""
import csv
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import kernels
from .seeding import DATA, derive_seed, make_rng

SPLITS = ("train", "val", "test")


class PnmFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass
class PointDataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"
    seed: Optional[int] = None


@dataclass
class ImageExample:
    image: np.ndarray   # (H, W, 3) in [0, 1]
    mask: np.ndarray    # (H, W) in {0, 1}
    meta: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# point sets

def gen_xor(n_per_cluster, noise_sd, seed, split="train") -> PointDataset:
    """Four Gaussian blobs at (+-1, +-1); blobs on the main diagonal are class 1."""
    if n_per_cluster < 1:
        raise ValueError("n_per_cluster must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = make_rng(seed, DATA)
    corners = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    centers = np.repeat(corners, n_per_cluster, axis=0)
    labels = np.repeat(np.array([1, 1, 0, 0]), n_per_cluster)
    x = centers + noise_sd * rng.standard_normal(centers.shape)
    order = rng.permutation(labels.size)
    return PointDataset(x[order], labels[order].astype(np.int64), split, seed)


def gen_rings(n, radii=(1.0, 2.0), noise_sd=0.1, seed=0, split="train") -> PointDataset:
    """Two concentric rings, ``n`` points each; the inner ring is class 1."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    r_in, r_out = radii
    rng = make_rng(seed, DATA)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=2 * n)
    r = np.repeat([r_in, r_out], n)
    x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    x += noise_sd * rng.standard_normal(x.shape)
    labels = np.repeat(np.array([1, 0]), n)
    order = rng.permutation(labels.size)
    return PointDataset(x[order], labels[order].astype(np.int64), split, seed)


# --------------------------------------------------------------------------
# blade-like images

@dataclass
class BladeParams:
    area_range: tuple = (0.1, 0.5)
    max_blades: int = 2
    shadow_prob: float = 0.5
    cloud_prob: float = 0.5
    pixel_noise: float = 0.02
    taper: float = 0.45        # tip width / root width


def _low_freq_noise(rng, size, cells=4):
    coarse = rng.standard_normal((cells, cells, 1))
    return kernels.resize_bilinear(coarse, size, size)[:, :, 0]


def _union_mask(yy, xx, blades, width, taper):
    mask = np.zeros(yy.shape, dtype=bool)
    for cy, cx, theta, length in blades:
        d0, d1 = np.sin(theta), np.cos(theta)
        t = (yy - cy) * d0 + (xx - cx) * d1
        s = -(yy - cy) * d1 + (xx - cx) * d0
        half = 0.5 * width * (1.0 + (taper - 1.0) * np.clip(t / length, 0.0, 1.0))
        mask |= (t >= 0.0) & (t <= length) & (np.abs(s) <= half)
    return mask


def _band_mask(yy, xx, band):
    cy, cx, theta, width = band
    s = -(yy - cy) * np.cos(theta) + (xx - cx) * np.sin(theta)
    return np.abs(s) <= width / 2.0


def shadow_mask(meta, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size), dtype=bool)
    for band in meta.get("shadows", []):
        out |= _band_mask(yy, xx, band)
    return out


def _one_blade_image(rng, size, params: BladeParams):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    lo, hi = params.area_range
    for _attempt in range(100):
        target = rng.uniform(lo, hi)
        n_blades = int(rng.integers(1, params.max_blades + 1))
        hub = rng.uniform(-0.2 * size, 1.2 * size, size=2)
        base = rng.uniform(0.0, 2.0 * np.pi)
        blades = []
        for k in range(n_blades):
            theta = base + k * 2.0 * np.pi / 3.0 + rng.normal(0.0, 0.1)
            blades.append((hub[0], hub[1], theta, rng.uniform(1.0, 1.8) * size))
        # mask area grows monotonically with width: bisect for the target fraction
        w_lo, w_hi = 0.0, 1.5 * size
        if _union_mask(yy, xx, blades, w_hi, params.taper).mean() < target:
            continue
        for _ in range(40):
            mid = 0.5 * (w_lo + w_hi)
            if _union_mask(yy, xx, blades, mid, params.taper).mean() < target:
                w_lo = mid
            else:
                w_hi = mid
        mask = _union_mask(yy, xx, blades, w_hi, params.taper)
        if lo <= mask.mean() <= hi:
            break
    else:
        raise RuntimeError("could not place blades within the area range")

    # sky-to-ground background with low-frequency texture
    horizon = rng.uniform(0.5, 1.1) * size
    sky = np.array([0.50, 0.60, 0.75]) + rng.uniform(-0.08, 0.08, 3)
    ground = np.array([0.30, 0.36, 0.26]) + rng.uniform(-0.06, 0.06, 3)
    blend = np.clip((yy - horizon) / (0.15 * size) + 0.5, 0.0, 1.0)[..., None]
    bg = sky * (1.0 - blend) + ground * blend
    bg = bg + 0.06 * _low_freq_noise(rng, size)[..., None]
    if rng.uniform() < params.cloud_prob:
        cy, cx = rng.uniform(0, size, 2)
        rad = rng.uniform(0.05, 0.15) * size
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * rad ** 2))[..., None]
        bg = bg * (1.0 - 0.8 * blob) + 0.85 * 0.8 * blob

    # near-white blades shaded across their width
    hub_y, hub_x, theta0, _ = blades[0]
    shade_dir = rng.uniform(0.0, 2.0 * np.pi)
    shade = ((yy - hub_y) * np.sin(shade_dir) + (xx - hub_x) * np.cos(shade_dir)) / size
    blade_rgb = np.array([0.92, 0.93, 0.95]) + rng.uniform(-0.04, 0.03, 3)
    blade = blade_rgb * (1.0 - 0.12 * np.clip(shade - shade.min(), 0.0, 1.0))[..., None]
    img = np.where(mask[..., None], blade, bg)

    shadows = []
    if rng.uniform() < params.shadow_prob:
        band = (float(rng.uniform(0, size)), float(rng.uniform(0, size)),
                float(rng.uniform(0.0, np.pi)), float(rng.uniform(0.06, 0.15) * size))
        shadows.append(band)
        dark = _band_mask(yy, xx, band) & mask
        img[dark] *= 0.55

    img = img + params.pixel_noise * rng.standard_normal(img.shape)
    img = np.clip(img, 0.0, 1.0)
    lo_v, hi_v = img.min(), img.max()
    img = (img - lo_v) / (hi_v - lo_v) if hi_v > lo_v else np.zeros_like(img)
    img8 = np.round(img * 255.0).astype(np.uint8)
    meta = {"blades": [list(map(float, b)) for b in blades], "width": float(w_hi),
            "shadows": shadows, "area_fraction": float(mask.mean())}
    return ImageExample(img8.astype(np.float64) / 255.0, mask.astype(np.uint8), meta)


def gen_blade_images(count, size=64, seed=0, params: BladeParams = None):
    if count < 1:
        raise ValueError("count must be at least 1")
    params = params or BladeParams()
    out = []
    for k in range(count):
        ex = _one_blade_image(make_rng(seed, DATA, k), size, params)
        ex.meta.update(seed=int(seed), index=k, size=size)
        out.append(ex)
    return out


# --------------------------------------------------------------------------
# augmentation

def hflip(ex: ImageExample) -> ImageExample:
    return ImageExample(ex.image[:, ::-1].copy(), ex.mask[:, ::-1].copy(), dict(ex.meta))


def vflip(ex: ImageExample) -> ImageExample:
    return ImageExample(ex.image[::-1].copy(), ex.mask[::-1].copy(), dict(ex.meta))


def resize_nearest(arr, out_h, out_w):
    iy = np.minimum((np.arange(out_h) * arr.shape[0]) // out_h, arr.shape[0] - 1)
    ix = np.minimum((np.arange(out_w) * arr.shape[1]) // out_w, arr.shape[1] - 1)
    return arr[iy][:, ix]


def augment(ex: ImageExample, seed, crop_fraction=0.875) -> ImageExample:
    """Random flips (p=0.5 each) and a random crop resized back to full size."""
    rng = make_rng(seed)
    if rng.uniform() < 0.5:
        ex = hflip(ex)
    if rng.uniform() < 0.5:
        ex = vflip(ex)
    h, w = ex.mask.shape
    ch, cw = int(round(h * crop_fraction)), int(round(w * crop_fraction))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    img = np.ascontiguousarray(ex.image[top:top + ch, left:left + cw])
    msk = ex.mask[top:top + ch, left:left + cw]
    img = np.clip(kernels.resize_bilinear(img, h, w), 0.0, 1.0)
    msk = (resize_nearest(msk.astype(np.float64), h, w) >= 0.5).astype(np.uint8)
    return ImageExample(img, msk, dict(ex.meta))


def pixel_features(image, coords=False):
    """Per-pixel feature rows: RGB, optionally followed by (row, col) in [0, 1]."""
    h, w, _ = image.shape
    feats = image.reshape(-1, 3)
    if not coords:
        return feats
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.column_stack([feats, yy.ravel() / max(h - 1, 1), xx.ravel() / max(w - 1, 1)])


# --------------------------------------------------------------------------
# portable anymap (binary P5 / P6, maxval 255)

def _read_token(data, pos):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmFormatError("unexpected end of header", start)
    return data[start:pos], start, pos


def parse_pnm(data: bytes) -> np.ndarray:
    """Decode binary P5/P6 bytes to a uint8 array of shape (H, W) or (H, W, 3)."""
    magic, _, pos = _read_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise PnmFormatError(f"unsupported magic {magic!r}, expected P5 or P6", 0)
    nums = []
    for _ in range(3):
        tok, start, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise PnmFormatError(f"expected a decimal number, found {tok!r}", start)
        nums.append((int(tok), start))
    (width, w_off), (height, h_off), (maxval, m_off) = nums
    if width < 1:
        raise PnmFormatError("width must be positive", w_off)
    if height < 1:
        raise PnmFormatError("height must be positive", h_off)
    if maxval != 255:
        raise PnmFormatError(f"unsupported maxval {maxval}, only 255 is supported", m_off)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PnmFormatError("missing whitespace after header", pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    have = len(data) - pos
    if have < need:
        raise PnmFormatError(f"truncated payload: expected {need} bytes, found {have}", pos + have)
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape).copy()


def encode_pnm(arr) -> bytes:
    a = np.asarray(arr)
    if a.dtype != np.uint8:
        a = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    if a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    elif a.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"cannot encode array of shape {a.shape}")
    head = b"%s\n%d %d\n255\n" % (magic, a.shape[1], a.shape[0])
    return head + np.ascontiguousarray(a).tobytes()


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def minmax(arr):
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = a.min(), a.max()
    return (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)


def read_ppm(path, normalize=True):
    arr = parse_pnm(_read(path))
    if arr.ndim != 3:
        raise PnmFormatError(f"{path}: expected a P6 (RGB) file", 0)
    return minmax(arr) if normalize else arr


def read_pgm(path, normalize=True):
    arr = parse_pnm(_read(path))
    if arr.ndim != 2:
        raise PnmFormatError(f"{path}: expected a P5 (grayscale) file", 0)
    return minmax(arr) if normalize else arr


def read_mask(path):
    return (read_pgm(path, normalize=False) >= 128).astype(np.uint8)


def write_ppm(path, image):
    with open(path, "wb") as fh:
        fh.write(encode_pnm(image))


def write_pgm(path, gray):
    with open(path, "wb") as fh:
        fh.write(encode_pnm(gray))


def write_mask(path, mask):
    write_pgm(path, (np.asarray(mask) > 0).astype(np.uint8) * 255)


# --------------------------------------------------------------------------
# dataset directories
#   <root>/manifest.json
#   <root>/<split>/img_%05d.ppm + msk_%05d.pgm   (kind "blades")
#   <root>/<split>/points.csv                    (kind "xor" / "rings")

def split_seed(seed, split):
    return derive_seed(seed, DATA, SPLITS.index(split))


def generate_splits(kind, seed, counts: Dict[str, int], **params):
    """Generate every split from its own derived seed, so splits never overlap."""
    out = {}
    for split in SPLITS:
        s = split_seed(seed, split)
        n = counts[split]
        if kind == "xor":
            out[split] = gen_xor(n, params.get("noise_sd", 0.15), s, split)
        elif kind == "rings":
            out[split] = gen_rings(n, tuple(params.get("radii", (1.0, 2.0))),
                                   params.get("noise_sd", 0.1), s, split)
        elif kind == "blades":
            bp = BladeParams(**params.get("blade_params", {}))
            out[split] = gen_blade_images(n, params.get("size", 64), s, bp)
        else:
            raise ValueError(f"unknown dataset kind {kind!r}")
    return out


def write_dataset(root, kind, splits, manifest):
    os.makedirs(root, exist_ok=True)
    for split, data in splits.items():
        d = os.path.join(root, split)
        os.makedirs(d, exist_ok=True)
        if kind == "blades":
            for k, ex in enumerate(data):
                write_ppm(os.path.join(d, f"img_{k:05d}.ppm"), np.round(ex.image * 255).astype(np.uint8))
                write_mask(os.path.join(d, f"msk_{k:05d}.pgm"), ex.mask)
        else:
            with open(os.path.join(d, "points.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"x{j}" for j in range(data.features.shape[1])] + ["label"])
                for row, lab in zip(data.features, data.labels):
                    w.writerow([repr(float(v)) for v in row] + [int(lab)])
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(dict(manifest, kind=kind), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(root):
    """Returns ``(kind, splits, manifest)`` for a directory written by :func:`write_dataset`."""
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest.json in {root}")
    with open(path) as fh:
        manifest = json.load(fh)
    kind = manifest["kind"]
    splits = {}
    for split in SPLITS:
        d = os.path.join(root, split)
        if kind == "blades":
            names = sorted(f for f in os.listdir(d) if f.startswith("img_"))
            exs = []
            for name in names:
                idx = name[4:9]
                exs.append(ImageExample(read_ppm(os.path.join(d, name)),
                                        read_mask(os.path.join(d, f"msk_{idx}.pgm")),
                                        {"index": int(idx)}))
            splits[split] = exs
        else:
            raw = np.loadtxt(os.path.join(d, "points.csv"), delimiter=",", skiprows=1, ndmin=2)
            splits[split] = PointDataset(raw[:, :-1], raw[:, -1].astype(np.int64), split)
    return kind, splits, manifest

