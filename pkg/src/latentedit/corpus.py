"""Procedural shapes corpus, mixture sampling I/O, and PGM/PPM primitives.

Images are 32x32 grayscale floats in [0, 1]: hard-edged disc/square/cross
renderings at one of two intensities over a 0.05 background, plus a little
uniform pixel noise so the patch PCA never degenerates.  Rendering is
alias-free, which keeps the template classifier in the eval module exact.
"""

import os
from dataclasses import dataclass

import numpy as np

from .conditions import SHAPES, shape_condition

CANVAS = 32
BACKGROUND = 0.05
NOISE_AMPLITUDE = 0.02
CENTER_RANGE = (10, 22)
RADIUS_RANGE = (5, 8)


@dataclass(frozen=True)
class ShapeSpec:
    shape: str  # disc | square | cross
    intensity: float  # 0.4 | 0.9
    center: tuple  # (cx, cy) in pixels
    radius: int


@dataclass(frozen=True)
class LabeledImage:
    image: np.ndarray
    cond: object  # ConditionId
    spec: ShapeSpec


def shape_mask(shape, center, radius, size=CANVAS):
    """Boolean occupancy mask of one hard-edged shape."""
    cx, cy = center
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "disc":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= radius**2
    if shape == "square":
        return (np.abs(xx - cx) <= radius) & (np.abs(yy - cy) <= radius)
    if shape == "cross":
        arm = max(1, radius // 3)
        horiz = (np.abs(xx - cx) <= radius) & (np.abs(yy - cy) <= arm)
        vert = (np.abs(yy - cy) <= radius) & (np.abs(xx - cx) <= arm)
        return horiz | vert
    raise ValueError(f"unknown shape {shape!r}")


def render(spec, noise=None):
    """Render a spec to a float image; optional additive noise then clamp."""
    img = np.full((CANVAS, CANVAS), BACKGROUND)
    img[shape_mask(spec.shape, spec.center, spec.radius)] = spec.intensity
    if noise is not None:
        img = img + noise
    return np.clip(img, 0.0, 1.0)


def generate_shapes(n, seed):
    """n labeled images with specs drawn uniformly from the allowed ranges.

    Each image derives its own stream from (seed, index), so any prefix of
    a corpus is reproducible independently of n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for i in range(n):
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, i))))
        shape = SHAPES[gen.integers(0, 3)]
        level = ("low", "high")[gen.integers(0, 2)]
        cond = shape_condition(shape, level)
        spec = ShapeSpec(
            shape=shape,
            intensity={"low": 0.4, "high": 0.9}[level],
            center=(
                int(gen.integers(CENTER_RANGE[0], CENTER_RANGE[1] + 1)),
                int(gen.integers(CENTER_RANGE[0], CENTER_RANGE[1] + 1)),
            ),
            radius=int(gen.integers(RADIUS_RANGE[0], RADIUS_RANGE[1] + 1)),
        )
        noise = gen.uniform(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, (CANVAS, CANVAS))
        out.append(LabeledImage(image=render(spec, noise), cond=cond, spec=spec))
    return out


def write_pgm(image, path):
    """Write binary PGM (P5) for grayscale, PPM (P6) for 3-channel images.

    Values are clamped to [0, 1] and rounded to the nearest of 256 levels.
    Writes are atomic (temp file + rename).
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    H, W = img.shape[:2]
    payload = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (W, H))
        fh.write(payload.tobytes())
    os.replace(tmp, path)


def _read_token(fh):
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise ValueError("truncated header")
        if ch in b" \t\r\n":
            if tok:
                return tok
            continue
        if ch == b"#":
            while ch not in b"\r\n":
                ch = fh.read(1)
                if not ch:
                    raise ValueError("truncated header")
            continue
        tok += ch


def read_pgm(path):
    """Read a binary PGM/PPM written by write_pgm back to floats in [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise ValueError(f"bad magic {magic!r}")
        W = int(_read_token(fh))
        H = int(_read_token(fh))
        maxval = int(_read_token(fh))
        if maxval != 255:
            raise ValueError(f"unsupported maxval {maxval}")
        C = 1 if magic == b"P5" else 3
        raw = fh.read(H * W * C)
        if len(raw) != H * W * C:
            raise ValueError("truncated payload")
    data = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    return data.reshape(H, W) if C == 1 else data.reshape(H, W, C)


def montage(images, cols):
    """Row-major grid of same-sized images with 2-pixel white separators."""
    if len(images) == 0:
        raise ValueError("no images to montage")
    if cols < 1:
        raise ValueError("cols must be >= 1")
    imgs = [np.asarray(im, dtype=np.float64) for im in images]
    shape0 = imgs[0].shape
    if any(im.shape != shape0 for im in imgs):
        raise ValueError("montage requires uniform image sizes")
    H, W = shape0[:2]
    rows = (len(imgs) + cols - 1) // cols
    sep = 2
    out_shape = (rows * H + (rows - 1) * sep, cols * W + (cols - 1) * sep) + shape0[2:]
    out = np.ones(out_shape)
    for k, im in enumerate(imgs):
        r, c = divmod(k, cols)
        y, x = r * (H + sep), c * (W + sep)
        out[y : y + H, x : x + W] = im
    return out


def write_manifest(items, path):
    """Line-oriented corpus index: filename, cond id, cx, cy, radius."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        for fname, li in items:
            cx, cy = li.spec.center
            fh.write(f"{fname} {li.cond.id} {cx} {cy} {li.spec.radius}\n")
    os.replace(tmp, path)


def read_manifest(path):
    """Rows of (filename, cond_id, cx, cy, radius)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fname, cid, cx, cy, radius = line.split()
            rows.append((fname, int(cid), int(cx), int(cy), int(radius)))
    return rows
