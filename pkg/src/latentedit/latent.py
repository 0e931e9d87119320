"""Patch-linear autoencoder between images and spatial latent grids.

The encoder projects each non-overlapping f x f patch onto a shared
orthonormal basis of the top-c principal patch directions; the decoder is
the transpose map plus the patch mean, clamped to [0, 1].  Compression is
lossy whenever c < f*f*C.  Also holds mask downsampling to latent
resolution.
"""

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PatchAutoencoder:
    """Shared-basis PCA over f x f patches; basis rows are orthonormal."""

    f: int
    c: int
    channels: int
    basis: np.ndarray  # (c, f*f*channels)
    mean: np.ndarray  # (f*f*channels,)
    trained_on: str  # corpus fingerprint

    @property
    def patch_dim(self):
        return self.f * self.f * self.channels


def _as_3d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[:, :, None]
    if x.ndim == 3:
        return x
    raise ValueError(f"expected (H, W) or (H, W, C) image, got shape {x.shape}")


def _patches(x3, f):
    H, W, C = x3.shape
    if H % f or W % f:
        raise ValueError(f"image {H}x{W} not divisible by patch factor {f}")
    return (
        x3.reshape(H // f, f, W // f, f, C)
        .transpose(0, 2, 1, 3, 4)
        .reshape(H // f * (W // f), f * f * C)
    )


def _unpatch(p, H, W, f, C):
    return (
        p.reshape(H // f, W // f, f, f, C)
        .transpose(0, 2, 1, 3, 4)
        .reshape(H, W, C)
    )


def fit_autoencoder(corpus, f, c):
    """Fit the shared patch basis on a corpus of same-channel images.

    Deterministic: eigendecomposition of the patch covariance plus a fixed
    sign convention (largest-magnitude entry of each basis row positive).
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    imgs = [_as_3d(x) for x in corpus]
    C = imgs[0].shape[2]
    if any(im.shape[2] != C for im in imgs):
        raise ValueError("mixed channel counts in corpus")
    if c > f * f * C:
        raise ValueError(f"c={c} exceeds patch dimension {f * f * C}")
    if c < 1:
        raise ValueError("c must be >= 1")
    X = np.concatenate([_patches(im, f) for im in imgs], axis=0)
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / X.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    basis = eigvecs[:, ::-1][:, :c].T.copy()  # top-c rows, descending variance
    for row in basis:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    digest = hashlib.sha256()
    digest.update(np.int64([f, c, C, len(imgs)]).tobytes())
    for im in imgs:
        digest.update(np.ascontiguousarray(im).tobytes())
    basis.setflags(write=False)
    mean.setflags(write=False)
    return PatchAutoencoder(
        f=f, c=c, channels=C, basis=basis, mean=mean, trained_on=digest.hexdigest()
    )


def encode(ae, x):
    """Project each patch onto the basis: (H, W[, C]) -> (H/f, W/f, c) grid."""
    x3 = _as_3d(x)
    if x3.shape[2] != ae.channels:
        raise ValueError(f"expected {ae.channels} channels, got {x3.shape[2]}")
    H, W, _ = x3.shape
    coeffs = (_patches(x3, ae.f) - ae.mean) @ ae.basis.T
    return coeffs.reshape(H // ae.f, W // ae.f, ae.c)


def decode(ae, z):
    """Reconstruct the image from a latent grid; output clamped to [0, 1].

    Returns (H, W) for single-channel autoencoders, (H, W, C) otherwise.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3 or z.shape[2] != ae.c:
        raise ValueError(f"latent grid shape {z.shape} inconsistent with c={ae.c}")
    hl, wl, _ = z.shape
    H, W = hl * ae.f, wl * ae.f
    patches = z.reshape(-1, ae.c) @ ae.basis + ae.mean
    img = _unpatch(patches, H, W, ae.f, ae.channels)
    img = np.clip(img, 0.0, 1.0)
    return img[:, :, 0] if ae.channels == 1 else img


def reconstruction_error(ae, x):
    """Mean squared error of the decode(encode(x)) round trip."""
    x3 = _as_3d(x)
    rec = _as_3d(decode(ae, encode(ae, x)))
    return float(np.mean((x3 - rec) ** 2))


def downsample_mask(pixel_mask, f):
    """Majority-rule downsampling of a binary pixel mask to latent cells.

    A cell is masked iff at least half of its f x f pixels are masked
    (exact ties count as masked).
    """
    m = np.asarray(pixel_mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask entries must be 0 or 1")
    H, W = m.shape
    if H % f or W % f:
        raise ValueError(f"mask {H}x{W} not divisible by {f}")
    frac = m.astype(np.float64).reshape(H // f, f, W // f, f).mean(axis=(1, 3))
    return (frac >= 0.5).astype(np.uint8)


def channel_scales(ae, images, floor=1e-6):
    """Per-channel standard deviation of the encoded corpus (floored).

    Dividing latents by these puts every channel at unit variance, the
    regime the noise schedule and the N(0, I) prior assume.
    """
    stacked = np.stack([encode(ae, x) for x in images])
    return np.maximum(stacked.std(axis=(0, 1, 2)), floor)


@dataclass(frozen=True)
class LatentSpace:
    """Autoencoder plus the channel normalization used for diffusion.

    encode() returns unit-variance latents; decode() undoes the scaling
    before reconstructing pixels.  The editor accepts either a bare
    PatchAutoencoder (scales of 1) or one of these.
    """

    ae: PatchAutoencoder
    scales: np.ndarray

    def encode(self, x):
        return encode(self.ae, x) / self.scales

    def decode(self, z):
        return decode(self.ae, np.asarray(z, dtype=np.float64) * self.scales)


@dataclass(frozen=True)
class MaskRegion:
    """One editable region: latent-resolution mask, condition, noise level."""

    latent_mask: np.ndarray
    cond: object
    eta: float = 0.0


@dataclass(frozen=True)
class MaskSpec:
    """Pixel mask plus the derived per-region latent masks."""

    pixel_mask: np.ndarray
    regions: tuple


def make_mask_spec(region_pixel_masks, conds, etas, f):
    """Build a MaskSpec from per-region pixel masks (must not collide after
    downsampling)."""
    if not (len(region_pixel_masks) == len(conds) == len(etas)):
        raise ValueError("regions, conditions and etas must align")
    if len(region_pixel_masks) == 0:
        raise ValueError("at least one region required")
    shape = np.asarray(region_pixel_masks[0]).shape
    regions = []
    total_latent = None
    union_pixels = np.zeros(shape, dtype=np.uint8)
    for pm, cond, eta in zip(region_pixel_masks, conds, etas):
        pm = np.asarray(pm)
        if pm.shape != shape:
            raise ValueError("all region masks must share the image shape")
        lm = downsample_mask(pm, f)
        if total_latent is None:
            total_latent = np.zeros_like(lm)
        if np.any(total_latent & lm):
            raise ValueError("region masks overlap after downsampling")
        total_latent |= lm
        union_pixels |= pm.astype(np.uint8)
        regions.append(MaskRegion(latent_mask=lm, cond=cond, eta=float(eta)))
    return MaskSpec(pixel_mask=union_pixels, regions=tuple(regions))
