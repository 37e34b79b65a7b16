"""Image geometry helpers shared by the detector and the embedder.

Planar float arrays (channels, height, width) carry pixel values in
0..255 through the geometry stages; normalization to the network input
range happens last, in one place.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateInputError


def to_planar(frame):
    """(H, W, C) uint8 frame -> (C, H, W) float32, values unchanged."""
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ConfigError(f"expected (H,W,C) frame, got shape {frame.shape}")
    return np.ascontiguousarray(frame.transpose(2, 0, 1).astype(np.float32))


def to_frame(img):
    """(C, H, W) float -> (H, W, C) uint8 with round-and-clamp."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise ConfigError(f"expected (C,H,W) image, got shape {img.shape}")
    out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(out.transpose(1, 2, 0))


def normalize_pixels(img):
    """Map 0..255 pixel values to roughly -1..1: (v - 127.5) / 128."""
    return ((np.asarray(img, dtype=np.float32) - np.float32(127.5)) / np.float32(128.0)).astype(
        np.float32
    )


def bilinear_resize(img, out_h, out_w):
    """Resize a (C, H, W) image with bilinear interpolation.

    Sample centers follow the half-pixel convention
    src = (dst + 0.5) * (in / out) - 0.5 and edge pixels are replicated
    outside the grid.  Interpolation uses the lerp form v0 + t * (v1 - v0)
    so a constant image stays bit-for-bit constant at any output size.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ConfigError(f"expected (C,H,W) image, got shape {img.shape}")
    out_h, out_w = int(out_h), int(out_w)
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be >= 1, got {out_h}x{out_w}")
    _, h, w = img.shape
    work = img.astype(np.result_type(img.dtype, np.float32), copy=False)

    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    ty = (ys - y0f).astype(work.dtype)[:, None]
    tx = (xs - x0f).astype(work.dtype)[None, :]
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)

    r0 = y0[:, None]
    r1 = y1[:, None]
    c0 = x0[None, :]
    c1 = x1[None, :]
    v00 = work[:, r0, c0]
    v01 = work[:, r0, c1]
    v10 = work[:, r1, c0]
    v11 = work[:, r1, c1]
    top = v00 + tx * (v01 - v00)
    bot = v10 + tx * (v11 - v10)
    return top + ty * (bot - top)


def crop_resize(img, box, out_size):
    """Cut an axis-aligned box from a (C, H, W) image and resize it square.

    Box edges are rounded to the nearest integer (half away from zero).
    The part of the box outside the image is filled with zeros before
    resizing, so boxes may extend past any border, but a box entirely
    outside the image is an error.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ConfigError(f"expected (C,H,W) image, got shape {img.shape}")
    c, h, w = img.shape
    x1, y1, x2, y2 = (int(np.floor(v + 0.5)) for v in box)
    bw, bh = x2 - x1, y2 - y1
    if bw < 1 or bh < 1:
        raise DegenerateInputError(f"empty crop box {(x1, y1, x2, y2)}")
    if x2 <= 0 or y2 <= 0 or x1 >= w or y1 >= h:
        raise DegenerateInputError(f"crop box {(x1, y1, x2, y2)} lies outside the {h}x{w} image")
    dtype = np.result_type(img.dtype, np.float32)
    patch = np.zeros((c, bh, bw), dtype=dtype)
    sy1, sy2 = max(y1, 0), min(y2, h)
    sx1, sx2 = max(x1, 0), min(x2, w)
    if sy1 < sy2 and sx1 < sx2:
        patch[:, sy1 - y1 : sy2 - y1, sx1 - x1 : sx2 - x1] = img[:, sy1:sy2, sx1:sx2]
    return bilinear_resize(patch, out_size, out_size)
