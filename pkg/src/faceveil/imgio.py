"""Frame I/O.

Native format is binary PPM (P6) with maxval 255.  A "video" is simply
several P6 images concatenated in one file; the reader keeps yielding
frames until the buffer runs out.  PNG support is optional and only
activates when Pillow is importable.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, DataError

_WS = b" \t\r\n\v\f"


def _next_token(buf, off, what):
    # skip whitespace and '#' comments (comment runs to end of line)
    n = len(buf)
    while True:
        while off < n and buf[off] in _WS:
            off += 1
        if off < n and buf[off : off + 1] == b"#":
            while off < n and buf[off] != 0x0A:
                off += 1
            continue
        break
    start = off
    while off < n and buf[off] not in _WS and buf[off : off + 1] != b"#":
        off += 1
    if start == off:
        raise DataError(f"truncated PPM header: missing {what}")
    return buf[start:off], off


def _parse_p6(buf, off):
    magic, off = _next_token(buf, off, "magic")
    if magic != b"P6":
        raise DataError(f"not a binary PPM image (magic {magic!r})")
    dims = []
    for what in ("width", "height", "maxval"):
        tok, off = _next_token(buf, off, what)
        try:
            dims.append(int(tok))
        except ValueError:
            raise DataError(f"PPM {what} is not a number: {tok!r}") from None
    w, h, maxval = dims
    if w < 1 or h < 1:
        raise DataError(f"PPM size {w}x{h} out of range")
    if maxval != 255:
        raise DataError(f"unsupported PPM maxval {maxval}, only 255 is handled")
    off += 1  # exactly one whitespace byte separates the header from the raster
    end = off + 3 * w * h
    if end > len(buf):
        raise DataError(f"PPM raster truncated: need {end - off} bytes, have {len(buf) - off}")
    frame = np.frombuffer(buf[off:end], dtype=np.uint8).reshape(h, w, 3)
    return frame.copy(), end


def iter_frames(path):
    """Yield every (H, W, 3) uint8 frame in a (possibly multi-image) P6 file."""
    with open(path, "rb") as f:
        buf = f.read()
    off = 0
    got_any = False
    while True:
        while off < len(buf) and buf[off] in _WS:
            off += 1
        if off >= len(buf):
            break
        frame, off = _parse_p6(buf, off)
        got_any = True
        yield frame
    if not got_any:
        raise DataError(f"{path}: no PPM frames found")


def load_ppm(path):
    """Read the first frame of a P6 file."""
    return next(iter_frames(path))


def _check_frame(frame):
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ConfigError(f"expected (H,W,3) uint8 frame, got {frame.dtype} {frame.shape}")
    return frame


def ppm_bytes(frame):
    frame = _check_frame(frame)
    h, w = frame.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(frame).tobytes()


def save_ppm(frame, path):
    with open(path, "wb") as f:
        f.write(ppm_bytes(frame))


def save_frames(frames, path):
    """Concatenate frames into one multi-image P6 stream."""
    with open(path, "wb") as f:
        n = 0
        for frame in frames:
            f.write(ppm_bytes(frame))
            n += 1
    if n == 0:
        raise ConfigError("refusing to write a stream with zero frames")


def _pillow():
    try:
        from PIL import Image
    except ImportError:
        return None
    return Image


def load_image(path):
    """Read a single frame; PPM natively, anything else through Pillow."""
    if os.path.splitext(path)[1].lower() == ".ppm":
        return load_ppm(path)
    pil = _pillow()
    if pil is None:
        raise ConfigError(f"{path}: only .ppm is supported without Pillow installed")
    with pil.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(frame, path):
    if os.path.splitext(path)[1].lower() == ".ppm":
        save_ppm(frame, path)
        return
    pil = _pillow()
    if pil is None:
        raise ConfigError(f"{path}: only .ppm is supported without Pillow installed")
    pil.fromarray(_check_frame(frame), mode="RGB").save(path)
