"""Binary PGM (P5) / PPM (P6) codec with maxval 255."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PNMError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    out, pos = [], 0
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PNMError("malformed header: unexpected end of file")
        out.append(buf[start:pos])
    return out, pos


def decode(buf: bytes) -> np.ndarray:
    """Return an (h, w, c) float64 array in [0, 1]; c is 1 for P5 and 3 for P6."""
    if buf[:2] not in (b"P5", b"P6"):
        raise PNMError(f"malformed header: unsupported magic {buf[:2]!r} (only P5/P6)")
    channels = 1 if buf[:2] == b"P5" else 3
    toks, pos = _tokens(buf, 4)
    try:
        width, height, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise PNMError(f"malformed header: non-integer field in {toks[1:]}") from None
    if width < 1 or height < 1:
        raise PNMError(f"malformed header: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PNMError(f"unsupported maxval {maxval} (only 255)")
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PNMError("malformed header: missing whitespace before payload")
    payload = buf[pos + 1:]
    need = width * height * channels
    if len(payload) < need:
        raise PNMError(f"truncated payload: expected {need} bytes, got {len(payload)}")
    arr = np.frombuffer(payload[:need], dtype=np.uint8).reshape(height, width, channels)
    return arr.astype(np.float64) / 255.0


def encode(img) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise PNMError(f"can only encode (h, w, 1) or (h, w, 3) images, got {img.shape}")
    h, w, c = img.shape
    q = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + q.tobytes()


def read_image(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def write_image(path, img) -> None:
    Path(path).write_bytes(encode(img))


def read_mask(path) -> np.ndarray:
    """Masks are P5 with 255 = hole; returns a binary (h, w, 1) array."""
    m = read_image(path)
    if m.shape[2] != 1:
        raise PNMError(f"mask {path} must be single-channel (P5)")
    return (m > 0.5).astype(np.float64)


def write_mask(path, mask) -> None:
    write_image(path, (np.asarray(mask) > 0.5).astype(np.float64))
