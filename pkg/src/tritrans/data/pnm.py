"""Binary PPM (P6) / PGM (P5) codec, 8- and 16-bit."""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAX_EXTENT = 1 << 15


class PnmError(ValueError):
    def __init__(self, path, offset: int, msg: str):
        super().__init__(f"{path}: byte {offset}: {msg}")
        self.path = str(path)
        self.offset = offset


class MalformedHeader(PnmError):
    pass


class ExtentOverflow(PnmError):
    pass


class TruncatedPayload(PnmError):
    pass


def _tokens(buf: bytes, start: int, count: int, path):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    out = []
    i = start
    n = len(buf)
    while len(out) < count:
        while i < n and (buf[i] in b" \t\r\n" or buf[i] == ord("#")):
            if buf[i] == ord("#"):
                while i < n and buf[i] not in b"\r\n":
                    i += 1
            else:
                i += 1
        if i >= n:
            raise MalformedHeader(path, i, "header ended early")
        j = i
        while j < n and buf[j] not in b" \t\r\n#":
            j += 1
        tok = buf[i:j]
        if not tok.isdigit():
            raise MalformedHeader(path, i, f"expected a decimal integer, got {tok[:16]!r}")
        out.append((int(tok), i))
        i = j
    if i >= n or buf[i] not in b" \t\r\n":
        raise MalformedHeader(path, i, "missing whitespace after maxval")
    return out, i + 1


def decode(buf: bytes, path="<bytes>") -> tuple[np.ndarray, int]:
    """Return (array [H,W] or [H,W,3] of uint16 samples, maxval)."""
    if len(buf) < 2 or buf[:2] not in (b"P5", b"P6"):
        raise MalformedHeader(path, 0, f"unsupported magic {buf[:2]!r}; need P5 or P6")
    channels = 3 if buf[:2] == b"P6" else 1
    ((w, wo), (h, ho), (maxval, mo)), data_start = _tokens(buf, 2, 3, path)
    if w == 0 or h == 0:
        raise MalformedHeader(path, wo if w == 0 else ho, "zero image extent")
    if w > MAX_EXTENT or h > MAX_EXTENT:
        raise ExtentOverflow(path, wo if w > MAX_EXTENT else ho, f"extent {w}x{h} exceeds {MAX_EXTENT}")
    if not 0 < maxval < 65536:
        raise MalformedHeader(path, mo, f"maxval {maxval} outside 1..65535")
    bps = 1 if maxval < 256 else 2
    need = w * h * channels * bps
    have = len(buf) - data_start
    if have < need:
        raise TruncatedPayload(path, len(buf), f"payload needs {need} bytes, file has {have}")
    raw = np.frombuffer(buf, dtype=np.uint8 if bps == 1 else ">u2", count=w * h * channels, offset=data_start)
    arr = raw.astype(np.uint16).reshape((h, w, channels) if channels == 3 else (h, w))
    if arr.max(initial=0) > maxval:
        off = data_start + int(np.argmax(raw > maxval)) * bps
        raise MalformedHeader(path, off, f"sample exceeds maxval {maxval}")
    return arr, maxval


def read(path) -> tuple[np.ndarray, int]:
    path = Path(path)
    return decode(path.read_bytes(), path)


def read_normalized(path) -> np.ndarray:
    """Float32 image in [0, 1]: [H,W] for PGM, [H,W,3] for PPM."""
    arr, maxval = read(path)
    return (arr.astype(np.float64) / maxval).astype(np.float32)


def encode(arr: np.ndarray, maxval: int = 255) -> bytes:
    """Encode integer samples; 3-D arrays become P6, 2-D become P5."""
    arr = np.asarray(arr)
    if arr.ndim == 3 and arr.shape[2] == 3:
        magic, (h, w) = b"P6", arr.shape[:2]
    elif arr.ndim == 2:
        magic, (h, w) = b"P5", arr.shape
    else:
        raise ValueError(f"cannot encode array of shape {arr.shape}")
    header = magic + f"\n{w} {h}\n{maxval}\n".encode()
    dtype = np.uint8 if maxval < 256 else ">u2"
    return header + np.ascontiguousarray(arr).astype(dtype).tobytes()


def quantize(img: np.ndarray, maxval: int = 255) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.uint16)


def write(path, img: np.ndarray, maxval: int = 255) -> None:
    """Write a float image in [0, 1] (rounded to ``maxval`` levels)."""
    Path(path).write_bytes(encode(quantize(img, maxval), maxval))
