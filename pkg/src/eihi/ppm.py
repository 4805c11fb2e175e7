"""Strict binary PPM (P6) and PGM (P5) readers and writers, maxval 255.

Headers follow the Netpbm token grammar (whitespace-separated tokens,
'#' comments to end of line). Payloads are raw bytes; a short payload is a
parse error naming the file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import PpmParseError


def _read_tokens(data: bytes, count: int, path: str) -> tuple[list[int], int]:
    tokens: list[int] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise PpmParseError(f"{path}: header ended before {count} tokens were read")
        ch = data[i : i + 1]
        if ch in b" \t\r\n":
            i += 1
            continue
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and data[j : j + 1] not in b" \t\r\n":
            j += 1
        tok = data[i:j]
        if not tok.isdigit():
            raise PpmParseError(f"{path}: non-numeric header token {tok!r}")
        tokens.append(int(tok))
        i = j
    # exactly one whitespace byte separates the header from the payload
    if i >= len(data) or data[i : i + 1] not in b" \t\r\n":
        raise PpmParseError(f"{path}: missing whitespace after header")
    return tokens, i + 1


def _read_netpbm(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(magic):
        raise PpmParseError(f"{path}: expected {magic.decode()} magic, got {data[:2]!r}")
    (width, height, maxval), offset = _read_tokens(data[2:], 3, str(path))
    offset += 2
    if width < 1 or height < 1:
        raise PpmParseError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PpmParseError(f"{path}: maxval must be 255, got {maxval}")
    need = width * height * channels
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise PpmParseError(
            f"{path}: truncated payload, need {need} bytes but found {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return arr


def read_ppm(path: str | Path) -> np.ndarray:
    """P6 file -> float64 image (3, h, w) scaled to [0, 1]."""
    arr = _read_netpbm(path, b"P6", 3)
    return arr.astype(np.float64).transpose(2, 0, 1) / 255.0


def read_pgm(path: str | Path) -> np.ndarray:
    """P5 file -> uint8 array (h, w)."""
    return _read_netpbm(path, b"P5", 1)[:, :, 0].copy()


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    """float64 (3, h, w) in [0, 1] -> P6 file (values quantized to 8 bits)."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise PpmParseError(f"write_ppm expects (3, h, w), got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    body = _quantize(image).transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + body)


def write_pgm(path: str | Path, raster: np.ndarray) -> None:
    """uint8 (h, w) -> P5 file."""
    if raster.ndim != 2:
        raise PpmParseError(f"write_pgm expects (h, w), got {raster.shape}")
    h, w = raster.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + raster.astype(np.uint8).tobytes())


def encode_ppm_bytes(image: np.ndarray) -> bytes:
    h, w = image.shape[1], image.shape[2]
    return b"P6\n%d %d\n255\n" % (w, h) + _quantize(image).transpose(1, 2, 0).tobytes()


def encode_pgm_bytes(raster: np.ndarray) -> bytes:
    h, w = raster.shape
    return b"P5\n%d %d\n255\n" % (w, h) + raster.astype(np.uint8).tobytes()


def decode_pgm_bytes(data: bytes, source: str = "<payload>") -> np.ndarray:
    if not data.startswith(b"P5"):
        raise PpmParseError(f"{source}: expected P5 magic")
    (width, height, maxval), offset = _read_tokens(data[2:], 3, source)
    offset += 2
    if maxval != 255:
        raise PpmParseError(f"{source}: maxval must be 255, got {maxval}")
    need = width * height
    payload = data[offset : offset + need]
    if len(payload) < need:
        raise PpmParseError(f"{source}: truncated payload, need {need} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
