"""Binary PNM (P5/P6) and 8-bit PNG codecs for :class:`PlanarImage`.

Only what the pipeline needs: 8-bit samples, no interlacing. JPEG inputs must
be converted to PNG or PPM beforehand.
"""

from __future__ import annotations

import re
import struct
import zlib
from enum import Enum
from pathlib import Path

import numpy as np

from multires.errors import DecodeError, InvalidInputError, UnsupportedFormatError
from multires.spectral import PlanarImage


class ImageFormat(str, Enum):
    PPM = "ppm"
    PGM = "pgm"
    PNG = "png"

    @classmethod
    def from_path(cls, path) -> "ImageFormat":
        ext = Path(path).suffix.lower().lstrip(".")
        try:
            return cls(ext)
        except ValueError:
            raise UnsupportedFormatError(f"unsupported image extension {ext!r}") from None


IMAGE_EXTENSIONS = tuple("." + f.value for f in ImageFormat)


def decode_image(data: bytes, format_hint: ImageFormat) -> PlanarImage:
    fmt = ImageFormat(format_hint)
    if fmt is ImageFormat.PNG:
        return _decode_png(data)
    return _decode_pnm(data, fmt)


def encode_image(img: PlanarImage, fmt: ImageFormat) -> bytes:
    fmt = ImageFormat(fmt)
    if fmt is ImageFormat.PGM and img.channels != 1:
        raise InvalidInputError("PGM holds exactly one channel")
    if fmt is ImageFormat.PPM and img.channels != 3:
        raise InvalidInputError("PPM holds exactly three channels")
    if fmt is ImageFormat.PNG:
        return _encode_png(img)
    magic = b"P5" if fmt is ImageFormat.PGM else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + np.transpose(img.data, (1, 2, 0)).tobytes()


def read_image(path) -> PlanarImage:
    path = Path(path)
    fmt = ImageFormat.from_path(path)
    return decode_image(path.read_bytes(), fmt)


def write_image(img: PlanarImage, path) -> None:
    path = Path(path)
    path.write_bytes(encode_image(img, ImageFormat.from_path(path)))


# PNM

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _decode_pnm(data: bytes, fmt: ImageFormat) -> PlanarImage:
    want = b"P5" if fmt is ImageFormat.PGM else b"P6"
    if data[:2] in (b"P2", b"P3"):
        raise UnsupportedFormatError("ASCII PNM variants are not supported")
    if data[:2] != want:
        raise DecodeError(f"expected {want.decode()} magic, got {data[:2]!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if not m:
            raise DecodeError("truncated PNM header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise DecodeError(f"bad PNM header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormatError(f"only maxval 255 is supported, got {maxval}")
    if width < 1 or height < 1:
        raise DecodeError(f"bad PNM dimensions {width}x{height}")
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise DecodeError("missing whitespace after PNM header")
    pos += 1
    channels = 1 if fmt is ImageFormat.PGM else 3
    n = width * height * channels
    payload = data[pos : pos + n]
    if len(payload) != n:
        raise DecodeError(f"PNM payload truncated: expected {n} bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return PlanarImage(np.transpose(arr, (2, 0, 1)).copy())


# PNG

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_PNG_CHANNELS = {0: 1, 2: 3, 3: 1, 4: 2, 6: 4}


def _chunk(tag: bytes, body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body))


def _encode_png(img: PlanarImage) -> bytes:
    color_type = 0 if img.channels == 1 else 2
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, color_type, 0, 0, 0)
    rows = np.transpose(img.data, (1, 2, 0)).reshape(img.height, -1)
    raw = np.hstack([np.zeros((img.height, 1), dtype=np.uint8), rows]).tobytes()
    return (
        _PNG_SIG
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )


def _iter_chunks(data: bytes):
    if data[:8] != _PNG_SIG:
        raise DecodeError("not a PNG stream (bad signature)")
    pos = 8
    while pos < len(data):
        if pos + 8 > len(data):
            raise DecodeError("truncated PNG chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        crc = data[pos + 8 + length : pos + 12 + length]
        if len(body) != length or len(crc) != 4:
            raise DecodeError(f"truncated PNG chunk {tag!r}")
        if struct.unpack(">I", crc)[0] != zlib.crc32(tag + body):
            raise DecodeError(f"CRC mismatch in PNG chunk {tag!r}")
        yield tag, body
        pos += 12 + length
        if tag == b"IEND":
            return
    raise DecodeError("PNG stream ended without IEND")


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def _unfilter(raw: bytes, height: int, stride: int, bpp: int) -> np.ndarray:
    if len(raw) != height * (stride + 1):
        raise DecodeError(f"PNG image data has {len(raw)} bytes, expected {height * (stride + 1)}")
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(height, stride + 1)
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    for y in range(height):
        ftype = int(buf[y, 0])
        line = buf[y, 1:]
        if ftype == 0:
            cur = line.copy()
        elif ftype == 1:
            px = line.reshape(-1, bpp).astype(np.int64)
            cur = (np.cumsum(px, axis=0) % 256).astype(np.uint8).reshape(-1)
        elif ftype == 2:
            cur = line + prev
        elif ftype in (3, 4):
            cur = line.astype(np.int64)
            up = prev.astype(np.int64)
            for i in range(stride):
                left = cur[i - bpp] if i >= bpp else 0
                if ftype == 3:
                    cur[i] = (cur[i] + ((left + up[i]) >> 1)) & 0xFF
                else:
                    upleft = up[i - bpp] if i >= bpp else 0
                    cur[i] = (cur[i] + _paeth(left, up[i], upleft)) & 0xFF
            cur = cur.astype(np.uint8)
        else:
            raise DecodeError(f"invalid PNG filter type {ftype} on row {y}")
        out[y] = cur
        prev = cur
    return out


def _decode_png(data: bytes) -> PlanarImage:
    header = None
    palette = None
    idat = []
    for tag, body in _iter_chunks(data):
        if tag == b"IHDR":
            if len(body) != 13:
                raise DecodeError("bad IHDR length")
            header = struct.unpack(">IIBBBBB", body)
        elif tag == b"PLTE":
            if len(body) % 3:
                raise DecodeError("PLTE length is not a multiple of 3")
            palette = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3)
        elif tag == b"IDAT":
            idat.append(body)
    if header is None:
        raise DecodeError("PNG stream has no IHDR")
    width, height, depth, color_type, compression, filter_method, interlace = header
    if color_type not in _PNG_CHANNELS:
        raise DecodeError(f"invalid PNG color type {color_type}")
    if depth != 8:
        raise UnsupportedFormatError(f"only 8-bit PNG is supported, got bit depth {depth}")
    if interlace != 0:
        raise UnsupportedFormatError("interlaced PNG is not supported")
    if compression != 0 or filter_method != 0:
        raise DecodeError("unknown PNG compression or filter method")
    if width < 1 or height < 1:
        raise DecodeError(f"bad PNG dimensions {width}x{height}")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise DecodeError(f"corrupt PNG image data: {exc}") from None
    bpp = _PNG_CHANNELS[color_type]
    pixels = _unfilter(raw, height, width * bpp, bpp).reshape(height, width, bpp)
    if color_type == 3:
        if palette is None:
            raise DecodeError("palette PNG without PLTE chunk")
        index = pixels[..., 0]
        if index.max() >= len(palette):
            raise DecodeError("palette index out of range")
        pixels = palette[index]
    elif color_type in (4, 6):
        pixels = pixels[..., :-1]  # alpha dropped
    return PlanarImage(np.transpose(pixels, (2, 0, 1)).copy())
