"""Transparent decompression for dump and archive inputs."""

from __future__ import annotations

import bz2
import gzip
import io
import os
import zlib
from typing import BinaryIO, Union

GZIP_MAGIC = b"\x1f\x8b"
BZIP2_MAGIC = b"BZh"

Source = Union[str, os.PathLike, bytes, BinaryIO]


class CorruptInputError(ValueError):
    """Compressed input could not be decoded."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


def read_all(source: Source) -> bytes:
    """Return the decompressed content of a path, a byte string or a binary stream.

    gzip and bzip2 are detected by magic bytes, never by file name.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    return decompress(raw)


def decompress(raw: bytes) -> bytes:
    if raw.startswith(GZIP_MAGIC):
        return _gunzip(raw)
    if raw.startswith(BZIP2_MAGIC) and len(raw) >= 4 and raw[3:4].isdigit():
        return _bunzip(raw)
    return raw


def _gunzip(raw: bytes) -> bytes:
    out = []
    consumed = 0
    # concatenated gzip members are legal
    while consumed < len(raw):
        if not raw.startswith(GZIP_MAGIC, consumed):
            if raw[consumed:].strip(b"\x00"):
                raise CorruptInputError("trailing garbage after gzip member", consumed)
            break
        d = zlib.decompressobj(wbits=31)
        try:
            out.append(d.decompress(raw[consumed:]))
            out.append(d.flush())
        except zlib.error as exc:
            raise CorruptInputError(f"gzip: {exc}", consumed) from None
        if not d.eof:
            raise CorruptInputError("gzip stream truncated", len(raw))
        consumed = len(raw) - len(d.unused_data)
    return b"".join(out)


def _bunzip(raw: bytes) -> bytes:
    try:
        return bz2.decompress(raw)
    except (OSError, ValueError) as exc:
        d = bz2.BZ2Decompressor()
        offset = 0
        try:
            # locate the failing position for the error report
            for offset in range(0, len(raw), 4096):
                d.decompress(raw[offset:offset + 4096])
        except (OSError, EOFError):
            pass
        raise CorruptInputError(f"bzip2: {exc}", offset) from None


def open_text_writer(path: str | os.PathLike, compress: bool = False):
    if compress:
        return io.TextIOWrapper(gzip.GzipFile(path, "wb", mtime=0), encoding="utf-8", newline="\n")
    return open(path, "w", encoding="utf-8", newline="\n")
