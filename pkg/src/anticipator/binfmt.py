"""Shared container for checkpoint and forest files.

Layout: 8-byte magic, u32 format version, u32 manifest length, UTF-8 JSON
manifest, raw little-endian payload, u64 checksum (blake2b-64) of every
preceding byte.
"""

from __future__ import annotations

import hashlib
import json
import struct


class FormatVersionError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


def checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def pack(magic: bytes, version: int, manifest: dict, payload: bytes) -> bytes:
    man = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    body = magic + struct.pack("<II", version, len(man)) + man + payload
    return body + checksum(body)


def unpack(blob: bytes, magic: bytes, version: int) -> tuple[dict, bytes]:
    head = len(magic) + 8
    if len(blob) < head or blob[:len(magic)] != magic:
        raise FormatVersionError("not a recognised file (missing header)")
    found, man_len = struct.unpack("<II", blob[len(magic):head])
    if found != version:
        raise FormatVersionError(f"format_version {found} unsupported (expected {version})")
    if len(blob) < head + 8 or checksum(blob[:-8]) != blob[-8:]:
        raise ChecksumError("checksum mismatch: file is truncated or corrupt")
    man = json.loads(blob[head:head + man_len].decode())
    if man.get("format_version") != version:
        raise FormatVersionError(f"manifest format_version {man.get('format_version')} != {version}")
    return man, blob[head + man_len:-8]
