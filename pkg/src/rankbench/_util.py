"""Shared helpers: reproducible RNG streams and content hashing."""

from __future__ import annotations

import hashlib
import zlib

import numpy as np


def _stream_token(tag) -> int:
    """Map a stream tag (int or short string) to a stable 32-bit word."""
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag) & 0xFFFFFFFF


def derived_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator for a named sub-stream of a master seed.

    The same (seed, stream) pair always yields the same generator state,
    on any platform, so parallel consumers (per-user candidate sampling,
    per-trial training) stay reproducible without sharing one stream.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_stream_token(t) for t in stream]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derived_seed(seed: int, *stream) -> int:
    """64-bit integer seed derived from a master seed and stream tags."""
    ss = np.random.SeedSequence(
        [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_stream_token(t) for t in stream]
    )
    words = ss.generate_state(2, dtype=np.uint32)
    return int(words[0]) << 32 | int(words[1])


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
