"""Content addressing: every artifact is named by a SHA-256 of its canonical bytes."""

from __future__ import annotations

import hashlib
from typing import IO, Iterable, Union

ByteSource = Union[bytes, bytearray, memoryview, IO[bytes], Iterable[bytes]]

_CHUNK = 1 << 20


def artifact_hash(data: ByteSource) -> str:
    """SHA-256 digest as 64 lowercase hex chars.

    Accepts raw bytes, a binary file object, or an iterable of byte chunks;
    file objects are consumed in streaming fashion.
    """
    h = hashlib.sha256()
    if isinstance(data, (bytes, bytearray, memoryview)):
        h.update(data)
    elif hasattr(data, "read"):
        while True:
            chunk = data.read(_CHUNK)
            if not chunk:
                break
            h.update(chunk)
    else:
        for chunk in data:
            h.update(chunk)
    return h.hexdigest()
