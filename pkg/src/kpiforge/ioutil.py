"""Canonical JSON document helpers shared by report and registry files."""
from __future__ import annotations

import hashlib
import json

from .errors import DataError


def canonical_json_bytes(obj) -> bytes:
    """Key-sorted compact JSON plus trailing newline; rejects NaN."""
    return (
        json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
        + "\n"
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_json_doc(obj, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(canonical_json_bytes(obj))


def read_json_doc(path: str, expected_kind: str | None = None) -> dict:
    try:
        with open(path, "rb") as fh:
            obj = json.loads(fh.read().decode("utf-8"))
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected a JSON object")
    if expected_kind is not None and obj.get("kind") != expected_kind:
        raise DataError(
            f"{path}: expected kind {expected_kind!r}, got {obj.get('kind')!r}"
        )
    return obj
