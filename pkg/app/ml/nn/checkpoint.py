from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

from app.core.errors import CorruptCheckpoint, VersionMismatch
from app.ml.nn.module import TrainableModule, build_module, config_hash

logger = logging.getLogger(__name__)

MAGIC = b"VRSTCKPT"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


def write_container(
    path: str | Path,
    tensors: dict[str, np.ndarray],
    *,
    kind: str,
    config: dict[str, Any],
    extra: dict[str, Any] | None = None,
) -> Path:
    """
    Layout: MAGIC | uint64 LE header length | UTF-8 JSON header | float32 LE blobs.

    Tensor offsets are relative to the start of the payload.
    """
    directory: dict[str, dict[str, Any]] = {}
    blobs: list[bytes] = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
        raw = data.tobytes()
        directory[name] = {
            "shape": list(data.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": len(raw),
        }
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)

    header = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "config_hash": config_hash(kind, config),
        "tensors": directory,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as f:
        f.write(MAGIC)
        f.write(_LEN.pack(len(head)))
        f.write(head)
        f.write(payload)
    return p


def read_header(path: str | Path) -> tuple[dict[str, Any], bytes]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"Checkpoint not found: {p}")
    raw = p.read_bytes()
    prefix = len(MAGIC) + _LEN.size
    if len(raw) < prefix or raw[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{p}: missing container magic")
    (head_len,) = _LEN.unpack(raw[len(MAGIC) : prefix])
    if len(raw) < prefix + head_len:
        raise CorruptCheckpoint(f"{p}: truncated header")
    try:
        header = json.loads(raw[prefix : prefix + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f"{p}: unreadable header ({e})") from e
    if not isinstance(header, dict):
        raise CorruptCheckpoint(f"{p}: header is not an object")
    return header, raw[prefix + head_len :]


def read_container(
    path: str | Path,
    *,
    expected_kind: str | None = None,
    expected_config_hash: str | None = None,
) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    header, payload = read_header(path)

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format_version {version}, expected {FORMAT_VERSION}")
    try:
        kind = header["kind"]
        config = header["config"]
        stored_hash = header["config_hash"]
        directory = header["tensors"]
        payload_hash = header["payload_sha256"]
    except KeyError as e:
        raise CorruptCheckpoint(f"{path}: header missing {e}") from e

    if hashlib.sha256(payload).hexdigest() != payload_hash:
        raise CorruptCheckpoint(f"{path}: payload hash mismatch")
    if config_hash(kind, config) != stored_hash:
        raise VersionMismatch(f"{path}: config does not match its recorded hash")
    if expected_kind is not None and kind != expected_kind:
        raise VersionMismatch(f"{path}: holds a {kind!r}, expected {expected_kind!r}")
    if expected_config_hash is not None and stored_hash != expected_config_hash:
        raise VersionMismatch(
            f"{path}: config hash {stored_hash[:12]} != expected {expected_config_hash[:12]}"
        )

    tensors: dict[str, np.ndarray] = {}
    for name, entry in directory.items():
        start, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if start + nbytes > len(payload):
            raise CorruptCheckpoint(f"{path}: tensor {name} runs past the payload")
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=start)
        tensors[name] = arr.reshape(entry["shape"]).astype(np.float32)
    return header, tensors


def save_checkpoint(
    module: TrainableModule, path: str | Path, extra: dict[str, Any] | None = None
) -> Path:
    tensors = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    p = write_container(path, tensors, kind=module.kind, config=module.config_dict(), extra=extra)
    logger.info("saved %s checkpoint (%d tensors) -> %s", module.kind, len(tensors), p)
    return p


def load_checkpoint(
    path: str | Path,
    *,
    expected_kind: str | None = None,
    expected_config_hash: str | None = None,
) -> TrainableModule:
    import app.ml.models  # noqa: F401  (registers module kinds)

    header, tensors = read_container(
        path, expected_kind=expected_kind, expected_config_hash=expected_config_hash
    )
    module = build_module(header["kind"], header["config"])
    state = {k: torch.from_numpy(v) for k, v in tensors.items()}
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise VersionMismatch(f"{path}: tensors do not fit {header['kind']} ({e})") from e
    module.eval()
    return module


def checkpoint_tensor_elements(path: str | Path) -> int:
    """Element count summed over the container's tensor directory (no payload decode)."""
    header, _ = read_header(path)
    return sum(int(np.prod(e["shape"])) for e in header.get("tensors", {}).values())
