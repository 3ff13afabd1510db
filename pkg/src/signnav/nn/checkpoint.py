"""Binary parameter checkpoints: a JSON header line, then one JSON line + raw bytes per Param."""

from __future__ import annotations

import json

import numpy as np

from .tensor import Param

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_params(params: list[Param], config_hash: str, config: dict | None = None) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "param_count": len(params),
        "config": config or {},
    }
    parts = [json.dumps(header, sort_keys=True).encode() + b"\n"]
    for p in params:
        parts.append(json.dumps({"name": p.name, "shape": list(p.shape)}).encode() + b"\n")
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(parts)


def parse_checkpoint(blob: bytes) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    pos = blob.find(b"\n")
    if pos < 0:
        raise CheckpointError("missing checkpoint header")
    try:
        header = json.loads(blob[:pos])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"bad checkpoint header: {e}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format_version')!r}")
    pos += 1
    entries = []
    for _ in range(int(header["param_count"])):
        end = blob.find(b"\n", pos)
        if end < 0:
            raise CheckpointError("truncated checkpoint")
        meta = json.loads(blob[pos:end])
        shape = tuple(meta["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 8
        raw = blob[end + 1:end + 1 + n]
        if len(raw) != n:
            raise CheckpointError(f"truncated data for {meta['name']}")
        entries.append((meta["name"], np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)))
        pos = end + 1 + n
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last parameter")
    return header, entries


def load_into(params: list[Param], blob: bytes, config_hash: str | None = None) -> dict:
    """Copy checkpoint values into ``params`` (matched by name); returns the header."""
    header, entries = parse_checkpoint(blob)
    if config_hash is not None and header["config_hash"] != config_hash:
        raise CheckpointError(f"config hash mismatch: checkpoint {header['config_hash']} vs model {config_hash}")
    by_name = {p.name: p for p in params}
    if sorted(by_name) != sorted(n for n, _ in entries):
        raise CheckpointError("checkpoint parameter names do not match the model")
    for name, arr in entries:
        p = by_name[name]
        if p.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match model {p.shape}")
        p.data = arr.copy()
    return header
