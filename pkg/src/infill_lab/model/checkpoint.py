"""
Checkpoint container.

Layout, all integers little-endian:

    8 bytes   magic b"INFILLCK"
    4 bytes   uint32 header length N
    N bytes   UTF-8 JSON header, keys sorted:
                format_version  int
                config          DenoiserConfig as a dict
                vocab_hash      SHA-256 of the vocabulary symbol table
                stage           stage tag ("None", "RO", "FS", "FS+RO", ...)
                rng_state       numpy bit-generator state of the writer, or null
                dtype           "<f8" or "<f4"
                param_hash      SHA-256 of the payload
                params          [{name, shape, offset, nbytes}, ...]
    payload   parameters in state_dict order, flat little-endian IEEE-754

Files are written to a temporary sibling and renamed into place, so a failed
write never clobbers an existing checkpoint.
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from ..errors import CheckpointError
from .denoiser import Denoiser, DenoiserConfig

MAGIC = b"INFILLCK"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    """A loaded checkpoint."""
    model: Denoiser
    stage: str
    vocab_hash: str
    param_hash: str
    rng_state: Optional[Dict[str, Any]]

    @property
    def config(self) -> DenoiserConfig:
        return self.model.config


def _payload(model: Denoiser) -> tuple[bytes, list, str]:
    dtype = "<f8" if model.config.dtype == "float64" else "<f4"
    chunks, entries, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().numpy().astype(dtype, copy=False).tobytes(order="C")
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    return b"".join(chunks), entries, dtype


def parameter_hash(model: Denoiser) -> str:
    """SHA-256 of the serialized parameters; identical to the checkpoint's param_hash."""
    payload, _, _ = _payload(model)
    return hashlib.sha256(payload).hexdigest()


def save_checkpoint(
    path: str | Path,
    model: Denoiser,
    stage: str,
    vocab_hash: str,
    rng_state: Optional[Dict[str, Any]] = None,
) -> str:
    """
    Write a checkpoint atomically.

    Returns:
        The parameter hash recorded in the header
    """
    path = Path(path)
    payload, entries, dtype = _payload(model)
    param_hash = hashlib.sha256(payload).hexdigest()
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.model_dump(),
        "vocab_hash": vocab_hash,
        "stage": stage,
        "rng_state": rng_state,
        "dtype": dtype,
        "param_hash": param_hash,
        "params": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", len(header_bytes)))
            f.write(header_bytes)
            f.write(payload)
        os.replace(tmp, path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        raise CheckpointError(f"Failed to write checkpoint {path}: {e}")
    return param_hash


def read_header(path: str | Path) -> tuple[Dict[str, Any], bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Failed to read checkpoint {path}: {e}")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    (header_len,) = struct.unpack("<I", raw[len(MAGIC): len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(raw[start: start + header_len].decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"{path} has a corrupt header: {e}")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    return header, raw[start + header_len:]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint; parameters are restored bit-exactly."""
    header, payload = read_header(path)
    if hashlib.sha256(payload).hexdigest() != header["param_hash"]:
        raise CheckpointError(f"{path}: payload does not match its parameter hash")

    config = DenoiserConfig(**header["config"])
    model = Denoiser(config).to(config.torch_dtype)
    state = {}
    for entry in header["params"]:
        chunk = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
        array = np.frombuffer(chunk, dtype=header["dtype"]).reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(array.astype(array.dtype.newbyteorder("="), copy=True))
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError(f"{path}: parameters do not fit the stored config: {e}")
    model.eval()
    return Checkpoint(
        model=model,
        stage=header["stage"],
        vocab_hash=header["vocab_hash"],
        param_hash=header["param_hash"],
        rng_state=header["rng_state"],
    )
