"""Versioned binary checkpoint container.

Layout: 8-byte magic, u32 format version, u64 header length, JSON header
(configs, tensor index with name/shape/offset, extras), then a little-endian
float32 payload. Save/load round-trips every tensor bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .engine import TrainConfig
from .unet import DenoiserConfig, DenoiserNet

MAGIC = b"VGCDMCKP"
CKPT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass(frozen=True)
class Checkpoint:
    denoiser_config: DenoiserConfig
    train_config: TrainConfig
    tensors: dict[str, np.ndarray]
    extras: dict

    def build_model(self) -> DenoiserNet:
        model = DenoiserNet(self.denoiser_config)
        state = {k: torch.from_numpy(v.copy()) for k, v in self.tensors.items()}
        model.load_state_dict(state)
        model.eval()
        return model


def save_checkpoint(path, model: DenoiserNet, train_config: TrainConfig,
                    extras: dict | None = None) -> None:
    state = model.state_dict()
    index = []
    payload_parts = []
    offset = 0
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy().astype("<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload_parts.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": CKPT_VERSION,
        "denoiser_config": dataclasses.asdict(model.cfg),
        "train_config": dataclasses.asdict(train_config),
        "tensors": index,
        "extras": extras or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", CKPT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(b"".join(payload_parts))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    version, header_len = struct.unpack("<IQ", raw[8:20])
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[20:20 + header_len].decode("utf-8"))
    payload = raw[20 + header_len:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        extent = count * 4
        if start + extent > len(payload):
            raise CheckpointError(
                f"tensor {entry['name']!r} extends past the payload"
            )
        tensors[entry["name"]] = np.frombuffer(
            payload, dtype="<f4", count=count, offset=start
        ).reshape(shape)
    dcfg_doc = dict(header["denoiser_config"])
    dcfg_doc["channel_multipliers"] = tuple(dcfg_doc["channel_multipliers"])
    return Checkpoint(
        denoiser_config=DenoiserConfig(**dcfg_doc),
        train_config=TrainConfig(**header["train_config"]),
        tensors=tensors,
        extras=header.get("extras", {}),
    )
