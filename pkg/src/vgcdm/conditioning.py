"""Voltage-condition encoder, multi-head cross-attention, and the
zero-convolution residual injection used to guide the denoiser.

Every injection branch ends in a zero-initialized 1x1 convolution, so a
freshly initialized model is exactly condition-neutral: inject(x, c) == x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

LAYER_NORM_EPS = 1e-5

ATTN_MAGIC = "VGCDM-ATTN"
ATTN_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConditionEncoderConfig:
    depth: int = 2
    inner_dim: int = 128
    n_heads: int = 4

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("encoder depth must be >= 1")
        if self.inner_dim % self.n_heads != 0:
            raise ConfigError("inner_dim must be divisible by n_heads")

    @property
    def head_dim(self) -> int:
        return self.inner_dim // self.n_heads


def zero_conv1d(in_channels: int, out_channels: int) -> nn.Conv1d:
    """1x1 convolution with weights and biases initialized to exactly zero."""
    conv = nn.Conv1d(in_channels, out_channels, kernel_size=1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor):
    """Scaled dot-product attention on [..., tokens, dim] tensors.

    Returns (output, logits, probs); probs rows are softmax-normalized.
    """
    d_k = q.shape[-1]
    logits = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    probs = torch.softmax(logits, dim=-1)
    return probs @ v, logits, probs


class MultiHeadAttention(nn.Module):
    """Multi-head attention with bias-free Q/K/V projections.

    Queries come from `x`, keys/values from `context` (pass x as context for
    self-attention). The last call's pre-softmax logits and probabilities are
    kept on `last_logits` / `last_probs` when `keep_scores` is set.
    """

    def __init__(self, inner_dim: int, n_heads: int):
        super().__init__()
        if inner_dim % n_heads != 0:
            raise ConfigError("inner_dim must be divisible by n_heads")
        self.n_heads = n_heads
        self.head_dim = inner_dim // n_heads
        self.wq = nn.Linear(inner_dim, inner_dim, bias=False)
        self.wk = nn.Linear(inner_dim, inner_dim, bias=False)
        self.wv = nn.Linear(inner_dim, inner_dim, bias=False)
        self.out = nn.Linear(inner_dim, inner_dim)
        self.last_logits = None
        self.last_probs = None

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, context: torch.Tensor,
                keep_scores: bool = False) -> torch.Tensor:
        q = self._split(self.wq(x))
        k = self._split(self.wk(context))
        v = self._split(self.wv(context))
        attended, logits, probs = attention(q, k, v)
        if keep_scores:
            self.last_logits = logits.detach()
            self.last_probs = probs.detach()
        b, _, n, _ = attended.shape
        merged = attended.transpose(1, 2).reshape(b, n, self.n_heads * self.head_dim)
        return self.out(merged)


class EncoderBlock(nn.Module):
    """One condition-encoder stage: strided conv -> layer norm -> self-attention."""

    def __init__(self, inner_dim: int, n_heads: int):
        super().__init__()
        self.conv = nn.Conv1d(inner_dim, inner_dim, kernel_size=3, stride=2, padding=1)
        self.norm = nn.LayerNorm(inner_dim, eps=LAYER_NORM_EPS)
        self.attn = MultiHeadAttention(inner_dim, n_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.conv(x)
        tokens = x.transpose(1, 2)
        tokens = tokens + self.attn(self.norm(tokens), self.norm(tokens))
        return tokens.transpose(1, 2)


class ConditionEncoder(nn.Module):
    """Maps a voltage signal [B, 1, L] to a latent [B, inner_dim, L / 2^(D+1)]."""

    def __init__(self, cfg: ConditionEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.stem = nn.Conv1d(1, cfg.inner_dim, kernel_size=7, stride=2, padding=3)
        self.blocks = nn.ModuleList(
            EncoderBlock(cfg.inner_dim, cfg.n_heads) for _ in range(cfg.depth)
        )

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        if c.ndim != 3 or c.shape[1] != 1:
            raise ValueError(f"expected condition shape [B, 1, L], got {tuple(c.shape)}")
        h = self.stem(c)
        for block in self.blocks:
            h = block(h)
        return h


class GuidanceBlock(nn.Module):
    """Cross-attention injection site ending in a zero convolution.

    forward(h, c_tokens) returns h + zero_conv(branch(h, c_tokens)); at
    zero-initialized output weights the block is an exact identity.
    """

    def __init__(self, channels: int, inner_dim: int, n_heads: int):
        super().__init__()
        self.proj_in = nn.Conv1d(channels, inner_dim, kernel_size=1)
        self.norm_q = nn.LayerNorm(inner_dim, eps=LAYER_NORM_EPS)
        self.attn = MultiHeadAttention(inner_dim, n_heads)
        self.norm_ff = nn.LayerNorm(inner_dim, eps=LAYER_NORM_EPS)
        self.ff = nn.Sequential(
            nn.Linear(inner_dim, inner_dim * 2),
            nn.SiLU(),
            nn.Linear(inner_dim * 2, inner_dim),
        )
        self.zero_out = zero_conv1d(inner_dim, channels)
        self.last_branch = None

    def forward(self, h: torch.Tensor, c_tokens: torch.Tensor,
                keep_scores: bool = False) -> torch.Tensor:
        q_tokens = self.proj_in(h).transpose(1, 2)
        attended = q_tokens + self.attn(self.norm_q(q_tokens), c_tokens,
                                        keep_scores=keep_scores)
        branch = attended + self.ff(self.norm_ff(attended))
        if keep_scores:
            self.last_branch = branch.detach()
        return h + self.zero_out(branch.transpose(1, 2))


@dataclass(frozen=True)
class AttentionScores:
    """Diagnostic bundle from one injection block.

    logits/probs have shape [heads, query_len, key_len]; channel_summary is a
    [32, L] reduction of the attended branch for heat-map dumping.
    """

    logits: np.ndarray
    probs: np.ndarray
    channel_summary: np.ndarray
    t: int
    condition_id: str = ""


SUMMARY_CHANNELS = 32


def _channel_summary(branch: torch.Tensor, length: int) -> np.ndarray:
    # branch: [1, q_len, inner_dim] -> [32, length]
    arr = branch[0].transpose(0, 1).cpu().numpy()  # [inner_dim, q_len]
    groups = np.array_split(arr, SUMMARY_CHANNELS, axis=0)
    rows = np.stack([
        g.mean(axis=0) if g.size else np.zeros(arr.shape[1]) for g in groups
    ])
    reps = max(1, length // rows.shape[1])
    expanded = np.repeat(rows, reps, axis=1)
    if expanded.shape[1] < length:
        pad = length - expanded.shape[1]
        expanded = np.concatenate([expanded, expanded[:, -1:].repeat(pad, axis=1)], axis=1)
    return expanded[:, :length].astype(np.float32)


def extract_attention_map(model, x_t: torch.Tensor, t: int, c: torch.Tensor,
                          condition_id: str = "") -> AttentionScores:
    """Run the denoiser once and capture the last injection block's scores."""
    if not getattr(model.cfg, "condition_enabled", False):
        raise ConfigError("model has no condition branch")
    model.eval()
    with torch.no_grad():
        t_vec = torch.full((x_t.shape[0],), t, dtype=torch.long)
        model(x_t, t_vec, c, keep_scores=True)
    block = model.last_guidance_block()
    logits = block.attn.last_logits[0].cpu().numpy().astype(np.float32)
    probs = block.attn.last_probs[0].cpu().numpy().astype(np.float32)
    summary = _channel_summary(block.last_branch, x_t.shape[-1])
    return AttentionScores(
        logits=logits, probs=probs, channel_summary=summary,
        t=t, condition_id=condition_id,
    )


def write_attention_dump(scores: AttentionScores, path) -> None:
    """Write a dump file: ASCII header, then little-endian float32 payload."""
    tensors = [
        ("logits", scores.logits),
        ("probs", scores.probs),
        ("summary", scores.channel_summary),
    ]
    lines = [f"{ATTN_MAGIC} {ATTN_VERSION}",
             f"condition {scores.condition_id}",
             f"t {scores.t}"]
    for name, arr in tensors:
        lines.append(f"tensor {name} " + " ".join(str(d) for d in arr.shape))
    lines.append("end")
    header = ("\n".join(lines) + "\n").encode("ascii")
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes()
                       for _, arr in tensors)
    Path(path).write_bytes(header + payload)


def read_attention_dump(path) -> AttentionScores:
    raw = Path(path).read_bytes()
    end_marker = b"end\n"
    split = raw.index(end_marker) + len(end_marker)
    header, payload = raw[:split].decode("ascii"), raw[split:]
    lines = header.strip().split("\n")
    magic, version = lines[0].split()
    if magic != ATTN_MAGIC or int(version) != ATTN_VERSION:
        raise ValueError(f"not an attention dump: {lines[0]!r}")
    condition_id = lines[1].split(" ", 1)[1] if " " in lines[1] else ""
    t = int(lines[2].split()[1])
    shapes = {}
    for line in lines[3:]:
        if line == "end":
            break
        parts = line.split()
        shapes[parts[1]] = tuple(int(d) for d in parts[2:])
    arrays = {}
    offset = 0
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(
            payload, dtype="<f4", count=count, offset=offset
        ).reshape(shape)
        offset += count * 4
    return AttentionScores(
        logits=arrays["logits"], probs=arrays["probs"],
        channel_summary=arrays["summary"], t=t, condition_id=condition_id,
    )
