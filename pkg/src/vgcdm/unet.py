"""Sequential 1D U-Net noise predictor with sinusoidal time embedding and
optional voltage-condition injection sockets.

Injection sockets sit at every encoder level's output and at the bottleneck;
each ends in a zero convolution, so conditional and unconditional forward
passes agree exactly at initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .conditioning import (
    ConditionEncoder,
    ConditionEncoderConfig,
    ConfigError,
    GuidanceBlock,
)


@dataclass(frozen=True)
class DenoiserConfig:
    length: int = 2048
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4, 8)
    time_embed_dim: int = 128
    n_heads: int = 4
    inner_dim: int = 128
    encoder_depth: int = 2
    condition_enabled: bool = True

    def __post_init__(self):
        levels = len(self.channel_multipliers)
        if levels < 1:
            raise ConfigError("need at least one resolution level")
        factor = 2 ** (levels - 1)
        if self.length % factor != 0:
            raise ConfigError(
                f"length {self.length} must be divisible by 2^(levels-1)={factor}"
            )
        if self.time_embed_dim % 2 != 0:
            raise ConfigError("time_embed_dim must be even")
        if self.inner_dim % self.n_heads != 0:
            raise ConfigError("inner_dim must be divisible by n_heads")

    @property
    def levels(self) -> int:
        return len(self.channel_multipliers)


def time_embedding(t, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer steps over a geometric frequency ladder.

    Returns [dim] for a scalar t or [B, dim] for a 1D tensor; the first dim/2
    entries are sines (0 at t=0), the rest cosines (1 at t=0).
    """
    if dim % 2 != 0:
        raise ConfigError("time embedding dim must be even")
    scalar = not torch.is_tensor(t) or t.ndim == 0
    t_vec = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1)
    )
    args = t_vec[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    return emb[0] if scalar else emb


def _norm(channels: int) -> nn.GroupNorm:
    for groups in (8, 4, 2, 1):
        if channels % groups == 0:
            return nn.GroupNorm(groups, channels)
    return nn.GroupNorm(1, channels)


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, time_dim: int):
        super().__init__()
        self.norm1 = _norm(in_ch)
        self.conv1 = nn.Conv1d(in_ch, out_ch, kernel_size=3, padding=1)
        self.time_proj = nn.Linear(time_dim, out_ch)
        self.norm2 = _norm(out_ch)
        self.conv2 = nn.Conv1d(out_ch, out_ch, kernel_size=3, padding=1)
        self.act = nn.SiLU()
        self.skip = nn.Conv1d(in_ch, out_ch, kernel_size=1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None]
        h = self.conv2(self.act(self.norm2(h)))
        return self.skip(x) + h


class DenoiserNet(nn.Module):
    """eps_theta(x_t, t, c) over [B, 1, L] tensors."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        tdim = cfg.time_embed_dim
        self.time_mlp = nn.Sequential(
            nn.Linear(tdim, tdim), nn.SiLU(), nn.Linear(tdim, tdim)
        )
        chans = [cfg.base_channels * m for m in cfg.channel_multipliers]

        if cfg.condition_enabled:
            self.cond_encoder = ConditionEncoder(
                ConditionEncoderConfig(
                    depth=cfg.encoder_depth,
                    inner_dim=cfg.inner_dim,
                    n_heads=cfg.n_heads,
                )
            )
        else:
            self.cond_encoder = None

        self.stem = nn.Conv1d(1, chans[0], kernel_size=3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.down_guidance = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        in_ch = chans[0]
        for i, ch in enumerate(chans):
            self.down_blocks.append(nn.ModuleList([
                ResBlock(in_ch, ch, tdim), ResBlock(ch, ch, tdim)
            ]))
            self.down_guidance.append(
                GuidanceBlock(ch, cfg.inner_dim, cfg.n_heads)
                if cfg.condition_enabled else nn.Identity()
            )
            self.downsamples.append(
                nn.Conv1d(ch, ch, kernel_size=3, stride=2, padding=1)
                if i < len(chans) - 1 else nn.Identity()
            )
            in_ch = ch

        mid_ch = chans[-1]
        self.mid_block1 = ResBlock(mid_ch, mid_ch, tdim)
        self.mid_guidance = (
            GuidanceBlock(mid_ch, cfg.inner_dim, cfg.n_heads)
            if cfg.condition_enabled else nn.Identity()
        )
        self.mid_block2 = ResBlock(mid_ch, mid_ch, tdim)

        self.upsamples = nn.ModuleList()
        self.up_blocks = nn.ModuleList()
        in_ch = mid_ch
        for i, ch in reversed(list(enumerate(chans))):
            self.upsamples.append(
                nn.ConvTranspose1d(in_ch, in_ch, kernel_size=2, stride=2)
                if i < len(chans) - 1 else nn.Identity()
            )
            self.up_blocks.append(nn.ModuleList([
                ResBlock(in_ch + ch, ch, tdim), ResBlock(ch, ch, tdim)
            ]))
            in_ch = ch

        self.out_norm = _norm(chans[0])
        self.out_conv = nn.Conv1d(chans[0], 1, kernel_size=3, padding=1)
        self.act = nn.SiLU()

    def last_guidance_block(self) -> GuidanceBlock:
        if not self.cfg.condition_enabled:
            raise ConfigError("model has no condition branch")
        return self.mid_guidance

    def _check_inputs(self, x, t, c):
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.cfg.length:
            raise ValueError(
                f"expected x shape [B, 1, {self.cfg.length}], got {tuple(x.shape)}"
            )
        if t.ndim != 1 or t.shape[0] != x.shape[0]:
            raise ValueError("t must be a 1D tensor matching the batch size")
        if c is not None:
            if not self.cfg.condition_enabled:
                raise ConfigError("condition supplied to a condition-disabled model")
            if c.shape != x.shape:
                raise ValueError(
                    f"condition shape {tuple(c.shape)} must match x {tuple(x.shape)}"
                )

    def forward(self, x: torch.Tensor, t: torch.Tensor,
                c: torch.Tensor | None = None,
                keep_scores: bool = False) -> torch.Tensor:
        self._check_inputs(x, t, c)
        temb = self.time_mlp(
            time_embedding(t, self.cfg.time_embed_dim).to(x.dtype)
        )
        c_tokens = None
        if c is not None:
            c_tokens = self.cond_encoder(c).transpose(1, 2)

        h = self.stem(x)
        skips = []
        for blocks, guidance, down in zip(
            self.down_blocks, self.down_guidance, self.downsamples
        ):
            for block in blocks:
                h = block(h, temb)
            if c_tokens is not None:
                h = guidance(h, c_tokens)
            skips.append(h)
            h = down(h)

        h = self.mid_block1(h, temb)
        if c_tokens is not None:
            h = self.mid_guidance(h, c_tokens, keep_scores=keep_scores)
        h = self.mid_block2(h, temb)

        for up, blocks in zip(self.upsamples, self.up_blocks):
            h = up(h)
            h = torch.cat([h, skips.pop()], dim=1)
            for block in blocks:
                h = block(h, temb)

        return self.out_conv(self.act(self.out_norm(h)))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
