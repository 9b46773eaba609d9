"""Heterogeneous-graph localizer network.

The architecture mirrors the training setup of the source system: per-type
linear embeddings with ReLU, an optional stack of initial convolution layers
over the region graph, several heterogeneous multi-head attention layers that
pass messages from anchor nodes to every region node, an optional final
convolution stack, and a linear head scoring each region.  Attention weights
are normalized per target node (each row sums to one) and the most recent
weights are kept on the module for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

ATTENTION = "attention"
PLAIN = "plain-convolution"


@dataclass(frozen=True)
class Hyperparams:
    """Validated training configuration; bounds follow the search space."""

    epochs: int = 92
    hidden_channels: int = 64
    attention_heads: int = 8
    hgt_layers: int = 3
    initial_conv_layers: int = 2
    final_conv_layers: int = 2
    learning_rate: float = 4.7e-4
    weight_decay: float = 0.5e-4
    grad_clip_norm: float = 1.0
    conv_type: str = ATTENTION

    def __post_init__(self):
        checks = [
            (20 <= self.epochs <= 100, "epochs must be in [20, 100]"),
            (16 <= self.hidden_channels <= 512,
             "hidden channels must be in [16, 512]"),
            (self.attention_heads in (1, 2, 4, 8),
             "attention heads must be one of {1, 2, 4, 8}"),
            (1 <= self.hgt_layers <= 4, "HGT layers must be in [1, 4]"),
            (0 <= self.initial_conv_layers <= 4,
             "initial conv layers must be in [0, 4]"),
            (0 <= self.final_conv_layers <= 4,
             "final conv layers must be in [0, 4]"),
            (1e-5 <= self.learning_rate <= 1e-2,
             "learning rate must be in [1e-5, 1e-2]"),
            (1e-6 <= self.weight_decay <= 5e-3,
             "weight decay must be in [1e-6, 5e-3]"),
            (0.5 <= self.grad_clip_norm <= 5.0,
             "grad clip norm must be in [0.5, 5]"),
            (self.conv_type in (ATTENTION, PLAIN),
             f"unknown conv type {self.conv_type!r}"),
        ]
        if self.hidden_channels % self.attention_heads:
            raise ValueError("hidden channels must divide by attention heads")
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    @classmethod
    def from_dict(cls, obj: dict) -> "Hyperparams":
        return cls(**obj)


class RegionConv(nn.Module):
    """One convolution layer over the region graph.

    The attention variant scores each neighbor (self-loop included) and
    softmax-normalizes the scores so they sum to one per target node; the
    plain variant mean-aggregates over the adjacency row.
    """

    def __init__(self, channels: int, conv_type: str):
        super().__init__()
        self.conv_type = conv_type
        self.lin = nn.Linear(channels, channels, dtype=torch.float64)
        if conv_type == ATTENTION:
            self.att_src = nn.Parameter(torch.empty(channels, dtype=torch.float64))
            self.att_dst = nn.Parameter(torch.empty(channels, dtype=torch.float64))
            nn.init.normal_(self.att_src, std=channels ** -0.5)
            nn.init.normal_(self.att_dst, std=channels ** -0.5)
        self.last_attention: torch.Tensor | None = None

    def forward(self, x: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        h = self.lin(x)
        if self.conv_type == PLAIN:
            norm = adjacency / adjacency.sum(dim=-1, keepdim=True)
            self.last_attention = norm.detach()
            return torch.relu(norm @ h)
        score_dst = (h * self.att_dst).sum(dim=-1)
        score_src = (h * self.att_src).sum(dim=-1)
        scores = torch.nn.functional.leaky_relu(
            score_dst.unsqueeze(-1) + score_src.unsqueeze(-2), 0.2)
        scores = scores.masked_fill(adjacency == 0, float("-inf"))
        alpha = torch.softmax(scores, dim=-1)
        self.last_attention = alpha.detach()
        return torch.relu(alpha @ h)


class AnchorAttention(nn.Module):
    """Multi-head attention carrying anchor messages to every region node."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ValueError("channels must divide by heads")
        self.heads = heads
        self.d = channels // heads
        kw = {"dtype": torch.float64}
        self.q = nn.Linear(channels, channels, **kw)
        self.k = nn.Linear(channels, channels, **kw)
        self.v = nn.Linear(channels, channels, **kw)
        self.out = nn.Linear(channels, channels, **kw)
        self.last_attention: torch.Tensor | None = None

    def forward(self, regions: torch.Tensor, anchors: torch.Tensor) -> torch.Tensor:
        shape_r = regions.shape[:-1] + (self.heads, self.d)
        shape_a = anchors.shape[:-1] + (self.heads, self.d)
        q = self.q(regions).view(shape_r).transpose(-2, -3)   # [.., H, R, d]
        k = self.k(anchors).view(shape_a).transpose(-2, -3)   # [.., H, A, d]
        v = self.v(anchors).view(shape_a).transpose(-2, -3)
        scores = (q @ k.transpose(-1, -2)) / self.d ** 0.5    # [.., H, R, A]
        alpha = torch.softmax(scores, dim=-1)
        self.last_attention = alpha.detach()
        mixed = (alpha @ v).transpose(-2, -3)                 # [.., R, H, d]
        mixed = mixed.reshape(regions.shape)
        return torch.relu(regions + self.out(mixed))


@dataclass
class ModelDims:
    region_dim: int
    anchor_dim: int


class Localizer(nn.Module):
    """Embedding + optional conv stacks + anchor attention + scoring head."""

    def __init__(self, hp: Hyperparams, dims: ModelDims):
        super().__init__()
        if dims.region_dim < 1 or dims.anchor_dim < 1:
            raise ValueError("feature dimensions must be positive")
        hc = hp.hidden_channels
        kw = {"dtype": torch.float64}
        self.hp = hp
        self.dims = dims
        self.embed_region = nn.Linear(dims.region_dim, hc, **kw)
        self.embed_anchor = nn.Linear(dims.anchor_dim, hc, **kw)
        # Anchor features arrive in physical units (seconds, Hz); the
        # normalization constants are fit on the training set and travel with
        # the checkpoint as buffers.
        self.register_buffer("anchor_mean",
                             torch.zeros(dims.anchor_dim, dtype=torch.float64))
        self.register_buffer("anchor_std",
                             torch.ones(dims.anchor_dim, dtype=torch.float64))
        self.initial_convs = nn.ModuleList(
            RegionConv(hc, hp.conv_type) for _ in range(hp.initial_conv_layers))
        self.hgt = nn.ModuleList(
            AnchorAttention(hc, hp.attention_heads) for _ in range(hp.hgt_layers))
        self.final_convs = nn.ModuleList(
            RegionConv(hc, hp.conv_type) for _ in range(hp.final_conv_layers))
        self.head = nn.Linear(hc, 1, **kw)

    def forward(self, region_x: torch.Tensor, anchor_x: torch.Tensor,
                adjacency: torch.Tensor) -> torch.Tensor:
        """Returns one raw score per region node: [..., R]."""
        if region_x.shape[-1] != self.dims.region_dim:
            raise ValueError("region feature dimension mismatch")
        if anchor_x.shape[-1] != self.dims.anchor_dim:
            raise ValueError("anchor feature dimension mismatch")
        anchor_x = (anchor_x - self.anchor_mean) / self.anchor_std
        r = torch.relu(self.embed_region(region_x))
        a = torch.relu(self.embed_anchor(anchor_x))
        for conv in self.initial_convs:
            r = conv(r, adjacency)
        for layer in self.hgt:
            r = layer(r, a)
        for conv in self.final_convs:
            r = conv(r, adjacency)
        return self.head(r).squeeze(-1)

    def set_normalization(self, mean: torch.Tensor, std: torch.Tensor) -> None:
        self.anchor_mean.copy_(mean)
        self.anchor_std.copy_(torch.clamp(std, min=1e-8))

    def scores(self, region_x, anchor_x, adjacency) -> torch.Tensor:
        """Per-region sigmoid scores for inference-time consumers."""
        return torch.sigmoid(self.forward(region_x, anchor_x, adjacency))

    def attention_maps(self) -> list[torch.Tensor]:
        maps = []
        for module in (*self.initial_convs, *self.hgt, *self.final_convs):
            if module.last_attention is not None:
                maps.append(module.last_attention)
        return maps


def build_model(hp: Hyperparams, dims: ModelDims, seed: int = 0) -> Localizer:
    torch.manual_seed(seed)
    return Localizer(hp, dims)


class AnchorBitClassifier(nn.Module):
    """Feed-forward event-presence classifier for an extra anchor's features."""

    def __init__(self, anchor_dim: int, hidden: int = 32):
        super().__init__()
        kw = {"dtype": torch.float64}
        self.net = nn.Sequential(
            nn.Linear(anchor_dim, hidden, **kw), nn.ReLU(),
            nn.Linear(hidden, 2, **kw))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features)

    def predict_bit(self, features: torch.Tensor) -> int:
        with torch.no_grad():
            return int(self.forward(features).argmax(dim=-1).item())
