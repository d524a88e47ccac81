"""Fully convolutional grasp network with optional spatial attention blocks.

Layout: four downsampling convolutions (kernels 11, 5, 5, 5; max-pooling after
the second and third), two dilated 5x5 convolutions (dilation 2 and 4), two
stride-2 transposed convolutions, and four 1x1 heads. Overall stride is 4, so
the input side must be divisible by 4.

Convolutions zero-pad by default. With ``padding="circular"`` every layer,
including the transposed convolutions, wraps around instead, and the network
commutes exactly with circular shifts by multiples of the stride. On depth
frames with a flat background at the border this makes the predicted maps
follow a translated object exactly; zero padding only approximates that, since
the border signal travels through the large receptive field.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .geometry import width_unit
from .maps import ConfigMaps

CHECKPOINT_FORMAT = "mlgsl-checkpoint/1"
SAM_PLACEMENTS = ("none", "down", "up", "all")
PADDING_MODES = ("zeros", "circular", "replicate", "reflect")


@dataclass(frozen=True)
class ModelSpec:
    input_size: int = 300
    down_kernels: tuple[int, ...] = (11, 5, 5, 5)
    down_pool: tuple[bool, ...] = (False, True, True, False)
    dilated_kernels: tuple[int, ...] = (5, 5)
    dilations: tuple[int, ...] = (2, 4)
    up_kernel: int = 3
    up_stride: int = 2
    channel_widths: tuple[int, ...] = (16, 32, 32, 64, 64, 64, 32, 16)
    sam_placement: str = "none"
    sam_kernel: int = 7
    depth_scale: float = 10.0
    padding: str = "zeros"

    def __post_init__(self) -> None:
        for name in ("down_kernels", "down_pool", "dilated_kernels", "dilations", "channel_widths"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    @property
    def width_unit(self) -> float:
        """Pixels represented by a width-map value of 1 at this input size."""
        return width_unit(self.input_size)

    @property
    def n_up(self) -> int:
        return len(self.channel_widths) - len(self.down_kernels) - len(self.dilated_kernels)

    @property
    def stride(self) -> int:
        return 2 ** sum(self.down_pool)

    def validate(self) -> None:
        if not self.channel_widths or any(c < 1 for c in self.channel_widths):
            raise ValueError("channel_widths must be a non-empty list of positive ints")
        if len(self.down_pool) != len(self.down_kernels):
            raise ValueError("down_pool and down_kernels differ in length")
        if len(self.dilations) != len(self.dilated_kernels):
            raise ValueError("dilations and dilated_kernels differ in length")
        if self.n_up < 0:
            raise ValueError("channel_widths too short for the layer list")
        if self.up_stride ** self.n_up != self.stride:
            raise ValueError(f"upsampling factor {self.up_stride ** self.n_up} != pooling factor {self.stride}")
        if any(k % 2 == 0 for k in self.down_kernels + self.dilated_kernels + (self.sam_kernel,)):
            raise ValueError("kernel sizes must be odd")
        if self.sam_placement not in SAM_PLACEMENTS:
            raise ValueError(f"sam_placement must be one of {SAM_PLACEMENTS}")
        if self.padding not in PADDING_MODES:
            raise ValueError(f"padding must be one of {PADDING_MODES}")
        if self.input_size < 1 or self.input_size % self.stride:
            raise ValueError(f"input_size must be a positive multiple of {self.stride}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)

    def sam_slots(self) -> list[bool]:
        """Which of the backbone layers (down, dilated, up) are followed by attention."""
        n_down, n_dil = len(self.down_kernels), len(self.dilated_kernels)
        kinds = ["down"] * n_down + ["dil"] * n_dil + ["up"] * self.n_up
        p = self.sam_placement
        return [p == "all" or p == k for k in kinds]


class SpatialAttention(nn.Module):
    """Channel-wise max and mean pooled to two maps, convolved into a [0, 1] mask."""

    def __init__(self, kernel_size: int = 7, padding_mode: str = "zeros"):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=False, padding_mode=padding_mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mx, _ = x.max(dim=1, keepdim=True)
        avg = x.mean(dim=1, keepdim=True)
        return x * torch.sigmoid(self.conv(torch.cat([mx, avg], dim=1)))


class WrapConvTranspose2d(nn.ConvTranspose2d):
    """Transposed convolution whose input wraps around like a circularly padded one.

    Same parameters and, away from the border, the same output as
    ``nn.ConvTranspose2d(..., padding=k // 2, output_padding=stride - 1)``.
    """

    def __init__(self, c_in: int, c_out: int, kernel_size: int, stride: int):
        super().__init__(c_in, c_out, kernel_size, stride=stride)
        self.wrap = -(-kernel_size // stride)  # input pixels borrowed from the opposite side

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        p, s, k = self.wrap, self.stride[0], self.kernel_size[0]
        h, w = x.shape[-2:]
        y = super().forward(F.pad(x, (p, p, p, p), mode="circular"))
        r0 = p * s + k // 2
        return y[..., r0 : r0 + s * h, r0 : r0 + s * w]


def sam_block(features: torch.Tensor, block: SpatialAttention | None = None) -> torch.Tensor:
    return (block or SpatialAttention())(features)


class GraspNet(nn.Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        cw = spec.channel_widths
        pm = spec.padding
        layers: list[nn.Module] = []
        c_in = 1
        i = 0
        for k, pool in zip(spec.down_kernels, spec.down_pool):
            block = [nn.Conv2d(c_in, cw[i], k, padding=k // 2, padding_mode=pm), nn.ReLU()]
            if pool:
                block.append(nn.MaxPool2d(2))
            layers.append(nn.Sequential(*block))
            c_in = cw[i]
            i += 1
        for k, d in zip(spec.dilated_kernels, spec.dilations):
            layers.append(nn.Sequential(nn.Conv2d(c_in, cw[i], k, padding=d * (k // 2), dilation=d, padding_mode=pm), nn.ReLU()))
            c_in = cw[i]
            i += 1
        for _ in range(spec.n_up):
            s, k = spec.up_stride, spec.up_kernel
            if pm == "circular":
                up = WrapConvTranspose2d(c_in, cw[i], k, s)
            else:
                up = nn.ConvTranspose2d(c_in, cw[i], k, stride=s, padding=k // 2, output_padding=s - 1)
            layers.append(nn.Sequential(up, nn.ReLU()))
            c_in = cw[i]
            i += 1
        self.layers = nn.ModuleList(layers)
        self.attention = nn.ModuleDict(
            {str(j): SpatialAttention(spec.sam_kernel, pm) for j, on in enumerate(spec.sam_slots()) if on}
        )
        self.q_head = nn.Conv2d(c_in, 1, 1)
        self.sin_head = nn.Conv2d(c_in, 1, 1)
        self.cos_head = nn.Conv2d(c_in, 1, 1)
        self.width_head = nn.Conv2d(c_in, 1, 1)

    def forward(self, x: torch.Tensor) -> ConfigMaps:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        for j, layer in enumerate(self.layers):
            x = layer(x)
            if str(j) in self.attention:
                x = self.attention[str(j)](x)
        return ConfigMaps(
            torch.sigmoid(self.q_head(x))[:, 0],
            torch.tanh(self.sin_head(x))[:, 0],
            torch.tanh(self.cos_head(x))[:, 0],
            torch.sigmoid(self.width_head(x))[:, 0],
        )


def parameter_count(spec: ModelSpec) -> int:
    """Closed-form trainable parameter count of ``GraspNet(spec)``."""
    cw = spec.channel_widths
    kernels = list(spec.down_kernels) + list(spec.dilated_kernels) + [spec.up_kernel] * spec.n_up
    total, c_in = 0, 1
    for k, c in zip(kernels, cw):
        total += c_in * c * k * k + c
        c_in = c
    total += 2 * spec.sam_kernel**2 * sum(spec.sam_slots())
    total += 4 * (c_in + 1)
    return total


def build(spec: ModelSpec, seed: int = 0) -> GraspNet:
    """Network with He-uniform weights and zero biases drawn from ``seed``."""
    spec.validate()
    net = GraspNet(spec)
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                nn.init.kaiming_uniform_(p, nonlinearity="relu", generator=g)
    return net


def normalize_depth(depth: np.ndarray, depth_scale: float) -> np.ndarray:
    d = np.asarray(depth, dtype=np.float32)
    if not np.all(np.isfinite(d)):
        raise ValueError("depth image has non-finite values; inpaint first")
    return np.clip((d - d.mean()) * depth_scale, -1.0, 1.0)


def prepare_batch(depths, spec: ModelSpec) -> torch.Tensor:
    arr = np.stack([normalize_depth(d, spec.depth_scale) for d in depths])
    if arr.shape[1:] != (spec.input_size, spec.input_size):
        raise ValueError(f"expected {spec.input_size}x{spec.input_size} images, got {arr.shape[1:]}")
    return torch.from_numpy(arr).unsqueeze(1)


@torch.no_grad()
def forward(model: GraspNet, depth: np.ndarray) -> ConfigMaps:
    """Predict the configuration maps of one depth image (numpy out)."""
    model.eval()
    out = model(prepare_batch([depth], model.spec))
    return out[0].numpy()


@torch.no_grad()
def predict_batch(model: GraspNet, depths, batch_size: int = 16) -> list[ConfigMaps]:
    model.eval()
    out = []
    for i in range(0, len(depths), batch_size):
        maps = model(prepare_batch(depths[i : i + batch_size], model.spec)).numpy()
        out.extend(maps[j] for j in range(maps.q.shape[0]))
    return out


def spec_hash(spec: ModelSpec) -> str:
    return hashlib.sha256(json.dumps(spec.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def save(model: GraspNet, path, optimizer: torch.optim.Optimizer | None = None, config_hash: str | None = None, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "spec": model.spec.to_dict(),
        "state_dict": model.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "config_hash": config_hash,
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, expected_spec: ModelSpec | None = None) -> tuple[GraspNet, dict]:
    """Rebuild the network stored at ``path``; returns ``(model, raw payload)``."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    spec = ModelSpec.from_dict(payload["spec"])
    if expected_spec is not None and spec != expected_spec:
        a, b = spec.to_dict(), expected_spec.to_dict()
        diff = {k: (a[k], b[k]) for k in a if a[k] != b[k]}
        raise ValueError(f"checkpoint spec differs from expected (stored, expected): {diff}")
    model = GraspNet(spec)
    model.load_state_dict(payload["state_dict"])
    return model, payload


def load(path, expected_spec: ModelSpec | None = None) -> GraspNet:
    return load_checkpoint(path, expected_spec)[0]
