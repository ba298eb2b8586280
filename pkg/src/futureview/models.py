"""View synthesis networks and their multi-step composition.

Two networks cover the two sources of image change:

* ``SpatialNet`` re-renders the scene from the pose reached by applying a
  velocity command for one sampling period (camera motion only).  The
  command is concatenated to the bottleneck vector, and by default the
  decoder emits a flow field used to resample the input image.
* ``DynamicsNet`` advances moving objects by one sampling period at a fixed
  pose.  It sees the previous and current frames stacked, and by default
  emits one flow per frame plus a softmax mask pair that alpha-blends the
  two warped frames.

``predict_step`` composes them: align previous and current frames to the
next pose with the spatial net (twice on the previous frame, once on the
current one), then let the dynamics net extrapolate object motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import torch
import torch.nn as nn

from .core import Twist
from .imaging import alpha_blend, bilinear_sample, identity_grid

# normalization of the 2-d command before it enters the bottleneck
V_NORM = 0.5  # m/s, the robot's maximum linear speed
W_NORM = 1.0  # rad/s, twice the base angular step


@dataclass(frozen=True)
class BackboneConfig:
    kind: str = "encoder-decoder"  # or "skip-connected"
    use_sampling: bool = True
    use_merge: bool = True  # dynamics net only
    latent_dim: int = 512
    input_size: int = 128
    base_channels: int = 64

    def validate(self) -> None:
        if self.kind not in ("encoder-decoder", "skip-connected"):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if self.latent_dim <= 0:
            raise ValueError("latent_dim must be positive")
        s = self.input_size
        if s < 32 or (s & (s - 1)) != 0:
            raise ValueError(f"input_size must be a power of two >= 32, got {s}")
        if self.use_merge and not self.use_sampling:
            raise ValueError("merge heads require sampling")

    @property
    def n_down(self) -> int:
        return int(math.log2(self.input_size)) - 2

    @property
    def channels(self) -> list[int]:
        return [min(self.base_channels * 2**i, self.latent_dim) for i in range(self.n_down)]


def _twists_tensor(twist, batch: int, dtype, device) -> torch.Tensor:
    if isinstance(twist, Twist):
        twist = [twist] * batch
    if len(twist) != batch:
        raise ValueError(f"got {len(twist)} twists for batch of {batch}")
    vals = [[t.v / V_NORM, t.w / W_NORM] for t in twist]
    return torch.tensor(vals, dtype=dtype, device=device)


class _Backbone(nn.Module):
    """Strided conv encoder to a flat latent, mirrored transposed-conv decoder.

    ``cond_dim`` extra scalars are concatenated to the latent before
    decoding.  With kind "skip-connected" every encoder level feeds the
    matching decoder level (U-net style); "encoder-decoder" omits the skips.
    """

    def __init__(self, config: BackboneConfig, in_channels: int, out_channels: int, cond_dim: int):
        super().__init__()
        config.validate()
        self.config = config
        self.cond_dim = cond_dim
        self.skip = config.kind == "skip-connected"
        chs = config.channels
        downs = []
        prev = in_channels
        for ch in chs:
            downs.append(nn.Conv2d(prev, ch, 4, 2, 1))
            prev = ch
        self.downs = nn.ModuleList(downs)
        self.to_latent = nn.Conv2d(chs[-1], config.latent_dim, 4, 1, 0)
        self.from_latent = nn.ConvTranspose2d(config.latent_dim + cond_dim, chs[-1], 4, 1, 0)
        ups = []
        for j in range(len(chs)):
            in_ch = chs[-1 - j] * (2 if self.skip else 1)
            out_ch = chs[-2 - j] if j < len(chs) - 1 else config.base_channels
            ups.append(nn.ConvTranspose2d(in_ch, out_ch, 4, 2, 1))
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(config.base_channels, out_channels, 3, 1, 1)
        # heads start at zero so flow outputs begin at the identity warp
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)
        self.act_down = nn.LeakyReLU(0.2)
        self.act_up = nn.ReLU()

    def forward(self, x: torch.Tensor, cond: torch.Tensor | None = None) -> torch.Tensor:
        if x.shape[-1] != self.config.input_size or x.shape[-2] != self.config.input_size:
            raise ValueError(
                f"expected {self.config.input_size}x{self.config.input_size} input, "
                f"got {x.shape[-2]}x{x.shape[-1]}"
            )
        feats = []
        for down in self.downs:
            x = self.act_down(down(x))
            feats.append(x)
        z = self.act_down(self.to_latent(x))  # (B, latent, 1, 1)
        if self.cond_dim:
            if cond is None:
                raise ValueError("this backbone needs a conditioning vector")
            z = torch.cat([z, cond[:, :, None, None].to(z.dtype)], dim=1)
        y = self.act_up(self.from_latent(z))
        for j, up in enumerate(self.ups):
            if self.skip:
                y = torch.cat([y, feats[-1 - j]], dim=1)
            y = self.act_up(up(y))
        return self.head(y)


@dataclass
class SNetOutput:
    predicted: torch.Tensor
    flow: torch.Tensor | None


@dataclass
class DNetOutput:
    predicted: torch.Tensor
    flow_p: torch.Tensor | None
    flow_c: torch.Tensor | None
    mask_p: torch.Tensor | None
    mask_c: torch.Tensor | None


class SpatialNet(nn.Module):
    """Predicts the view after executing a twist for one sampling period."""

    MODEL_KIND = "snet"

    def __init__(self, config: BackboneConfig):
        super().__init__()
        out_ch = 2 if config.use_sampling else 3
        self.net = _Backbone(config, in_channels=3, out_channels=out_ch, cond_dim=2)
        self.config = config
        grid = identity_grid(config.input_size, config.input_size)
        self.register_buffer("id_grid", grid.unsqueeze(0), persistent=False)

    def forward(self, image: torch.Tensor, cond: torch.Tensor):
        raw = self.net(image, cond)
        if self.config.use_sampling:
            flow = self.id_grid.to(raw.dtype) + torch.tanh(raw)
            return bilinear_sample(image, flow), flow
        return torch.sigmoid(raw), None


class DynamicsNet(nn.Module):
    """Predicts the next frame at a fixed pose from two consecutive frames."""

    MODEL_KIND = "dnet"

    def __init__(self, config: BackboneConfig):
        super().__init__()
        if config.use_sampling:
            out_ch = 6 if config.use_merge else 2
        else:
            out_ch = 3
        self.net = _Backbone(config, in_channels=6, out_channels=out_ch, cond_dim=0)
        self.config = config
        grid = identity_grid(config.input_size, config.input_size)
        self.register_buffer("id_grid", grid.unsqueeze(0), persistent=False)

    def forward(self, prev: torch.Tensor, cur: torch.Tensor) -> DNetOutput:
        raw = self.net(torch.cat([prev, cur], dim=1))
        if not self.config.use_sampling:
            return DNetOutput(torch.sigmoid(raw), None, None, None, None)
        grid = self.id_grid.to(raw.dtype)
        if not self.config.use_merge:
            flow_c = grid + torch.tanh(raw)
            return DNetOutput(bilinear_sample(cur, flow_c), None, flow_c, None, None)
        flow_p = grid + torch.tanh(raw[:, 0:2])
        flow_c = grid + torch.tanh(raw[:, 2:4])
        masks = torch.softmax(raw[:, 4:6], dim=1)
        mask_p, mask_c = masks[:, 0], masks[:, 1]
        warped_p = bilinear_sample(prev, flow_p)
        warped_c = bilinear_sample(cur, flow_c)
        return DNetOutput(
            alpha_blend(warped_p, warped_c, mask_p, mask_c), flow_p, flow_c, mask_p, mask_c
        )


def build_snet(config: BackboneConfig) -> SpatialNet:
    config.validate()
    return SpatialNet(config)


def build_dnet(config: BackboneConfig) -> DynamicsNet:
    config.validate()
    return DynamicsNet(config)


def _batched_img(img: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if img.dim() == 3:
        return img.unsqueeze(0), True
    if img.dim() == 4:
        return img, False
    raise ValueError(f"expected (3,H,W) or (B,3,H,W), got {tuple(img.shape)}")


def snet_forward(model: SpatialNet, image: torch.Tensor, twist) -> SNetOutput:
    """Run the spatial net on one image (or a batch) under a twist command."""
    img, squeeze = _batched_img(image)
    cond = _twists_tensor(twist, img.shape[0], img.dtype, img.device)
    pred, flow = model(img, cond)
    if squeeze:
        pred = pred.squeeze(0)
        flow = flow.squeeze(0) if flow is not None else None
    return SNetOutput(pred, flow)


def dnet_forward(model: DynamicsNet, img_prev: torch.Tensor, img_cur: torch.Tensor) -> DNetOutput:
    if img_prev.shape != img_cur.shape:
        raise ValueError(
            f"frame shapes differ: {tuple(img_prev.shape)} vs {tuple(img_cur.shape)}"
        )
    prev, squeeze = _batched_img(img_prev)
    cur, _ = _batched_img(img_cur)
    out = model(prev, cur)
    if squeeze:
        out = DNetOutput(
            out.predicted.squeeze(0),
            None if out.flow_p is None else out.flow_p.squeeze(0),
            None if out.flow_c is None else out.flow_c.squeeze(0),
            None if out.mask_p is None else out.mask_p.squeeze(0),
            None if out.mask_c is None else out.mask_c.squeeze(0),
        )
    return out


def predict_step(
    snet: SpatialNet,
    dnet: DynamicsNet,
    img_prev: torch.Tensor,
    img_cur: torch.Tensor,
    twist_prev,
    twist_virtual,
) -> torch.Tensor:
    """One composed prediction step: next frame at the next pose.

    Spatial alignment first: the previous frame is warped twice (executed
    twist, then the virtual one) and the current frame once (virtual twist),
    so both line up with the next pose.  The dynamics net then advances the
    moving objects by one period.
    """
    prev_now = snet_forward(snet, img_prev, twist_prev).predicted
    prev_next = snet_forward(snet, prev_now, twist_virtual).predicted
    cur_next = snet_forward(snet, img_cur, twist_virtual).predicted
    return dnet_forward(dnet, prev_next, cur_next).predicted


def rollout(
    snet: SpatialNet,
    dnet: DynamicsNet,
    img_prev: torch.Tensor,
    img_cur: torch.Tensor,
    twist_prev,
    twists: Sequence,
) -> list[torch.Tensor]:
    """Iterate ``predict_step``, feeding predictions back as inputs.

    ``twists[i]`` is the virtual command for step i+1; returns one predicted
    frame per twist.
    """
    if len(twists) == 0:
        raise ValueError("rollout needs at least one twist")
    prev, cur, last = img_prev, img_cur, twist_prev
    outs = []
    for tw in twists:
        pred = predict_step(snet, dnet, prev, cur, last, tw)
        outs.append(pred)
        prev, cur, last = cur, pred, tw
    return outs


def snet_only_step(snet: SpatialNet, img_cur: torch.Tensor, twist_virtual) -> torch.Tensor:
    """Ablation path: predict the next frame with the spatial net alone."""
    return snet_forward(snet, img_cur, twist_virtual).predicted


def snet_only_rollout(
    snet: SpatialNet, img_cur: torch.Tensor, twists: Sequence
) -> list[torch.Tensor]:
    if len(twists) == 0:
        raise ValueError("rollout needs at least one twist")
    cur = img_cur
    outs = []
    for tw in twists:
        cur = snet_only_step(snet, cur, tw)
        outs.append(cur)
    return outs


def config_to_dict(config: BackboneConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> BackboneConfig:
    return BackboneConfig(**d)
