"""Differentiable warping and compositing primitives plus image-similarity metrics.

Conventions used throughout the package:

* In-memory model images are torch tensors of shape (C, H, W) or batched
  (B, C, H, W), float values in [0, 1].
* Flow fields hold *absolute* sampling coordinates, shape (2, H, W) (or
  batched), channel 0 = u (horizontal), channel 1 = v (vertical), both
  normalized so that (-1, -1) is the center of the top-left pixel and
  (+1, +1) the center of the bottom-right pixel.  Sampling with the
  identity grid is the identity map.  Coordinates outside [-1, 1] are
  clamped to the border.
* Metric helpers accept numpy arrays (H, W) or (H, W, C).
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import correlate1d

__all__ = [
    "identity_grid",
    "bilinear_sample",
    "alpha_blend",
    "l1_metric",
    "ssim",
    "to_tensor",
    "to_array",
]

MASK_SUM_TOL = 1e-6


def identity_grid(
    height: int,
    width: int,
    dtype: torch.dtype = torch.float32,
    device=None,
) -> torch.Tensor:
    """Canonical sampling mesh: grid[:, r, c] = (2c/(W-1)-1, 2r/(H-1)-1)."""
    if height < 2 or width < 2:
        raise ValueError(f"grid must be at least 2x2, got {height}x{width}")
    u = torch.linspace(-1.0, 1.0, width, dtype=dtype, device=device)
    v = torch.linspace(-1.0, 1.0, height, dtype=dtype, device=device)
    vv, uu = torch.meshgrid(v, u, indexing="ij")
    return torch.stack([uu, vv], dim=0)


def _batched(x: torch.Tensor, ndim: int) -> tuple[torch.Tensor, bool]:
    if x.dim() == ndim:
        return x.unsqueeze(0), True
    if x.dim() == ndim + 1:
        return x, False
    raise ValueError(f"expected {ndim}D or {ndim + 1}D tensor, got shape {tuple(x.shape)}")


def bilinear_sample(image: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Sample an image at the absolute coordinates held by a flow field.

    Each output pixel interpolates the 4 source neighbors around the flow
    coordinate; out-of-range coordinates clamp to the border.  Differentiable
    w.r.t. both the image values and the flow coordinates.  The output
    spatial size is the flow's.
    """
    img, squeeze = _batched(image, 3)
    flw, fsq = _batched(flow, 3)
    if flw.shape[1] != 2:
        raise ValueError(f"flow must have 2 channels, got {flw.shape[1]}")
    if squeeze != fsq:
        raise ValueError("image and flow must both be batched or both unbatched")
    if img.shape[0] != flw.shape[0]:
        raise ValueError(f"batch mismatch: image {img.shape[0]} vs flow {flw.shape[0]}")
    grid = flw.permute(0, 2, 3, 1)  # (B, H, W, 2), last dim = (u, v)
    out = F.grid_sample(
        img, grid.to(img.dtype), mode="bilinear", padding_mode="border", align_corners=True
    )
    return out.squeeze(0) if squeeze else out


def alpha_blend(
    img_p: torch.Tensor,
    img_c: torch.Tensor,
    w_p: torch.Tensor,
    w_c: torch.Tensor,
) -> torch.Tensor:
    """Convex per-pixel combination of two images under a paired mask.

    Masks are (H, W) or (B, H, W) and must sum to one at every pixel
    (within 1e-6); weights broadcast over channels.
    """
    if img_p.shape != img_c.shape:
        raise ValueError(f"image shapes differ: {tuple(img_p.shape)} vs {tuple(img_c.shape)}")
    if w_p.shape != w_c.shape:
        raise ValueError(f"mask shapes differ: {tuple(w_p.shape)} vs {tuple(w_c.shape)}")
    if w_p.shape[-2:] != img_p.shape[-2:]:
        raise ValueError("mask and image spatial sizes differ")
    with torch.no_grad():
        err = (w_p + w_c - 1.0).abs().max().item()
    if err > MASK_SUM_TOL:
        raise ValueError(f"mask pair does not sum to one (max deviation {err:.3g})")
    wp = w_p.unsqueeze(-3)  # broadcast over the channel axis
    wc = w_c.unsqueeze(-3)
    return wp * img_p + wc * img_c


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, C) float array in [0, 1] -> (C, H, W) tensor."""
    if img.ndim != 3:
        raise ValueError(f"expected (H, W, C) array, got shape {img.shape}")
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype)


def to_array(img: torch.Tensor) -> np.ndarray:
    """(C, H, W) tensor -> (H, W, C) float64 array."""
    if img.dim() != 3:
        raise ValueError(f"expected (C, H, W) tensor, got shape {tuple(img.shape)}")
    return img.detach().cpu().numpy().transpose(1, 2, 0).astype(np.float64)


def _as_metric_array(img) -> np.ndarray:
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    return np.asarray(img, dtype=np.float64)


def l1_metric(a, b) -> float:
    """Mean absolute per-pixel difference; in [0, 1] for unit-range images."""
    a = _as_metric_array(a)
    b = _as_metric_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _gaussian_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * SSIM_SIGMA**2))
    return k / k.sum()


_KERNEL = _gaussian_kernel()


def _filt(img: np.ndarray) -> np.ndarray:
    out = correlate1d(img, _KERNEL, axis=0, mode="nearest")
    return correlate1d(out, _KERNEL, axis=1, mode="nearest")


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    mu_a = _filt(a)
    mu_b = _filt(b)
    var_a = _filt(a * a) - mu_a**2
    var_b = _filt(b * b) - mu_b**2
    cov = _filt(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + _SSIM_C1) * (2 * cov + _SSIM_C2)) / (
        (mu_a**2 + mu_b**2 + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    )
    pad = SSIM_WINDOW // 2  # only windows fully inside the image count
    return float(np.mean(s[pad:-pad, pad:-pad]))


def ssim(a, b) -> float:
    """Mean structural similarity with an 11x11 Gaussian window, sigma 1.5.

    Stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2 for unit dynamic range.
    Channels of (H, W, C) inputs are scored independently and averaged.
    """
    a = _as_metric_array(a)
    b = _as_metric_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C) images, got shape {a.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"image {a.shape[0]}x{a.shape[1]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]))
