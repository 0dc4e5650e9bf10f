"""Localisation maps from the generator error and discriminator gradients."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import to_uint8
from .models import DISC_LAYERS, Discriminator


@dataclass
class Heatmap:
    values: np.ndarray  # (H, W), nonnegative

    @property
    def max_value(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def normalized(self) -> np.ndarray:
        m = self.max_value
        return self.values / m if m > 0 else np.zeros_like(self.values)


def _frame2d(x) -> np.ndarray:
    x = x.detach().cpu().numpy() if isinstance(x, torch.Tensor) else np.asarray(x)
    return x.reshape(x.shape[-2:]) if x.ndim > 2 else x


def error_map(generated, real) -> Heatmap:
    """Per-pixel absolute difference between a generated and a real frame."""
    g, r = np.asarray(_frame2d(generated), float), np.asarray(_frame2d(real), float)
    if g.shape != r.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {r.shape}")
    return Heatmap(np.abs(g - r))


def guided_backprop_map(seq, discriminator: Discriminator) -> Heatmap:
    """Guided-backprop saliency of the mean patch output w.r.t. a real sequence.

    ``seq`` is ``(11, 1, H, W)`` or ``(1, 11, 1, H, W)``. The gradient volume is
    reduced to one map by taking the per-pixel maximum magnitude over time.
    """
    x = torch.as_tensor(np.asarray(seq) if not isinstance(seq, torch.Tensor) else seq)
    x = x.to(next(discriminator.parameters()).dtype)
    if x.dim() == 4:
        x = x[None]
    x = x.detach().clone().requires_grad_(True)
    discriminator.eval()
    discriminator.zero_grad(set_to_none=True)
    out = discriminator(x, guided=True).mean()
    (grad,) = torch.autograd.grad(out, x)
    vol = grad[0, :, 0].abs()  # (T, H, W)
    return Heatmap(vol.max(dim=0).values.numpy().astype(np.float64))


def receptive_field_radius() -> int:
    """Spatial half-width of one output patch's receptive field in input pixels."""
    rf, jump = 1, 1
    for _, k, stride in DISC_LAYERS:
        rf += (k - 1) * jump
        jump *= stride
    return (rf - 1) // 2


def box_mask(shape, box, dilation: int = 0) -> np.ndarray:
    """Boolean mask of an inclusive ``(x0, y0, x1, y1)`` box grown by ``dilation`` pixels."""
    h, w = shape
    x0, y0, x1, y1 = box
    m = np.zeros((h, w), bool)
    m[max(y0 - dilation, 0):min(y1 + dilation, h - 1) + 1, max(x0 - dilation, 0):min(x1 + dilation, w - 1) + 1] = True
    return m


def mass_fraction(heatmap: Heatmap, mask: np.ndarray) -> float:
    total = heatmap.values.sum()
    return float(heatmap.values[mask].sum() / total) if total > 0 else 0.0


def contrast_ratio(heatmap: Heatmap, mask: np.ndarray) -> float:
    """Mean inside ``mask`` over mean outside it."""
    inside, outside = heatmap.values[mask].mean(), heatmap.values[~mask].mean()
    return float(inside / outside) if outside > 0 else float("inf")


def heatmap_to_uint8(heatmap: Heatmap) -> np.ndarray:
    return np.clip(np.rint(heatmap.normalized() * 255), 0, 255).astype(np.uint8)


def save_heatmap(heatmap: Heatmap, path: str | Path) -> None:
    """Max-normalised 8-bit grayscale image; an all-zero map is saved black."""
    Image.fromarray(heatmap_to_uint8(heatmap), mode="L").save(path)


def save_montage(real, generated, err: Heatmap, grad: Heatmap, path: str | Path) -> None:
    """real | generated | error map | gradient map, side by side."""
    tiles = [to_uint8(np.asarray(_frame2d(real))), to_uint8(np.asarray(_frame2d(generated))),
             heatmap_to_uint8(err), heatmap_to_uint8(grad)]
    Image.fromarray(np.concatenate(tiles, axis=1), mode="L").save(path)
