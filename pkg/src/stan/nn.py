"""Layer primitives with fixed padding conventions.

Tensors use PyTorch's channel-first layout: frames are ``(N, C, H, W)`` and
volumes are ``(N, C, L, H, W)``. Spatial padding is always "same"
(``out = ceil(in / stride)``), temporal padding is always "valid".
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

ELU_ALPHA = 1.0


def _check_stride(stride: Sequence[int]) -> None:
    if any(s < 1 for s in stride):
        raise ValueError(f"stride components must be >= 1, got {tuple(stride)}")


def _same_pad(k: int) -> int:
    if k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    return (k - 1) // 2


def _as_pair(v: int | Sequence[int]) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else (int(v[0]), int(v[1]))


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int | Sequence[int] = 1) -> Tensor:
    """Cross-correlation with "same" padding. ``weight`` is ``(C_out, C_in, kh, kw)``."""
    stride = _as_pair(stride)
    _check_stride(stride)
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {weight.shape[1]}")
    pad = (_same_pad(weight.shape[2]), _same_pad(weight.shape[3]))
    return F.conv2d(x, weight, bias, stride=stride, padding=pad)


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int | Sequence[int] = 1) -> Tensor:
    """Transposed convolution, exact adjoint of :func:`conv2d` (bias aside).

    ``weight`` is ``(C_in, C_out, kh, kw)``; output spatial size is ``in * stride``.
    """
    stride = _as_pair(stride)
    _check_stride(stride)
    if x.shape[1] != weight.shape[0]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {weight.shape[0]}")
    pad = (_same_pad(weight.shape[2]), _same_pad(weight.shape[3]))
    out_pad = (stride[0] - 1, stride[1] - 1)
    return F.conv_transpose2d(x, weight, bias, stride=stride, padding=pad, output_padding=out_pad)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: Sequence[int] = (1, 1, 1)) -> Tensor:
    """3D cross-correlation: "valid" along time, "same" in space.

    ``x`` is ``(N, C, L, H, W)``, ``weight`` is ``(C_out, C_in, kd, kh, kw)``.
    """
    stride = tuple(int(s) for s in stride)
    _check_stride(stride)
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {weight.shape[1]}")
    kd = weight.shape[2]
    if kd > x.shape[2]:
        raise ValueError(f"temporal kernel {kd} longer than input length {x.shape[2]}")
    pad = (0, _same_pad(weight.shape[3]), _same_pad(weight.shape[4]))
    return F.conv3d(x, weight, bias, stride=stride, padding=pad)


def elu(x: Tensor) -> Tensor:
    return F.elu(x, alpha=ELU_ALPHA)


class _GuidedELU(torch.autograd.Function):
    """ELU whose backward pass also drops negative upstream gradients."""

    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return F.elu(x, alpha=ELU_ALPHA)

    @staticmethod
    def backward(ctx, grad_out):
        (x,) = ctx.saved_tensors
        local = torch.where(x > 0, torch.ones_like(x), ELU_ALPHA * torch.exp(x))
        return grad_out.clamp(min=0) * local


def guided_elu(x: Tensor) -> Tensor:
    return _GuidedELU.apply(x)


def glorot_uniform_(w: Tensor, fan_in: int, fan_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        return w.uniform_(-bound, bound)


class Conv2d(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1):
        super().__init__()
        self.stride = _as_pair(stride)
        _check_stride(self.stride)
        self.weight = nn.Parameter(torch.empty(c_out, c_in, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(c_out))
        glorot_uniform_(self.weight, c_in * kernel * kernel, c_out * kernel * kernel)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride)


class Deconv2d(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1):
        super().__init__()
        self.stride = _as_pair(stride)
        _check_stride(self.stride)
        self.weight = nn.Parameter(torch.empty(c_in, c_out, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(c_out))
        glorot_uniform_(self.weight, c_in * kernel * kernel, c_out * kernel * kernel)

    def forward(self, x: Tensor) -> Tensor:
        return deconv2d(x, self.weight, self.bias, self.stride)


class Conv3d(nn.Module):
    def __init__(self, c_in: int, c_out: int, kernel: Sequence[int], stride: Sequence[int]):
        super().__init__()
        kd, kh, kw = kernel
        self.stride = tuple(stride)
        _check_stride(self.stride)
        self.weight = nn.Parameter(torch.empty(c_out, c_in, kd, kh, kw))
        self.bias = nn.Parameter(torch.zeros(c_out))
        vol = kd * kh * kw
        glorot_uniform_(self.weight, c_in * vol, c_out * vol)

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.stride)


class ConvLSTMState(NamedTuple):
    h: Tensor
    c: Tensor


def convlstm_step(x: Tensor, state: ConvLSTMState, weight: Tensor, bias: Tensor) -> ConvLSTMState:
    """One ConvLSTM update without peephole terms.

    All four gates come from a single 3x3 convolution over ``[x, h]``; the
    output channels of ``weight`` are ordered (input, forget, output, candidate).
    """
    h, c = state
    if h.shape != c.shape:
        raise ValueError(f"hidden {tuple(h.shape)} and cell {tuple(c.shape)} shapes differ")
    if x.shape[-2:] != h.shape[-2:]:
        raise ValueError(f"input spatial size {tuple(x.shape[-2:])} != state {tuple(h.shape[-2:])}")
    gates = conv2d(torch.cat([x, h], dim=1), weight, bias)
    i, f, o, g = gates.chunk(4, dim=1)
    c_next = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h_next = torch.sigmoid(o) * torch.tanh(c_next)
    return ConvLSTMState(h_next, c_next)


class ConvLSTMCell(nn.Module):
    def __init__(self, c_in: int, c_hidden: int, kernel: int = 3, forget_bias: float = 1.0):
        super().__init__()
        self.c_in = c_in
        self.c_hidden = c_hidden
        self.weight = nn.Parameter(torch.empty(4 * c_hidden, c_in + c_hidden, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(4 * c_hidden))
        area = kernel * kernel
        glorot_uniform_(self.weight, (c_in + c_hidden) * area, c_hidden * area)
        with torch.no_grad():
            self.bias[c_hidden:2 * c_hidden].fill_(forget_bias)

    def zero_state(self, x: Tensor) -> ConvLSTMState:
        n, _, hh, ww = x.shape
        z = x.new_zeros(n, self.c_hidden, hh, ww)
        return ConvLSTMState(z, z.clone())

    def forward(self, x: Tensor, state: ConvLSTMState | None = None) -> ConvLSTMState:
        if state is None:
            state = self.zero_state(x)
        return convlstm_step(x, state, self.weight, self.bias)


def _rel_err(ana: float, num: float) -> float:
    return abs(ana - num) / max(abs(ana), abs(num), 1e-8)


def _value(fn: Callable[[], Tensor]) -> float:
    v = fn().item()
    if not math.isfinite(v):
        raise FloatingPointError("function value is not finite under perturbation")
    return v


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
    directions: int | None = None,
) -> float:
    """Largest relative gap between autograd and finite differences.

    ``fn`` takes no arguments and evaluates a scalar from the current values
    of ``params`` (leaf tensors, normally float64). The error is
    ``|a - n| / max(|a|, |n|, 1e-8)``.

    By default every coordinate is probed with central differences (or
    ``max_coords`` random coordinates per tensor). With ``directions=n`` each
    tensor is instead probed along ``n`` random unit directions using a
    five-point stencil, which stays above the float64 noise floor when ``fn``
    is large and individual partials are tiny.
    """
    params = list(params)
    out = fn()
    if out.numel() != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    if not torch.isfinite(out).all():
        raise FloatingPointError("function value is not finite")
    analytic = torch.autograd.grad(out, params, allow_unused=True)
    analytic = [torch.zeros_like(p) if g is None else g for p, g in zip(params, analytic)]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, analytic):
            if directions is not None:
                base = p.detach().clone()
                for _ in range(directions):
                    v = torch.from_numpy(rng.choice([-1.0, 1.0], size=tuple(p.shape))).to(p.dtype)
                    v /= v.norm()

                    def at(step):
                        p.copy_(base + step * eps * v)
                        return _value(fn)

                    num = (8 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12 * eps)
                    p.copy_(base)
                    worst = max(worst, _rel_err((g * v).sum().item(), num))
                continue
            flat = p.view(-1)
            gflat = g.reshape(-1)
            n = flat.numel()
            idx = rng.choice(n, size=max_coords, replace=False) if max_coords is not None and n > max_coords else range(n)
            for j in idx:
                orig = flat[j].item()
                flat[j] = orig + eps
                fp = _value(fn)
                flat[j] = orig - eps
                fm = _value(fn)
                flat[j] = orig
                worst = max(worst, _rel_err(gflat[j].item(), (fp - fm) / (2 * eps)))
    return worst
