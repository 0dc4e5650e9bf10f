"""Finite-difference checks of every layer op and of both adversarial losses, in float64."""
from __future__ import annotations

import time
from dataclasses import dataclass

import torch

from .models import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, assemble_fake_sequence, context_of
from .nn import ConvLSTMState, conv2d, conv3d, convlstm_step, deconv2d, elu, grad_check
from .training import discriminator_loss, generator_loss

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _leaf(gen: torch.Generator, *shape) -> torch.Tensor:
    return torch.randn(*shape, generator=gen, dtype=torch.float64).requires_grad_(True)


def _weighted_sum(gen: torch.Generator, like: torch.Tensor) -> torch.Tensor:
    # a fixed random projection makes the scalar depend on every output element
    return torch.randn(like.shape, generator=gen, dtype=torch.float64)


def check_conv2d(gen):
    x, w, b = _leaf(gen, 2, 3, 7, 6), _leaf(gen, 4, 3, 3, 3), _leaf(gen, 4)
    proj = _weighted_sum(gen, conv2d(x, w, b, 2))
    return grad_check(lambda: (conv2d(x, w, b, 2) * proj).sum(), [x, w, b])


def check_deconv2d(gen):
    x, w, b = _leaf(gen, 2, 3, 4, 5), _leaf(gen, 3, 2, 5, 5), _leaf(gen, 2)
    proj = _weighted_sum(gen, deconv2d(x, w, b, 2))
    return grad_check(lambda: (deconv2d(x, w, b, 2) * proj).sum(), [x, w, b])


def check_conv3d(gen):
    x, w, b = _leaf(gen, 1, 2, 5, 6, 6), _leaf(gen, 3, 2, 3, 3, 3), _leaf(gen, 3)
    proj = _weighted_sum(gen, conv3d(x, w, b, (1, 2, 2)))
    return grad_check(lambda: (conv3d(x, w, b, (1, 2, 2)) * proj).sum(), [x, w, b])


def check_elu_stack(gen):
    x, w1, w2 = _leaf(gen, 1, 2, 6, 6), _leaf(gen, 3, 2, 3, 3), _leaf(gen, 2, 3, 3, 3)
    b1, b2 = _leaf(gen, 3), _leaf(gen, 2)
    f = lambda: elu(conv2d(elu(conv2d(x, w1, b1)), w2, b2, 2))
    proj = _weighted_sum(gen, f())
    return grad_check(lambda: (f() * proj).sum(), [x, w1, b1, w2, b2])


def check_convlstm(gen):
    cin, hid = 2, 3
    x = _leaf(gen, 1, cin, 4, 4)
    h, c = _leaf(gen, 1, hid, 4, 4), _leaf(gen, 1, hid, 4, 4)
    w = (0.5 * torch.randn(4 * hid, cin + hid, 3, 3, generator=gen, dtype=torch.float64)).requires_grad_(True)
    b = _leaf(gen, 4 * hid)
    proj = _weighted_sum(gen, h)

    def f():
        s = convlstm_step(x, ConvLSTMState(h, c), w, b)
        return (s.h * proj).sum() + (s.c * proj).sum()

    return grad_check(f, [x, h, c, w, b])


def _desk_models(gen):
    torch.manual_seed(int(torch.randint(0, 2**31, (1,), generator=gen)))
    g = Generator(GeneratorConfig(input_size=16, base_channels=2)).double()
    d = Discriminator(DiscriminatorConfig(input_size=16, base_channels=2)).double()
    seq = torch.rand(2, 11, 1, 16, 16, generator=gen, dtype=torch.float64) * 2 - 1
    return g, d, seq


def check_generator_loss(gen, directions: int = 3):
    g, d, seq = _desk_models(gen)
    ctx, real = context_of(seq), seq[:, 5]

    def f():
        out = g(ctx)
        return generator_loss(d(assemble_fake_sequence(ctx, out)), out, real, lam=1.0)

    return grad_check(f, list(g.parameters()), eps=1e-4, directions=directions)


def check_discriminator_loss(gen, directions: int = 3):
    g, d, seq = _desk_models(gen)
    ctx = context_of(seq)
    with torch.no_grad():
        fake = assemble_fake_sequence(ctx, g(ctx))
    return grad_check(lambda: discriminator_loss(d(seq), d(fake)), list(d.parameters()), eps=1e-4,
                      directions=directions)


CHECKS = {
    "conv2d": check_conv2d,
    "deconv2d": check_deconv2d,
    "conv3d": check_conv3d,
    "conv2d+elu": check_elu_stack,
    "convlstm_step": check_convlstm,
    "L_G (16x16)": check_generator_loss,
    "L_D (16x16)": check_discriminator_loss,
}


def run_suite(seed: int = 0) -> list[CheckResult]:
    results = []
    for i, (name, fn) in enumerate(CHECKS.items()):
        gen = torch.Generator().manual_seed(seed * 1000 + i)
        t0 = time.perf_counter()
        err = fn(gen)
        results.append(CheckResult(name, err, time.perf_counter() - t0))
    return results
