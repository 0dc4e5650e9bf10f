"""Adversarial losses and the two-phase training protocol.

Phase one fits the generator to the pixel loss alone. Phase two alternates
one discriminator step and one generator step per batch.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import Tensor

from .data import Clip
from .models import Discriminator, Generator, assemble_fake_sequence, context_of, save_checkpoint
from .rng import stream

log = logging.getLogger(__name__)

EPS = 1e-6
LOG_HEADER = ["step", "l_real", "l_pixel", "L_G", "L_D"]


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 3
    lam: float = 1.0
    pretrain_steps: int = 3000
    pretrain_eval_every: int = 100
    pretrain_patience: int = 5
    adversarial_steps: int = 2000
    betas: tuple[float, float] = (0.9, 0.999)
    checkpoint_every: int = 500
    seed: int = 7

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError("betas must lie in [0, 1)")


@dataclass(frozen=True)
class LossReport:
    step: int
    l_real: float  # batch mean
    l_pixel: float  # batch mean
    L_G: float  # batch sum
    L_D: float  # batch sum


# --- losses ----------------------------------------------------------------

def _clamp(p: Tensor) -> Tensor:
    return p.clamp(EPS, 1 - EPS)


def realism_loss(patch_map: Tensor) -> Tensor:
    """Mean over the last two (patch) axes of ``-log D``."""
    return -torch.log(_clamp(patch_map)).mean(dim=(-2, -1))


def pixel_loss(generated: Tensor, real: Tensor) -> Tensor:
    """Euclidean norm of the difference over the last three ``(C, H, W)`` axes."""
    if generated.shape != real.shape:
        raise ValueError(f"shape mismatch: {tuple(generated.shape)} vs {tuple(real.shape)}")
    return torch.linalg.vector_norm(generated - real, dim=(-3, -2, -1))


def generator_loss(fake_maps: Tensor, generated: Tensor, real: Tensor, lam: float = 1.0) -> Tensor:
    if fake_maps.shape[0] == 0:
        raise ValueError("empty batch")
    return (realism_loss(fake_maps) + lam * pixel_loss(generated, real)).sum()


def discriminator_loss(real_maps: Tensor, fake_maps: Tensor) -> Tensor:
    if real_maps.shape != fake_maps.shape:
        raise ValueError(f"real/fake batch mismatch: {tuple(real_maps.shape)} vs {tuple(fake_maps.shape)}")
    if real_maps.shape[0] == 0:
        raise ValueError("empty batch")
    fake_term = -torch.log(1 - _clamp(fake_maps)).mean(dim=(-2, -1))
    real_term = -torch.log(_clamp(real_maps)).mean(dim=(-2, -1))
    return (fake_term + real_term).sum()


# --- batching --------------------------------------------------------------

class WindowSampler:
    """Draws ``(B, 2k+1, 1, H, W)`` real sequences uniformly over all windows.

    A window never crosses a clip boundary.
    """

    def __init__(self, clips: list[Clip], k: int = 5, seed: int = 0, name: str = "sampler"):
        self.clips = [c for c in clips if len(c) >= 2 * k + 1]
        if not self.clips:
            raise ValueError("no clip is long enough to hold a single window")
        self.k = k
        self.index = np.array([(ci, t) for ci, c in enumerate(self.clips) for t in range(k, len(c) - k)])
        self.rng = np.random.Generator(stream(seed, name))

    def __len__(self):
        return len(self.index)

    def batch_at(self, rows) -> Tensor:
        k = self.k
        seqs = [self.clips[ci].frames[t - k:t + k + 1] for ci, t in self.index[rows]]
        return torch.from_numpy(np.stack(seqs)[:, :, None].copy())

    def sample(self, batch_size: int) -> Tensor:
        return self.batch_at(self.rng.integers(0, len(self.index), batch_size))


def _split(seq: Tensor, k: int) -> tuple[Tensor, Tensor]:
    return context_of(seq, k), seq[:, k]


def _adam(params, config: TrainConfig):
    return torch.optim.Adam(params, lr=config.learning_rate, betas=config.betas)


def _check_finite(step: int, **values: float) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise DivergenceError(f"non-finite loss at step {step}: {bad}")


@torch.no_grad()
def heldout_pixel_loss(generator: Generator, batch: Tensor) -> float:
    k = generator.config.half_window
    ctx, real = _split(batch, k)
    return float(pixel_loss(generator(ctx), real).mean())


def pretrain_generator(generator: Generator, sampler: WindowSampler, config: TrainConfig,
                       heldout: Tensor | None = None, log_path: str | Path | None = None) -> list[tuple[int, float, float]]:
    """Fit the generator to the pixel loss alone.

    Stops after ``pretrain_steps`` or once the held-out loss has not improved
    for ``pretrain_patience`` consecutive evaluations. Returns
    ``(step, batch_loss, heldout_loss)`` rows, one per evaluation.
    """
    k = generator.config.half_window
    if heldout is None:
        heldout = sampler.sample(8)
    opt = _adam(generator.parameters(), config)
    history = []
    best, stale = math.inf, 0
    last = float("nan")
    generator.train()
    for step in range(1, config.pretrain_steps + 1):
        ctx, real = _split(sampler.sample(config.batch_size), k)
        loss = pixel_loss(generator(ctx), real).sum()
        opt.zero_grad()
        loss.backward()
        opt.step()
        last = loss.item() / config.batch_size
        _check_finite(step, l_pixel=last)
        if step % config.pretrain_eval_every == 0 or step == config.pretrain_steps:
            held = heldout_pixel_loss(generator, heldout)
            history.append((step, last, held))
            log.info("pretrain step %d  l_pixel %.4f  heldout %.4f", step, last, held)
            if held < best - 1e-6:
                best, stale = held, 0
            else:
                stale += 1
                if stale >= config.pretrain_patience:
                    log.info("pretrain plateau at step %d", step)
                    break
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "l_pixel", "heldout_l_pixel"])
            for row in history:
                w.writerow([row[0], repr(row[1]), repr(row[2])])
    return history


def adversarial_step(generator: Generator, discriminator: Discriminator, batch: Tensor,
                     opt_g, opt_d, lam: float, step: int) -> LossReport:
    """One discriminator update followed by one generator update on the same batch."""
    k = generator.config.half_window
    ctx, real = _split(batch, k)

    with torch.no_grad():
        fake_frame = generator(ctx)
    d_loss = discriminator_loss(discriminator(batch), discriminator(assemble_fake_sequence(ctx, fake_frame)))
    opt_d.zero_grad()
    d_loss.backward()
    opt_d.step()

    generated = generator(ctx)
    fake_maps = discriminator(assemble_fake_sequence(ctx, generated))
    l_real = realism_loss(fake_maps)
    l_pixel = pixel_loss(generated, real)
    g_loss = (l_real + lam * l_pixel).sum()
    opt_g.zero_grad()
    g_loss.backward()
    opt_g.step()

    report = LossReport(step, l_real.mean().item(), l_pixel.mean().item(), g_loss.item(), d_loss.item())
    _check_finite(step, l_real=report.l_real, l_pixel=report.l_pixel, L_G=report.L_G, L_D=report.L_D)
    return report


def adversarial_train(generator: Generator, discriminator: Discriminator, sampler: WindowSampler,
                      config: TrainConfig, log_path: str | Path | None = None,
                      ckpt_dir: str | Path | None = None) -> list[LossReport]:
    """Alternate discriminator and generator updates for ``adversarial_steps`` batches."""
    opt_g = _adam(generator.parameters(), config)
    opt_d = _adam(discriminator.parameters(), config)
    generator.train()
    discriminator.train()
    reports = []
    fh = writer = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_HEADER)
    try:
        for step in range(1, config.adversarial_steps + 1):
            r = adversarial_step(generator, discriminator, sampler.sample(config.batch_size),
                                 opt_g, opt_d, config.lam, step)
            reports.append(r)
            if writer is not None:
                writer.writerow([r.step, repr(r.l_real), repr(r.l_pixel), repr(r.L_G), repr(r.L_D)])
            if step % 100 == 0:
                log.info("adv step %d  l_real %.4f  l_pixel %.4f  L_D %.4f", step, r.l_real, r.l_pixel, r.L_D)
            if ckpt_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
                save_checkpoint(generator, Path(ckpt_dir) / "generator", generator.config)
                save_checkpoint(discriminator, Path(ckpt_dir) / "discriminator", discriminator.config)
    finally:
        if fh is not None:
            fh.close()
    return reports
