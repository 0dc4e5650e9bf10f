"""Per-frame abnormality loss and its normalised score."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .data import Clip, window_centers
from .models import Discriminator, Generator, context_of
from .training import pixel_loss, realism_loss


@dataclass
class ScoreSeries:
    clip_id: str
    pixel_term: np.ndarray  # reconstruction norm, one per frame
    disc_term: np.ndarray  # mean -log D over patches, one per frame
    lambda_s: float
    loss: np.ndarray  # combined abnormality loss
    score: np.ndarray  # normalised to [0, 1]

    def __len__(self):
        return len(self.score)


def abnormality_loss(pixel_term, disc_term, lambda_s: float):
    """Pixel term plus ``lambda_s`` times the discriminator term (``-mean log D``)."""
    return np.asarray(pixel_term, float) + lambda_s * np.asarray(disc_term, float)


def calibrate_lambda_s(pixel_terms, disc_terms) -> float:
    """Ratio of the two terms' maxima, divided by ten."""
    pixel_terms = np.asarray(pixel_terms, float)
    disc_terms = np.asarray(disc_terms, float)
    if pixel_terms.size == 0 or disc_terms.size == 0:
        raise ValueError("cannot calibrate on an empty series")
    d_max = np.abs(disc_terms).max()
    if d_max == 0:
        warnings.warn("discriminator term is zero everywhere; using lambda_s = 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(pixel_terms.max() / d_max / 10.0)


def normalize_scores(losses) -> np.ndarray:
    losses = np.asarray(losses, float)
    lo, hi = losses.min(), losses.max()
    if hi == lo:
        return np.zeros_like(losses)
    return (losses - lo) / (hi - lo)


@torch.no_grad()
def clip_terms(clip: Clip, generator: Generator, discriminator: Discriminator,
               batch_size: int = 16) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel and discriminator terms for every frame that has a full window.

    Returns ``(centers, pixel_terms, disc_terms)``.
    """
    k = generator.config.half_window
    centers = np.array(window_centers(len(clip), k))
    if len(centers) == 0:
        raise ValueError(f"clip {clip.clip_id} has {len(clip)} frames; at least {2 * k + 1} are needed")
    generator.eval()
    discriminator.eval()
    frames = torch.from_numpy(clip.frames)[:, None]
    pix, disc = [], []
    for i in range(0, len(centers), batch_size):
        seq = torch.stack([frames[t - k:t + k + 1] for t in centers[i:i + batch_size]])
        pix.append(pixel_loss(generator(context_of(seq, k)), seq[:, k]).double().numpy())
        disc.append(realism_loss(discriminator(seq)).double().numpy())
    return centers, np.concatenate(pix), np.concatenate(disc)


def _broadcast(centers: np.ndarray, values: np.ndarray, length: int) -> np.ndarray:
    """Give frames without a full window the value of the nearest scoreable frame."""
    idx = np.clip(np.arange(length), centers[0], centers[-1]) - centers[0]
    return values[idx]


def score_clip(clip: Clip, generator: Generator, discriminator: Discriminator,
               lambda_s: float | None = None) -> ScoreSeries:
    centers, pix, disc = clip_terms(clip, generator, discriminator)
    if lambda_s is None:
        lambda_s = calibrate_lambda_s(pix, disc)
    loss = abnormality_loss(pix, disc, lambda_s)
    n = len(clip)
    full_loss = _broadcast(centers, loss, n)
    return ScoreSeries(clip.clip_id, _broadcast(centers, pix, n), _broadcast(centers, disc, n),
                       lambda_s, full_loss, normalize_scores(full_loss))


def score_clips(clips: list[Clip], generator: Generator, discriminator: Discriminator,
                norm_scope: str = "clip") -> list[ScoreSeries]:
    """Score every clip; ``norm_scope='global'`` min-max normalises over all clips jointly."""
    if norm_scope not in ("clip", "global"):
        raise ValueError(f"norm_scope must be 'clip' or 'global', got {norm_scope!r}")
    series = [score_clip(c, generator, discriminator) for c in clips]
    if norm_scope == "global":
        joint = normalize_scores(np.concatenate([s.loss for s in series]))
        pos = 0
        for s in series:
            s.score = joint[pos:pos + len(s)]
            pos += len(s)
    return series


SCORES_HEADER = ["clip_id", "frame_index", "score", "pixel_term", "disc_term", "lambda_s"]


def write_scores_csv(path: str | Path, series: list[ScoreSeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORES_HEADER)
        for s in series:
            for i in range(len(s)):
                w.writerow([s.clip_id, i, repr(float(s.score[i])), repr(float(s.pixel_term[i])),
                            repr(float(s.disc_term[i])), repr(float(s.lambda_s))])


def read_scores_csv(path: str | Path) -> list[ScoreSeries]:
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(r["clip_id"], []).append(
                (int(r["frame_index"]), float(r["score"]), float(r["pixel_term"]),
                 float(r["disc_term"]), float(r["lambda_s"])))
    out = []
    for cid, rs in rows.items():
        rs.sort()
        arr = np.array([r[1:] for r in rs])
        lam = float(arr[0, 3])
        out.append(ScoreSeries(cid, arr[:, 1], arr[:, 2], lam, abnormality_loss(arr[:, 1], arr[:, 2], lam), arr[:, 0]))
    return out
