"""Per-clip localisation statistics for a trained run.

    python3 scripts/localization_report.py runs/desk

For every anomalous frame with a ground-truth box, reports the error-map
contrast (mean inside the box over mean outside) and the share of the
guided-backprop mass inside the box, with and without dilation.
"""
import argparse
from pathlib import Path

import numpy as np
import torch

from stan.data import load_split
from stan.interpret import box_mask, contrast_ratio, error_map, guided_backprop_map, mass_fraction, \
    receptive_field_radius
from stan.models import context_of, load_discriminator, load_generator


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run", help="output directory of a finished run (holds data/ and ckpt/)")
    ap.add_argument("--every", type=int, default=5, help="use every n-th anomalous frame")
    ap.add_argument("--dilation", type=int, default=None, help="box dilation in pixels (default: receptive field)")
    args = ap.parse_args()

    run = Path(args.run)
    g = load_generator(run / "ckpt" / "generator")
    d = load_discriminator(run / "ckpt" / "discriminator")
    k = g.config.half_window
    dilation = receptive_field_radius() if args.dilation is None else args.dilation
    print(f"dilation {dilation}px at {g.config.input_size}x{g.config.input_size}")
    print("clip        frames  err_contrast(min/median)  grad_mass_tight  grad_mass_dilated")
    for clip in load_split(run / "data", "test", g.config.input_size):
        frames = sorted(t for t in clip.boxes if k <= t < len(clip) - k)[::args.every]
        contrast, tight, dilated = [], [], []
        for t in frames:
            seq = torch.from_numpy(clip.frames[t - k:t + k + 1])[None, :, None]
            with torch.no_grad():
                generated = g(context_of(seq, k))
            shape = clip.frames[t].shape
            contrast.append(contrast_ratio(error_map(generated, clip.frames[t]), box_mask(shape, clip.boxes[t])))
            grad = guided_backprop_map(seq, d)
            tight.append(mass_fraction(grad, box_mask(shape, clip.boxes[t])))
            dilated.append(mass_fraction(grad, box_mask(shape, clip.boxes[t], dilation)))
        if frames:
            print(f"{clip.clip_id:<10} {len(frames):>7}  {min(contrast):>10.2f} / {np.median(contrast):<10.2f}"
                  f"  {np.mean(tight):>15.3f}  {np.mean(dilated):>17.3f}")


if __name__ == "__main__":
    main()
