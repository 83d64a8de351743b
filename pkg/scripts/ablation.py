#!/usr/bin/env python3
"""Ablation comparison on seeded synthetic grids.

Runs the full pipeline plus the two ablation arms (no alignment, no sharpest
selection) and prints information entropy and local contrast per arm, computed
on the intersection of valid regions.
"""

import argparse
import sys

import numpy as np

from edof.align import align_grid
from edof.blocks import crop, mean_gradient
from edof.align import identity_alignment
from edof.image import ImageF, to_grayscale
from edof.metrics import information_entropy, local_contrast
from edof.network import FusionNet
from edof.pipeline import (
    FuseOptions,
    collect_block_pairs,
    fuse_pipeline,
    sample_training_patches,
)
from edof.synth import default_capture, default_scene, render_scene
from edof.train import TrainConfig, train


def build_net(canvas, seed, epochs, pairs):
    collected = []
    for g in range(2):
        scene = default_scene(3, canvas, seed=seed + 100 + g)
        cap = default_capture(3, 8.0, canvas, seed=seed + 100 + g, noise_sigma=0.005)
        grid, _ = render_scene(scene, cap)
        res = align_grid(grid, 4)
        collected += collect_block_pairs(res.views)
    patches = sample_training_patches(collected, 48, pairs, seed=seed)
    net = FusionNet.initialize(seed=seed)
    cfg = TrainConfig(
        learning_rate=0.01, epochs=epochs, batch_size=10, rng_seed=seed, dataset=patches
    )
    net, hist = train(net, cfg)
    print(f"trained: loss {hist[0]:.4f} -> {hist[-1]:.4f}", file=sys.stderr)
    return net


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--grids", type=int, default=2)
    ap.add_argument("--canvas", type=int, default=320)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--pairs", type=int, default=80)
    args = ap.parse_args(argv)

    canvas = (args.canvas, args.canvas)
    net = build_net(canvas, args.seed, args.epochs, args.pairs)

    rows = {"full": [], "without alignment": [], "without optimization": []}
    for g in range(args.grids):
        scene = default_scene(3, canvas, seed=args.seed + g)
        cap = default_capture(3, 8.0, canvas, seed=args.seed + g, noise_sigma=0.005)
        grid, _ = render_scene(scene, cap)
        aligned = align_grid(grid, 4)
        full, _ = fuse_pipeline(aligned.views, net)
        skip_opt, _ = fuse_pipeline(aligned.views, net, FuseOptions(selection="first_two"))
        skip_align, _ = fuse_pipeline(identity_alignment(grid).views, net)

        dx, dy = aligned.offset
        h, w = canvas
        full_f = crop(full, (dy, dy + h, dx, dx + w))
        so_f = crop(skip_opt, (dy, dy + h, dx, dx + w))
        common = full_f.mask & so_f.mask & skip_align.mask
        for name, img in (
            ("full", full_f),
            ("without alignment", skip_align),
            ("without optimization", so_f),
        ):
            masked = ImageF(img.data, common)
            rows[name].append(
                (
                    information_entropy(masked),
                    local_contrast(masked),
                    mean_gradient(to_grayscale(masked)).value,
                )
            )

    print(f"{'arm':<24} {'IE':>8} {'LC':>8} {'MG':>9}")
    for name, vals in rows.items():
        ie, lc, mg = np.mean(vals, axis=0)
        print(f"{name:<24} {ie:8.4f} {lc:8.4f} {mg:9.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
