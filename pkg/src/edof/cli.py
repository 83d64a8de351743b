"""Command-line orchestration of the pipeline.

One JSON configuration file drives every subcommand; flags override a few
fields (``--seed``) or select ablation arms (``--skip-align``,
``--skip-optimize``). Exit codes are stable: 0 success, 2 configuration
error, 3 I/O error, 4 alignment failure, 5 fusion error, 6 training
divergence. With ``--json`` stdout carries only the summary JSON; logs always
go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import (
    AlignmentResult,
    AlignParams,
    align_grid,
    identity_alignment,
)
from .blocks import crop, split_blocks
from .errors import (
    AlignmentError,
    ConfigError,
    EdofError,
    EstimationError,
    FormatError,
    FusionError,
    ParameterError,
    SelectionError,
    TrainingDivergedError,
)
from .image import ImageF, ViewGrid, load_image, save_image, save_mask_png
from .metrics import evaluate
from .network import FusionNet
from .pipeline import (
    FuseOptions,
    collect_block_pairs,
    fuse_pipeline,
    sample_training_patches,
)
from .synth import (
    CaptureSpec,
    LayerSpec,
    SceneSpec,
    default_capture,
    default_scene,
    render_scene,
)
from .train import TrainConfig, train

log = logging.getLogger("edof")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ALIGN = 4
EXIT_FUSION = 5
EXIT_DIVERGED = 6


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "out"
    synth: dict | None = None
    directory: str | None = None
    benchmark_view: int = 4
    rows: int = 3
    cols: int = 3
    coverage_threshold: float = 0.5
    align: AlignParams = field(default_factory=AlignParams)
    alpha: float = 20.0
    c: float | None = None
    network_file: str = "network.edfn"
    train_params: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}"
            ) from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = cls()
        cfg.seed = int(raw.get("seed", 0))
        cfg.output_dir = str(raw.get("output_dir", "out"))
        inp = raw.get("input", {})
        cfg.synth = inp.get("synth")
        cfg.directory = inp.get("directory")
        if (cfg.synth is None) == (cfg.directory is None):
            raise ConfigError("config needs exactly one input source: synth or directory")
        cfg.benchmark_view = int(raw.get("benchmark_view", 4))
        blocks = raw.get("blocks", {})
        cfg.rows = int(blocks.get("rows", 3))
        cfg.cols = int(blocks.get("cols", 3))
        cfg.coverage_threshold = float(blocks.get("coverage_threshold", 0.5))
        al = raw.get("align", {})
        cfg.align = AlignParams(
            detect_threshold=float(al.get("detect_threshold", 2e-5)),
            max_points=int(al.get("max_points", 600)),
            ratio_threshold=float(al.get("ratio_threshold", 0.75)),
            inlier_threshold=float(al.get("inlier_threshold", 3.0)),
            confidence=float(al.get("confidence", 0.995)),
            max_iterations=int(al.get("max_iterations", 2000)),
            seed=cfg.seed,
        )
        fusion = raw.get("fusion", {})
        cfg.alpha = float(fusion.get("alpha", 20.0))
        cfg.c = None if fusion.get("c") is None else float(fusion["c"])
        cfg.network_file = str(fusion.get("network_file", "network.edfn"))
        cfg.train_params = dict(fusion.get("train", {}))
        return cfg


# ---------------------------------------------------------------------------
# Synthetic input assembly


def _scene_capture(
    cfg: PipelineConfig, seed: int | None = None
) -> tuple[SceneSpec, CaptureSpec]:
    s = cfg.synth or {}
    seed = cfg.seed if seed is None else seed
    canvas = tuple(int(v) for v in s.get("canvas", (512, 512)))
    n_depths = int(s.get("n_depths", 3))
    capture = default_capture(
        n_depths,
        float(s.get("max_shift", 12.0)),
        canvas,
        seed=seed,
        blur_coefficient=float(s.get("blur_coefficient", 2.0)),
        noise_sigma=float(s.get("noise_sigma", 0.005)),
        perspective=float(s.get("perspective", 0.02)),
    )
    if "layers" in s:
        layers = [
            LayerSpec(float(l["depth"]), int(l["texture_seed"]), tuple(l["region"]))
            for l in s["layers"]
        ]
        scene = SceneSpec(layers, canvas, rng_seed=seed)
    else:
        scene = default_scene(n_depths, canvas, seed=seed)
    return scene, capture


def _load_grid_from_dir(directory: str) -> tuple[ViewGrid, dict]:
    root = Path(directory)
    manifest_path = root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON in {manifest_path} at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}"
        ) from exc
    rows = int(manifest.get("rows", 3))
    cols = int(manifest.get("cols", 3))
    slots: dict[int, ImageF] = {}
    depths: dict[int, float] = {}
    for entry in manifest["views"]:
        idx = int(entry["row"]) * cols + int(entry["col"])
        slots[idx] = load_image(root / entry["file"])
        if "focus_depth" in entry:
            depths[idx] = float(entry["focus_depth"])
    if sorted(slots) != list(range(rows * cols)):
        raise ConfigError(f"manifest must list all {rows * cols} views exactly once")
    focus = [depths[i] for i in sorted(depths)] if len(depths) == len(slots) else None
    grid = ViewGrid([slots[i] for i in range(rows * cols)], rows, cols, focus)
    return grid, manifest


def _obtain_grid(cfg: PipelineConfig) -> tuple[ViewGrid, ImageF | None, dict | None]:
    """Returns (grid, ground-truth image or None, manifest or None)."""
    if cfg.synth is not None:
        scene, capture = _scene_capture(cfg)
        grid, gt = render_scene(scene, capture)
        return grid, gt.all_in_focus, None
    grid, manifest = _load_grid_from_dir(cfg.directory)
    gt_img = None
    gt_entry = manifest.get("ground_truth")
    if gt_entry and gt_entry.get("pfm"):
        gt_path = Path(cfg.directory) / gt_entry["pfm"]
        if gt_path.exists():
            gt_img = load_image(gt_path)
    return grid, gt_img, manifest


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _align_report(result: AlignmentResult) -> dict:
    per_view = []
    stats_by_view = {s.view_index: s for s in result.stats}
    for av in result.views:
        st = stats_by_view.get(av.view_index)
        per_view.append(
            {
                "view": av.view_index,
                "homography": [float(v) for v in av.homography_total.m.ravel()],
                "offset": list(av.offset),
                "match_count": st.match_count if st else 0,
                "inlier_count": st.inlier_count if st else 0,
                "mean_inlier_error": st.mean_inlier_error if st else 0.0,
            }
        )
    return {
        "benchmark_view": result.benchmark_index,
        "canvas_size": list(result.canvas_size),
        "offset": list(result.offset),
        "views": per_view,
    }


def _embed_reference(
    gt: ImageF, canvas: tuple[int, int], offset: tuple[int, int]
) -> ImageF:
    """Place the ground-truth frame at its offset inside the result canvas."""
    ch, cw = canvas
    dx, dy = offset
    data = np.zeros((ch, cw, gt.channels), dtype=np.float32)
    mask = np.zeros((ch, cw), dtype=bool)
    h = min(gt.height, ch - dy)
    w = min(gt.width, cw - dx)
    data[dy : dy + h, dx : dx + w] = gt.data[:h, :w]
    mask[dy : dy + h, dx : dx + w] = gt.mask[:h, :w]
    return ImageF(data, mask)


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(cfg: PipelineConfig) -> dict:
    if cfg.synth is None:
        raise ConfigError("synth command requires a synth input section")
    scene, capture = _scene_capture(cfg)
    grid, gt = render_scene(scene, capture)
    out = Path(cfg.output_dir)
    views_dir = out / "views"
    views_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for r in range(3):
        for c in range(3):
            idx = r * 3 + c
            name = f"view_r{r}c{c}.png"
            save_image(grid.views[idx], views_dir / name)
            entries.append(
                {
                    "row": r,
                    "col": c,
                    "file": f"views/{name}",
                    "focus_depth": capture.grid[idx].focus_depth,
                    "homography_true": [
                        float(v) for v in capture.grid[idx].homography_true.m.ravel()
                    ],
                }
            )
    save_image(gt.all_in_focus, out / "ground_truth.pfm")
    manifest = {
        "canvas": [grid.views[0].height, grid.views[0].width],
        "rows": 3,
        "cols": 3,
        "views": entries,
        "ground_truth": {"pfm": "ground_truth.pfm"},
        "blur_coefficient": capture.blur_coefficient,
        "noise_sigma": capture.noise_sigma,
        "rng_seed": cfg.seed,
    }
    _write_json(out / "manifest.json", manifest)
    log.info("wrote 9 views, ground truth and manifest to %s", out)
    return {"output_dir": str(out), "views": 9, "canvas": manifest["canvas"]}


def cmd_align(cfg: PipelineConfig) -> dict:
    grid, _, _ = _obtain_grid(cfg)
    result = align_grid(grid, cfg.benchmark_view, cfg.align)
    out = Path(cfg.output_dir)
    aligned_dir = out / "aligned"
    aligned_dir.mkdir(parents=True, exist_ok=True)
    for av in result.views:
        r, c = divmod(av.view_index, grid.cols)
        save_image(av.image, aligned_dir / f"aligned_r{r}c{c}.png")
        save_mask_png(av.image.mask, aligned_dir / f"mask_r{r}c{c}.png")
    report = _align_report(result)
    _write_json(out / "align_report.json", report)
    log.info(
        "aligned %d views onto canvas %s", len(result.views), result.canvas_size
    )
    return report


def _build_training_dataset(cfg: PipelineConfig) -> list:
    tp = cfg.train_params
    n_pairs = int(tp.get("pairs", 200))
    patch = int(tp.get("patch_size", 48))
    n_grids = int(tp.get("grids", 3))
    pairs = []
    if cfg.synth is not None:
        for g in range(n_grids):
            scene, capture = _scene_capture(cfg, seed=cfg.seed + 1000 * (g + 1))
            grid, _ = render_scene(scene, capture)
            result = align_grid(grid, cfg.benchmark_view, cfg.align)
            pairs += collect_block_pairs(
                result.views, cfg.rows, cfg.cols, cfg.coverage_threshold
            )
    else:
        grid, _ = _load_grid_from_dir(cfg.directory)
        result = align_grid(grid, cfg.benchmark_view, cfg.align)
        pairs = collect_block_pairs(
            result.views, cfg.rows, cfg.cols, cfg.coverage_threshold
        )
    patches = sample_training_patches(pairs, patch, n_pairs, seed=cfg.seed)
    if not patches:
        raise FusionError("no fully valid training patches could be sampled")
    return patches


def cmd_train(cfg: PipelineConfig) -> dict:
    tp = cfg.train_params
    dataset = _build_training_dataset(cfg)
    config = TrainConfig(
        learning_rate=float(tp.get("learning_rate", 0.01)),
        epochs=int(tp.get("epochs", 50)),
        batch_size=int(tp.get("batch_size", 10)),
        alpha=cfg.alpha,
        c=cfg.c,
        rng_seed=cfg.seed,
        dataset=dataset,
    )
    net = FusionNet.initialize(seed=cfg.seed)
    net, history = train(net, config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    net_path = out / cfg.network_file
    net.save(net_path)
    _write_json(out / "loss_history.json", {"epochs": len(history), "loss": history})
    log.info("trained %d epochs on %d pairs -> %s", len(history), len(dataset), net_path)
    return {
        "network_file": str(net_path),
        "epochs": len(history),
        "pairs": len(dataset),
        "final_loss": history[-1] if history else None,
    }


def cmd_run(
    cfg: PipelineConfig,
    skip_align: bool = False,
    skip_optimize: bool = False,
    do_train: bool = False,
) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    net_path = out / cfg.network_file
    if do_train:
        cmd_train(cfg)
    if not net_path.exists():
        alt = Path(cfg.network_file)
        if alt.exists():
            net_path = alt
        else:
            raise ConfigError(
                f"network file {net_path} not found (train first or pass --train)"
            )
    net = FusionNet.load(net_path)

    grid, gt_img, _ = _obtain_grid(cfg)
    if skip_align:
        result = identity_alignment(grid)
    else:
        result = align_grid(grid, cfg.benchmark_view, cfg.align)
        aligned_dir = out / "aligned"
        aligned_dir.mkdir(parents=True, exist_ok=True)
        for av in result.views:
            r, c = divmod(av.view_index, grid.cols)
            save_image(av.image, aligned_dir / f"aligned_r{r}c{c}.png")
            save_mask_png(av.image.mask, aligned_dir / f"mask_r{r}c{c}.png")
        _write_json(out / "align_report.json", _align_report(result))

    options = FuseOptions(
        rows=cfg.rows,
        cols=cfg.cols,
        coverage_threshold=cfg.coverage_threshold,
        selection="first_two" if skip_optimize else "sharpest",
    )
    fused, freport = fuse_pipeline(result.views, net, options)
    blocks_dir = out / "blocks"
    blocks_dir.mkdir(parents=True, exist_ok=True)
    _write_json(blocks_dir / "selection.json", freport.to_dict())
    fused_dir = out / "fused"
    fused_dir.mkdir(parents=True, exist_ok=True)
    grid_cells = split_blocks(
        (fused.height, fused.width), options.rows, options.cols
    )
    for pos in grid_cells.positions():
        save_image(
            crop(fused, grid_cells.cell(pos)),
            fused_dir / f"block_r{pos[0]}c{pos[1]}.png",
        )
    save_image(fused, out / "result.png")
    save_mask_png(fused.mask, out / "result_mask.png")

    reference = None
    if gt_img is not None:
        reference = _embed_reference(gt_img, result.canvas_size, result.offset)
    report = evaluate(fused, reference)
    summary = {
        "result": str(out / "result.png"),
        "metrics": report.to_dict(),
        "skip_align": skip_align,
        "skip_optimize": skip_optimize,
        "fallback_blocks": [list(p) for p in freport.fallback_positions()],
    }
    _write_json(out / "report.json", summary)
    log.info("pipeline finished: IE %.4f LC %.4f", report.ie, report.lc)
    return summary


def cmd_eval(image_path: str, reference_path: str | None, lc_window: int = 8) -> dict:
    image = load_image(image_path)
    reference = load_image(reference_path) if reference_path else None
    report = evaluate(image, reference, lc_window)
    return report.to_dict()


# ---------------------------------------------------------------------------
# Entry point


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (ConfigError,)):
        return EXIT_CONFIG
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (AlignmentError, EstimationError)):
        return EXIT_ALIGN
    if isinstance(exc, (FusionError, SelectionError)):
        return EXIT_FUSION
    if isinstance(exc, TrainingDivergedError):
        return EXIT_DIVERGED
    if isinstance(exc, ParameterError):
        return EXIT_CONFIG
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edof",
        description="Extended depth of field for varifocal multiview image grids",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--json", action="store_true", help="print only summary JSON")

    add_common(sub.add_parser("synth", help="generate a synthetic grid"))
    add_common(sub.add_parser("align", help="align a grid to the benchmark view"))
    add_common(sub.add_parser("train", help="train the fusion network"))
    run_p = sub.add_parser("run", help="full pipeline: align, select, fuse, evaluate")
    add_common(run_p)
    run_p.add_argument("--train", action="store_true", help="train before running")
    run_p.add_argument(
        "--skip-align", action="store_true", help="ablation: fuse unaligned views"
    )
    run_p.add_argument(
        "--skip-optimize",
        action="store_true",
        help="ablation: fuse the first two covered views instead of the sharpest",
    )
    eval_p = sub.add_parser("eval", help="evaluate metrics for an image")
    eval_p.add_argument("image", help="image to evaluate (PNG or PFM)")
    eval_p.add_argument("reference", nargs="?", default=None, help="optional reference")
    eval_p.add_argument("--lc-window", type=int, default=8)
    eval_p.add_argument("--json", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "eval":
            summary = cmd_eval(args.image, args.reference, args.lc_window)
        else:
            cfg = PipelineConfig.from_file(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
                cfg.align.seed = args.seed
            if args.command == "synth":
                summary = cmd_synth(cfg)
            elif args.command == "align":
                summary = cmd_align(cfg)
            elif args.command == "train":
                summary = cmd_train(cfg)
            else:
                summary = cmd_run(
                    cfg,
                    skip_align=args.skip_align,
                    skip_optimize=args.skip_optimize,
                    do_train=args.train,
                )
    except EdofError as exc:
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(summary, indent=None if args.json else 2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
