"""Command line: gen-data, train, eval, bench, analyze-rope, emit-selection.

Every run writes a manifest (config hash, seed, versions) next to its
outputs. Exit code 0 on success; failures print one machine-parsable
``error: ...`` line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..checkpoint import load_params
from ..corpus import build_scenes, load_corpus, save_corpus
from ..rope import build_schedule
from ..stream import TASKS, sample_scene_spec
from ..tensor import Tape
from . import analysis
from .bench import bench, bench_csv_rows
from .config import (
    build_model_configs,
    build_run_config,
    load_config,
    write_manifest,
)
from .evaluate import apply_overrides, evaluate
from .pipeline import forward_scene
from .train import train, write_metrics_csv


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="plain-text key = value configuration file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--budget", type=float)
    parser.add_argument("--mask-mode", dest="mask_mode")
    parser.add_argument("--pool-mode", dest="pool_mode")
    parser.add_argument("--rope-partition", dest="rope_partition",
                        help="comma split counts for t,h,w[,t], e.g. 18,18,18,10")
    parser.add_argument("--out", help="output directory")


def _resolved(args) -> dict[str, str]:
    overrides = {
        "seed": args.seed,
        "budget": args.budget,
        "mask_mode": args.mask_mode,
        "pool_mode": args.pool_mode,
        "out": args.out,
    }
    if args.rope_partition:
        splits = [int(s) for s in args.rope_partition.split(",")]
        overrides["rope_splits"] = args.rope_partition
        overrides["rope_mode"] = "sync" if len(splits) == 4 else "vanilla"
    return load_config(args.config, overrides)


def _out_dir(cfg, default: str) -> Path:
    out = Path(cfg["out"] or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "data")
    rng = np.random.default_rng(int(cfg["seed"]))
    specs = []
    for _ in range(args.n_scenes):
        spec = sample_scene_spec(
            args.task, rng, duration_s=args.duration, fps=args.fps,
            frame_grid=tuple(int(g) for g in args.grid.split("x")),
            density_video=args.density_video, density_audio=args.density_audio,
            embed_dim=args.embed_dim, n_text=int(cfg["n_text"]),
        )
        specs.append((spec, int(rng.integers(2**31))))
    path = save_corpus(out / f"{args.task}.bin", build_scenes(specs))
    write_manifest(out, cfg)
    print(f"wrote {args.n_scenes} scenes to {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "runs/train")
    cfg["out"] = str(out)
    run_config = build_run_config(cfg)
    result = train(run_config)
    write_manifest(out, cfg)
    final = result.metrics[-1] if result.metrics else {}
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"final: {final}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "runs/eval")
    sieve_cfg, dec_cfg = build_model_configs(cfg)
    params = load_params(args.checkpoint)
    scenes = load_corpus(args.corpus)
    report = evaluate(params, scenes, sieve_cfg, dec_cfg)
    rows = [{
        "task": s.task, "label": s.label, "prediction": s.prediction,
        "recall": round(s.recall, 6), "n_video_kept": s.n_video_kept,
        "n_audio_kept": s.n_audio_kept, "k": s.k,
    } for s in report.scenes]
    analysis.write_csv(out / "eval.csv", list(rows[0]), rows)
    analysis.emit_allocation_hist(report.allocation_rows(), out)
    write_manifest(out, cfg)
    print(f"accuracy = {report.accuracy:.4f} recall = {report.mean_recall:.4f} "
          f"scenes = {len(report.scenes)}")
    return 0


def cmd_bench(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "runs/bench")
    sieve_cfg, dec_cfg = build_model_configs(cfg)
    lengths = tuple(int(v) for v in args.lengths.split(","))
    budgets = [float(b) for b in args.budgets.split(",")]
    records = bench(sieve_cfg, dec_cfg, lengths, budgets,
                    trials=args.trials, warmup=args.warmup, seed=int(cfg["seed"]))
    rows = bench_csv_rows(records)
    analysis.write_csv(out / "bench.csv", list(rows[0]), rows)
    write_manifest(out, cfg)
    reference = records[0].wall_ms[3]
    for record in records:
        print(f"p={record.budget_p:g} total={record.wall_ms[3]:.1f} ms "
              f"speedup={reference / record.wall_ms[3]:.2f}x "
              f"peak={record.peak_values}")
    return 0


def cmd_analyze_rope(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "runs/rope")
    schedule = build_schedule(args.theta_base, args.head_dim)
    paths = analysis.emit_rope_curves(schedule, args.delta_max, out)
    write_manifest(out, cfg)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_emit_selection(args) -> int:
    cfg = _resolved(args)
    out = _out_dir(cfg, "runs/selection")
    sieve_cfg, dec_cfg = build_model_configs(cfg)
    params = load_params(args.checkpoint)
    scenes = load_corpus(args.corpus)
    if not 0 <= args.scene_index < len(scenes):
        raise ValueError(f"scene index {args.scene_index} outside corpus of {len(scenes)}")
    scene = scenes[args.scene_index]
    result = forward_scene(Tape(), scene.stream, scene.spec.task, scene.truth.label,
                           sieve_cfg, dec_cfg, params, training=False)
    paths = analysis.emit_selection_map(scene.stream, result.selection, out)
    write_manifest(out, cfg)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avsieve",
        description="cross-modal token sieve: data, training, evaluation, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic scene corpus")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--n-scenes", type=int, default=64)
    p.add_argument("--duration", type=float, default=5.12)
    p.add_argument("--fps", type=float, default=1.5625)
    p.add_argument("--grid", default="4x4")
    p.add_argument("--density-video", type=float, default=0.2)
    p.add_argument("--density-audio", type=float, default=0.2)
    p.add_argument("--embed-dim", type=int, default=32)
    _add_common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the full pipeline on corpora")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="FLOP/latency/memory benchmark")
    p.add_argument("--lengths", default="2048,2048,8", help="L_v,L_a,L_t")
    p.add_argument("--budgets", default="1.0,0.2,0.1")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("analyze-rope", help="emit kernel decay curves per band")
    p.add_argument("--theta-base", type=float, default=10000.0)
    p.add_argument("--head-dim", type=int, default=128)
    p.add_argument("--delta-max", type=int, default=500)
    _add_common(p)
    p.set_defaults(func=cmd_analyze_rope)

    p = sub.add_parser("emit-selection", help="per-frame kept/dropped maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--scene-index", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_emit_selection)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line machine-parsable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
