"""Joint training of encoder, scorer, decoder, and heads through the gate.

The optimizer is momentum-free with per-parameter second-moment scaling:
v <- 0.99 v + 0.01 g^2, then theta <- theta - lr * g / (sqrt(v) + 1e-8).
Runs are deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..checkpoint import save_params
from ..corpus import Scene, load_corpus
from ..decoder import DecoderConfig
from ..sieve import SieveConfig
from ..tensor import Tape
from .evaluate import evaluate
from .pipeline import forward_scene, init_model_params

SECOND_MOMENT_DECAY = 0.99
ADAPT_EPS = 1e-8

METRIC_FIELDS = ("step", "train_loss", "val_accuracy", "val_recall",
                 "kept_video_ratio", "kept_audio_ratio")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunConfig:
    sieve: SieveConfig
    decoder: DecoderConfig
    corpus_paths: tuple[str, ...] = ()
    steps: int = 2000
    batch_size: int = 16
    step_size: float = 3e-4
    seed: int = 0
    eval_interval: int = 50
    n_val: int = 32
    out_dir: str | None = None
    # With the straight-through route off, scores receive no gradient; used by
    # full-budget warm-up phases where selection is vacuous anyway.
    ste_training: bool = True
    # When set, each step trains at a budget drawn uniformly from this range,
    # which exercises every rank boundary of the scorer instead of one fixed
    # top-k margin. Evaluation always uses the configured budget.
    budget_range: tuple[float, float] | None = None


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    metrics: list[dict]
    checkpoint_path: Path | None = None


def _metrics_row(step: int, train_loss: float, report) -> dict:
    shares = [(s.n_video_kept / s.k, s.n_audio_kept / s.k) for s in report.scenes]
    video_share = float(np.mean([v for v, _ in shares]))
    return {
        "step": step,
        "train_loss": round(float(train_loss), 10),
        "val_accuracy": round(report.accuracy, 10),
        "val_recall": round(report.mean_recall, 10),
        "kept_video_ratio": round(video_share, 10),
        "kept_audio_ratio": round(1.0 - video_share, 10),
    }


def train(config: RunConfig, scenes: list[Scene] | None = None,
          initial_params: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Train on the configured corpora; returns params and the metrics log.

    ``initial_params`` warm-starts from an earlier run (e.g. a full-budget
    phase before compressed fine-tuning, standing in for the pretrained
    decoder the reference setting starts from).
    """
    if scenes is None:
        scenes = [s for path in config.corpus_paths for s in load_corpus(path)]
    if len(scenes) <= config.n_val:
        raise ValueError(
            f"need more than n_val={config.n_val} scenes, got {len(scenes)}"
        )
    train_scenes = scenes[: len(scenes) - config.n_val]
    val_scenes = scenes[len(scenes) - config.n_val:]
    tasks = sorted({s.spec.task for s in scenes})
    n_text = len(scenes[0].stream.tokens) - scenes[0].stream.av_count

    rng = np.random.default_rng(config.seed)
    init_seed = int(rng.integers(2**31))
    if initial_params is not None:
        params = {name: arr.copy() for name, arr in initial_params.items()}
    else:
        params = init_model_params(config.sieve, config.decoder, tasks, n_text,
                                   seed=init_seed)
    return _train_loop(config, params, train_scenes, val_scenes, rng)


def _train_loop(config: RunConfig, params, train_scenes, val_scenes, rng) -> TrainResult:
    moment = {name: np.zeros_like(arr) for name, arr in params.items()}
    metrics: list[dict] = []

    def log(step: int, loss_value: float):
        report = evaluate(params, val_scenes, config.sieve, config.decoder)
        metrics.append(_metrics_row(step, loss_value, report))

    last_loss = float("nan")
    for step in range(config.steps):
        batch_idx = rng.integers(0, len(train_scenes), size=config.batch_size)
        sieve_cfg = config.sieve
        if config.budget_range is not None:
            lo, hi = config.budget_range
            sieve_cfg = replace(sieve_cfg, budget_p=float(rng.uniform(lo, hi)))
        grad_sum: dict[str, np.ndarray] = {}
        batch_loss = 0.0
        for i in batch_idx:
            scene = train_scenes[int(i)]
            tape = Tape()
            result = forward_scene(tape, scene.stream, scene.spec.task,
                                   scene.truth.label, sieve_cfg, config.decoder,
                                   params, training=config.ste_training)
            batch_loss += float(result.loss.value)
            grads = tape.backward(result.loss)
            for name, node in result.nodes.items():
                g = grads.get(node)
                if g is None:
                    continue
                if name in grad_sum:
                    grad_sum[name] += g
                else:
                    grad_sum[name] = g.copy()
        batch_loss /= config.batch_size
        last_loss = batch_loss
        if not np.isfinite(batch_loss):
            raise TrainingDiverged(
                f"non-finite loss {batch_loss} at step {step} (seed {config.seed})"
            )
        for name, g_sum in grad_sum.items():
            g = g_sum / config.batch_size
            v = moment[name]
            v *= SECOND_MOMENT_DECAY
            v += (1.0 - SECOND_MOMENT_DECAY) * g * g
            params[name] -= config.step_size * g / (np.sqrt(v) + ADAPT_EPS)
        if (step + 1) % config.eval_interval == 0 or step + 1 == config.steps:
            log(step + 1, batch_loss)

    if config.steps == 0:
        log(0, float("nan"))

    checkpoint_path = None
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = save_params(params, out / "checkpoint.bin")
        write_metrics_csv(out / "metrics.csv", metrics)
    return TrainResult(params, metrics, checkpoint_path)


def write_metrics_csv(path, metrics: list[dict]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        writer.writeheader()
        writer.writerows(metrics)
