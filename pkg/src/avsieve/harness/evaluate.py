"""Evaluation over scene corpora, with ablation overrides."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..corpus import Scene
from ..decoder import DecoderConfig
from ..rope import SYNC, VANILLA, rope_config
from ..sieve import SieveConfig
from ..stream import VIDEO
from ..tensor import Tape
from .pipeline import forward_scene, scene_recall


@dataclass
class SceneEval:
    task: str
    label: int
    prediction: int
    recall: float
    n_video_kept: int
    n_audio_kept: int
    k: int
    density_video: float
    density_audio: float

    @property
    def correct(self) -> bool:
        return self.label == self.prediction

    @property
    def video_share(self) -> float:
        return self.n_video_kept / self.k


@dataclass
class EvalReport:
    scenes: list[SceneEval]

    @property
    def accuracy(self) -> float:
        return float(np.mean([s.correct for s in self.scenes]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([s.recall for s in self.scenes]))

    def task_accuracy(self, task: str) -> float:
        hits = [s.correct for s in self.scenes if s.task == task]
        if not hits:
            raise ValueError(f"no scenes of task {task!r} in this report")
        return float(np.mean(hits))

    def allocation_rows(self) -> list[dict]:
        return [{
            "density_video": s.density_video,
            "density_audio": s.density_audio,
            "n_video_kept": s.n_video_kept,
            "n_audio_kept": s.n_audio_kept,
            "k": s.k,
            "video_share": s.video_share,
        } for s in self.scenes]


def apply_overrides(sieve_cfg: SieveConfig, dec_cfg: DecoderConfig,
                    overrides: dict | None) -> tuple[SieveConfig, DecoderConfig]:
    """Ablation swaps: mask_mode, pool_mode, budget_p, rope mode/splits."""
    if not overrides:
        return sieve_cfg, dec_cfg
    unknown = set(overrides) - {"mask_mode", "pool_mode", "budget_p", "rope_mode", "rope_splits"}
    if unknown:
        raise ValueError(f"unknown overrides {sorted(unknown)}")
    for key in ("mask_mode", "pool_mode", "budget_p"):
        if key in overrides:
            sieve_cfg = replace(sieve_cfg, **{key: overrides[key]})
    if "rope_mode" in overrides or "rope_splits" in overrides:
        splits = overrides.get("rope_splits")
        if "rope_mode" in overrides:
            mode = overrides["rope_mode"]
        else:
            mode = SYNC if len(splits) == 4 else VANILLA
        sieve_cfg = replace(sieve_cfg, rope=rope_config(sieve_cfg.head_dim, mode=mode,
                                                        splits=splits))
        dec_cfg = replace(dec_cfg, rope=rope_config(dec_cfg.head_dim, mode=mode,
                                                    splits=splits))
    return sieve_cfg, dec_cfg


def evaluate(params: dict[str, np.ndarray], scenes: list[Scene],
             sieve_cfg: SieveConfig, dec_cfg: DecoderConfig,
             overrides: dict | None = None) -> EvalReport:
    sieve_cfg, dec_cfg = apply_overrides(sieve_cfg, dec_cfg, overrides)
    rows: list[SceneEval] = []
    for scene in scenes:
        tape = Tape()
        result = forward_scene(tape, scene.stream, scene.spec.task, scene.truth.label,
                               sieve_cfg, dec_cfg, params, training=False)
        n_v, n_a = result.selection.per_modality
        rows.append(SceneEval(
            scene.spec.task, scene.truth.label, result.prediction,
            scene_recall(result.selection, scene.truth.salient_indices),
            n_v, n_a, result.selection.k,
            scene.spec.density_video, scene.spec.density_audio,
        ))
    return EvalReport(rows)
