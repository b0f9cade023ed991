"""Scene corpora on disk: float64 binary payload plus a text sidecar.

The binary file starts with an 8-byte magic, a version, and the scene count;
each scene then contributes its audio/video embedding matrix followed by the
per-token planted-energy vector, all float64. The sidecar ``<path>.meta``
holds one JSON object per scene (geometry, salient sets, seed, label), which
is enough to rebuild positions and ground truth without regenerating noise.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stream import (
    SceneSpec,
    SceneTruth,
    TokenStream,
    assign_positions,
    derive_label,
    generate_scene,
    _pool_index_maps,
)

MAGIC = b"AVSCENES"
VERSION = 1
META_SUFFIX = ".meta"


@dataclass
class Scene:
    stream: TokenStream
    truth: SceneTruth
    spec: SceneSpec
    seed: int


def build_scenes(specs_and_seeds) -> list[Scene]:
    return [Scene(*generate_scene(spec, seed), spec, seed) for spec, seed in specs_and_seeds]


def _spec_to_json(spec: SceneSpec, seed: int, label: int) -> str:
    return json.dumps({
        "duration_s": spec.duration_s,
        "fps": spec.fps,
        "frame_grid": list(spec.frame_grid),
        "density_video": spec.density_video,
        "density_audio": spec.density_audio,
        "salient_video": sorted(list(t) for t in spec.salient_video),
        "salient_audio": sorted(spec.salient_audio),
        "sync_offset_s": spec.sync_offset_s,
        "task": spec.task,
        "label": label,
        "embed_dim": spec.embed_dim,
        "distractor_video": sorted(list(t) for t in spec.distractor_video),
        "align_threshold_ids": spec.align_threshold_ids,
        "n_text": spec.n_text,
        "label_strength": spec.label_strength,
        "seed": seed,
    }, sort_keys=True)


def _spec_from_json(line: str) -> tuple[SceneSpec, int, int]:
    obj = json.loads(line)
    spec = SceneSpec(
        obj["duration_s"], obj["fps"], tuple(obj["frame_grid"]),
        obj["density_video"], obj["density_audio"],
        frozenset(tuple(t) for t in obj["salient_video"]),
        frozenset(obj["salient_audio"]),
        obj["sync_offset_s"], obj["task"], obj["label"], obj["embed_dim"],
        frozenset(tuple(t) for t in obj["distractor_video"]),
        obj["align_threshold_ids"], obj["n_text"], obj.get("label_strength", 1.0),
    )
    return spec, obj["seed"], obj["label"]


def save_corpus(path, scenes: list[Scene]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_lines = []
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(scenes)))
        for scene in scenes:
            emb = scene.stream.av_embedding_matrix()
            fh.write(np.ascontiguousarray(emb, dtype=np.float64).tobytes())
            fh.write(np.ascontiguousarray(scene.truth.signal_energy, dtype=np.float64).tobytes())
            meta_lines.append(_spec_to_json(scene.spec, scene.seed, scene.truth.label))
    Path(str(path) + META_SUFFIX).write_text("\n".join(meta_lines) + "\n")
    return path


def load_corpus(path) -> list[Scene]:
    path = Path(path)
    meta = Path(str(path) + META_SUFFIX)
    if not meta.exists():
        raise FileNotFoundError(f"load_corpus: missing sidecar {meta}")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"load_corpus: bad magic in {path}")
    version, n_scenes = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise ValueError(f"load_corpus: unsupported version {version}")
    flat = np.frombuffer(raw, dtype=np.float64, offset=16)
    lines = [ln for ln in meta.read_text().splitlines() if ln.strip()]
    if len(lines) != n_scenes:
        raise ValueError(f"load_corpus: header says {n_scenes} scenes, sidecar has {len(lines)}")

    scenes: list[Scene] = []
    cursor = 0
    for line in lines:
        spec, seed, label = _spec_from_json(line)
        stream = assign_positions(spec.duration_s, spec.fps, spec.frame_grid,
                                  n_text=spec.n_text)
        n_av, d = stream.av_count, spec.embed_dim
        emb = flat[cursor:cursor + n_av * d].reshape(n_av, d).copy()
        cursor += n_av * d
        energy = flat[cursor:cursor + n_av].copy()
        cursor += n_av
        row = 0
        for tok in stream.tokens:
            if tok.modality != "text":
                tok.embedding = emb[row]
                row += 1
        video_map, audio_map = _pool_index_maps(stream)
        salient = sorted([video_map[key] for key in spec.salient_video]
                         + [audio_map[i] for i in spec.salient_audio])
        truth = SceneTruth(spec.task, derive_label(spec, stream),
                           np.asarray(salient, dtype=np.intp), energy)
        if truth.label != label:
            raise ValueError("load_corpus: sidecar label disagrees with derived label")
        scenes.append(Scene(stream, truth, spec, seed))
    if cursor != flat.size:
        raise ValueError("load_corpus: payload size does not match sidecar")
    return scenes
