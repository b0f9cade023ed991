"""Interleaved audio-visual-text token streams and synthetic scenes.

Audio is tokenized at 25 tokens per second (one id per 40 ms); video frames
take the temporal id closest to their timestamp on the same clock, so the
sync offset between an audio event and a video event is a plain id
difference. Tokens are interleaved per time chunk as [V_0, A_0, V_1, A_1,
...] with the text instruction block last.

Scenes plant salient tokens (a shared mean direction plus a task-dependent
direction) into Gaussian noise, so the optimal selection is known exactly
and tasks cannot be solved without the planted tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .rope import PositionTriple

TOKENS_PER_SECOND = 25
NOISE_SIGMA = 0.5
KEY_STRENGTH = 1.0
DEFAULT_TEXT_TOKENS = 8

VIDEO, AUDIO, TEXT = "video", "audio", "text"
MODALITY_ID = {VIDEO: 0, AUDIO: 1, TEXT: 2}

TASK_SALIENT_RECALL = "salient_recall"
TASK_EVENT_ORDER = "event_order"
TASK_AV_ALIGNMENT = "av_alignment"
TASKS = (TASK_SALIENT_RECALL, TASK_EVENT_ORDER, TASK_AV_ALIGNMENT)

# Embedding directions: planted tokens share the mean direction; recall
# labels bias per-token votes on the label axis, and the order/alignment
# tasks mark their event groups with dedicated axes.
DIR_MEAN = 0
DIR_LABEL = 1
DIR_ORDER_AUDIO = 2
DIR_ORDER_VIDEO = 3
DIR_ALIGN_AUDIO = 4
DIR_ALIGN_VIDEO = 5
MIN_EMBED_DIM = 8
RECALL_STRENGTH_RANGE = (0.08, 0.8)


@dataclass
class Token:
    modality: str
    pos: PositionTriple
    stream_index: int
    mod_index: int
    chunk: int
    embedding: np.ndarray | None = None


@dataclass
class TokenStream:
    tokens: list[Token]
    chunk_seconds: float
    duration_s: float
    fps: float
    frame_grid: tuple[int, int]

    @property
    def counts(self) -> tuple[int, int, int]:
        tally = {VIDEO: 0, AUDIO: 0, TEXT: 0}
        for tok in self.tokens:
            tally[tok.modality] += 1
        return (tally[VIDEO], tally[AUDIO], tally[TEXT])

    @property
    def av_count(self) -> int:
        lv, la, _ = self.counts
        return lv + la

    def positions_array(self) -> np.ndarray:
        return np.array([[t.pos.t, t.pos.h, t.pos.w] for t in self.tokens], dtype=np.int64)

    def modality_ids(self) -> np.ndarray:
        return np.array([MODALITY_ID[t.modality] for t in self.tokens], dtype=np.int8)

    def av_embedding_matrix(self) -> np.ndarray:
        rows = [t.embedding for t in self.tokens if t.modality != TEXT]
        if any(r is None for r in rows):
            raise ValueError("stream skeleton has no embeddings yet")
        return np.ascontiguousarray(np.stack(rows))

    def chunks(self) -> list[list[Token]]:
        """Audio/video tokens grouped by chunk id, in stream order."""
        av = [t for t in self.tokens if t.modality != TEXT]
        if not av:
            return []
        groups: list[list[Token]] = [[] for _ in range(max(t.chunk for t in av) + 1)]
        for tok in av:
            groups[tok.chunk].append(tok)
        return groups

    def validate(self):
        """Check the interleaving, position, and count invariants."""
        lv, la, lt = self.counts
        gh, gw = self.frame_grid
        expected = interleave_order(self.tokens, self.chunk_seconds)
        if [t.stream_index for t in expected] != [t.stream_index for t in self.tokens]:
            raise AssertionError("stream is not in interleaved [V_0, A_0, ...] order")
        last_t = {VIDEO: -1, AUDIO: -1, TEXT: -1}
        for i, tok in enumerate(self.tokens):
            if tok.stream_index != i:
                raise AssertionError("stream_index does not match position in stream")
            if tok.modality == VIDEO:
                if not (tok.pos.h < gh and tok.pos.w < gw):
                    raise AssertionError("video token outside frame grid")
            else:
                if not (tok.pos.h == tok.pos.w == tok.pos.t):
                    raise AssertionError(f"{tok.modality} token must have degenerate axes")
            if tok.pos.t < last_t[tok.modality]:
                raise AssertionError("temporal ids decrease within a modality")
            last_t[tok.modality] = tok.pos.t
        if lv + la + lt != len(self.tokens):
            raise AssertionError("modality tally mismatch")


def chunk_of(temporal_id: int, chunk_seconds: float) -> int:
    """Chunk index of a temporal id: both modalities share the 40 ms clock."""
    return int(temporal_id // (TOKENS_PER_SECOND * chunk_seconds))


def interleave_order(tokens: Iterable[Token], chunk_seconds: float) -> list[Token]:
    """Re-derive the canonical order: per-chunk video then audio, text last."""
    def key(tok: Token):
        if tok.modality == TEXT:
            return (1, 0, 0, tok.pos.t, 0, 0)
        mod_rank = 0 if tok.modality == VIDEO else 1
        return (0, chunk_of(tok.pos.t, chunk_seconds), mod_rank, tok.pos.t, tok.pos.h, tok.pos.w)
    return sorted(tokens, key=key)


def assign_positions(duration_s: float, fps: float, frame_grid: tuple[int, int],
                     chunk_seconds: float = 2.0, n_text: int = DEFAULT_TEXT_TOKENS) -> TokenStream:
    """Position-only stream skeleton for a scene of the given geometry.

    Audio token i sits at temporal id i; a frame at time tau seconds covers
    ids round(tau * 25) for all its grid cells; chunking groups both
    modalities by the shared id clock.
    """
    if chunk_seconds <= 0:
        raise ValueError(f"assign_positions: chunk_seconds must be positive, got {chunk_seconds}")
    if duration_s <= 0 or fps <= 0:
        raise ValueError("assign_positions: duration_s and fps must be positive")
    gh, gw = frame_grid
    if gh < 1 or gw < 1:
        raise ValueError(f"assign_positions: bad frame grid {frame_grid}")

    n_audio = round(duration_s * TOKENS_PER_SECOND)
    n_frames = round(duration_s * fps)
    tokens: list[Token] = []
    for f in range(n_frames):
        tid = round(f / fps * TOKENS_PER_SECOND)
        for h in range(gh):
            for w in range(gw):
                mod_index = (f * gh + h) * gw + w
                tokens.append(Token(VIDEO, PositionTriple(tid, h, w), -1, mod_index,
                                    chunk_of(tid, chunk_seconds)))
    for i in range(n_audio):
        tokens.append(Token(AUDIO, PositionTriple(i, i, i), -1, i,
                            chunk_of(i, chunk_seconds)))

    ordered = interleave_order(tokens, chunk_seconds)
    max_t = max((t.pos.t for t in ordered), default=-1)
    for i in range(n_text):
        tid = max_t + 1 + i
        ordered.append(Token(TEXT, PositionTriple(tid, tid, tid), -1, i,
                             chunk_of(tid, chunk_seconds)))
    for i, tok in enumerate(ordered):
        tok.stream_index = i
    return TokenStream(ordered, chunk_seconds, duration_s, fps, (gh, gw))


@dataclass(frozen=True)
class SceneSpec:
    """A synthetic audio-visual scene with planted ground truth."""

    duration_s: float
    fps: float
    frame_grid: tuple[int, int]
    density_video: float
    density_audio: float
    salient_video: frozenset  # of (frame, h, w)
    salient_audio: frozenset  # of audio token indices
    sync_offset_s: float
    task: str
    label: int | None
    embed_dim: int = 32
    distractor_video: frozenset = frozenset()
    align_threshold_ids: int = 12
    n_text: int = DEFAULT_TEXT_TOKENS
    label_strength: float = 1.0

    @property
    def n_frames(self) -> int:
        return round(self.duration_s * self.fps)

    @property
    def n_audio(self) -> int:
        return round(self.duration_s * TOKENS_PER_SECOND)

    @property
    def n_video(self) -> int:
        return self.n_frames * self.frame_grid[0] * self.frame_grid[1]


@dataclass
class SceneTruth:
    task: str
    label: int
    salient_indices: np.ndarray   # sorted audio/video pool indices
    signal_energy: np.ndarray     # squared planted-component norm per av token


def _basis(dim: int, i: int) -> np.ndarray:
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def _pool_index_maps(stream: TokenStream) -> tuple[dict, dict]:
    """Maps (frame,h,w) -> av-pool index and audio index -> av-pool index."""
    gh, gw = stream.frame_grid
    video_map, audio_map = {}, {}
    pool = 0
    for tok in stream.tokens:
        if tok.modality == VIDEO:
            f = tok.mod_index // (gh * gw)
            video_map[(f, tok.pos.h, tok.pos.w)] = pool
        elif tok.modality == AUDIO:
            audio_map[tok.mod_index] = pool
        else:
            continue
        pool += 1
    return video_map, audio_map


def _validate_salient(spec: SceneSpec):
    gh, gw = spec.frame_grid
    for f, h, w in list(spec.salient_video) + list(spec.distractor_video):
        if not (0 <= f < spec.n_frames and 0 <= h < gh and 0 <= w < gw):
            raise ValueError(f"salient video token {(f, h, w)} outside scene ranges")
    for i in spec.salient_audio:
        if not 0 <= i < spec.n_audio:
            raise ValueError(f"salient audio index {i} outside [0, {spec.n_audio})")


def derive_label(spec: SceneSpec, stream: TokenStream) -> int:
    """Ground-truth label; order/alignment labels derive from the geometry."""
    if spec.task == TASK_SALIENT_RECALL:
        if spec.label is None:
            raise ValueError("salient_recall scenes need an explicit label")
        return int(spec.label)
    if spec.task == TASK_EVENT_ORDER:
        t_audio = float(np.mean(sorted(spec.salient_audio)))
        frames = sorted({f for f, _, _ in spec.salient_video})
        t_video = float(np.mean([round(f / spec.fps * TOKENS_PER_SECOND) for f in frames]))
        return int(t_audio < t_video)
    if spec.task == TASK_AV_ALIGNMENT:
        offset_ids = round(spec.sync_offset_s * TOKENS_PER_SECOND)
        return int(abs(offset_ids) <= spec.align_threshold_ids)
    raise ValueError(f"unknown task {spec.task!r}")


def planted_components(spec: SceneSpec, stream: TokenStream,
                       rng: np.random.Generator) -> tuple[np.ndarray, SceneTruth]:
    """Mean embedding component per av token, plus the scene truth."""
    d = spec.embed_dim
    if d < MIN_EMBED_DIM:
        raise ValueError(f"embed_dim must be at least {MIN_EMBED_DIM}")
    video_map, audio_map = _pool_index_maps(stream)
    mean = np.zeros((stream.av_count, d))
    label = derive_label(spec, stream)
    mu = _basis(d, DIR_MEAN)

    video_rows = sorted(video_map[key] for key in spec.salient_video)
    audio_rows = sorted(audio_map[i] for i in spec.salient_audio)

    if spec.task == TASK_SALIENT_RECALL:
        # All planted tokens carry the label direction at a per-scene strength.
        # Easy scenes make the readout circuit learnable immediately; hard
        # scenes stay uncertain unless many planted tokens survive selection,
        # which keeps cross-entropy pressure on the selector as recall grows.
        direction = mu + (2 * label - 1) * spec.label_strength * _basis(d, DIR_LABEL)
        for r in sorted(video_rows + audio_rows):
            mean[r] += direction
    elif spec.task == TASK_EVENT_ORDER:
        for r in audio_rows:
            mean[r] += mu + _basis(d, DIR_ORDER_AUDIO)
        for r in video_rows:
            mean[r] += mu + _basis(d, DIR_ORDER_VIDEO)
    elif spec.task == TASK_AV_ALIGNMENT:
        # A distractor video group (when present) is only separable from the
        # true group through the shared per-scene key on the audio side.
        key_true = rng.normal(size=d)
        key_true /= np.linalg.norm(key_true)
        key_dist = rng.normal(size=d)
        key_dist /= np.linalg.norm(key_dist)
        for r in audio_rows:
            mean[r] += mu + _basis(d, DIR_ALIGN_AUDIO) + KEY_STRENGTH * key_true
        for r in video_rows:
            mean[r] += mu + _basis(d, DIR_ALIGN_VIDEO) + KEY_STRENGTH * key_true
        for f, h, w in spec.distractor_video:
            mean[video_map[(f, h, w)]] += mu + _basis(d, DIR_ALIGN_VIDEO) + KEY_STRENGTH * key_dist
    else:
        raise ValueError(f"unknown task {spec.task!r}")

    salient = np.array(sorted(video_rows + audio_rows), dtype=np.intp)
    energy = np.zeros(stream.av_count)
    energy[salient] = (mean[salient] ** 2).sum(axis=1)
    return mean, SceneTruth(spec.task, label, salient, energy)


def generate_scene(spec: SceneSpec, seed: int) -> tuple[TokenStream, SceneTruth]:
    """Deterministic scene realization: planted means plus Gaussian noise."""
    _validate_salient(spec)
    stream = assign_positions(spec.duration_s, spec.fps, spec.frame_grid,
                              n_text=spec.n_text)
    rng = np.random.default_rng(seed)
    emb = rng.normal(0.0, NOISE_SIGMA, size=(stream.av_count, spec.embed_dim))
    mean, truth = planted_components(spec, stream, rng)
    emb += mean
    row = 0
    for tok in stream.tokens:
        if tok.modality != TEXT:
            tok.embedding = emb[row]
            row += 1
    return stream, truth


def oracle_selection(stream: TokenStream, truth: SceneTruth, k: int) -> np.ndarray:
    """Brute-force reference: the k av tokens with the most planted energy.

    Ties break toward the lower pool index; with k equal to the planted count
    this returns exactly the planted set.
    """
    n = stream.av_count
    if not 0 <= k <= n:
        raise ValueError(f"oracle_selection: k={k} outside [0, {n}]")
    order = np.lexsort((np.arange(n), -truth.signal_energy))
    return np.sort(order[:k])


def sample_scene_spec(task: str, rng: np.random.Generator, *,
                      duration_s: float = 5.12, fps: float = 1.5625,
                      frame_grid: tuple[int, int] = (4, 4),
                      density_video: float = 0.2, density_audio: float = 0.2,
                      embed_dim: int = 32, n_text: int = DEFAULT_TEXT_TOKENS,
                      align_threshold_ids: int = 12,
                      with_distractor: bool = False) -> SceneSpec:
    """Draw a random scene of the given task family."""
    gh, gw = frame_grid
    n_frames = round(duration_s * fps)
    n_video = n_frames * gh * gw
    n_audio = round(duration_s * TOKENS_PER_SECOND)

    def frame_time_ids(f: int) -> int:
        return round(f / fps * TOKENS_PER_SECOND)

    if task == TASK_SALIENT_RECALL:
        kv = round(density_video * n_video)
        ka = round(density_audio * n_audio)
        cells = [(f, h, w) for f in range(n_frames) for h in range(gh) for w in range(gw)]
        chosen_v = rng.choice(len(cells), size=kv, replace=False)
        chosen_a = rng.choice(n_audio, size=ka, replace=False)
        lo, hi = RECALL_STRENGTH_RANGE
        return SceneSpec(duration_s, fps, frame_grid, kv / n_video, ka / n_audio,
                         frozenset(cells[i] for i in chosen_v),
                         frozenset(int(i) for i in chosen_a),
                         0.0, task, int(rng.integers(0, 2)), embed_dim, frozenset(),
                         align_threshold_ids, n_text,
                         label_strength=float(rng.uniform(lo, hi)))

    def frame_block(start_frame: int, n: int) -> frozenset:
        return frozenset((f, h, w) for f in range(start_frame, start_frame + n)
                         for h in range(gh) for w in range(gw))

    if task == TASK_EVENT_ORDER:
        window = 8
        while True:
            a_start = int(rng.integers(0, n_audio - window))
            b_frame = int(rng.integers(0, n_frames - 1))
            t_a = a_start + (window - 1) / 2
            t_b = (frame_time_ids(b_frame) + frame_time_ids(b_frame + 1)) / 2
            if abs(t_a - t_b) >= 15:
                break
        salient_a = frozenset(range(a_start, a_start + window))
        salient_v = frame_block(b_frame, 2)
        return SceneSpec(duration_s, fps, frame_grid, len(salient_v) / n_video,
                         window / n_audio, salient_v, salient_a, 0.0, task, None,
                         embed_dim, frozenset(), align_threshold_ids, n_text)

    if task == TASK_AV_ALIGNMENT:
        window = 8
        aligned = int(rng.integers(0, 2))
        while True:
            v_frame = int(rng.integers(0, n_frames - 1))
            t_v = (frame_time_ids(v_frame) + frame_time_ids(v_frame + 1)) / 2
            if aligned:
                offset = int(rng.integers(-6, 7))
            else:
                offset = int(rng.integers(30, 61)) * (1 if rng.integers(0, 2) else -1)
            a_center = t_v + offset
            a_start = int(round(a_center - (window - 1) / 2))
            if not 0 <= a_start <= n_audio - window:
                continue
            d_frame = int(rng.integers(0, n_frames - 1))
            if not with_distractor or abs(d_frame - v_frame) >= 2:
                break
        true_v = frame_block(v_frame, 2)
        distractor = frame_block(d_frame, 2) if with_distractor else frozenset()
        salient_a = frozenset(range(a_start, a_start + window))
        t_a = a_start + (window - 1) / 2
        return SceneSpec(duration_s, fps, frame_grid, len(true_v) / n_video,
                         window / n_audio, true_v, salient_a,
                         (t_a - t_v) / TOKENS_PER_SECOND, task, None, embed_dim,
                         distractor, align_threshold_ids, n_text)

    raise ValueError(f"unknown task {task!r}")
