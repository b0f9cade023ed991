"""Cross-modal sieve: joint-stream encoder, scorer, top-k gate, and baselines.

The sieve contextualizes the whole interleaved audio-video-text stream with
bidirectional attention, scores every audio/video token with a two-layer
feed-forward net, and keeps the top-k scores from one combined pool under a
global budget. The hard 0/1 gate passes gradients straight through to the
scores (surrogate derivative 1), so the scorer trains end to end; dropped
tokens contribute no gradient.

Ablations: an intra-modal attention mask (each modality attends only to
itself) and a separate per-modality pool that preserves the original
audio/video ratio. The intra-modal compression baselines (2x2 spatial
unshuffle for video, stride-4 temporal merge for audio) live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .blocks import init_block_params, stack_forward
from .rope import PositionTriple, RopeConfig, rope_config
from .tensor import Node, Tape

MASK_CROSS = "cross_modal_bidirectional"
MASK_INTRA = "intra_modal_bidirectional"
POOL_COMBINED = "combined"
POOL_SEPARATE = "separate"


@dataclass(frozen=True)
class SieveConfig:
    n_layers: int = 4
    n_heads: int = 4
    head_dim: int = 32
    model_width: int = 128
    scorer_hidden: int | None = None
    budget_p: float = 0.2
    mask_mode: str = MASK_CROSS
    pool_mode: str = POOL_COMBINED
    rope: RopeConfig = field(default_factory=lambda: rope_config(32))

    def __post_init__(self):
        if self.n_heads * self.head_dim != self.model_width:
            raise ValueError(
                f"SieveConfig: n_heads*head_dim {self.n_heads}*{self.head_dim} "
                f"!= model_width {self.model_width}"
            )
        if not 0.0 < self.budget_p <= 1.0:
            raise ValueError(f"SieveConfig: budget_p must be in (0, 1], got {self.budget_p}")
        if self.mask_mode not in (MASK_CROSS, MASK_INTRA):
            raise ValueError(f"SieveConfig: unknown mask_mode {self.mask_mode!r}")
        if self.pool_mode not in (POOL_COMBINED, POOL_SEPARATE):
            raise ValueError(f"SieveConfig: unknown pool_mode {self.pool_mode!r}")
        if self.rope.schedule.d != self.head_dim:
            raise ValueError("SieveConfig: rope schedule dimension must match head_dim")

    @property
    def hidden(self) -> int:
        return 4 * self.model_width if self.scorer_hidden is None else self.scorer_hidden


@dataclass
class SelectionResult:
    scores: np.ndarray          # one score per audio/video token
    gates: np.ndarray           # hard 0/1 per audio/video token
    selected: np.ndarray        # kept pool indices, ascending
    per_modality: tuple[int, int]  # (n_video_kept, n_audio_kept)
    k: int


def init_sieve_params(config: SieveConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for i in range(config.n_layers):
        params.update(init_block_params(rng, f"sieve/layer{i}/", config.model_width))
    d, h = config.model_width, config.hidden
    params["sieve/scorer/w1"] = rng.normal(0.0, d ** -0.5, (d, h))
    params["sieve/scorer/b1"] = np.zeros(h)
    params["sieve/scorer/w2"] = rng.normal(0.0, h ** -0.5, (h, 1))
    params["sieve/scorer/b2"] = np.zeros(1)
    return params


def attention_mask(mask_mode: str, modality_ids: np.ndarray) -> np.ndarray | None:
    """None for the all-ones cross-modal mask; an equality mask for intra."""
    if mask_mode == MASK_CROSS:
        return None
    if mask_mode == MASK_INTRA:
        mods = np.asarray(modality_ids)
        return mods[:, None] == mods[None, :]
    raise ValueError(f"unknown mask_mode {mask_mode!r}")


def encoder_forward(tape: Tape, x: Node, positions: np.ndarray, modality_ids: np.ndarray,
                    config: SieveConfig, nodes: dict[str, Node]) -> Node:
    """Contextualize the full stream with bidirectional blocks; N=0 is identity."""
    if x.value.shape[1] != config.model_width:
        raise ValueError(
            f"encoder_forward: stream width {x.value.shape[1]} != model width {config.model_width}"
        )
    allowed = attention_mask(config.mask_mode, modality_ids)
    return stack_forward(tape, x, nodes, "sieve/", config.n_layers, config.n_heads,
                         positions, config.rope, allowed)


def score_tokens(tape: Tape, contextual: Node, n_av: int, nodes: dict[str, Node]) -> Node:
    """Scalar importance score for each of the first n_av (audio/video) rows.

    Text rows are never scored; they are always preserved.
    """
    av = tape.gather(contextual, np.arange(n_av))
    h = tape.gelu(tape.affine(av, nodes["sieve/scorer/w1"], nodes["sieve/scorer/b1"]))
    return tape.affine(h, nodes["sieve/scorer/w2"], nodes["sieve/scorer/b2"])


def budget_k(p: float, n_av: int) -> int:
    if not 0.0 < p <= 1.0:
        raise ValueError(f"budget p must be in (0, 1], got {p}")
    return max(1, math.floor(p * n_av))


def select_topk(scores: np.ndarray, modalities: np.ndarray, p: float,
                pool_mode: str) -> SelectionResult:
    """Top-k selection under the global budget k = max(1, floor(p * n_av)).

    ``modalities`` tags each pool entry 0 (video) or 1 (audio). Combined mode
    ranks the whole pool at once, so the audio/video split is decided purely
    by the scores. Separate mode first splits k in proportion to the original
    counts (video quota rounded to nearest), then ranks within each modality.
    Ties always break toward the lower pool index.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    modalities = np.asarray(modalities).reshape(-1)
    if scores.shape != modalities.shape:
        raise ValueError(f"select_topk: {scores.shape} scores vs {modalities.shape} tags")
    n_av = scores.size
    l_v = int((modalities == 0).sum())
    l_a = n_av - l_v
    k = budget_k(p, n_av)

    def top_within(pool: np.ndarray, kk: int) -> np.ndarray:
        order = np.argsort(-scores[pool], kind="stable")
        return pool[order[:kk]]

    if pool_mode == POOL_COMBINED:
        chosen = top_within(np.arange(n_av), k)
    elif pool_mode == POOL_SEPARATE:
        k_v = round(k * l_v / n_av)
        k_v = min(max(k_v, k - l_a), l_v, k)
        chosen = np.concatenate([
            top_within(np.flatnonzero(modalities == 0), k_v),
            top_within(np.flatnonzero(modalities == 1), k - k_v),
        ])
    else:
        raise ValueError(f"select_topk: unknown pool_mode {pool_mode!r}")

    selected = np.sort(chosen)
    gates = np.zeros(n_av, dtype=np.int8)
    gates[selected] = 1
    n_video_kept = int((modalities[selected] == 0).sum())
    return SelectionResult(scores, gates, selected, (n_video_kept, k - n_video_kept), k)


def ste_gate(tape: Tape, contextual: Node, scores: Node, selection: SelectionResult,
             n_text: int, training: bool = True) -> Node:
    """Gather the selected rows (gate value 1) and append the text rows.

    Forward outputs are identical in training and inference. In training the
    backward pass routes each kept row's upstream gradient to its score as
    the inner product with the row content (straight-through surrogate
    d gate / d score = 1); dropped tokens receive exactly zero score
    gradient.
    """
    L = contextual.value.shape[0]
    n_av = L - n_text
    sel = np.asarray(selection.selected, dtype=np.intp)
    rows = np.concatenate([sel, np.arange(n_av, L)])
    value = contextual.value[rows]
    ctx_value = contextual.value

    def vjp(g: np.ndarray):
        g_ctx = np.zeros_like(ctx_value)
        g_ctx[rows] = g
        if not training:
            return (g_ctx,)
        g_s = np.zeros((n_av, 1))
        g_s[sel, 0] = (g[: sel.size] * ctx_value[sel]).sum(axis=1)
        return (g_ctx, g_s.reshape(scores.value.shape))

    parents = (contextual, scores) if training else (contextual,)
    return tape.custom(value, parents, vjp, "ste_gate")


def compressed_positions(positions: np.ndarray, selection: SelectionResult,
                         n_text: int) -> np.ndarray:
    """Original position triples of kept av rows plus the text rows."""
    n_av = positions.shape[0] - n_text
    rows = np.concatenate([selection.selected, np.arange(n_av, positions.shape[0])])
    return positions[rows]


# -- intra-modal compression baselines --------------------------------------


def init_intramodal_params(rng: np.random.Generator, width: int) -> dict[str, np.ndarray]:
    d = width
    return {
        "merge/video/w1": rng.normal(0.0, (4 * d) ** -0.5, (4 * d, d)),
        "merge/video/b1": np.zeros(d),
        "merge/video/w2": rng.normal(0.0, d ** -0.5, (d, d)),
        "merge/video/b2": np.zeros(d),
        "merge/audio/w": rng.normal(0.0, (4 * d) ** -0.5, (4 * d, d)),
        "merge/audio/b": np.zeros(d),
    }


def _window_concat(tape: Tape, x: Node, window_rows: list[np.ndarray]) -> Node:
    """Concatenate len(window_rows) gathered row sets along the feature axis.

    Built from gather + matmul with constant segment selectors, so it stays
    within the core primitive set.
    """
    d = x.value.shape[1]
    m = len(window_rows)
    total = None
    for slot, rows in enumerate(window_rows):
        selector = np.zeros((d, m * d))
        selector[:, slot * d:(slot + 1) * d] = np.eye(d)
        piece = tape.matmul(tape.gather(x, rows), tape.leaf(selector, name="segment"))
        total = piece if total is None else tape.add(total, piece)
    return total


def intramodal_video_unshuffle(tape: Tape, frame: Node, grid: tuple[int, int],
                               t_id: int, nodes: dict[str, Node]) -> tuple[Node, list[PositionTriple]]:
    """Merge each 2x2 spatial block of one frame into a single token.

    The four embeddings are concatenated (width 4D) and projected back to
    width D through two affine layers. The merged token takes the block's
    top-left position with h and w halved.
    """
    gh, gw = grid
    if gh % 2 or gw % 2:
        raise ValueError(f"intramodal_video_unshuffle: grid {grid} must be even")
    if frame.value.shape[0] != gh * gw:
        raise ValueError(
            f"intramodal_video_unshuffle: expected {gh * gw} rows, got {frame.value.shape[0]}"
        )
    corners = [(0, 0), (0, 1), (1, 0), (1, 1)]
    window_rows = []
    for dh, dw in corners:
        rows = np.array([(2 * bh + dh) * gw + (2 * bw + dw)
                         for bh in range(gh // 2) for bw in range(gw // 2)], dtype=np.intp)
        window_rows.append(rows)
    cat = _window_concat(tape, frame, window_rows)
    h = tape.affine(cat, nodes["merge/video/w1"], nodes["merge/video/b1"])
    out = tape.affine(h, nodes["merge/video/w2"], nodes["merge/video/b2"])
    positions = [PositionTriple(t_id, bh, bw)
                 for bh in range(gh // 2) for bw in range(gw // 2)]
    return out, positions


def intramodal_audio_merge(tape: Tape, audio: Node, temporal_ids: Sequence[int],
                           nodes: dict[str, Node]) -> tuple[Node, list[PositionTriple]]:
    """Merge each window of 4 consecutive audio tokens into one token.

    Stride-4 width-4 temporal convolution: a learned affine over each
    concatenated window. A trailing partial window repeats the last token.
    The merged token takes the window's first temporal id.
    """
    n = audio.value.shape[0]
    if n == 0:
        raise ValueError("intramodal_audio_merge: empty audio stream")
    n_out = (n + 3) // 4
    window_rows = [np.minimum(4 * np.arange(n_out, dtype=np.intp) + off, n - 1)
                   for off in range(4)]
    cat = _window_concat(tape, audio, window_rows)
    out = tape.affine(cat, nodes["merge/audio/w"], nodes["merge/audio/b"])
    ids = [int(temporal_ids[4 * w]) for w in range(n_out)]
    positions = [PositionTriple(t, t, t) for t in ids]
    return out, positions
