"""The end-to-end model: sieve, gate, decoder, instruction tokens, heads.

One forward pass runs on one tape: the av embeddings and the task's learned
instruction rows are concatenated, contextualized by the bidirectional
encoder, scored, gated down to the budget, and decoded causally with the
original position triples. Optional phase timers split the pass into
encoder / selection / decoder sections for the benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..blocks import leaf_params
from ..decoder import DecoderConfig, decoder_forward, init_decoder_params, task_loss
from ..sieve import (
    SelectionResult,
    SieveConfig,
    compressed_positions,
    encoder_forward,
    init_sieve_params,
    score_tokens,
    select_topk,
    ste_gate,
)
from ..stream import TokenStream
from ..tensor import Node, Tape


@dataclass
class ForwardResult:
    loss: Node
    prediction: int
    selection: SelectionResult
    nodes: dict[str, Node]
    features: Node


def init_model_params(sieve_cfg: SieveConfig, dec_cfg: DecoderConfig, tasks,
                      n_text: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params = init_sieve_params(sieve_cfg, rng)
    heads = dict(dec_cfg.task_heads)
    missing = [t for t in tasks if t not in heads]
    if missing:
        raise ValueError(f"decoder config lacks task heads for {missing}")
    params.update(init_decoder_params(dec_cfg, rng))
    for task in sorted(tasks):
        params[f"text/{task}"] = rng.normal(size=(n_text, sieve_cfg.model_width))
    return params


def forward_scene(tape: Tape, stream: TokenStream, task: str, label: int,
                  sieve_cfg: SieveConfig, dec_cfg: DecoderConfig,
                  params: dict[str, np.ndarray], training: bool = True,
                  timers: dict | None = None) -> ForwardResult:
    def tick():
        return time.perf_counter() if timers is not None else 0.0

    nodes = leaf_params(tape, params)
    positions = stream.positions_array()
    mods = stream.modality_ids()
    n_av = stream.av_count
    n_text = len(stream.tokens) - n_av

    t0 = tick()
    x = tape.concat([tape.leaf(stream.av_embedding_matrix()), nodes[f"text/{task}"]])
    contextual = encoder_forward(tape, x, positions, mods, sieve_cfg, nodes)
    t1 = tick()
    scores = score_tokens(tape, contextual, n_av, nodes)
    selection = select_topk(scores.value, mods[:n_av], sieve_cfg.budget_p,
                            sieve_cfg.pool_mode)
    gated = ste_gate(tape, contextual, scores, selection, n_text, training=training)
    t2 = tick()
    features = decoder_forward(tape, gated, compressed_positions(positions, selection, n_text),
                               dec_cfg, nodes)
    loss, prediction = task_loss(tape, features, task, label, nodes)
    t3 = tick()

    if timers is not None:
        timers["encoder"] = timers.get("encoder", 0.0) + (t1 - t0)
        timers["selection"] = timers.get("selection", 0.0) + (t2 - t1)
        timers["decoder"] = timers.get("decoder", 0.0) + (t3 - t2)
    return ForwardResult(loss, prediction, selection, nodes, features)


def scene_recall(selection: SelectionResult, salient_indices: np.ndarray) -> float:
    """Fraction of planted tokens kept; 1.0 when nothing was planted."""
    planted = np.asarray(salient_indices)
    if planted.size == 0:
        return 1.0
    return float(np.isin(planted, selection.selected).sum() / planted.size)
